#pragma once

#include "poison/dataset.hpp"

#include <cstdint>

namespace poison {

/// Rounds each coordinate up with probability equal to its fractional part, so the
/// expectation equals x. Throws on negative input.
Vector round_point(const Eigen::Ref<const Vector>& x, std::uint64_t seed);

/// E[xhat^2] for the randomized rounding of a scalar x >= 0:
/// x (ceil x + floor x) - ceil x floor x.
double f_piecewise(double x);
/// Same quantity as the maximum over k = 0..K of (2k+1) x - k(k+1). Equal to
/// f_piecewise for x <= K + 1.
double f_max_of_lines(double x, long K);

/// E||xhat - mu||^2 = sum_i f(x_i) - 2 <x, mu> + ||mu||^2.
double expected_sq_distance(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu);

/// Linear-programming relaxation of E||xhat - mu||^2 <= tau^2 over x >= 0, in epigraph
/// form: t_i >= (2k+1) x_i - k(k+1) for k = 0..K_i and sum t_i - 2<x, mu> + ||mu||^2 <= tau^2.
struct ExpectedNormConstraint {
  Vector mu;
  double tau = 0.0;
  Eigen::VectorXi pieces;  ///< K_i per coordinate

  /// Constraint value sum_i f_K(x_i) - 2<x, mu> + ||mu||^2 (epigraph variables at their minimum).
  double value(const Eigen::Ref<const Vector>& x) const;
  bool contains(const Eigen::Ref<const Vector>& x) const;
};

/// K_i = ceil(max_j x_ji) + 1 over the dataset.
Eigen::VectorXi default_pieces(const Dataset& data);
ExpectedNormConstraint lp_constraint_atoms(const Vector& mu, double tau, const Eigen::VectorXi& pieces);

/// Repeated-points rounding: a point of weight w becomes max(1, floor(w / r)) independent
/// roundings sharing w equally, so each rounded vector stands for about r copies and total
/// weight is kept.
Dataset repeat_round(const Dataset& attack, int r, std::uint64_t seed);

}  // namespace poison
