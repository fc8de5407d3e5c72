#pragma once

#include "poison/evaluation.hpp"
#include "poison/feasible_set.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace poison {

struct InfluenceConfig {
  /// Step lengths tried, as multiples of the RMS clean-point norm; each step moves a point
  /// by eta * scale along its normalized gradient. The best on a short probe is kept.
  std::vector<double> eta_grid{1e-2, 1e-1, 1.0, 1e1, 1e2};
  int probe_steps = 5;
  int steps = 50;
  double delta = 0.01;
  bool concentrated = true;
  std::uint64_t seed = 0;
  double cg_tol = 1e-8;
  /// Called with the current attack after every step of the final run.
  std::function<void(const Dataset&)> on_iterate;
};

struct InfluenceTraceRow {
  int iter = 0;
  double test_loss = 0.0;
  double test_error = 0.0;
  double point_moved_norm = 0.0;
};

/// Weighted mean of per-point gradients over the test set.
Vector test_gradient(const Vector& theta, const Dataset& test, const LossSpec& loss);

/// d(test loss)/dx for a training point of weight `weight` in `train_full`, given the
/// solution u of H u = g_test at theta.
Vector influence_gradient_from(const Vector& theta, const Vector& h_inv_g, const Dataset& train_full,
                               const Eigen::Ref<const Vector>& x, int y, double weight, const LossSpec& loss);

/// Same, solving H u = g_test by conjugate gradients first.
Vector influence_gradient(const Vector& theta, const Dataset& train_full, double lambda, const Vector& g_test,
                          const Eigen::Ref<const Vector>& x, int y, double weight, const LossSpec& loss,
                          double cg_tol = 1e-8);

/// Label-flipped clean points that already lie in F, drawn with replacement until their
/// unit weights reach epsilon |D_c| (the last one takes the remainder).
Dataset init_label_flip(const Dataset& clean, double epsilon, const FeasibleSet& set, std::uint64_t seed);

struct InfluenceRun {
  Dataset poison;
  std::vector<InfluenceTraceRow> trace;
  double eta = 0.0;
};

/// Projected gradient ascent on the smoothed-hinge test loss. Concentrated mode moves
/// one point per class with weights split inversely to the class balance.
InfluenceRun influence_attack(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                              const InfluenceConfig& config, double lambda);

AttackResult run_influence(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                           const InfluenceConfig& config, const EvalConfig& eval,
                           std::vector<InfluenceTraceRow>* trace = nullptr);

}  // namespace poison
