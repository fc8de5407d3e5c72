#include "poison/rounding.hpp"

#include "poison/error.hpp"
#include "poison/rng.hpp"

#include <cmath>

namespace poison {

Vector round_point(const Eigen::Ref<const Vector>& x, std::uint64_t seed) {
  CounterRng rng(seed);
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    double v = x[i];
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("randomized rounding needs finite non-negative input");
    double lo = std::floor(v);
    double frac = v - lo;
    double u = rng.uniform();
    out[i] = (frac > 0.0 && u < frac) ? lo + 1.0 : lo;
  }
  return out;
}

double f_piecewise(double x) {
  double lo = std::floor(x);
  double hi = std::ceil(x);
  return x * (hi + lo) - hi * lo;
}

double f_max_of_lines(double x, long K) {
  double best = x;  // k = 0
  for (long k = 1; k <= K; ++k) {
    double kd = static_cast<double>(k);
    best = std::max(best, (2.0 * kd + 1.0) * x - kd * (kd + 1.0));
  }
  return best;
}

double expected_sq_distance(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mu) {
  if (x.size() != mu.size()) throw ValidationError("dimension mismatch in expected squared distance");
  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0)) throw ValidationError("expected squared distance needs non-negative x");
    total += f_piecewise(x[i]);
  }
  return total - 2.0 * x.dot(mu) + mu.squaredNorm();
}

namespace {

// max over k <= K, evaluated in O(1): the active line is k = min(floor x, K).
double f_truncated(double x, int K) {
  double k = std::min(std::floor(x), static_cast<double>(K));
  return (2.0 * k + 1.0) * x - k * (k + 1.0);
}

}  // namespace

double ExpectedNormConstraint::value(const Eigen::Ref<const Vector>& x) const {
  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) total += f_truncated(std::max(x[i], 0.0), pieces[i]);
  return total - 2.0 * x.dot(mu) + mu.squaredNorm();
}

bool ExpectedNormConstraint::contains(const Eigen::Ref<const Vector>& x) const {
  if ((x.array() < 0.0).any()) return false;
  return value(x) <= tau * tau;
}

Eigen::VectorXi default_pieces(const Dataset& data) {
  Eigen::VectorXi K = Eigen::VectorXi::Ones(data.dim());
  if (data.empty()) return K;
  for (Index j = 0; j < data.dim(); ++j) {
    double top = data.features().col(j).maxCoeff();
    K[j] = static_cast<int>(std::ceil(std::max(top, 0.0))) + 1;
  }
  return K;
}

ExpectedNormConstraint lp_constraint_atoms(const Vector& mu, double tau, const Eigen::VectorXi& pieces) {
  if (!(tau >= 0.0)) throw ValidationError("expected-norm radius must be non-negative");
  if (pieces.size() != mu.size()) throw ValidationError("piece counts must match the dimension");
  if ((pieces.array() < 0).any()) throw ValidationError("piece counts must be non-negative");
  return {mu, tau, pieces};
}

Dataset repeat_round(const Dataset& attack, int r, std::uint64_t seed) {
  if (r < 1) throw ValidationError("repeat count must be at least 1");
  Dataset out(attack.dim(), InputDomain::NonnegInteger);
  CounterRng root(seed);
  std::uint64_t draw = 0;
  for (Index i = 0; i < attack.size(); ++i) {
    double w = attack.w(i);
    if (w <= 0.0) continue;
    long copies = std::max(1L, static_cast<long>(std::floor(w / r)));
    Vector x = attack.x(i).transpose();
    for (long c = 0; c < copies; ++c) {
      Vector rounded = round_point(x, root.fork(draw++)());
      out.add(rounded, attack.y(i), w / static_cast<double>(copies));
    }
  }
  return out;
}

}  // namespace poison
