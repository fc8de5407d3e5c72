#pragma once

#include "poison/dataset.hpp"
#include "poison/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace poison {

enum class LossKind { Hinge, SmoothedHinge, Logistic };

/// Margin-based loss l(theta; x, y) = c(y theta^T x).
struct LossSpec {
  LossKind kind = LossKind::Hinge;
  double delta = 0.01;  ///< smoothing width, SmoothedHinge only

  static LossSpec hinge() { return {LossKind::Hinge, 0.01}; }
  static LossSpec smoothed_hinge(double delta = 0.01);
  static LossSpec logistic() { return {LossKind::Logistic, 0.01}; }

  bool twice_differentiable() const { return kind != LossKind::Hinge; }
  friend bool operator==(const LossSpec&, const LossSpec&) = default;
};

std::string to_string(const LossSpec& loss);
/// Accepts "hinge", "logistic", "smoothed-hinge" and "smoothed-hinge:<delta>".
LossSpec parse_loss(const std::string& name);

// Loss as a function of the margin m = y theta^T x. The hinge derivative at m = 1 is
// taken as -1 (the full subgradient), so the derivative is -1 for every m <= 1.
double loss_at_margin(const LossSpec& loss, double margin);
double dloss_at_margin(const LossSpec& loss, double margin);
double d2loss_at_margin(const LossSpec& loss, double margin);

double loss_point(const LossSpec& loss, const Vector& theta, const Eigen::Ref<const Vector>& x, int y);
Vector grad_point(const LossSpec& loss, const Vector& theta, const Eigen::Ref<const Vector>& x, int y);

enum class Objective { MeanLoss, SumLoss };

/// Deterministic full-batch solver run to tolerance.
struct BatchExact {
  double tol = 1e-8;
  int max_iter = 200000;
};

/// One seeded pass of SGD with step eta0 / (lambda t).
struct SgdSinglePass {
  double eta0 = 0.1;
  std::uint64_t seed = 0;
};

struct TrainConfig {
  double lambda = 0.01;
  Objective objective = Objective::MeanLoss;
  std::variant<BatchExact, SgdSinglePass> optimizer = BatchExact{};
};

struct ModelParams {
  Vector theta;
  LossSpec loss;
  double lambda = 0.0;
};

struct TrainResult {
  ModelParams model;
  /// Per-point subgradient coefficient gamma_i in [0, 1] with
  /// grad l_i = -gamma_i * y_i x_i at the solution (dual variables for hinge).
  Vector coefficients;
  int iterations = 0;
  /// Optimality residual at exit (norm of the objective gradient, or the largest dual
  /// projected gradient for hinge).
  double residual = 0.0;
};

/// Training failed to reach tolerance; carries the last iterate.
class ConvergenceError : public SolverError {
 public:
  ConvergenceError(const std::string& what, Vector last, double residual)
      : SolverError(what), last_(std::move(last)), residual_(residual) {}
  const Vector& last_iterate() const noexcept { return last_; }
  double residual() const noexcept { return residual_; }

 private:
  Vector last_;
  double residual_;
};

/// Regularization strength of the equivalent sum-of-losses objective.
double sum_loss_lambda(const Dataset& data, const TrainConfig& config);

/// Minimizes lambda/2 ||theta||^2 + (1/W or 1) * sum_i w_i l(theta; x_i, y_i).
/// Hinge uses dual coordinate descent, smooth losses use damped Newton.
TrainResult train_detailed(const Dataset& data, const LossSpec& loss, const TrainConfig& config,
                           const Vector* warm_start = nullptr);
ModelParams train(const Dataset& data, const LossSpec& loss, const TrainConfig& config);

ModelParams train_sgd_single_pass(const Dataset& data, const LossSpec& loss, const TrainConfig& config,
                                  const Vector* init = nullptr);

/// Margins y_i theta^T x_i for every point.
Vector margins(const Vector& theta, const Dataset& data);

/// Weighted share of points with y theta^T x <= 0 (a zero score counts as an error).
double test_error_01(const Vector& theta, const Dataset& test);

double avg_loss(const Vector& theta, const Dataset& data, const LossSpec& loss);
/// Regularized objective lambda/2 ||theta||^2 + avg_loss (MeanLoss) or + sum (SumLoss).
double objective_value(const Vector& theta, const Dataset& data, const LossSpec& loss, double lambda,
                       Objective objective = Objective::MeanLoss);
/// Weighted mean of per-point gradients.
Vector avg_gradient(const Vector& theta, const Dataset& data, const LossSpec& loss);

/// H v with H = lambda I + weighted mean of per-point loss Hessians.
Vector hvp(const Vector& theta, const Dataset& data, double lambda, const Vector& v, const LossSpec& loss);

struct CgResult {
  Vector solution;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Solves H u = v by conjugate gradients to ||H u - v|| <= tol ||v||.
CgResult inverse_hvp_cg(const Vector& theta, const Dataset& data, double lambda, const Vector& v,
                        const LossSpec& loss, double tol = 1e-8, int max_iter = 0,
                        const Vector* warm_start = nullptr);

}  // namespace poison
