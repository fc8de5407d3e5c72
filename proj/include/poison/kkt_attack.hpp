#pragma once

#include "poison/evaluation.hpp"
#include "poison/feasible_set.hpp"

#include <vector>

namespace poison {

/// Target parameters with high test error and low clean loss.
struct DecoyParams {
  ModelParams model;
  double gamma = 0.0;        ///< flipped-loss threshold
  double quantile = 0.0;     ///< quantile that produced gamma
  double repeats = 0.0;      ///< copies of each flipped point
  double flip_weight = 0.0;  ///< total weight of the flipped set
  double train_loss_on_clean = 0.0;
  double test_error = 0.0;
};

struct DecoyGrid {
  std::vector<double> repeats{1, 2, 3, 5, 8, 12, 18, 25, 33};
  std::vector<double> quantiles{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55};
};

/// Trains on D_c plus r copies of the label-flipped test points whose flipped loss under
/// the clean model is at least the q-quantile, for every (r, q), then keeps the Pareto
/// frontier in (higher test error, lower clean loss).
std::vector<DecoyParams> gen_decoys(const Dataset& clean, const Dataset& test, const LossSpec& loss,
                                    const TrainConfig& config, const DecoyGrid& grid = {});

/// Drops every candidate dominated by another (error at least as high and clean loss at
/// most as low, one of them strictly). Order is preserved.
std::vector<DecoyParams> pareto_prune(const std::vector<DecoyParams>& candidates);

/// Flipped test points at or above the q-quantile threshold, each with weight r.
Dataset flip_set(const Dataset& test, const Vector& theta_clean, const LossSpec& loss, double quantile,
                 double repeats, double* gamma = nullptr);

Vector clean_gradient(const Vector& theta_decoy, const Dataset& clean, const LossSpec& loss);

/// Regularization in the stationarity condition gDc + lambda_eff theta + eps_+ grad_+ +
/// eps_- grad_- = 0 for poison weights eps_y |D_c|: (1 + eps) lambda for MeanLoss and
/// lambda / |D_c| for SumLoss.
double kkt_lambda(const Dataset& clean, const TrainConfig& config, double epsilon);

struct KktOptions {
  int max_iter = 10000;
  double tol = 1e-14;
};

struct KktSolution {
  Vector x_plus;
  Vector x_minus;
  double objective = 0.0;
  int iterations = 0;
};

/// Minimizes ||gDc - eps_+ x_+ + eps_- x_- + lambda theta||^2 with x_y in F_y and both points
/// on the margin-violating side (y theta^T x_y <= 1), by accelerated projected gradient.
KktSolution kkt_solve(const Vector& g_clean, const Vector& theta_decoy, double eps_plus, double eps_minus,
                      const FeasibleSet& set, double lambda, const KktOptions& options = {});

struct KktConfig {
  int grid = 6;  ///< splits eps_+ = t eps / grid for t = 0..grid
  bool decoy_cap = true;
  double p = 0.05;  ///< quantile level of the decoy-loss cap
  KktOptions solver;
};

/// Two weighted points realizing one (decoy, split) pair.
Dataset kkt_poison(const KktSolution& solution, double eps_plus, double eps_minus, const Dataset& clean);

/// Adds loss(theta_decoy; x, y) < tau_y with tau_y the (1 - p) quantile of class-y clean losses.
FeasibleSet with_quantile_decoy_cap(const FeasibleSet& base, const Dataset& clean, const ModelParams& decoy, double p);

AttackResult run_kkt(const Dataset& clean, const Dataset& test, double epsilon, const std::vector<DecoyParams>& decoys,
                     const FeasibleSet& base, const KktConfig& config, const EvalConfig& eval);

}  // namespace poison
