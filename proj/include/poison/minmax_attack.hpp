#pragma once

#include "poison/evaluation.hpp"
#include "poison/feasible_set.hpp"
#include "poison/kkt_attack.hpp"

#include <vector>

namespace poison {

struct MaxLossPoint {
  Vector x;
  int y = 1;
  double loss = 0.0;
  double margin = 0.0;
};

/// Highest-loss feasible point over both labels (the smallest margin); ties go to +1.
MaxLossPoint max_loss_point(const Vector& theta, const FeasibleSet& set, const LossSpec& loss);

struct MinMaxConfig {
  double eta = 0.0;           ///< base step; 0 means 0.05 / lambda
  long n_burn = -1;           ///< burn-in iterations; negative means |D_c| / 10
  double divergence = 1e8;    ///< largest allowed ||theta||
  double tau_loss = 0.25;     ///< decoy-loss cap of the decoy variant
};

struct MinMaxTraceRow {
  long t = 0;
  double max_loss = 0.0;
  double margin = 0.0;
  int label = 1;
  double clean_loss = 0.0;  ///< L(theta; D_c)
  double bound = 0.0;       ///< L(theta; D_c) + eps * loss of the chosen point
  Vector theta;             ///< iterate the row was computed at
};

struct MinMaxRun {
  Dataset poison;
  Vector theta;
  std::vector<MinMaxTraceRow> trace;
  long iterations = 0;
};

/// Alternates a max-loss feasible point with a decaying gradient step on
/// lambda/2 ||theta||^2 + L(theta; D_c) + eps loss(theta; x, y), collecting the points found
/// after burn-in. Collected points share the budget eps |D_c| equally.
MinMaxRun minmax_basic(const Dataset& clean, double epsilon, const FeasibleSet& set, const LossSpec& loss,
                       double lambda, const MinMaxConfig& config);

AttackResult run_minmax_basic(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                              const MinMaxConfig& config, const EvalConfig& eval,
                              std::vector<MinMaxTraceRow>* trace = nullptr);

/// Decoy variant: adds loss(theta_decoy; x, y) <= tau_loss to F for each decoy and keeps
/// the attack with the highest min-over-defense test error (ties to the lower index).
AttackResult run_minmax(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& base,
                        const std::vector<DecoyParams>& decoys, const MinMaxConfig& config, const EvalConfig& eval);

}  // namespace poison
