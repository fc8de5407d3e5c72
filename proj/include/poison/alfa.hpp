#pragma once

#include "poison/evaluation.hpp"
#include "poison/feasible_set.hpp"

namespace poison {

struct AlfaConfig {
  /// Re-rank once by loss(theta*) - loss(theta_hat) after a trial retrain on the first pick.
  bool refine = false;
};

/// Label-flip baseline: flipped test points inside F, ranked by their loss under the
/// clean model, taken greedily until their weight reaches epsilon |D_c|.
Dataset alfa_attack(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                    const LossSpec& loss, const TrainConfig& config, const AlfaConfig& options = {});

AttackResult run_alfa(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                      const EvalConfig& eval, const AlfaConfig& options = {});

}  // namespace poison
