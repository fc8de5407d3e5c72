#pragma once

#include "poison/dataset.hpp"
#include "poison/defenses.hpp"
#include "poison/linear_model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace poison {

/// Defender configuration used to score an attack.
struct EvalConfig {
  std::vector<DefenseKind> defenses = all_defenses();
  double p = 0.05;
  LossSpec loss;
  TrainConfig train;
  int knn_k = 5;
  double svd_target = 0.05;
  /// Called by decoy sweeps with the best min-over-defense error found so far.
  std::function<void(double)> progress;
};

struct DefenseReport {
  DefenseKind kind = DefenseKind::L2;
  double p = 0.0;
  Thresholds tau;
  Index removed_clean = 0;
  Index removed_poison = 0;
  double test_error = 0.0;
};

/// Where a decoy-driven attack's target parameters came from.
struct DecoyProvenance {
  Index index = 0;
  double gamma = 0.0;
  double repeats = 0.0;
  double test_error = 0.0;
  double clean_loss = 0.0;
};

struct AttackResult {
  std::string attack;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
  Dataset poison;
  std::vector<DefenseReport> defenses;
  double min_over_defense = 0.0;
  double clean_error = 0.0;
  double seconds = 0.0;
  std::optional<DecoyProvenance> decoy;
};

DefenseSpec defense_spec(DefenseKind kind, const EvalConfig& config);

/// Test error of the defender for each listed defense, refitting every detector on
/// D_c and D_p together. Defenses run in parallel.
std::vector<DefenseReport> evaluate_defenses(const Dataset& clean, const Dataset& poison, const Dataset& test,
                                             const EvalConfig& config);

double min_over_defense(const std::vector<DefenseReport>& reports);

/// Test error of plain training on D_c.
double clean_error(const Dataset& clean, const Dataset& test, const EvalConfig& config);

/// Evaluates `poison` and fills in every field except timing and decoy provenance.
AttackResult make_result(const std::string& attack, double epsilon, std::uint64_t seed, Dataset poison,
                         const Dataset& clean, const Dataset& test, const EvalConfig& config);

}  // namespace poison
