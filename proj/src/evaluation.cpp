#include "poison/evaluation.hpp"

#include "poison/error.hpp"
#include "poison/parallel.hpp"

#include <algorithm>
#include <exception>

namespace poison {

DefenseSpec defense_spec(DefenseKind kind, const EvalConfig& config) {
  DefenseSpec spec = DefenseSpec::of(kind);
  spec.k = config.knn_k;
  spec.frob_target = config.svd_target;
  spec.loss = config.loss;
  spec.train = config.train;
  return spec;
}

std::vector<DefenseReport> evaluate_defenses(const Dataset& clean, const Dataset& poison, const Dataset& test,
                                             const EvalConfig& config) {
  std::vector<DefenseReport> reports(config.defenses.size());
  parallel_for(config.defenses.size(), [&](std::size_t i) {
    DefenseKind kind = config.defenses[i];
    DefenseOutcome outcome = defend_and_train(clean, poison, defense_spec(kind, config), config.p, config.loss,
                                              config.train);
    DefenseReport& report = reports[i];
    report.kind = kind;
    report.p = config.p;
    report.tau = outcome.tau;
    report.removed_clean = outcome.removed_clean;
    report.removed_poison = outcome.removed_poison;
    report.test_error = test_error_01(outcome.model.theta, test);
  });
  return reports;
}

double min_over_defense(const std::vector<DefenseReport>& reports) {
  if (reports.empty()) throw ValidationError("no defenses to take a minimum over");
  double best = reports.front().test_error;
  for (const auto& r : reports) best = std::min(best, r.test_error);
  return best;
}

double clean_error(const Dataset& clean, const Dataset& test, const EvalConfig& config) {
  return test_error_01(train(clean, config.loss, config.train).theta, test);
}

AttackResult make_result(const std::string& attack, double epsilon, std::uint64_t seed, Dataset poison,
                         const Dataset& clean, const Dataset& test, const EvalConfig& config) {
  AttackResult result;
  result.attack = attack;
  result.epsilon = epsilon;
  result.seed = seed;
  result.defenses = evaluate_defenses(clean, poison, test, config);
  result.min_over_defense = min_over_defense(result.defenses);
  result.clean_error = clean_error(clean, test, config);
  result.poison = std::move(poison);
  return result;
}

}  // namespace poison
