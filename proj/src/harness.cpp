#include "poison/harness.hpp"

#include "poison/error.hpp"
#include "poison/format.hpp"
#include "poison/rounding.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

namespace poison {

const std::vector<std::string>& attack_names() {
  static const std::vector<std::string> names{"alfa", "influence", "kkt", "minmax", "none"};
  return names;
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<DecoyParams>& ensure_decoys(AttackSetup& setup) {
  if (setup.decoys.empty())
    setup.decoys = gen_decoys(setup.clean, setup.test, setup.eval.loss, setup.eval.train, setup.decoy_grid);
  return setup.decoys;
}

// Poison for one attack against a fixed feasible set, without evaluation.
Dataset attack_poison(const std::string& attack, AttackSetup& setup, const FeasibleSet& set, AttackTraces* traces,
                      std::optional<DecoyProvenance>* decoy) {
  if (attack == "none") return Dataset(setup.clean.dim(), setup.clean.domain());
  if (attack == "influence") {
    InfluenceConfig config = setup.influence;
    config.seed = setup.seed;
    InfluenceRun run = influence_attack(setup.clean, setup.test, setup.epsilon, set, config, setup.eval.train.lambda);
    if (traces) traces->influence = run.trace;
    return run.poison;
  }
  if (attack == "kkt") {
    AttackResult r = run_kkt(setup.clean, setup.test, setup.epsilon, ensure_decoys(setup), set, setup.kkt, setup.eval);
    *decoy = r.decoy;
    return r.poison;
  }
  if (attack == "minmax") {
    if (setup.minmax_basic) {
      MinMaxRun run = minmax_basic(setup.clean, setup.epsilon, set, setup.eval.loss, setup.eval.train.lambda,
                                   setup.minmax);
      if (traces) traces->minmax = run.trace;
      return run.poison;
    }
    AttackResult r = run_minmax(setup.clean, setup.test, setup.epsilon, set, ensure_decoys(setup), setup.minmax,
                                setup.eval);
    *decoy = r.decoy;
    return r.poison;
  }
  if (attack == "alfa") {
    return alfa_attack(setup.clean, setup.test, setup.epsilon, set, setup.eval.loss, setup.eval.train, setup.alfa);
  }
  throw ValidationError("unknown attack '" + attack + "'");
}

}  // namespace

AttackResult run_named_attack(const std::string& attack, AttackSetup& setup, AttackTraces* traces) {
  if (std::find(attack_names().begin(), attack_names().end(), attack) == attack_names().end())
    throw ValidationError("unknown attack '" + attack + "'");
  if (!(setup.epsilon >= 0.0 && setup.epsilon <= 0.5)) throw ValidationError("epsilon must lie in [0, 0.5]");
  if (!(setup.eval.p > 0.0 && setup.eval.p < 1.0)) throw ValidationError("p must lie in (0, 1)");
  if (attack == "kkt" || (attack == "minmax" && !setup.minmax_basic)) ensure_decoys(setup);
  auto start = Clock::now();
  std::optional<DecoyProvenance> decoy;
  Dataset poison(setup.clean.dim(), setup.clean.domain());
  if (setup.rounds == 1) {
    FeasibleSet set = feasible_from_defenses(setup.clean, setup.eval.p, setup.feasible);
    poison = attack_poison(attack, setup, set, traces, &decoy);
  } else {
    poison = run_constrained_attack(
                 setup.clean,
                 [&](const FeasibleSet& set) { return attack_poison(attack, setup, set, traces, &decoy); },
                 setup.rounds, setup.eval.p, setup.feasible)
                 .poison;
  }
  if (setup.clean.domain() == InputDomain::NonnegInteger && setup.round_repeats > 0 && !poison.empty())
    poison = repeat_round(poison, setup.round_repeats, setup.seed);
  double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  AttackResult result = make_result(attack, setup.epsilon, setup.seed, std::move(poison), setup.clean, setup.test,
                                    setup.eval);
  result.decoy = decoy;
  result.seconds = seconds;
  return result;
}

std::vector<TransferVariant> transfer_variants(const EvalConfig& base, const std::vector<double>& lambdas, bool sgd,
                                               double eta0, std::uint64_t sgd_seed, bool logistic) {
  std::vector<TransferVariant> out;
  out.push_back({"original", base.loss, base.train});
  for (double lambda : lambdas) {
    TrainConfig config = base.train;
    config.lambda = lambda;
    out.push_back({"lambda=" + format_double(lambda), base.loss, config});
  }
  if (sgd) {
    TrainConfig config = base.train;
    config.optimizer = SgdSinglePass{eta0, sgd_seed};
    out.push_back({"sgd", base.loss, config});
  }
  if (logistic) out.push_back({"logistic", LossSpec::logistic(), base.train});
  return out;
}

std::vector<TransferRow> run_transfer(const Dataset& poison, const Dataset& clean, const Dataset& test,
                                      const std::vector<TransferVariant>& variants, const EvalConfig& base) {
  if (poison.dim() != clean.dim() || test.dim() != clean.dim())
    throw ValidationError("attack, clean and test data must share one dimension");
  std::vector<TransferRow> rows;
  for (const auto& variant : variants) {
    EvalConfig eval = base;
    eval.loss = variant.loss;
    eval.train = variant.train;
    for (const auto& report : evaluate_defenses(clean, poison, test, eval)) {
      TransferRow row;
      row.variant = variant.name;
      row.lambda = variant.train.lambda;
      row.optimizer = std::holds_alternative<SgdSinglePass>(variant.train.optimizer) ? "sgd" : "batch";
      row.loss = to_string(variant.loss);
      row.defense = report.kind;
      row.test_error = report.test_error;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string transfer_csv(const std::vector<TransferRow>& rows) {
  std::ostringstream out;
  out << "variant,lambda,optimizer,loss,defense,test_error\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << format_double(r.lambda) << ',' << r.optimizer << ',' << r.loss << ','
        << to_string(r.defense) << ',' << format_double(r.test_error) << '\n';
  }
  return out.str();
}

std::vector<TimingRow> run_timing(const std::vector<std::string>& attacks, AttackSetup& setup, double target) {
  std::vector<std::string> names = attacks;
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  // Decoy generation is shared set-up, not charged to either decoy attack.
  bool needs_decoys = std::any_of(names.begin(), names.end(), [](const std::string& a) { return a == "kkt" || a == "minmax"; });
  if (needs_decoys) ensure_decoys(setup);
  const double baseline = min_over_defense(
      evaluate_defenses(setup.clean, Dataset(setup.clean.dim(), setup.clean.domain()), setup.test, setup.eval));

  std::vector<TimingRow> rows;
  for (const auto& name : names) {
    TimingRow row;
    row.attack = name;
    Clock::time_point start;
    double excluded = 0.0;  // time spent in progress evaluation
    auto record = [&](double error) {
      double t = std::chrono::duration<double>(Clock::now() - start).count() - excluded;
      row.trajectory.emplace_back(t, error);
      if (!row.reached && error >= target) {
        row.reached = true;
        row.seconds = t;
      }
    };
    AttackSetup local = setup;
    local.eval.progress = record;
    local.influence.on_iterate = [&](const Dataset& poison) {
      auto before = Clock::now();
      double error = min_over_defense(evaluate_defenses(local.clean, poison, local.test, local.eval));
      excluded += std::chrono::duration<double>(Clock::now() - before).count();
      record(error);
    };
    start = Clock::now();
    record(baseline);
    AttackResult result = run_named_attack(name, local, nullptr);
    record(result.min_over_defense);
    if (!row.reached) row.seconds = row.trajectory.back().first;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::ostringstream out;
  out << "attack,seconds,reached,trajectory\n";
  for (const auto& r : rows) {
    out << r.attack << ',' << format_double(r.seconds) << ',' << (r.reached ? "true" : "false") << ',';
    for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
      if (i > 0) out << ';';
      out << format_double(r.trajectory[i].first) << ':' << format_double(r.trajectory[i].second);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace poison
