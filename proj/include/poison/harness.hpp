#pragma once

#include "poison/alfa.hpp"
#include "poison/evaluation.hpp"
#include "poison/feasible_set.hpp"
#include "poison/influence_attack.hpp"
#include "poison/kkt_attack.hpp"
#include "poison/minmax_attack.hpp"

#include <string>
#include <vector>

namespace poison {

/// Everything an attack run needs besides its name.
struct AttackSetup {
  Dataset clean;
  Dataset test;
  double epsilon = 0.03;
  std::uint64_t seed = 0;
  EvalConfig eval;
  FeasibleOptions feasible;
  int rounds = 1;
  InfluenceConfig influence;
  KktConfig kkt;
  MinMaxConfig minmax;
  bool minmax_basic = false;
  AlfaConfig alfa;
  DecoyGrid decoy_grid;
  /// Decoys for kkt and minmax; generated on first use when empty.
  std::vector<DecoyParams> decoys;
  /// Repeat count for rounding attacks on integer data (0 disables rounding).
  int round_repeats = 2;
};

const std::vector<std::string>& attack_names();

struct AttackTraces {
  std::vector<InfluenceTraceRow> influence;
  std::vector<MinMaxTraceRow> minmax;
};

/// Runs "influence", "kkt", "minmax", "alfa" or "none" and evaluates it against every
/// configured defense. Integer-domain attacks are rounded before evaluation.
AttackResult run_named_attack(const std::string& attack, AttackSetup& setup, AttackTraces* traces = nullptr);

struct TransferVariant {
  std::string name;
  LossSpec loss;
  TrainConfig train;
};

struct TransferRow {
  std::string variant;
  double lambda = 0.0;
  std::string optimizer;
  std::string loss;
  DefenseKind defense = DefenseKind::L2;
  double test_error = 0.0;
};

/// The attacker's own defender, a lambda sweep, a single-pass SGD defender and a
/// logistic-loss defender (empty sweep or flags skip the respective rows).
std::vector<TransferVariant> transfer_variants(const EvalConfig& base, const std::vector<double>& lambdas, bool sgd,
                                               double eta0, std::uint64_t sgd_seed, bool logistic);

/// Re-evaluates a fixed attack under each defender variant and defense.
std::vector<TransferRow> run_transfer(const Dataset& poison, const Dataset& clean, const Dataset& test,
                                      const std::vector<TransferVariant>& variants, const EvalConfig& base);
std::string transfer_csv(const std::vector<TransferRow>& rows);

struct TimingRow {
  std::string attack;
  double seconds = 0.0;
  bool reached = false;
  std::vector<std::pair<double, double>> trajectory;  ///< (seconds, min-over-defense error)
};

/// Wall-clock time for each attack to reach `target` min-over-defense test error. Rows are
/// sorted by attack name.
std::vector<TimingRow> run_timing(const std::vector<std::string>& attacks, AttackSetup& setup, double target);
std::string timing_csv(const std::vector<TimingRow>& rows);

}  // namespace poison
