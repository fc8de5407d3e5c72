#include "poison/dataset.hpp"
#include "poison/error.hpp"
#include "poison/format.hpp"
#include "poison/harness.hpp"
#include "poison/serialization.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace poison;

namespace {

struct DataArgs {
  std::string train;
  std::string test;
  std::string format = "sparse-text";
  std::string domain = "reals";
};

struct DefenderArgs {
  std::string loss = "hinge";
  double lambda = 0.01;
  std::string objective = "mean";
  double p = 0.05;
  std::vector<std::string> defenses{"l2", "slab", "loss", "svd", "knn"};
  int knn_k = 5;
  double svd_target = 0.05;
};

void add_data_options(CLI::App* app, DataArgs& args, bool need_test) {
  app->add_option("--train", args.train, "Clean training data")->required()->check(CLI::ExistingFile);
  auto* test = app->add_option("--test", args.test, "Test data")->check(CLI::ExistingFile);
  if (need_test) test->required();
  app->add_option("--format", args.format, "sparse-text or dense-csv");
  app->add_option("--domain", args.domain, "reals, unit-interval or nonneg-integer (when no sidecar)");
}

void add_defender_options(CLI::App* app, DefenderArgs& args) {
  app->add_option("--loss", args.loss, "hinge, logistic or smoothed-hinge[:delta]");
  app->add_option("--lambda", args.lambda, "Regularization strength");
  app->add_option("--objective", args.objective, "mean or sum");
  app->add_option("--p", args.p, "Fraction removed per class by each defense");
  app->add_option("--defenses", args.defenses, "Defenses to evaluate")->delimiter(',');
  app->add_option("--knn-k", args.knn_k, "Neighbor rank of the k-NN defense");
  app->add_option("--svd-target", args.svd_target, "Residual spectral mass of the SVD defense");
}

Dataset load(const std::string& path, const DataArgs& args) {
  return load_dataset(path, parse_format(args.format), parse_domain(args.domain));
}

Objective parse_objective(const std::string& name) {
  if (name == "mean") return Objective::MeanLoss;
  if (name == "sum") return Objective::SumLoss;
  throw ValidationError("objective must be 'mean' or 'sum'");
}

EvalConfig make_eval(const DefenderArgs& args) {
  EvalConfig eval;
  eval.loss = parse_loss(args.loss);
  eval.train.lambda = args.lambda;
  eval.train.objective = parse_objective(args.objective);
  eval.p = args.p;
  eval.knn_k = args.knn_k;
  eval.svd_target = args.svd_target;
  eval.defenses.clear();
  for (const auto& d : args.defenses) eval.defenses.push_back(parse_defense(d));
  if (!(args.p > 0.0 && args.p < 1.0)) throw ValidationError("--p must lie in (0, 1)");
  return eval;
}

// Rough check that test and training data come from the same distribution.
void warn_if_shifted(const Dataset& clean, const Dataset& test) {
  if (!clean.has_both_classes() || !test.has_both_classes()) return;
  auto [cp, cm] = class_centroids(clean);
  auto [tp, tm] = class_centroids(test);
  double spread = 0.0;
  for (Index i = 0; i < clean.size(); ++i)
    spread += clean.w(i) * (clean.x(i).transpose() - (clean.y(i) > 0 ? cp : cm)).squaredNorm();
  spread = std::sqrt(spread / clean.total_weight());
  double shift = std::max((cp - tp).norm(), (cm - tm).norm());
  if (shift > 0.25 * spread) {
    std::cerr << "warning: test data look shifted from the training data (centroid shift " << format_double(shift)
              << "); the min-max attack assumes both come from one distribution\n";
  }
}

void print_result(const AttackResult& r) {
  std::cout << r.attack << ": clean error " << format_double(r.clean_error) << ", min over defenses "
            << format_double(r.min_over_defense) << "\n";
  for (const auto& d : r.defenses)
    std::cout << "  " << to_string(d.kind) << ": " << format_double(d.test_error) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-poisoning attacks and sanitization defenses for linear classifiers"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic two-Gaussian train/test pair");
  std::uint64_t gen_seed = 0;
  long gen_n = 2000, gen_d = 20;
  double gen_sep = 4.5, gen_balance = 0.5;
  std::string gen_out_train, gen_out_test, gen_format = "dense-csv";
  gen->add_option("--seed", gen_seed);
  gen->add_option("--n", gen_n, "Points per split");
  gen->add_option("--d", gen_d, "Dimension");
  gen->add_option("--separation", gen_sep, "Distance between the class means");
  gen->add_option("--balance", gen_balance, "Share of +1 labels");
  gen->add_option("--out-train", gen_out_train)->required();
  gen->add_option("--out-test", gen_out_test)->required();
  gen->add_option("--format", gen_format);

  // train
  auto* trn = app.add_subcommand("train", "Train a linear classifier");
  DataArgs trn_data;
  DefenderArgs trn_def;
  std::string trn_optimizer = "batch", trn_out;
  double trn_eta0 = 0.1;
  std::uint64_t trn_seed = 0;
  add_data_options(trn, trn_data, false);
  add_defender_options(trn, trn_def);
  trn->add_option("--optimizer", trn_optimizer, "batch or sgd");
  trn->add_option("--eta0", trn_eta0, "SGD base step");
  trn->add_option("--seed", trn_seed, "SGD shuffle seed");
  trn->add_option("--out", trn_out, "Model JSON");

  // attack
  auto* atk = app.add_subcommand("attack", "Run an attack and evaluate it against the defenses");
  std::string atk_kind, atk_out = "out", atk_decoys;
  DataArgs atk_data;
  DefenderArgs atk_def;
  double atk_eps = 0.03;
  std::uint64_t atk_seed = 0;
  int atk_rounds = 1, atk_steps = 50, atk_grid = 6, atk_round_repeats = 2;
  bool atk_lp = false, atk_basic = false, atk_no_cap = false, atk_spread = false, atk_refine = false;
  double atk_delta = 0.01, atk_tau_loss = 0.25, atk_eta = 0.0;
  long atk_burn = -1;
  atk->add_option("kind", atk_kind, "influence, kkt, minmax, alfa or none")
      ->required()
      ->check(CLI::IsMember({"influence", "kkt", "minmax", "alfa", "none"}));
  add_data_options(atk, atk_data, true);
  add_defender_options(atk, atk_def);
  atk->add_option("--epsilon", atk_eps, "Poison budget as a fraction of the clean weight");
  atk->add_option("--seed", atk_seed);
  atk->add_option("--out-dir", atk_out);
  atk->add_option("--decoy-file", atk_decoys, "Reuse decoys written by the decoys command");
  atk->add_option("--rounds", atk_rounds, "Refit rounds of the feasible set");
  atk->add_flag("--lp-relax", atk_lp, "Integer data: expected-norm constraint instead of the L2 ball");
  atk->add_option("--round-repeats", atk_round_repeats, "Integer data: copies per rounded point (0 disables)");
  atk->add_option("--steps", atk_steps, "Influence: gradient steps");
  atk->add_option("--delta", atk_delta, "Influence: smoothing of the attack-side hinge");
  atk->add_flag("--spread", atk_spread, "Influence: move every point instead of two concentrated ones");
  atk->add_option("--grid", atk_grid, "KKT: class-split grid size");
  atk->add_flag("--no-decoy-cap", atk_no_cap, "KKT: leave the loss defense out of the feasible set");
  atk->add_flag("--basic", atk_basic, "Min-max: no decoy constraint");
  atk->add_option("--tau-loss", atk_tau_loss, "Min-max: decoy-loss cap");
  atk->add_option("--eta", atk_eta, "Min-max: base step (default 0.05 / lambda)");
  atk->add_option("--n-burn", atk_burn, "Min-max: burn-in iterations (default |D_c| / 10)");
  atk->add_flag("--refine", atk_refine, "Alfa: one re-ranking round");

  // decoys
  auto* dec = app.add_subcommand("decoys", "Generate decoy parameters");
  DataArgs dec_data;
  DefenderArgs dec_def;
  std::string dec_out;
  DecoyGrid dec_grid;
  add_data_options(dec, dec_data, true);
  add_defender_options(dec, dec_def);
  dec->add_option("--r-grid", dec_grid.repeats)->delimiter(',');
  dec->add_option("--q-grid", dec_grid.quantiles)->delimiter(',');
  dec->add_option("--out", dec_out)->required();

  // collapse
  auto* col = app.add_subcommand("collapse", "Collapse an attack to two points and verify it");
  std::string col_attack, col_out;
  DataArgs col_data;
  DefenderArgs col_def;
  double col_tol = 1e-4;
  col->add_option("--attack", col_attack, "Attack JSON")->required()->check(CLI::ExistingFile);
  add_data_options(col, col_data, false);
  add_defender_options(col, col_def);
  col->add_option("--tol", col_tol);
  col->add_option("--out", col_out, "Collapsed attack JSON");

  // transfer
  auto* trf = app.add_subcommand("transfer", "Replay an attack against other defenders");
  std::string trf_attack, trf_out;
  DataArgs trf_data;
  DefenderArgs trf_def;
  std::vector<double> trf_lambdas;
  bool trf_sgd = false, trf_logistic = false;
  double trf_eta0 = 0.1;
  std::uint64_t trf_seed = 0;
  trf->add_option("--attack", trf_attack)->required()->check(CLI::ExistingFile);
  add_data_options(trf, trf_data, true);
  add_defender_options(trf, trf_def);
  trf->add_option("--lambdas", trf_lambdas, "Lambda sweep")->delimiter(',');
  trf->add_flag("--sgd", trf_sgd, "Add a single-pass SGD defender");
  trf->add_option("--eta0", trf_eta0, "SGD base step");
  trf->add_option("--seed", trf_seed, "SGD shuffle seed");
  trf->add_flag("--logistic", trf_logistic, "Add a logistic-loss defender");
  trf->add_option("--out", trf_out, "CSV output");

  // timing
  auto* tim = app.add_subcommand("timing", "Time attacks to a target test error");
  DataArgs tim_data;
  DefenderArgs tim_def;
  std::vector<std::string> tim_attacks{"influence", "kkt"};
  double tim_target = 0.1, tim_eps = 0.03;
  std::string tim_out, tim_decoys;
  add_data_options(tim, tim_data, true);
  add_defender_options(tim, tim_def);
  tim->add_option("--attacks", tim_attacks)->delimiter(',');
  tim->add_option("--target", tim_target, "Min-over-defense test error to reach");
  tim->add_option("--epsilon", tim_eps);
  tim->add_option("--decoy-file", tim_decoys);
  tim->add_option("--out", tim_out, "CSV output");

  // report
  auto* rep = app.add_subcommand("report", "Summarize attack result files");
  std::vector<std::string> rep_inputs;
  std::string rep_out;
  rep->add_option("inputs", rep_inputs, "Attack JSON files")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", rep_out, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      auto [train_set, test_set] = synth_gaussians(gen_seed, gen_n, gen_d, gen_sep, gen_balance);
      save_dataset(train_set, gen_out_train, parse_format(gen_format));
      save_dataset(test_set, gen_out_test, parse_format(gen_format));
    } else if (trn->parsed()) {
      Dataset data = load(trn_data.train, trn_data);
      EvalConfig eval = make_eval(trn_def);
      if (trn_optimizer == "sgd") eval.train.optimizer = SgdSinglePass{trn_eta0, trn_seed};
      else if (trn_optimizer != "batch") throw ValidationError("optimizer must be 'batch' or 'sgd'");
      ModelParams model = train(data, eval.loss, eval.train);
      if (!trn_out.empty()) write_json(trn_out, model_to_json(model));
      std::cout << "train error " << format_double(test_error_01(model.theta, data)) << "\n";
      if (!trn_data.test.empty())
        std::cout << "test error " << format_double(test_error_01(model.theta, load(trn_data.test, trn_data))) << "\n";
    } else if (atk->parsed()) {
      AttackSetup setup;
      setup.clean = load(atk_data.train, atk_data);
      setup.test = load(atk_data.test, atk_data);
      setup.epsilon = atk_eps;
      setup.seed = atk_seed;
      setup.eval = make_eval(atk_def);
      setup.rounds = atk_rounds;
      setup.feasible.lp_relax = atk_lp;
      setup.round_repeats = atk_round_repeats;
      setup.influence.steps = atk_steps;
      setup.influence.delta = atk_delta;
      setup.influence.concentrated = !atk_spread;
      setup.kkt.grid = atk_grid;
      setup.kkt.decoy_cap = !atk_no_cap;
      setup.kkt.p = setup.eval.p;
      setup.minmax_basic = atk_basic;
      setup.minmax.tau_loss = atk_tau_loss;
      setup.minmax.eta = atk_eta;
      setup.minmax.n_burn = atk_burn;
      setup.alfa.refine = atk_refine;
      if (!atk_decoys.empty()) setup.decoys = decoys_from_json(read_json(atk_decoys));
      if (atk_kind == "minmax") warn_if_shifted(setup.clean, setup.test);
      AttackTraces traces;
      AttackResult result = run_named_attack(atk_kind, setup, &traces);
      fs::path dir(atk_out);
      write_json(dir / (atk_kind + ".json"), result_to_json(result));
      write_text(dir / (atk_kind + ".csv"), result_to_csv(result));
      if (!traces.influence.empty()) write_text(dir / "influence_trace.csv", influence_trace_csv(traces.influence));
      if (!traces.minmax.empty()) write_text(dir / "minmax_trace.csv", minmax_trace_csv(traces.minmax));
      print_result(result);
    } else if (dec->parsed()) {
      Dataset clean = load(dec_data.train, dec_data);
      Dataset test = load(dec_data.test, dec_data);
      EvalConfig eval = make_eval(dec_def);
      auto decoys = gen_decoys(clean, test, eval.loss, eval.train, dec_grid);
      write_json(dec_out, decoys_to_json(decoys));
      std::cout << decoys.size() << " decoys after pruning\n";
    } else if (col->parsed()) {
      AttackResult attack = result_from_json(read_json(col_attack));
      Dataset clean = load(col_data.train, col_data);
      EvalConfig eval = make_eval(col_def);
      Dataset full = combine(clean, attack.poison);
      TrainConfig sum_config = eval.train;
      sum_config.objective = Objective::SumLoss;
      if (eval.train.objective == Objective::MeanLoss) sum_config.lambda = eval.train.lambda * full.total_weight();
      TrainResult trained = train_detailed(full, eval.loss, sum_config);
      Vector coefficients = trained.coefficients.tail(attack.poison.size());
      CollapsedAttack collapsed = collapse_two_points(attack.poison, trained.model.theta, eval.loss, &coefficients);
      FeasibleSet set = feasible_from_defenses(clean, eval.p);
      CollapseCheck check = check_collapse(clean, attack.poison, collapsed.points, eval.loss, sum_config.lambda,
                                           col_tol, nullptr, Objective::SumLoss);
      bool feasible = true;
      for (Index i = 0; i < collapsed.points.size(); ++i)
        feasible = feasible && set.contains(collapsed.points.x(i).transpose(), collapsed.points.y(i));
      Json report = {{"distinct_points", collapsed.points.size()},
                     {"original_weight", attack.poison.total_weight()},
                     {"collapsed_weight", collapsed.points.total_weight()},
                     {"fold_alphas", collapsed.fold_alphas},
                     {"parameter_gap", check.parameter_gap},
                     {"allowed_gap", check.allowed_gap},
                     {"equivalent", check.ok},
                     {"feasible", feasible},
                     {"points", points_to_json(collapsed.points)}};
      if (!col_out.empty()) write_json(col_out, report);
      std::cout << "equivalent " << (check.ok ? "true" : "false") << ", feasible " << (feasible ? "true" : "false")
                << ", distinct points " << collapsed.points.size() << "\n";
    } else if (trf->parsed()) {
      AttackResult attack = result_from_json(read_json(trf_attack));
      Dataset clean = load(trf_data.train, trf_data);
      Dataset test = load(trf_data.test, trf_data);
      EvalConfig eval = make_eval(trf_def);
      auto variants = transfer_variants(eval, trf_lambdas, trf_sgd, trf_eta0, trf_seed, trf_logistic);
      std::string csv = transfer_csv(run_transfer(attack.poison, clean, test, variants, eval));
      if (!trf_out.empty()) write_text(trf_out, csv);
      else std::cout << csv;
    } else if (tim->parsed()) {
      AttackSetup setup;
      setup.clean = load(tim_data.train, tim_data);
      setup.test = load(tim_data.test, tim_data);
      setup.epsilon = tim_eps;
      setup.eval = make_eval(tim_def);
      setup.kkt.p = setup.eval.p;
      if (!tim_decoys.empty()) setup.decoys = decoys_from_json(read_json(tim_decoys));
      std::string csv = timing_csv(run_timing(tim_attacks, setup, tim_target));
      if (!tim_out.empty()) write_text(tim_out, csv);
      else std::cout << csv;
    } else if (rep->parsed()) {
      std::ostringstream out;
      out << "file,attack,epsilon,clean_error,min_over_defense";
      std::vector<AttackResult> results;
      for (const auto& path : rep_inputs) results.push_back(result_from_json(read_json(path)));
      for (DefenseKind kind : all_defenses()) out << ',' << to_string(kind);
      out << '\n';
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        out << rep_inputs[i] << ',' << r.attack << ',' << format_double(r.epsilon) << ','
            << format_double(r.clean_error) << ',' << format_double(r.min_over_defense);
        for (DefenseKind kind : all_defenses()) {
          out << ',';
          for (const auto& d : r.defenses)
            if (d.kind == kind) out << format_double(d.test_error);
        }
        out << '\n';
      }
      if (!rep_out.empty()) write_text(rep_out, out.str());
      else std::cout << out.str();
    }
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
