#include "oracles.hpp"
#include "poison/harness.hpp"
#include "poison/serialization.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace poison;
namespace fs = std::filesystem;

namespace {

fs::path workdir() {
  fs::path dir = fs::temp_directory_path() / "poison_cli_unit";
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(POISON_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small synthetic pair written once for the CLI cases.
const std::pair<fs::path, fs::path>& cli_data() {
  static const auto files = [] {
    fs::path dir = workdir();
    fs::path tr = dir / "train.svm", te = dir / "test.svm";
    int code = run_cli("gen-data --seed 3 --n 300 --d 4 --separation 3 --out-train " + tr.string() + " --out-test " +
                       te.string() + " --format sparse-text");
    REQUIRE(code == 0);
    return std::make_pair(tr, te);
  }();
  return files;
}

std::string data_flags() { return "--train " + cli_data().first.string() + " --test " + cli_data().second.string(); }

Json without_timing(Json j) {
  j.erase("seconds");
  return j;
}

}  // namespace

TEST_SUITE("harness_cli") {
  TEST_CASE("empty attack matches the clean error under every defense") {
    auto [clean, test] = synth_gaussians(1, 300, 4, 3.0, 0.5);
    AttackSetup setup;
    setup.clean = clean;
    setup.test = test;
    AttackResult r = run_named_attack("none", setup);
    CHECK(r.defenses.size() == all_defenses().size());
    for (const auto& d : r.defenses) CHECK(std::abs(d.test_error - r.clean_error) <= 0.03);
    double lowest = 1.0;
    for (const auto& d : r.defenses) lowest = std::min(lowest, d.test_error);
    CHECK(r.min_over_defense == lowest);
  }

  TEST_CASE("reported minimum equals an independent re-evaluation") {
    auto [clean, test] = synth_gaussians(2, 300, 4, 2.5, 0.5);
    AttackSetup setup;
    setup.clean = clean;
    setup.test = test;
    setup.decoy_grid.repeats = {2, 5};
    setup.decoy_grid.quantiles = {0.2};
    setup.kkt.grid = 2;
    AttackResult r = run_named_attack("kkt", setup);
    double lowest = 1.0;
    for (DefenseKind kind : setup.eval.defenses) {
      DefenseSpec spec = defense_spec(kind, setup.eval);
      Vector theta = defend_and_train(clean, r.poison, spec, setup.eval.p, setup.eval.loss, setup.eval.train).model.theta;
      lowest = std::min(lowest, test_error_01(theta, test));
    }
    CHECK(r.min_over_defense == lowest);
  }

  TEST_CASE("transfer rows") {
    auto [clean, test] = synth_gaussians(3, 200, 3, 3.0, 0.5);
    EvalConfig eval;
    Dataset poison(3);
    poison.add(Vector::Constant(3, 0.2), -1, 6.0);
    auto variants = transfer_variants(eval, {0.009, 0.09, 0.9}, false, 0.1, 0, false);
    auto rows = run_transfer(poison, clean, test, variants, eval);
    CHECK(rows.size() == (1 + 3) * eval.defenses.size());
    auto reports = evaluate_defenses(clean, poison, test, eval);
    for (std::size_t k = 0; k < eval.defenses.size(); ++k) {
      CHECK(rows[k].defense == reports[k].kind);
      CHECK(rows[k].test_error == reports[k].test_error);
    }
    auto more = transfer_variants(eval, {}, true, 0.1, 4, true);
    CHECK(run_transfer(poison, clean, test, more, eval).size() == 3 * eval.defenses.size());
  }

  TEST_CASE("timing rows are sorted and a trivial target is reached at once") {
    auto [clean, test] = synth_gaussians(4, 200, 3, 3.0, 0.5);
    AttackSetup setup;
    setup.clean = clean;
    setup.test = test;
    auto rows = run_timing({"none", "alfa"}, setup, 0.0);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].attack == "alfa");
    CHECK(rows[1].attack == "none");
    for (const auto& row : rows) {
      CHECK(row.reached);
      CHECK(row.seconds < 5.0);
    }
    auto unreachable = run_timing({"none"}, setup, 0.99);
    CHECK_FALSE(unreachable[0].reached);
    CHECK(timing_csv(unreachable).find("none") != std::string::npos);
  }

  TEST_CASE("result JSON round-trips") {
    auto [clean, test] = synth_gaussians(5, 200, 3, 3.0, 0.5);
    AttackSetup setup;
    setup.clean = clean;
    setup.test = test;
    AttackResult r = run_named_attack("alfa", setup);
    Json j = result_to_json(r);
    AttackResult back = result_from_json(j);
    CHECK(back.poison == r.poison);
    CHECK(back.min_over_defense == r.min_over_defense);
    CHECK(result_to_json(back) == j);
  }

  TEST_CASE("cli writes identical reports for identical seeds") {
    fs::path a = workdir() / "run_a", b = workdir() / "run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    REQUIRE(run_cli("attack influence " + data_flags() + " --steps 3 --seed 7 --out-dir " + a.string()) == 0);
    REQUIRE(run_cli("attack influence " + data_flags() + " --steps 3 --seed 7 --out-dir " + b.string()) == 0);
    CHECK(without_timing(read_json(a / "influence.json")) == without_timing(read_json(b / "influence.json")));
    CHECK(slurp(a / "influence_trace.csv") == slurp(b / "influence_trace.csv"));
    CHECK(fs::exists(a / "influence.csv"));
  }

  TEST_CASE("cli subcommands chain together") {
    fs::path dir = workdir() / "chain";
    fs::remove_all(dir);
    fs::create_directories(dir);
    CHECK(run_cli("train " + data_flags() + " --out " + (dir / "model.json").string()) == 0);
    CHECK(read_json(dir / "model.json").contains("theta"));
    CHECK(run_cli("decoys " + data_flags() + " --r-grid 2,5 --q-grid 0.2 --out " + (dir / "decoys.json").string()) == 0);
    CHECK(run_cli("attack kkt " + data_flags() + " --grid 2 --decoy-file " + (dir / "decoys.json").string() +
                  " --out-dir " + dir.string()) == 0);
    CHECK(run_cli("collapse " + data_flags() + " --attack " + (dir / "kkt.json").string() + " --out " +
                  (dir / "collapse.json").string()) == 0);
    CHECK(read_json(dir / "collapse.json").dump().find("true") != std::string::npos);
    CHECK(run_cli("transfer " + data_flags() + " --attack " + (dir / "kkt.json").string() +
                  " --lambdas 0.1 --out " + (dir / "transfer.csv").string()) == 0);
    CHECK(run_cli("report " + (dir / "kkt.json").string() + " --out " + (dir / "report.csv").string()) == 0);
    CHECK(slurp(dir / "report.csv").find("kkt") != std::string::npos);
  }

  TEST_CASE("cli exit codes") {
    fs::path dir = workdir();
    std::ofstream(dir / "bad.svm") << "+1 1:0.5\n-1 2:abc\n";
    CHECK(run_cli("train --train " + (dir / "bad.svm").string()) == 2);
    CHECK(run_cli("train") == 2);
    CHECK(run_cli("train " + data_flags() + " --lambda -1") == 2);
    CHECK(run_cli("attack none " + data_flags() + " --p 1.5") == 2);
    // No flipped test point can pass the defenses.
    std::ofstream(dir / "far.svm") << "+1 1:1000 4:0\n-1 1:-1000 4:0\n";
    CHECK(run_cli("attack alfa --train " + cli_data().first.string() + " --test " + (dir / "far.svm").string() +
                  " --out-dir " + (dir / "far").string()) == 3);
    CHECK(run_cli("attack none " + data_flags() + " --defenses l2 --out-dir " + (dir / "ok").string()) == 0);
  }
}
