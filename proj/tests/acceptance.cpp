// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits non-zero when
// any criterion fails.

#include "oracles.hpp"
#include "poison/dataset.hpp"
#include "poison/defenses.hpp"
#include "poison/error.hpp"
#include "poison/feasible_set.hpp"
#include "poison/harness.hpp"
#include "poison/influence_attack.hpp"
#include "poison/kkt_attack.hpp"
#include "poison/minmax_attack.hpp"
#include "poison/rounding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

using namespace poison;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  enum Status { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

Outcome pass(std::string detail) { return {Outcome::Pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Fail, std::move(detail)}; }

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

std::set<std::vector<double>> distinct_points(const Dataset& data) {
  std::set<std::vector<double>> out;
  for (Index i = 0; i < data.size(); ++i) out.insert(std::vector<double>(data.x(i).begin(), data.x(i).end()));
  return out;
}

Vector summed_gradient(const Dataset& data, const Vector& theta, const LossSpec& loss) {
  Vector g = Vector::Zero(theta.size());
  for (Index i = 0; i < data.size(); ++i) g += data.w(i) * grad_point(loss, theta, data.x(i).transpose(), data.y(i));
  return g;
}

// Collapse suite shared by the hinge and logistic criteria: 50 instances, n = 200, d = 10,
// lambda = 0.1, sum-of-losses training, 5% poison drawn inside random per-class balls.
Outcome collapse_suite(const LossSpec& loss, bool margin_checks) {
  auto start = Clock::now();
  CounterRng rng(loss.kind == LossKind::Hinge ? 101 : 202);
  const Index n = 200, d = 10;
  const double lambda = 0.1;
  TrainConfig config;
  config.lambda = lambda;
  config.objective = Objective::SumLoss;
  double worst_gap = 0.0, worst_grad = 0.0, worst_alpha_violation = 0.0;
  int failures = 0;
  for (int instance = 0; instance < 50; ++instance) {
    Dataset clean = oracle::gaussian_blobs(rng, n, d, 1.0 + rng.uniform());
    FeasibleSet set(d);
    for (int y : {-1, 1}) set.at(y).ball = BallAtom{oracle::random_vector(rng, d, 0.5), 0.5 + 2.0 * rng.uniform()};
    Dataset poison(d);
    for (int k = 0; k < n / 20; ++k) {
      int y = rng.uniform() < 0.5 ? 1 : -1;
      const BallAtom& ball = *set.at(y).ball;
      poison.add(oracle::random_in_ball(rng, ball.center, 0.999 * ball.radius), y, 0.5 + rng.uniform());
    }
    Dataset full = combine(clean, poison);
    TrainResult fit = train_detailed(full, loss, config);
    const Vector& theta = fit.model.theta;
    Vector gamma = fit.coefficients.tail(poison.size());
    CollapsedAttack c = collapse_two_points(poison, theta, loss, loss.kind == LossKind::Hinge ? &gamma : nullptr);

    bool ok = distinct_points(c.points).size() <= 2;
    ok = ok && c.points.total_weight() <= poison.total_weight() * (1.0 + 1e-12);
    for (Index i = 0; i < c.points.size(); ++i) ok = ok && set.contains(c.points.x(i).transpose(), c.points.y(i));
    Vector retrained = train(combine(clean, c.points), loss, config).theta;
    double gap = (retrained - theta).norm() / (1.0 + theta.norm());
    worst_gap = std::max(worst_gap, gap);
    ok = ok && gap <= 1e-4;
    if (margin_checks) {
      double grad_gap = (summed_gradient(c.points, theta, loss) - summed_gradient(poison, theta, loss)).norm();
      worst_grad = std::max(worst_grad, grad_gap);
      ok = ok && grad_gap <= 1e-10;
      for (double alpha : c.fold_alphas) {
        double violation = std::max(0.0, std::max(-alpha, alpha - 1.0));
        worst_alpha_violation = std::max(worst_alpha_violation, violation);
        ok = ok && violation == 0.0;
      }
    }
    if (!ok) ++failures;
  }
  double secs = seconds_since(start);
  std::string detail = "failures " + std::to_string(failures) + "/50, worst relative gap " + fmt(worst_gap);
  if (margin_checks) detail += ", worst gradient gap " + fmt(worst_grad) + ", alpha violation " + fmt(worst_alpha_violation);
  detail += ", " + fmt(secs) + " s";
  return failures == 0 && secs < 120.0 ? pass(detail) : fail(detail);
}

Outcome ac1() { return collapse_suite(LossSpec::hinge(), false); }
Outcome ac2() { return collapse_suite(LossSpec::logistic(), true); }

Outcome ac3() {
  double worst_enum = 0.0, worst_lines = 0.0;
  for (int i = 0; i < 10000; ++i) {
    double x = 20.0 * i / 9999.0;
    double lo = std::floor(x), frac = x - lo;
    double enumerated = (1.0 - frac) * lo * lo + frac * (lo + 1.0) * (lo + 1.0);
    double closed = x * (std::ceil(x) + std::floor(x)) - std::ceil(x) * std::floor(x);
    worst_enum = std::max(worst_enum, std::abs(f_piecewise(x) - enumerated));
    worst_lines = std::max(worst_lines, std::abs(f_max_of_lines(x, 20) - closed));
  }
  CounterRng rng(303);
  int jensen_failures = 0;
  for (int k = 0; k < 1000; ++k) {
    Index d = 1 + static_cast<Index>(rng.index(8));
    Vector x(d), mu(d);
    for (Index i = 0; i < d; ++i) {
      x[i] = 20.0 * rng.uniform();
      mu[i] = 24.0 * rng.uniform() - 2.0;
    }
    if (expected_sq_distance(x, mu) < (x - mu).squaredNorm()) ++jensen_failures;
  }
  std::string detail = "enumeration gap " + fmt(worst_enum) + ", max-of-lines gap " + fmt(worst_lines) +
                       ", Jensen failures " + std::to_string(jensen_failures);
  return worst_enum <= 1e-12 && worst_lines <= 1e-12 && jensen_failures == 0 ? pass(detail) : fail(detail);
}

Outcome ac4() {
  auto start = Clock::now();
  CounterRng rng(404);
  const Index d = 5;
  const double lambda = 0.1;
  const LossSpec loss = LossSpec::smoothed_hinge(0.01);
  Dataset clean = oracle::gaussian_blobs(rng, 49, d, 1.0);
  Dataset test = oracle::gaussian_blobs(rng, 50, d, 1.0);
  TrainConfig config;
  config.lambda = lambda;
  config.optimizer = BatchExact{1e-14, 1000};
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    // One poisoned point near the margin so that its influence is not negligible.
    int y = trial % 2 ? 1 : -1;
    Vector x = oracle::random_vector(rng, d, 0.7);
    const double target = 1.0 + 0.02 * (2.0 * rng.uniform() - 1.0);
    Dataset full;
    Vector theta;
    for (int pass = 0; pass < 6; ++pass) {
      full = clean;
      full.add(x, y);
      theta = train(full, loss, config).theta;
      x += (target - y * theta.dot(x)) * y * theta / theta.squaredNorm();
    }
    full = clean;
    full.add(x, y);
    theta = train(full, loss, config).theta;
    Vector g = influence_gradient(theta, full, lambda, test_gradient(theta, test, loss), x, y, 1.0, loss, 1e-13);
    Index j = static_cast<Index>(rng.index(d));
    auto test_loss = [&](double offset) {
      Dataset moved = clean;
      Vector z = x;
      z[j] += offset;
      moved.add(z, y);
      return avg_loss(train(moved, loss, config).theta, test, loss);
    };
    double fd = (test_loss(h) - test_loss(-h)) / (2.0 * h);
    double rel = std::abs(fd - g[j]) / std::max(std::abs(fd), std::abs(g[j]));
    worst = std::max(worst, rel);
  }
  double secs = seconds_since(start);
  std::string detail = "worst relative error " + fmt(worst) + " over 20 coordinates, " + fmt(secs) + " s";
  return worst <= 1e-3 && secs < 300.0 ? pass(detail) : fail(detail);
}

Outcome ac5() {
  CounterRng rng(505);
  double worst = 0.0;
  for (Index d : {2, 5, 10, 20, 35, 50}) {
    for (int trial = 0; trial < 3; ++trial) {
      Dataset data = oracle::gaussian_blobs(rng, 4 * d, d, 0.7);
      Vector theta = oracle::random_vector(rng, d, 0.4);
      Vector v = oracle::random_vector(rng, d);
      for (LossSpec loss : {LossSpec::smoothed_hinge(0.01), LossSpec::logistic()}) {
        Eigen::MatrixXd H = oracle::dense_hessian(theta, data, 0.01, loss);
        Vector dense = H.ldlt().solve(v);
        Vector cg = inverse_hvp_cg(theta, data, 0.01, v, loss, 1e-14).solution;
        worst = std::max(worst, (cg - dense).norm() / dense.norm());
      }
    }
  }
  std::string detail = "worst relative difference " + fmt(worst);
  return worst <= 1e-8 ? pass(detail) : fail(detail);
}

Outcome ac6() {
  CounterRng rng(606);
  int count_failures = 0, count_instances = 0, tied_instances = 0;
  for (int trial = 0; trial < 30; ++trial) {
    Dataset data = oracle::gaussian_blobs(rng, 100 + static_cast<Index>(rng.index(400)), 4, 1.0);
    for (DefenseKind kind : all_defenses()) {
      DefenseSpec spec = DefenseSpec::of(kind);
      spec.loss = LossSpec::hinge();
      // A full-rank basis would leave only round-off residuals.
      spec.frob_target = 0.3;
      DetectorParams beta = fit_detector(spec, data);
      Vector scores = score_all(beta, data, kind == DefenseKind::Knn);
      // Mutual nearest neighbors and zero hinge losses tie; the bound is checked on those too.
      std::vector<double> sorted(scores.begin(), scores.end());
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) ++tied_instances;
      ++count_instances;
      for (double p : {0.01, 0.05, 0.1}) {
        Thresholds tau = fit_thresholds(beta, data, p);
        Dataset kept = sanitize(data, beta, tau);
        for (int y : {-1, 1}) {
          double m = data.class_weight(y);
          double removed = m - kept.class_weight(y);
          if (std::abs(removed - p * m) > 1.0) ++count_failures;
        }
      }
    }
  }

  // Score oracle: each score computed by hand on 20 points.
  Dataset pts = oracle::gaussian_blobs(rng, 20, 3, 1.2);
  Vector mp = Vector::Zero(3), mm = Vector::Zero(3);
  double wp = 0.0, wm = 0.0;
  for (Index i = 0; i < pts.size(); ++i) {
    if (pts.y(i) > 0) mp += pts.x(i).transpose(), wp += 1.0;
    else mm += pts.x(i).transpose(), wm += 1.0;
  }
  mp /= wp;
  mm /= wm;
  // SVD oracle: eigenvectors of X^T X with the smallest rank reaching the target.
  Eigen::MatrixXd X(pts.size(), 3);
  for (Index i = 0; i < pts.size(); ++i) X.row(i) = pts.x(i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X.transpose() * X);
  double total = eig.eigenvalues().sum(), kept_mass = 0.0;
  Index rank = 0;
  while (rank < 3) {
    kept_mass += eig.eigenvalues()[2 - rank];
    ++rank;
    if ((total - kept_mass) / total <= 0.3) break;
  }
  Eigen::MatrixXd basis = eig.eigenvectors().rightCols(rank);
  int score_failures = 0;
  double worst = 0.0;
  for (DefenseKind kind : all_defenses()) {
    DefenseSpec spec = DefenseSpec::of(kind);
    spec.loss = LossSpec::hinge();
    spec.frob_target = 0.3;
    DetectorParams beta = fit_detector(spec, pts);
    Vector scores = score_all(beta, pts, kind == DefenseKind::Knn);
    for (Index i = 0; i < pts.size(); ++i) {
      Vector x = pts.x(i).transpose();
      int y = pts.y(i);
      const Vector& mu = y > 0 ? mp : mm;
      double expected = 0.0;
      switch (kind) {
        case DefenseKind::L2: expected = (x - mu).norm(); break;
        case DefenseKind::Slab: expected = std::abs((mp - mm).dot(x - mu)); break;
        case DefenseKind::Loss: expected = std::max(0.0, 1.0 - y * beta.model.theta.dot(x)); break;
        case DefenseKind::Svd: expected = (x - basis * (basis.transpose() * x)).norm(); break;
        case DefenseKind::Knn: expected = oracle::kth_distance(pts, x, 5, i); break;
      }
      double err = std::abs(scores[i] - expected) / std::max(1.0, std::abs(expected));
      worst = std::max(worst, err);
      if (err > 1e-12) ++score_failures;
    }
  }
  std::string detail = "svd oracle rank " + std::to_string(rank) + ", count violations " + std::to_string(count_failures) + " on " +
                       std::to_string(count_instances) + " instances (" +
                       std::to_string(tied_instances) + " with tied scores), score mismatches " +
                       std::to_string(score_failures) + " (worst " + fmt(worst) + ")";
  return count_failures == 0 && score_failures == 0 ? pass(detail) : fail(detail);
}

Outcome ac7() {
  CounterRng rng(707);
  int solved = 0, failures = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 5;
    Dataset clean = oracle::gaussian_blobs(rng, 80, d, 1.0);
    TrainConfig config;
    config.lambda = 0.05 + 0.1 * rng.uniform();
    config.objective = trial % 2 ? Objective::SumLoss : Objective::MeanLoss;
    const LossSpec loss = LossSpec::hinge();
    Vector decoy = oracle::random_vector(rng, d, 0.5);
    const double eps = 0.1 + 0.2 * rng.uniform();
    const double eps_plus = eps * (0.2 + 0.6 * rng.uniform());
    const double eps_minus = eps - eps_plus;
    FeasibleSet set(d);
    for (int y : {-1, 1}) set.at(y).ball = BallAtom{Vector::Zero(d), 100.0};
    KktSolution s =
        kkt_solve(clean_gradient(decoy, clean, loss), decoy, eps_plus, eps_minus, set, kkt_lambda(clean, config, eps));
    if (s.objective > 1e-10) continue;
    ++solved;
    Vector theta = train(combine(clean, kkt_poison(s, eps_plus, eps_minus, clean)), loss, config).theta;
    double gap = (theta - decoy).norm() / (1.0 + decoy.norm());
    worst = std::max(worst, gap);
    if (gap > 1e-4) ++failures;
  }
  std::string detail = std::to_string(solved) + " solvable instances, worst relative gap " + fmt(worst);
  return solved > 0 && failures == 0 ? pass(detail) : fail(detail);
}

Outcome ac8() {
  auto [clean, test] = synth_gaussians(808, 2000, 20, 4.2, 0.5);
  EvalConfig eval;
  const LossSpec loss = eval.loss;
  Vector theta_clean = train(clean, loss, eval.train).theta;
  auto decoys = gen_decoys(clean, test, loss, eval.train);
  double worst = -1e300;
  int failures = 0;
  for (const auto& decoy : decoys) {
    Dataset flips = flip_set(test, theta_clean, loss, decoy.quantile, decoy.repeats);
    double lhs = avg_loss(decoy.model.theta, clean, loss);
    double rhs = avg_loss(theta_clean, clean, loss);
    if (!flips.empty()) rhs += flips.total_weight() / clean.total_weight() * avg_loss(theta_clean, flips, loss);
    worst = std::max(worst, lhs - rhs);
    if (lhs > rhs + 1e-8) ++failures;
  }
  std::string detail = std::to_string(decoys.size()) + " decoys, worst lhs - rhs " + fmt(worst);
  return !decoys.empty() && failures == 0 ? pass(detail) : fail(detail);
}

Outcome ac9() {
  CounterRng rng(909);
  double worst_point = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Index d = 2 + static_cast<Index>(rng.index(10));
    FeasibleSet set(d);
    Vector mp = oracle::random_vector(rng, d), mm = oracle::random_vector(rng, d);
    double tp = 0.2 + 2.0 * rng.uniform(), tm = 0.2 + 2.0 * rng.uniform();
    set.at(1).ball = BallAtom{mp, tp};
    set.at(-1).ball = BallAtom{mm, tm};
    Vector theta = oracle::random_vector(rng, d);
    for (int y : {-1, 1}) {
      const Vector& mu = y > 0 ? mp : mm;
      double tau = y > 0 ? tp : tm;
      Vector analytic = mu - tau * y * theta / theta.norm();
      worst_point = std::max(worst_point, (min_margin_point(set, theta, y) - analytic).norm());
    }
  }

  // 500-step run: 450 burn-in steps and 50 collected points.
  auto [clean, test] = synth_gaussians(910, 1000, 10, 4.0, 0.5);
  FeasibleSet set = feasible_from_defenses(clean, 0.05);
  MinMaxConfig config;
  config.n_burn = 450;
  const double eps = 0.05;
  const LossSpec loss = LossSpec::hinge();
  MinMaxRun run = minmax_basic(clean, eps, set, loss, 0.01, config);
  int bound_failures = 0;
  for (const auto& row : run.trace) {
    double lc = avg_loss(row.theta, clean, loss);
    double lp = avg_loss(row.theta, run.poison, loss);
    double mixed = avg_loss(row.theta, combine(clean, run.poison), loss);
    // L(theta; D_c) <= (1 + eps) L(theta; D_c + D_p), and the max-loss point bounds
    // every feasible attack.
    if (lc > (1.0 + eps) * mixed + 1e-12) ++bound_failures;
    if (lc + eps * lp > row.bound + 1e-9) ++bound_failures;
  }
  std::string detail = "worst maximizer distance " + fmt(worst_point) + ", " + std::to_string(run.trace.size()) +
                       " iterates, bound violations " + std::to_string(bound_failures);
  return worst_point <= 1e-6 && run.trace.size() == 500 && bound_failures == 0 ? pass(detail) : fail(detail);
}

Outcome ac10() {
  auto start = Clock::now();
  auto [clean, test] = synth_gaussians(1010, 2000, 20, 4.2, 0.5);
  AttackSetup setup;
  setup.clean = clean;
  setup.test = test;
  setup.epsilon = 0.03;
  double base = clean_error(clean, test, setup.eval);
  std::ostringstream detail;
  detail << "base " << fmt(base);
  double gains[4];
  const char* names[4] = {"influence", "kkt", "minmax", "alfa"};
  for (int k = 0; k < 4; ++k) {
    AttackResult r = run_named_attack(names[k], setup);
    gains[k] = r.min_over_defense - base;
    detail << ", " << names[k] << (gains[k] >= 0 ? " +" : " ") << fmt(100.0 * gains[k]) << " pts";
  }
  double secs = seconds_since(start);
  detail << ", " << fmt(secs) << " s";
  bool ok = base <= 0.02 && secs < 1200.0;
  for (int k = 0; k < 3; ++k) ok = ok && gains[k] >= 0.05 && gains[3] < gains[k];
  return ok ? pass(detail.str()) : fail(detail.str());
}

Outcome ac11() {
  const char* dir = std::getenv("POISON_ENRON_DIR");
  if (!dir) return {Outcome::Skip, "POISON_ENRON_DIR not set"};
  std::filesystem::path root(dir);
  if (!std::filesystem::exists(root / "train.svm") || !std::filesystem::exists(root / "test.svm"))
    return {Outcome::Skip, "train.svm or test.svm missing under POISON_ENRON_DIR"};
  Dataset clean = load_dataset(root / "train.svm", DataFormat::SparseText, InputDomain::NonnegInteger);
  Dataset test = load_dataset(root / "test.svm", DataFormat::SparseText, InputDomain::NonnegInteger);
  AttackSetup setup;
  setup.clean = clean;
  setup.test = test;
  setup.epsilon = 0.03;
  double base = clean_error(clean, test, setup.eval);
  auto start = Clock::now();
  AttackResult r = run_named_attack("kkt", setup);
  double secs = seconds_since(start);
  std::string detail = "base " + fmt(base) + ", kkt min over defenses " + fmt(r.min_over_defense) + ", " +
                       fmt(secs) + " s";
  bool ok = r.min_over_defense >= 0.18 && std::abs(base - 0.029) <= 0.005 && secs < 600.0;
  return ok ? pass(detail) : fail(detail);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4},   {"AC5", ac5},   {"AC6", ac6},
      {"AC7", ac7}, {"AC8", ac8}, {"AC9", ac9}, {"AC10", ac10}, {"AC11", ac11},
  };
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);
  int failed = 0;
  for (auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out = fail(std::string("exception: ") + e.what());
    }
    const char* tag = out.status == Outcome::Pass ? "PASS" : out.status == Outcome::Skip ? "SKIP" : "FAIL";
    if (out.status == Outcome::Fail) ++failed;
    std::cout << name << " " << tag << " " << out.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
