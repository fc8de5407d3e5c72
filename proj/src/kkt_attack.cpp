#include "poison/kkt_attack.hpp"

#include "poison/error.hpp"
#include "poison/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <cmath>

namespace poison {

Dataset flip_set(const Dataset& test, const Vector& theta_clean, const LossSpec& loss, double quantile,
                 double repeats, double* gamma) {
  if (!(quantile >= 0.0 && quantile <= 1.0)) throw ValidationError("quantile must lie in [0, 1]");
  if (!(repeats >= 0.0)) throw ValidationError("repeat count must be non-negative");
  Dataset out(test.dim(), test.domain());
  if (test.empty()) return out;
  std::vector<std::pair<double, Index>> losses;
  for (Index i = 0; i < test.size(); ++i)
    losses.emplace_back(loss_point(loss, theta_clean, test.x(i).transpose(), -test.y(i)), i);
  std::vector<std::pair<double, Index>> sorted = losses;
  std::sort(sorted.begin(), sorted.end());
  const double target = quantile * test.total_weight() * (1.0 - 1e-12);
  double acc = 0.0;
  double threshold = sorted.back().first;
  for (const auto& [value, i] : sorted) {
    acc += test.w(i);
    if (acc >= target) {
      threshold = value;
      break;
    }
  }
  if (gamma) *gamma = threshold;
  if (repeats == 0.0) return out;
  for (const auto& [value, i] : losses)
    if (value >= threshold) out.add(test.x(i).transpose(), -test.y(i), repeats * test.w(i));
  return out;
}

std::vector<DecoyParams> pareto_prune(const std::vector<DecoyParams>& candidates) {
  std::vector<DecoyParams> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    bool dominated = false;
    for (std::size_t j = 0; j < candidates.size() && !dominated; ++j) {
      if (i == j) continue;
      const auto& b = candidates[j];
      bool weakly = b.test_error >= a.test_error && b.train_loss_on_clean <= a.train_loss_on_clean;
      bool strictly = b.test_error > a.test_error || b.train_loss_on_clean < a.train_loss_on_clean;
      dominated = weakly && strictly;
    }
    if (!dominated) kept.push_back(a);
  }
  return kept;
}

std::vector<DecoyParams> gen_decoys(const Dataset& clean, const Dataset& test, const LossSpec& loss,
                                    const TrainConfig& config, const DecoyGrid& grid) {
  if (grid.repeats.empty() || grid.quantiles.empty()) throw ValidationError("decoy grids must be non-empty");
  if (test.empty()) throw ValidationError("decoy generation needs test data");
  const Vector theta_clean = train(clean, loss, config).theta;
  struct Job {
    double r, q;
  };
  std::vector<Job> jobs;
  for (double r : grid.repeats)
    for (double q : grid.quantiles) jobs.push_back({r, q});
  std::vector<std::optional<DecoyParams>> found(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t k) {
    double gamma = 0.0;
    Dataset flips = flip_set(test, theta_clean, loss, jobs[k].q, jobs[k].r, &gamma);
    if (flips.empty() && jobs[k].r > 0.0) return;
    DecoyParams decoy;
    decoy.model = flips.empty() ? ModelParams{theta_clean, loss, config.lambda} : train(combine(clean, flips), loss, config);
    decoy.gamma = gamma;
    decoy.quantile = jobs[k].q;
    decoy.repeats = jobs[k].r;
    decoy.flip_weight = flips.total_weight();
    decoy.train_loss_on_clean = avg_loss(decoy.model.theta, clean, loss);
    decoy.test_error = test_error_01(decoy.model.theta, test);
    found[k] = std::move(decoy);
  });
  std::vector<DecoyParams> all;
  for (auto& f : found)
    if (f) all.push_back(std::move(*f));
  return pareto_prune(all);
}

Vector clean_gradient(const Vector& theta_decoy, const Dataset& clean, const LossSpec& loss) {
  return avg_gradient(theta_decoy, clean, loss);
}

double kkt_lambda(const Dataset& clean, const TrainConfig& config, double epsilon) {
  return config.objective == Objective::MeanLoss ? (1.0 + epsilon) * config.lambda
                                                 : config.lambda / clean.total_weight();
}

KktSolution kkt_solve(const Vector& g_clean, const Vector& theta_decoy, double eps_plus, double eps_minus,
                      const FeasibleSet& set, double lambda, const KktOptions& options) {
  if (!(eps_plus >= 0.0 && eps_minus >= 0.0)) throw ValidationError("poison fractions must be non-negative");
  if (g_clean.size() != set.dim() || theta_decoy.size() != set.dim())
    throw ValidationError("dimension mismatch in the KKT problem");
  FeasibleSet margin_set = set;
  margin_set.at(1).halfspaces.push_back(HalfspaceAtom{-theta_decoy, -1.0});
  margin_set.at(-1).halfspaces.push_back(HalfspaceAtom{theta_decoy, -1.0});

  const Vector b = g_clean + lambda * theta_decoy;
  auto residual = [&](const Vector& xp, const Vector& xm) -> Vector { return b - eps_plus * xp + eps_minus * xm; };

  KktSolution out;
  out.x_plus = margin_set.anchor(1);
  out.x_minus = margin_set.anchor(-1);
  const double L = 2.0 * (eps_plus * eps_plus + eps_minus * eps_minus);
  if (L == 0.0) {
    out.objective = b.squaredNorm();
    return out;
  }

  Vector xp = out.x_plus, xm = out.x_minus;
  Vector yp = xp, ym = xm;
  double t = 1.0;
  double value = residual(xp, xm).squaredNorm();
  const double floor = 1e-30 * (1.0 + b.squaredNorm());
  int it = 0;
  for (; it < options.max_iter && value > floor; ++it) {
    Vector r = residual(yp, ym);
    Vector np = eps_plus > 0.0 ? margin_set.project(yp + (2.0 * eps_plus / L) * r, 1) : xp;
    Vector nm = eps_minus > 0.0 ? margin_set.project(ym - (2.0 * eps_minus / L) * r, -1) : xm;
    double next_value = residual(np, nm).squaredNorm();
    if (next_value > value) {
      // Restart momentum from the last accepted point.
      if (t == 1.0) break;
      t = 1.0;
      yp = xp;
      ym = xm;
      continue;
    }
    double moved = std::sqrt((np - xp).squaredNorm() + (nm - xm).squaredNorm());
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double beta = (t - 1.0) / t_next;
    yp = np + beta * (np - xp);
    ym = nm + beta * (nm - xm);
    xp = std::move(np);
    xm = std::move(nm);
    t = t_next;
    bool stalled = value - next_value <= options.tol * (1.0 + value) && moved <= 1e-12 * (1.0 + xp.norm() + xm.norm());
    value = next_value;
    if (stalled) break;
  }
  out.x_plus = std::move(xp);
  out.x_minus = std::move(xm);
  out.objective = value;
  out.iterations = it;
  return out;
}

Dataset kkt_poison(const KktSolution& solution, double eps_plus, double eps_minus, const Dataset& clean) {
  Dataset poison(clean.dim(), clean.domain());
  const double W = clean.total_weight();
  if (eps_plus > 0.0) poison.add(solution.x_plus, 1, eps_plus * W);
  if (eps_minus > 0.0) poison.add(solution.x_minus, -1, eps_minus * W);
  return poison;
}

FeasibleSet with_quantile_decoy_cap(const FeasibleSet& base, const Dataset& clean, const ModelParams& decoy, double p) {
  DetectorParams beta;
  beta.kind = DefenseKind::Loss;
  beta.model = decoy;
  Thresholds tau = fit_thresholds(beta, clean, p);
  FeasibleSet set = base;
  add_decoy_cap(set, decoy.theta, decoy.loss, tau.minus, tau.plus);
  return set;
}

AttackResult run_kkt(const Dataset& clean, const Dataset& test, double epsilon, const std::vector<DecoyParams>& decoys,
                     const FeasibleSet& base, const KktConfig& config, const EvalConfig& eval) {
  if (decoys.empty()) throw ValidationError("KKT attack needs at least one decoy");
  if (config.grid < 1) throw ValidationError("KKT grid needs at least one split");
  auto start = std::chrono::steady_clock::now();
  const double lambda_eff = kkt_lambda(clean, eval.train, epsilon);
  struct Candidate {
    bool ok = false;
    double score = -1.0;
    Dataset poison;
  };
  const std::size_t splits = static_cast<std::size_t>(config.grid) + 1;
  std::vector<Candidate> candidates(decoys.size() * splits);
  std::mutex progress_mutex;
  double best_so_far = -1.0;
  parallel_for(candidates.size(), [&](std::size_t job) {
    const DecoyParams& decoy = decoys[job / splits];
    const int t = static_cast<int>(job % splits);
    ModelParams target = decoy.model;
    target.loss = eval.loss;
    FeasibleSet set = config.decoy_cap ? with_quantile_decoy_cap(base, clean, target, config.p) : base;
    const double eps_plus = epsilon * t / config.grid;
    const double eps_minus = epsilon - eps_plus;
    try {
      Vector g = clean_gradient(target.theta, clean, eval.loss);
      KktSolution sol = kkt_solve(g, target.theta, eps_plus, eps_minus, set, lambda_eff, config.solver);
      Candidate c;
      c.poison = kkt_poison(sol, eps_plus, eps_minus, clean);
      c.score = min_over_defense(evaluate_defenses(clean, c.poison, test, eval));
      c.ok = true;
      if (eval.progress) {
        std::lock_guard lock(progress_mutex);
        best_so_far = std::max(best_so_far, c.score);
        eval.progress(best_so_far);
      }
      candidates[job] = std::move(c);
    } catch (const InfeasibleError&) {
    }
  });
  std::size_t best = candidates.size();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (!candidates[k].ok) continue;
    if (best == candidates.size() || candidates[k].score > candidates[best].score) best = k;
  }
  if (best == candidates.size()) throw InfeasibleError("every KKT subproblem was infeasible");
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  AttackResult result = make_result("kkt", epsilon, 0, std::move(candidates[best].poison), clean, test, eval);
  const DecoyParams& chosen = decoys[best / splits];
  result.decoy = DecoyProvenance{static_cast<Index>(best / splits), chosen.gamma, chosen.repeats, chosen.test_error,
                                 chosen.train_loss_on_clean};
  result.seconds = seconds;
  return result;
}

}  // namespace poison
