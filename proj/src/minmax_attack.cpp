#include "poison/minmax_attack.hpp"

#include "poison/error.hpp"
#include "poison/format.hpp"
#include "poison/parallel.hpp"

#include <chrono>
#include <mutex>
#include <cmath>

namespace poison {

MaxLossPoint max_loss_point(const Vector& theta, const FeasibleSet& set, const LossSpec& loss) {
  std::optional<MaxLossPoint> best;
  for (int y : {1, -1}) {
    Vector x;
    try {
      x = min_margin_point(set, theta, y);
    } catch (const InfeasibleError&) {
      continue;
    }
    double margin = y * theta.dot(x);
    if (!best || margin < best->margin) best = MaxLossPoint{std::move(x), y, loss_at_margin(loss, margin), margin};
  }
  if (!best) throw InfeasibleError("no feasible point for either label");
  return *best;
}

MinMaxRun minmax_basic(const Dataset& clean, double epsilon, const FeasibleSet& set, const LossSpec& loss,
                       double lambda, const MinMaxConfig& config) {
  if (!(lambda > 0.0)) throw ValidationError("min-max attack needs lambda > 0");
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  const double eta = config.eta > 0.0 ? config.eta : 0.05 / lambda;
  const long n_burn = config.n_burn >= 0 ? config.n_burn : static_cast<long>(clean.total_weight() / 10.0);
  const long n_poison = std::lround(epsilon * clean.total_weight());

  MinMaxRun run;
  run.theta = Vector::Zero(clean.dim());
  Dataset collected(clean.dim(), clean.domain());
  for (long t = 1; t <= n_burn + n_poison; ++t) {
    MaxLossPoint point = max_loss_point(run.theta, set, loss);
    double clean_loss = avg_loss(run.theta, clean, loss);
    run.trace.push_back({t, point.loss, point.margin, point.y, clean_loss, clean_loss + epsilon * point.loss, run.theta});
    if (t > n_burn) collected.add(point.x, point.y, 1.0);
    Vector step = lambda * run.theta + avg_gradient(run.theta, clean, loss) +
                  epsilon * grad_point(loss, run.theta, point.x, point.y);
    run.theta -= (eta / std::sqrt(static_cast<double>(t))) * step;
    if (!run.theta.allFinite() || run.theta.norm() > config.divergence) {
      throw SolverError("min-max iterates diverged at step " + std::to_string(t) + " (||theta|| = " +
                        format_double(run.theta.norm()) + ")");
    }
  }
  run.iterations = n_burn + n_poison;
  if (!collected.empty()) {
    double share = epsilon * clean.total_weight() / static_cast<double>(collected.size());
    for (Index i = 0; i < collected.size(); ++i) collected.set_weight(i, share);
  }
  run.poison = std::move(collected);
  return run;
}

AttackResult run_minmax_basic(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                              const MinMaxConfig& config, const EvalConfig& eval, std::vector<MinMaxTraceRow>* trace) {
  auto start = std::chrono::steady_clock::now();
  MinMaxRun run = minmax_basic(clean, epsilon, set, eval.loss, eval.train.lambda, config);
  if (trace) *trace = run.trace;
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  AttackResult result = make_result("minmax-basic", epsilon, 0, std::move(run.poison), clean, test, eval);
  result.seconds = seconds;
  return result;
}

AttackResult run_minmax(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& base,
                        const std::vector<DecoyParams>& decoys, const MinMaxConfig& config, const EvalConfig& eval) {
  if (decoys.empty()) throw ValidationError("min-max attack needs at least one decoy");
  auto start = std::chrono::steady_clock::now();
  struct Candidate {
    bool ok = false;
    double score = -1.0;
    Dataset poison;
  };
  std::vector<Candidate> candidates(decoys.size());
  std::mutex progress_mutex;
  double best_so_far = -1.0;
  parallel_for(decoys.size(), [&](std::size_t k) {
    FeasibleSet set = base;
    add_decoy_cap(set, decoys[k].model.theta, eval.loss, config.tau_loss, config.tau_loss);
    try {
      MinMaxRun run = minmax_basic(clean, epsilon, set, eval.loss, eval.train.lambda, config);
      Candidate c;
      c.score = min_over_defense(evaluate_defenses(clean, run.poison, test, eval));
      c.poison = std::move(run.poison);
      c.ok = true;
      if (eval.progress) {
        std::lock_guard lock(progress_mutex);
        best_so_far = std::max(best_so_far, c.score);
        eval.progress(best_so_far);
      }
      candidates[k] = std::move(c);
    } catch (const InfeasibleError&) {
    }
  });
  std::size_t best = candidates.size();
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (!candidates[k].ok) continue;
    if (best == candidates.size() || candidates[k].score > candidates[best].score) best = k;
  }
  if (best == candidates.size()) throw InfeasibleError("no decoy left a feasible min-max problem");
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  AttackResult result = make_result("minmax", epsilon, 0, std::move(candidates[best].poison), clean, test, eval);
  const DecoyParams& chosen = decoys[best];
  result.decoy = DecoyProvenance{static_cast<Index>(best), chosen.gamma, chosen.repeats, chosen.test_error,
                                 chosen.train_loss_on_clean};
  result.seconds = seconds;
  return result;
}

}  // namespace poison
