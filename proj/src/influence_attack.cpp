#include "poison/influence_attack.hpp"

#include "poison/error.hpp"
#include "poison/parallel.hpp"
#include "poison/rng.hpp"

#include <chrono>
#include <cmath>

namespace poison {

Vector test_gradient(const Vector& theta, const Dataset& test, const LossSpec& loss) {
  return avg_gradient(theta, test, loss);
}

Vector influence_gradient_from(const Vector& theta, const Vector& h_inv_g, const Dataset& train_full,
                               const Eigen::Ref<const Vector>& x, int y, double weight, const LossSpec& loss) {
  const double m = y * theta.dot(x);
  const double c1 = dloss_at_margin(loss, m);
  const double c2 = d2loss_at_margin(loss, m);
  const double share = weight / train_full.total_weight();
  return -share * (c2 * h_inv_g.dot(x) * theta + (c1 * y) * h_inv_g);
}

Vector influence_gradient(const Vector& theta, const Dataset& train_full, double lambda, const Vector& g_test,
                          const Eigen::Ref<const Vector>& x, int y, double weight, const LossSpec& loss,
                          double cg_tol) {
  if (g_test.norm() == 0.0) return Vector::Zero(theta.size());
  Vector u = inverse_hvp_cg(theta, train_full, lambda, g_test, loss, cg_tol).solution;
  return influence_gradient_from(theta, u, train_full, x, y, weight, loss);
}

Dataset init_label_flip(const Dataset& clean, double epsilon, const FeasibleSet& set, std::uint64_t seed) {
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  Dataset out(clean.dim(), clean.domain());
  double remaining = epsilon * clean.total_weight();
  if (remaining <= 0.0) return out;
  if (clean.empty()) throw ValidationError("label-flip initialization needs clean data");
  CounterRng rng(seed);
  const std::uint64_t n = static_cast<std::uint64_t>(clean.size());
  const std::uint64_t cap = 20 * n + 10000;
  std::uint64_t draws = 0;
  while (remaining > 1e-12) {
    if (draws++ >= cap) {
      if (out.empty()) throw InfeasibleError("no label-flipped clean point lies in the feasible set");
      break;
    }
    Index i = static_cast<Index>(rng.index(n));
    int flipped = -clean.y(i);
    if (!set.contains(clean.x(i).transpose(), flipped)) continue;
    double w = std::min(1.0, remaining);
    out.add(clean.x(i).transpose(), flipped, w);
    remaining -= w;
  }
  if (remaining > 1e-12) {
    // Rare feasible flips: spread the leftover budget over what was found.
    double factor = (out.total_weight() + remaining) / out.total_weight();
    for (Index i = 0; i < out.size(); ++i) out.set_weight(i, out.w(i) * factor);
  }
  return out;
}

namespace {

struct Progress {
  double error = -1.0;
  double loss = -1.0;
  bool better_than(const Progress& other) const {
    return error > other.error || (error == other.error && loss > other.loss);
  }
};

struct Trajectory {
  Dataset best;
  Progress best_progress;
  std::vector<InfluenceTraceRow> trace;
};

Trajectory ascend(const Dataset& clean, const Dataset& test, const FeasibleSet& set, const Dataset& start,
                  double step, int steps, const InfluenceConfig& config, double lambda, bool report) {
  const LossSpec attack_loss = LossSpec::smoothed_hinge(config.delta);
  TrainConfig train_config;
  train_config.lambda = lambda;
  Dataset poison = start;
  Trajectory out{poison, {}, {}};
  Vector theta;
  Vector u;
  double moved = 0.0;
  for (int t = 0;; ++t) {
    Dataset full = combine(clean, poison);
    theta = train_detailed(full, attack_loss, train_config, theta.size() ? &theta : nullptr).model.theta;
    Progress now{test_error_01(theta, test), avg_loss(theta, test, attack_loss)};
    out.trace.push_back({t, now.loss, now.error, moved});
    if (report && config.on_iterate) config.on_iterate(poison);
    if (now.better_than(out.best_progress)) {
      out.best_progress = now;
      out.best = poison;
    }
    if (t >= steps) break;
    Vector g = test_gradient(theta, test, attack_loss);
    if (g.norm() == 0.0) break;
    u = inverse_hvp_cg(theta, full, lambda, g, attack_loss, config.cg_tol, 0, u.size() ? &u : nullptr).solution;
    Dataset next(poison.dim(), poison.domain());
    moved = 0.0;
    for (Index i = 0; i < poison.size(); ++i) {
      Vector x = poison.x(i).transpose();
      Vector grad = influence_gradient_from(theta, u, full, x, poison.y(i), poison.w(i), attack_loss);
      double norm = grad.norm();
      Vector moved_to = norm > 0.0 ? set.project(x + (step / norm) * grad, poison.y(i)) : x;
      moved += (moved_to - x).squaredNorm();
      next.add(moved_to, poison.y(i), poison.w(i));
    }
    moved = std::sqrt(moved);
    poison = std::move(next);
  }
  return out;
}

}  // namespace

InfluenceRun influence_attack(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                              const InfluenceConfig& config, double lambda) {
  if (!(config.delta > 0.0)) throw ValidationError("influence attack needs delta > 0");
  if (config.eta_grid.empty()) throw ValidationError("influence attack needs at least one step size");
  for (double eta : config.eta_grid)
    if (!(eta > 0.0)) throw ValidationError("step sizes must be positive");
  if (config.steps < 0) throw ValidationError("step count must be non-negative");
  if (!clean.has_both_classes()) throw ValidationError("influence attack needs both classes in the clean data");

  InfluenceRun run{Dataset(clean.dim(), clean.domain()), {}, 0.0};
  if (epsilon <= 0.0) return run;
  Dataset flips = init_label_flip(clean, epsilon, set, config.seed);
  Dataset start(clean.dim(), clean.domain());
  if (config.concentrated) {
    const double budget = epsilon * clean.total_weight();
    const double P = clean.class_weight(1);
    const double N = clean.class_weight(-1);
    for (int y : {1, -1}) {
      double w = budget * (y > 0 ? N : P) / (P + N);
      if (w <= 0.0) continue;
      Vector mean = Vector::Zero(clean.dim());
      double mass = 0.0;
      for (Index i = 0; i < flips.size(); ++i) {
        if (flips.y(i) != y) continue;
        mean += flips.w(i) * flips.x(i).transpose();
        mass += flips.w(i);
      }
      start.add(mass > 0.0 ? set.project(mean / mass, y) : set.anchor(y), y, w);
    }
  } else {
    for (Index i = 0; i < flips.size(); ++i) start.add(set.project(flips.x(i).transpose(), flips.y(i)), flips.y(i), flips.w(i));
  }

  double scale = 0.0;
  for (Index i = 0; i < clean.size(); ++i) scale += clean.w(i) * clean.x(i).squaredNorm();
  scale = std::sqrt(scale / clean.total_weight());
  if (scale == 0.0) scale = 1.0;

  std::size_t chosen = 0;
  if (config.eta_grid.size() > 1 && config.steps > 0) {
    std::vector<Progress> probe(config.eta_grid.size());
    parallel_for(config.eta_grid.size(), [&](std::size_t k) {
      probe[k] = ascend(clean, test, set, start, config.eta_grid[k] * scale, std::min(config.probe_steps, config.steps),
                        config, lambda, false)
                     .best_progress;
    });
    for (std::size_t k = 1; k < probe.size(); ++k)
      if (probe[k].better_than(probe[chosen])) chosen = k;
  }
  Trajectory best = ascend(clean, test, set, start, config.eta_grid[chosen] * scale, config.steps, config, lambda, true);
  run.poison = std::move(best.best);
  run.trace = std::move(best.trace);
  run.eta = config.eta_grid[chosen];
  return run;
}

AttackResult run_influence(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                           const InfluenceConfig& config, const EvalConfig& eval,
                           std::vector<InfluenceTraceRow>* trace) {
  auto start = std::chrono::steady_clock::now();
  InfluenceRun run = influence_attack(clean, test, epsilon, set, config, eval.train.lambda);
  if (trace) *trace = run.trace;
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  AttackResult result = make_result("influence", epsilon, config.seed, std::move(run.poison), clean, test, eval);
  result.seconds = seconds;
  return result;
}

}  // namespace poison
