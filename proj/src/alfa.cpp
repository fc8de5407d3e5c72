#include "poison/alfa.hpp"

#include "poison/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace poison {

namespace {

Dataset take_budget(const Dataset& pool, const std::vector<Index>& order, double budget) {
  Dataset out(pool.dim(), pool.domain());
  double remaining = budget;
  for (Index i : order) {
    if (remaining <= 1e-12) break;
    double w = std::min(1.0, remaining);
    out.add(pool.x(i).transpose(), pool.y(i), w);
    remaining -= w;
  }
  if (remaining > 1e-12 && !out.empty()) {
    double factor = budget / out.total_weight();
    for (Index i = 0; i < out.size(); ++i) out.set_weight(i, out.w(i) * factor);
  }
  return out;
}

std::vector<Index> rank_descending(const Vector& key) {
  std::vector<Index> order(static_cast<std::size_t>(key.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return key[a] > key[b]; });
  return order;
}

}  // namespace

Dataset alfa_attack(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                    const LossSpec& loss, const TrainConfig& config, const AlfaConfig& options) {
  if (test.empty()) throw ValidationError("label-flip baseline needs test data");
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  const double budget = epsilon * clean.total_weight();
  if (budget <= 0.0) return Dataset(clean.dim(), clean.domain());

  Dataset pool(test.dim(), clean.domain());
  for (Index i = 0; i < test.size(); ++i)
    if (set.contains(test.x(i).transpose(), -test.y(i))) pool.add(test.x(i).transpose(), -test.y(i), 1.0);
  if (pool.empty()) throw InfeasibleError("no label-flipped test point lies in the feasible set");

  const Vector theta_star = train(clean, loss, config).theta;
  Vector clean_loss(pool.size());
  for (Index i = 0; i < pool.size(); ++i) clean_loss[i] = loss_point(loss, theta_star, pool.x(i).transpose(), pool.y(i));
  Dataset chosen = take_budget(pool, rank_descending(clean_loss), budget);
  if (!options.refine) return chosen;

  const Vector theta_hat = train(combine(clean, chosen), loss, config).theta;
  Vector gap(pool.size());
  for (Index i = 0; i < pool.size(); ++i)
    gap[i] = clean_loss[i] - loss_point(loss, theta_hat, pool.x(i).transpose(), pool.y(i));
  return take_budget(pool, rank_descending(gap), budget);
}

AttackResult run_alfa(const Dataset& clean, const Dataset& test, double epsilon, const FeasibleSet& set,
                      const EvalConfig& eval, const AlfaConfig& options) {
  auto start = std::chrono::steady_clock::now();
  Dataset poison = alfa_attack(clean, test, epsilon, set, eval.loss, eval.train, options);
  double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  AttackResult result = make_result("alfa", epsilon, 0, std::move(poison), clean, test, eval);
  result.seconds = seconds;
  if (eval.progress) eval.progress(result.min_over_defense);
  return result;
}

}  // namespace poison
