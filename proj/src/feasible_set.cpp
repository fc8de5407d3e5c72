#include "poison/feasible_set.hpp"

#include "poison/defenses.hpp"
#include "poison/error.hpp"

#include <cmath>
#include <limits>

namespace poison {

namespace {

constexpr double kShrink = 1e-9;

double tighten(double bound) { return bound - kShrink * std::max(1.0, std::abs(bound)); }

// log(exp(c) - 1) without overflow.
double log_expm1(double c) { return c > 30.0 ? c + std::log1p(-std::exp(-c)) : std::log(std::expm1(c)); }

}  // namespace

double decoy_margin_floor(const LossSpec& loss, double cap) {
  if (std::isinf(cap) && cap > 0) return -std::numeric_limits<double>::infinity();
  if (!(cap > 0.0)) return std::numeric_limits<double>::infinity();
  switch (loss.kind) {
    case LossKind::Hinge: return 1.0 - cap;
    case LossKind::Logistic: return -log_expm1(cap);
    case LossKind::SmoothedHinge: return 1.0 - loss.delta * log_expm1(cap / loss.delta);
  }
  return 0.0;
}

FeasibleSet::FeasibleSet(Index dim, InputDomain domain) : dim_(dim), domain_(domain) {}

bool FeasibleSet::contains(const Eigen::Ref<const Vector>& x, int y) const {
  if (x.size() != dim_) throw ValidationError("point dimension does not match the feasible set");
  if (!x.allFinite()) return false;
  if (domain_ == InputDomain::UnitInterval && ((x.array() < 0.0).any() || (x.array() > 1.0).any())) return false;
  if (domain_ == InputDomain::NonnegInteger && (x.array() < 0.0).any()) return false;
  const ClassConstraints& c = at(y);
  if (c.ball && !((x - c.ball->center).norm() < c.ball->radius)) return false;
  if (c.slab && !(std::abs(c.slab->axis.dot(x - c.slab->center)) < c.slab->half_width)) return false;
  if (c.decoy && !(loss_point(c.decoy->loss, c.decoy->theta, x, y) < c.decoy->cap)) return false;
  for (const auto& h : c.halfspaces)
    if (!(h.normal.dot(x) >= h.offset)) return false;
  if (c.expected_norm && !c.expected_norm->contains(x)) return false;
  return true;
}

std::vector<Atom> FeasibleSet::atoms(int y) const {
  const ClassConstraints& c = at(y);
  std::vector<Atom> out;
  if (c.ball) out.push_back(BallAtom{c.ball->center, std::max(0.0, tighten(c.ball->radius))});
  if (c.slab) {
    out.push_back(BandAtom{c.slab->axis, c.slab->axis.dot(c.slab->center),
                           std::max(0.0, tighten(c.slab->half_width * c.slab->axis.norm()) / c.slab->axis.norm())});
  }
  if (c.decoy) {
    double floor = decoy_margin_floor(c.decoy->loss, c.decoy->cap);
    if (std::isinf(floor) && floor > 0) throw InfeasibleError("decoy loss cap excludes every point");
    if (std::isfinite(floor)) {
      double offset = floor + kShrink * std::max(1.0, std::abs(floor));
      out.push_back(HalfspaceAtom{static_cast<double>(y) * c.decoy->theta, offset});
    }
  }
  for (const auto& h : c.halfspaces)
    out.push_back(HalfspaceAtom{h.normal, h.offset + kShrink * std::max(1.0, std::abs(h.offset))});
  if (c.expected_norm) {
    ExpectedNormConstraint tight = *c.expected_norm;
    tight.tau = std::max(0.0, tighten(tight.tau));
    out.push_back(ExpectedNormAtom{tight});
  }
  if (domain_ == InputDomain::UnitInterval) out.push_back(BoxAtom{0.0, 1.0});
  if (domain_ == InputDomain::NonnegInteger && !c.expected_norm)
    out.push_back(BoxAtom{0.0, std::numeric_limits<double>::infinity()});
  return out;
}

namespace {

Vector clip_domain(Vector x, InputDomain domain) {
  if (domain == InputDomain::UnitInterval) return x.cwiseMax(0.0).cwiseMin(1.0);
  if (domain == InputDomain::NonnegInteger) return x.cwiseMax(0.0);
  return x;
}

}  // namespace

Vector FeasibleSet::project(const Eigen::Ref<const Vector>& x, int y) const {
  if (x.size() != dim_) throw ValidationError("point dimension does not match the feasible set");
  if (contains(x, y)) return x;
  return clip_domain(project_intersection(atoms(y), x), domain_);
}

Vector FeasibleSet::anchor(int y) const {
  const ClassConstraints& c = at(y);
  Vector center = Vector::Zero(dim_);
  if (c.ball) center = c.ball->center;
  else if (c.expected_norm) center = c.expected_norm->mu;
  else if (c.slab) center = c.slab->center;
  return project(center, y);
}

bool FeasibleSet::bounded(int y) const {
  const ClassConstraints& c = at(y);
  return c.ball.has_value() || c.expected_norm.has_value() || domain_ == InputDomain::UnitInterval;
}

FeasibleSet feasible_from_defenses(const Dataset& data, double p, const FeasibleOptions& options) {
  FeasibleSet set(data.dim(), data.domain());
  if (!options.l2 && !options.slab) return set;
  auto [mu_plus, mu_minus] = class_centroids(data);
  if (options.l2) {
    DetectorParams beta = fit_detector(DefenseSpec::of(DefenseKind::L2), data);
    Thresholds tau = fit_thresholds(beta, data, p);
    bool relax = options.lp_relax && data.domain() == InputDomain::NonnegInteger;
    Eigen::VectorXi pieces = options.pieces.size() == data.dim() ? options.pieces : default_pieces(data);
    for (int y : {-1, 1}) {
      if (relax) set.at(y).expected_norm = lp_constraint_atoms(beta.centroid(y), tau[y], pieces);
      else set.at(y).ball = BallAtom{beta.centroid(y), tau[y]};
    }
  }
  if (options.slab) {
    DetectorParams beta = fit_detector(DefenseSpec::of(DefenseKind::Slab), data);
    Thresholds tau = fit_thresholds(beta, data, p);
    Vector axis = beta.mu_plus - beta.mu_minus;
    if (axis.norm() == 0.0) throw ValidationError("slab constraint needs distinct class centroids");
    for (int y : {-1, 1}) set.at(y).slab = SlabConstraint{axis, beta.centroid(y), tau[y]};
  }
  return set;
}

void add_decoy_cap(FeasibleSet& set, const Vector& theta_decoy, const LossSpec& loss, double cap_minus,
                   double cap_plus) {
  set.at(-1).decoy = DecoyCap{theta_decoy, loss, cap_minus};
  set.at(1).decoy = DecoyCap{theta_decoy, loss, cap_plus};
}

Vector min_margin_point(const FeasibleSet& set, const Vector& theta, int y) {
  if (theta.size() != set.dim()) throw ValidationError("parameter dimension does not match the feasible set");
  if (theta.norm() == 0.0) return set.anchor(y);
  if (!set.bounded(y)) throw SolverError("margin minimization is unbounded without an L2 constraint");
  const Vector v = static_cast<double>(y) * theta;
  const double vnorm = v.norm();
  std::vector<Atom> atoms = set.atoms(y);
  std::optional<BallAtom> ball;
  std::vector<Atom> rest;
  for (auto& atom : atoms) {
    if (!ball && std::holds_alternative<BallAtom>(atom)) ball = std::get<BallAtom>(atom);
    else rest.push_back(std::move(atom));
  }
  auto finish = [&](const Vector& x) { return clip_domain(x, set.domain()); };

  if (!ball) {
    // Bounded by the box or the expected-norm constraint: follow proj(c - t v) as t grows.
    Vector c = set.anchor(y);
    double t = 1.0 / vnorm;
    Vector best = project_intersection(rest, c - t * v);
    double value = v.dot(best);
    for (int it = 0; it < 200; ++it) {
      t *= 2.0;
      Vector next = project_intersection(rest, c - t * v);
      double next_value = v.dot(next);
      bool settled = std::abs(next_value - value) <= 1e-12 * (1.0 + std::abs(value));
      best = std::move(next);
      value = next_value;
      if (settled && it > 4) break;
    }
    return finish(best);
  }

  const Vector& c = ball->center;
  const double r = ball->radius;
  if (rest.empty()) return finish(c - (r / vnorm) * v);

  auto along = [&](double t) { return project_intersection(rest, c - t * v); };
  Vector x0 = along(0.0);
  if ((x0 - c).norm() > r) throw InfeasibleError("feasible region for this class is empty");
  double hi = r / vnorm;
  Vector x_hi = along(hi);
  while ((x_hi - c).norm() < r) {
    hi *= 2.0;
    if (hi > 1e15 * (1.0 + r) / vnorm) return finish(x_hi);  // the optimum over the rest lies inside the ball
    x_hi = along(hi);
  }
  double lo = 0.0;
  Vector x_lo = x0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    Vector x_mid = along(mid);
    if ((x_mid - c).norm() <= r) {
      lo = mid;
      x_lo = std::move(x_mid);
    } else {
      hi = mid;
    }
  }
  return finish(x_lo);
}

ConstrainedAttackRun run_constrained_attack(const Dataset& clean, const AttackProcedure& attack, int rounds, double p,
                                            const FeasibleOptions& options) {
  if (rounds < 1) throw ValidationError("constrained attack needs at least one round");
  ConstrainedAttackRun run{Dataset(clean.dim(), clean.domain()), feasible_from_defenses(clean, p, options)};
  for (int round = 0; round < rounds; ++round) {
    if (round > 0) {
      Dataset previous = run.poison;
      run.feasible = feasible_from_defenses(combine(clean, run.poison), p, options);
      run.poison = attack(run.feasible);
      if (run.poison == previous) break;
    } else {
      run.poison = attack(run.feasible);
      if (run.poison.empty()) break;
    }
  }
  return run;
}

CollapsedAttack collapse_two_points(const Dataset& poison, const Vector& theta, const LossSpec& loss,
                                    const Vector* coefficients) {
  if (theta.size() != poison.dim()) throw ValidationError("parameter dimension does not match the attack");
  if (coefficients && coefficients->size() != poison.size())
    throw ValidationError("one coefficient per poisoned point is required");
  CollapsedAttack out{Dataset(poison.dim(), poison.domain()), {}};
  for (int y : {1, -1}) {
    Vector sum = Vector::Zero(poison.dim());  // sum_i w_i c'_i x_i
    double mass = 0.0;                        // sum_i w_i c'_i
    double weight = 0.0;                      // current merged weight
    int members = 0;
    Index first = -1;
    for (Index i = 0; i < poison.size(); ++i) {
      if (poison.y(i) != y || poison.w(i) <= 0.0) continue;
      const double m = y * theta.dot(poison.x(i).transpose());
      double slope = -dloss_at_margin(loss, m);
      if (loss.kind == LossKind::Hinge && coefficients) slope = (*coefficients)[i];
      if (!(slope > 0.0)) continue;
      const double wi = loss.kind == LossKind::Hinge ? poison.w(i) * slope : poison.w(i);
      const double ci = loss.kind == LossKind::Hinge ? 1.0 : slope;
      sum += (wi * ci) * poison.x(i).transpose();
      mass += wi * ci;
      if (members == 0) {
        first = i;
        weight = poison.w(i);
      } else {
        Vector merged = sum / mass;
        double c_merged = loss.kind == LossKind::Hinge ? 1.0 : -dloss_at_margin(loss, y * theta.dot(merged));
        double merged_weight = mass / c_merged;
        out.fold_alphas.push_back(merged_weight / (weight + poison.w(i)));
        weight = merged_weight;
      }
      ++members;
    }
    if (members == 0) continue;
    if (members == 1 && !(loss.kind == LossKind::Hinge && coefficients && (*coefficients)[first] < 1.0)) {
      out.points.add(poison.x(first).transpose(), y, poison.w(first));
      continue;
    }
    Vector merged = sum / mass;
    double c_merged = loss.kind == LossKind::Hinge ? 1.0 : -dloss_at_margin(loss, y * theta.dot(merged));
    out.points.add(merged, y, mass / c_merged);
  }
  return out;
}

CollapseCheck check_collapse(const Dataset& clean, const Dataset& poison, const Dataset& collapsed,
                             const LossSpec& loss, double lambda, double tol, const FeasibleSet* set,
                             Objective objective) {
  Dataset original = combine(clean, poison);
  TrainConfig config;
  config.objective = Objective::SumLoss;
  config.lambda = objective == Objective::MeanLoss ? lambda * original.total_weight() : lambda;
  Vector a = train(original, loss, config).theta;
  Vector b = train(combine(clean, collapsed), loss, config).theta;
  CollapseCheck check;
  check.parameter_gap = (a - b).norm();
  check.allowed_gap = tol * (1.0 + a.norm());
  if (set) {
    for (Index i = 0; i < collapsed.size(); ++i)
      if (!set->contains(collapsed.x(i).transpose(), collapsed.y(i))) check.feasible = false;
  }
  check.ok = check.parameter_gap <= check.allowed_gap && check.feasible;
  return check;
}

bool verify_collapse(const Dataset& clean, const Dataset& poison, const Dataset& collapsed, const LossSpec& loss,
                     double lambda, double tol, const FeasibleSet* set, Objective objective) {
  return check_collapse(clean, poison, collapsed, loss, lambda, tol, set, objective).ok;
}

}  // namespace poison
