#include "poison/linear_model.hpp"

#include "poison/format.hpp"
#include "poison/rng.hpp"

#include <cmath>
#include <numeric>
#include <limits>
#include <optional>

namespace poison {

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

void require_dim(const Vector& theta, Index d) {
  if (theta.size() != d) {
    throw ValidationError("parameter dimension " + std::to_string(theta.size()) + " does not match data dimension " +
                          std::to_string(d));
  }
}

void require_nonempty(const Dataset& data, const char* what) {
  if (data.empty() || data.total_weight() <= 0.0) throw ValidationError(std::string(what) + " needs a non-empty dataset");
}

Vector dloss_vec(const LossSpec& loss, const Vector& m) {
  return m.unaryExpr([&](double v) { return dloss_at_margin(loss, v); });
}

Vector d2loss_vec(const LossSpec& loss, const Vector& m) {
  return m.unaryExpr([&](double v) { return d2loss_at_margin(loss, v); });
}

// Active-set method for the hinge dual min (1/2 lambda) ||Z^T a||^2 - sum a, 0 <= a <= w, with
// rows of Z equal to y_i x_i. Starts from a feasible a, keeps the points strictly inside
// the box free, minimizes exactly over them with a ratio test against the bounds, and
// frees the worst KKT violator once the free subproblem is solved. Returns the final KKT
// violation, or nothing if the iteration budget runs out.
std::optional<double> refine_hinge_dual(const Dataset& data, double lambda, Vector& a, int max_iter) {
  const Index n = data.size();
  auto X = data.features();
  Vector norms(n);
  std::vector<Index> free;
  for (Index i = 0; i < n; ++i) {
    norms[i] = X.row(i).norm();
    const double wi = data.w(i);
    if (wi <= 0.0 || norms[i] == 0.0) continue;
    if (a[i] <= 1e-12 * wi) a[i] = 0.0;
    else if (a[i] >= wi * (1.0 - 1e-12)) a[i] = wi;
    else free.push_back(i);
  }
  const double slack = 1e-11;
  bool solved = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    Vector ay(n);
    for (Index i = 0; i < n; ++i) ay[i] = a[i] * data.y(i);
    const Vector theta = X.transpose() * ay / lambda;
    const Vector g = (X * theta).cwiseProduct(data.labels()) - Vector::Ones(n);
    const double tnorm = theta.norm();
    auto tol_at = [&](Index i) { return slack * (1.0 + norms[i] * tnorm); };

    if (solved) {
      Index worst_i = -1;
      double worst = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double wi = data.w(i);
        if (wi <= 0.0 || norms[i] == 0.0 || (a[i] > 0.0 && a[i] < wi)) continue;
        const double bad = a[i] <= 0.0 ? -g[i] : g[i];
        if (bad > tol_at(i) && bad / tol_at(i) > worst) worst = bad / tol_at(i), worst_i = i;
      }
      if (worst_i < 0) {
        double residual = 0.0;
        for (Index i = 0; i < n; ++i) {
          const double wi = data.w(i);
          if (wi <= 0.0 || norms[i] == 0.0) continue;
          double bad = a[i] <= 0.0 ? -g[i] : a[i] >= wi ? g[i] : std::abs(g[i]);
          residual = std::max(residual, std::max(bad, 0.0));
        }
        return residual;
      }
      free.push_back(worst_i);
      solved = false;
    }
    const Index m = static_cast<Index>(free.size());
    if (m == 0) {
      solved = true;
      continue;
    }
    Eigen::MatrixXd Zf(m, data.dim());
    Vector gf(m);
    for (Index j = 0; j < m; ++j) {
      Zf.row(j) = data.y(free[j]) * X.row(free[j]);
      gf[j] = g[free[j]];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Zf * Zf.transpose() / lambda);
    const Vector& ev = eig.eigenvalues();
    const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    Vector coords = eig.eigenvectors().transpose() * (-gf);
    Vector null_part = Vector::Zero(m);
    Vector newton = Vector::Zero(m);
    for (Index k = 0; k < m; ++k) {
      if (ev[k] > cutoff) newton += (coords[k] / ev[k]) * eig.eigenvectors().col(k);
      else null_part += coords[k] * eig.eigenvectors().col(k);
    }
    // A descent direction of zero curvature means the free subproblem is unbounded until
    // a bound blocks it.
    const bool unbounded = null_part.norm() > 1e-10 * (1.0 + gf.norm());
    const Vector dir = unbounded ? null_part : newton;
    double alpha = unbounded ? std::numeric_limits<double>::infinity() : 1.0;
    Index blocker = -1;
    for (Index j = 0; j < m; ++j) {
      const double aj = a[free[j]];
      const double wj = data.w(free[j]);
      double limit = std::numeric_limits<double>::infinity();
      if (dir[j] > 0.0) limit = (wj - aj) / dir[j];
      else if (dir[j] < 0.0) limit = -aj / dir[j];
      if (limit < alpha) alpha = limit, blocker = j;
    }
    if (!std::isfinite(alpha)) return std::nullopt;
    std::vector<Index> still_free;
    for (Index j = 0; j < m; ++j) {
      const Index i = free[j];
      const double wi = data.w(i);
      double next = std::clamp(a[i] + alpha * dir[j], 0.0, wi);
      if (j == blocker) next = dir[j] > 0.0 ? wi : 0.0;
      if (next <= 1e-14 * wi) next = 0.0;
      if (next >= wi * (1.0 - 1e-14)) next = wi;
      a[i] = next;
      if (next > 0.0 && next < wi) still_free.push_back(i);
    }
    free = std::move(still_free);
    solved = blocker < 0;
  }
  return std::nullopt;
}

// Dual coordinate descent for lambda/2 ||theta||^2 + sum_i w_i max(0, 1 - y_i theta^T x_i).
// theta = (1/lambda) sum_i a_i y_i x_i with 0 <= a_i <= w_i.
TrainResult train_hinge_dual(const Dataset& data, double lambda, const BatchExact& opt) {
  const Index n = data.size();
  auto X = data.features();
  Vector sq(n);
  for (Index i = 0; i < n; ++i) sq[i] = X.row(i).squaredNorm();

  Vector a = Vector::Zero(n);
  std::vector<Index> order;
  for (Index i = 0; i < n; ++i) {
    if (data.w(i) <= 0.0) continue;
    if (sq[i] == 0.0) {
      a[i] = data.w(i);  // constant loss of 1, no effect on theta
      continue;
    }
    order.push_back(i);
  }
  Vector ay0(n);
  for (Index i = 0; i < n; ++i) ay0[i] = a[i] * data.y(i);
  Vector theta = X.transpose() * ay0 / lambda;

  CounterRng rng(0x5eed);
  double worst = 0.0;
  int epoch = 0;
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  bool shrunk = false;
  bool refined = false;
  for (; epoch < opt.max_iter; ++epoch) {
    rng.shuffle(order);
    worst = 0.0;
    for (Index i : order) {
      if (shrunk && !active[static_cast<std::size_t>(i)]) continue;
      const double yi = data.y(i);
      const double wi = data.w(i);
      const double g = yi * X.row(i).dot(theta) - 1.0;
      double pg = g;
      if (a[i] <= 0.0) pg = std::min(g, 0.0);
      else if (a[i] >= wi) pg = std::max(g, 0.0);
      worst = std::max(worst, std::abs(pg));
      if (pg == 0.0) {
        // Points firmly at a bound are skipped until the next full sweep.
        if ((a[i] <= 0.0 && g > 1e-3) || (a[i] >= wi && g < -1e-3)) active[static_cast<std::size_t>(i)] = 0;
        continue;
      }
      double next = std::clamp(a[i] - g * lambda / sq[i], 0.0, wi);
      double step = next - a[i];
      if (step != 0.0) {
        theta.noalias() += (step * yi / lambda) * X.row(i).transpose();
        a[i] = next;
      }
    }
    if ((worst <= 1e-3 && !refined) || epoch % 256 == 255) {
      // Hand over to the exact active-set method once the duals are roughly right.
      refined = true;
      Vector a_try = a;
      if (auto exact = refine_hinge_dual(data, lambda, a_try, static_cast<int>(std::max<Index>(2000, n)))) {
        a = std::move(a_try);
        worst = *exact;
        break;
      }
    }
    if (worst <= opt.tol) {
      if (!shrunk) break;
      // Confirm on a full sweep before stopping.
      shrunk = false;
      std::fill(active.begin(), active.end(), 1);
      continue;
    }
    shrunk = true;
  }

  Vector coeff(n);
  for (Index i = 0; i < n; ++i) coeff[i] = data.w(i) > 0.0 ? a[i] / data.w(i) : 0.0;
  // Recompute theta from the duals to remove accumulated drift.
  Vector ay(n);
  for (Index i = 0; i < n; ++i) ay[i] = a[i] * data.y(i);
  theta = X.transpose() * ay / lambda;

  if (epoch >= opt.max_iter) {
    throw ConvergenceError("hinge training did not converge in " + std::to_string(opt.max_iter) +
                               " sweeps (dual residual " + format_double(worst) + ")",
                           theta, worst);
  }
  TrainResult result;
  result.model.theta = std::move(theta);
  result.coefficients = std::move(coeff);
  result.iterations = epoch + 1;
  result.residual = worst;
  return result;
}

struct SumObjective {
  const Dataset& data;
  const LossSpec& loss;
  double lambda;

  double value(const Vector& theta) const {
    Vector m = margins(theta, data);
    double total = 0.0;
    for (Index i = 0; i < m.size(); ++i) total += data.w(i) * loss_at_margin(loss, m[i]);
    return 0.5 * lambda * theta.squaredNorm() + total;
  }

  Vector gradient(const Vector& theta, const Vector& m) const {
    Vector c = dloss_vec(loss, m);
    for (Index i = 0; i < m.size(); ++i) c[i] *= data.w(i) * data.y(i);
    return lambda * theta + data.features().transpose() * c;
  }
};

// Damped Newton for smooth losses on the sum objective; `scale` converts the gradient
// to the caller's objective units for the stopping rule.
TrainResult train_smooth_newton(const Dataset& data, const LossSpec& loss, double lambda, double scale,
                                const BatchExact& opt, const Vector* warm_start) {
  const Index d = data.dim();
  auto X = data.features();
  SumObjective f{data, loss, lambda};
  Vector theta = warm_start ? *warm_start : Vector::Zero(d);
  Vector m = margins(theta, data);
  Vector g = f.gradient(theta, m);
  double value = f.value(theta);
  double residual = g.norm() / scale;
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    if (residual <= opt.tol * (1.0 + theta.norm())) break;
    Vector curv = d2loss_vec(loss, m);
    for (Index i = 0; i < m.size(); ++i) curv[i] *= data.w(i);
    Vector step;
    if (d <= 500) {
      Eigen::MatrixXd H = X.transpose() * curv.asDiagonal() * X;
      H.diagonal().array() += lambda;
      step = -H.ldlt().solve(g);
    } else {
      auto apply = [&](const Vector& v) -> Vector {
        Vector xv = X * v;
        return lambda * v + X.transpose() * curv.cwiseProduct(xv);
      };
      // Inexact Newton-CG.
      double target = std::min(0.5, std::sqrt(g.norm())) * g.norm();
      step = Vector::Zero(d);
      Vector r = -g;
      Vector p = r;
      double rr = r.squaredNorm();
      for (int k = 0; k < 10 * d && std::sqrt(rr) > target; ++k) {
        Vector Hp = apply(p);
        double alpha = rr / p.dot(Hp);
        step += alpha * p;
        r -= alpha * Hp;
        double rr_next = r.squaredNorm();
        p = r + (rr_next / rr) * p;
        rr = rr_next;
      }
    }
    double slope = g.dot(step);
    if (!(slope < 0.0)) {
      step = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    bool accepted = false;
    Vector next_theta, next_m, next_g;
    double next_value = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      next_theta = theta + t * step;
      next_m = margins(next_theta, data);
      next_value = f.value(next_theta);
      if (next_value <= value + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      // Objective differences below rounding: fall back to gradient decrease.
      if (std::abs(next_value - value) <= 1e-14 * std::max(1.0, std::abs(value))) {
        next_g = f.gradient(next_theta, next_m);
        if (next_g.norm() < g.norm()) {
          accepted = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!accepted) break;
    theta = std::move(next_theta);
    m = std::move(next_m);
    value = next_value;
    g = f.gradient(theta, m);
    residual = g.norm() / scale;
  }
  if (residual > opt.tol * (1.0 + theta.norm())) {
    throw ConvergenceError("training did not reach tolerance (gradient norm " + format_double(residual) + ")", theta,
                           residual);
  }
  TrainResult result;
  result.coefficients = -dloss_vec(loss, m);
  result.model.theta = std::move(theta);
  result.iterations = iter;
  result.residual = residual;
  return result;
}


}  // namespace

LossSpec LossSpec::smoothed_hinge(double delta) {
  if (!(delta > 0.0)) throw ValidationError("smoothed hinge needs delta > 0");
  return {LossKind::SmoothedHinge, delta};
}

std::string to_string(const LossSpec& loss) {
  switch (loss.kind) {
    case LossKind::Hinge: return "hinge";
    case LossKind::Logistic: return "logistic";
    case LossKind::SmoothedHinge: return "smoothed-hinge:" + format_double(loss.delta);
  }
  return "hinge";
}

LossSpec parse_loss(const std::string& name) {
  if (name == "hinge") return LossSpec::hinge();
  if (name == "logistic") return LossSpec::logistic();
  if (name == "smoothed-hinge") return LossSpec::smoothed_hinge();
  const std::string prefix = "smoothed-hinge:";
  if (name.rfind(prefix, 0) == 0) {
    try {
      std::size_t used = 0;
      std::string rest = name.substr(prefix.size());
      double delta = std::stod(rest, &used);
      if (used == rest.size()) return LossSpec::smoothed_hinge(delta);
    } catch (const std::logic_error&) {
    }
  }
  throw ValidationError("unknown loss '" + name + "'");
}

double loss_at_margin(const LossSpec& loss, double m) {
  switch (loss.kind) {
    case LossKind::Hinge: return std::max(0.0, 1.0 - m);
    case LossKind::SmoothedHinge: return loss.delta * softplus((1.0 - m) / loss.delta);
    case LossKind::Logistic: return softplus(-m);
  }
  return 0.0;
}

double dloss_at_margin(const LossSpec& loss, double m) {
  switch (loss.kind) {
    case LossKind::Hinge: return m <= 1.0 ? -1.0 : 0.0;
    case LossKind::SmoothedHinge: return -sigmoid((1.0 - m) / loss.delta);
    case LossKind::Logistic: return -sigmoid(-m);
  }
  return 0.0;
}

double d2loss_at_margin(const LossSpec& loss, double m) {
  switch (loss.kind) {
    case LossKind::Hinge: return 0.0;
    case LossKind::SmoothedHinge: {
      double s = sigmoid((1.0 - m) / loss.delta);
      return s * (1.0 - s) / loss.delta;
    }
    case LossKind::Logistic: {
      double s = sigmoid(m);
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

double loss_point(const LossSpec& loss, const Vector& theta, const Eigen::Ref<const Vector>& x, int y) {
  require_dim(theta, x.size());
  return loss_at_margin(loss, y * theta.dot(x));
}

Vector grad_point(const LossSpec& loss, const Vector& theta, const Eigen::Ref<const Vector>& x, int y) {
  require_dim(theta, x.size());
  return (dloss_at_margin(loss, y * theta.dot(x)) * y) * x;
}

Vector margins(const Vector& theta, const Dataset& data) {
  require_dim(theta, data.dim());
  Vector scores = data.features() * theta;
  return scores.cwiseProduct(data.labels());
}

double sum_loss_lambda(const Dataset& data, const TrainConfig& config) {
  return config.objective == Objective::MeanLoss ? config.lambda * data.total_weight() : config.lambda;
}

TrainResult train_detailed(const Dataset& data, const LossSpec& loss, const TrainConfig& config,
                           const Vector* warm_start) {
  require_nonempty(data, "training");
  if (const auto* sgd = std::get_if<SgdSinglePass>(&config.optimizer)) {
    (void)sgd;
    TrainResult result;
    result.model = train_sgd_single_pass(data, loss, config, warm_start);
    result.coefficients = -dloss_vec(loss, margins(result.model.theta, data));
    return result;
  }
  const auto& opt = std::get<BatchExact>(config.optimizer);
  if (!(opt.tol > 0.0) || opt.max_iter < 1) throw ValidationError("training needs tol > 0 and max_iter >= 1");
  if (!(config.lambda > 0.0)) throw ValidationError("exact training needs lambda > 0");
  const double lambda_s = sum_loss_lambda(data, config);
  TrainResult result;
  if (loss.kind == LossKind::Hinge) {
    result = train_hinge_dual(data, lambda_s, opt);
  } else {
    double scale = config.objective == Objective::MeanLoss ? data.total_weight() : 1.0;
    result = train_smooth_newton(data, loss, lambda_s, scale, opt, warm_start);
  }
  result.model.loss = loss;
  result.model.lambda = config.lambda;
  return result;
}

ModelParams train(const Dataset& data, const LossSpec& loss, const TrainConfig& config) {
  return train_detailed(data, loss, config).model;
}

ModelParams train_sgd_single_pass(const Dataset& data, const LossSpec& loss, const TrainConfig& config,
                                  const Vector* init) {
  require_nonempty(data, "training");
  SgdSinglePass opt;
  if (const auto* sgd = std::get_if<SgdSinglePass>(&config.optimizer)) opt = *sgd;
  if (!(opt.eta0 > 0.0)) throw ValidationError("SGD needs eta0 > 0");
  if (!(config.lambda > 0.0)) throw ValidationError("SGD needs lambda > 0");
  const double W = data.total_weight();
  const double lambda = config.objective == Objective::MeanLoss ? config.lambda : config.lambda / W;
  const double n = static_cast<double>(data.size());

  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  CounterRng rng(opt.seed);
  rng.shuffle(order);

  Vector theta = init ? *init : Vector::Zero(data.dim());
  require_dim(theta, data.dim());
  double t = 0.0;
  for (Index i : order) {
    t += 1.0;
    double eta = opt.eta0 / (lambda * t);
    Eigen::VectorXd xi = data.x(i).transpose();
    double scale = data.w(i) * n / W;
    Vector g = lambda * theta + scale * grad_point(loss, theta, xi, data.y(i));
    theta -= eta * g;
  }
  ModelParams model;
  model.theta = std::move(theta);
  model.loss = loss;
  model.lambda = config.lambda;
  return model;
}

double test_error_01(const Vector& theta, const Dataset& test) {
  require_nonempty(test, "test error");
  Vector m = margins(theta, test);
  double wrong = 0.0;
  for (Index i = 0; i < m.size(); ++i)
    if (!(m[i] > 0.0)) wrong += test.w(i);
  return wrong / test.total_weight();
}

double avg_loss(const Vector& theta, const Dataset& data, const LossSpec& loss) {
  require_nonempty(data, "average loss");
  Vector m = margins(theta, data);
  double total = 0.0;
  for (Index i = 0; i < m.size(); ++i) total += data.w(i) * loss_at_margin(loss, m[i]);
  return total / data.total_weight();
}

double objective_value(const Vector& theta, const Dataset& data, const LossSpec& loss, double lambda,
                       Objective objective) {
  double reg = 0.5 * lambda * theta.squaredNorm();
  if (data.empty()) return reg;
  double mean = avg_loss(theta, data, loss);
  return reg + (objective == Objective::MeanLoss ? mean : mean * data.total_weight());
}

Vector avg_gradient(const Vector& theta, const Dataset& data, const LossSpec& loss) {
  require_nonempty(data, "average gradient");
  Vector c = dloss_vec(loss, margins(theta, data));
  for (Index i = 0; i < c.size(); ++i) c[i] *= data.w(i) * data.y(i);
  return data.features().transpose() * c / data.total_weight();
}

Vector hvp(const Vector& theta, const Dataset& data, double lambda, const Vector& v, const LossSpec& loss) {
  if (!loss.twice_differentiable()) throw ValidationError("Hessian-vector products need a twice-differentiable loss");
  require_nonempty(data, "Hessian-vector product");
  require_dim(v, data.dim());
  Vector c = d2loss_vec(loss, margins(theta, data));
  for (Index i = 0; i < c.size(); ++i) c[i] *= data.w(i);
  Vector xv = data.features() * v;
  return lambda * v + data.features().transpose() * c.cwiseProduct(xv) / data.total_weight();
}

CgResult inverse_hvp_cg(const Vector& theta, const Dataset& data, double lambda, const Vector& v, const LossSpec& loss,
                        double tol, int max_iter, const Vector* warm_start) {
  if (!loss.twice_differentiable()) throw ValidationError("Hessian-vector products need a twice-differentiable loss");
  if (!(lambda > 0.0)) throw ValidationError("inverse Hessian-vector products need lambda > 0");
  require_nonempty(data, "inverse Hessian-vector product");
  require_dim(v, data.dim());
  const Index d = data.dim();
  if (max_iter <= 0) max_iter = static_cast<int>(std::max<Index>(100, 10 * d));

  // Curvature weights are fixed for the whole solve.
  Vector c = d2loss_vec(loss, margins(theta, data));
  for (Index i = 0; i < c.size(); ++i) c[i] *= data.w(i) / data.total_weight();
  auto X = data.features();
  auto apply = [&](const Vector& u) -> Vector {
    Vector xu = X * u;
    return lambda * u + X.transpose() * c.cwiseProduct(xu);
  };

  CgResult out;
  const double vnorm = v.norm();
  if (vnorm == 0.0) {
    out.solution = Vector::Zero(d);
    return out;
  }
  Vector u = warm_start && warm_start->size() == d ? *warm_start : Vector::Zero(d);
  Vector r = v - apply(u);
  Vector p = r;
  double rr = r.squaredNorm();
  int k = 0;
  while (std::sqrt(rr) > tol * vnorm) {
    if (k >= max_iter) {
      throw SolverError("conjugate gradient hit its iteration cap (relative residual " +
                        format_double(std::sqrt(rr) / vnorm) + ")");
    }
    Vector Hp = apply(p);
    double alpha = rr / p.dot(Hp);
    u += alpha * p;
    r -= alpha * Hp;
    double rr_next = r.squaredNorm();
    // Recompute the true residual periodically to avoid drift.
    if ((k + 1) % 50 == 0) {
      r = v - apply(u);
      rr_next = r.squaredNorm();
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    ++k;
  }
  // Final check on the true residual.
  double true_res = (v - apply(u)).norm();
  out.solution = std::move(u);
  out.iterations = k;
  out.relative_residual = true_res / vnorm;
  return out;
}

}  // namespace poison
