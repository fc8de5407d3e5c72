#include "poison/projection.hpp"

#include "poison/error.hpp"
#include "poison/format.hpp"

#include <cmath>

namespace poison {

namespace {

// argmin_{z >= 0} 1/2 (z - a)^2 + nu f_K(z), where f_K has slope 2k+1 on [k, k+1].
double prox_piecewise(double a, double nu, int K) {
  if (a <= nu) return 0.0;
  double s = (a - nu) / (1.0 + 2.0 * nu);
  double k = std::floor(s);
  if (k >= K) return a - nu * (2.0 * K + 1.0);
  return std::min(a - nu * (2.0 * k + 1.0), k + 1.0);
}

Vector project_expected_norm(const ExpectedNormConstraint& c, const Vector& x) {
  const double budget = c.tau * c.tau;
  auto solve = [&](double nu) {
    Vector z(x.size());
    for (Index i = 0; i < x.size(); ++i) z[i] = prox_piecewise(x[i] + 2.0 * nu * c.mu[i], nu, c.pieces[i]);
    return z;
  };
  Vector z = solve(0.0);
  if (c.value(z) <= budget) return z;
  double lo = 0.0;
  double hi = 1.0;
  while (c.value(solve(hi)) > budget) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e15) throw InfeasibleError("expected-norm constraint has no feasible point");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    if (c.value(solve(mid)) > budget) lo = mid;
    else hi = mid;
  }
  return solve(hi);
}

}  // namespace

Vector project_atom(const Atom& atom, const Vector& x) {
  return std::visit(
      [&](const auto& a) -> Vector {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, BallAtom>) {
          Vector diff = x - a.center;
          double norm = diff.norm();
          if (norm <= a.radius) return x;
          return a.center + (a.radius / norm) * diff;
        } else if constexpr (std::is_same_v<T, BandAtom>) {
          double s = a.axis.dot(x) - a.offset;
          double nn = a.axis.squaredNorm();
          if (std::abs(s) <= a.half_width || nn == 0.0) return x;
          double target = s > 0 ? a.half_width : -a.half_width;
          return x - ((s - target) / nn) * a.axis;
        } else if constexpr (std::is_same_v<T, HalfspaceAtom>) {
          double s = a.normal.dot(x) - a.offset;
          double nn = a.normal.squaredNorm();
          if (s >= 0.0) return x;
          if (nn == 0.0) throw InfeasibleError("degenerate half-space excludes every point");
          return x - (s / nn) * a.normal;
        } else if constexpr (std::is_same_v<T, BoxAtom>) {
          return x.cwiseMax(a.lo).cwiseMin(a.hi);
        } else {
          return project_expected_norm(a.constraint, x);
        }
      },
      atom);
}

double atom_violation(const Atom& atom, const Vector& x) {
  return std::visit(
      [&](const auto& a) -> double {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, BallAtom>) {
          return std::max(0.0, (x - a.center).norm() - a.radius);
        } else if constexpr (std::is_same_v<T, BandAtom>) {
          double nn = a.axis.norm();
          if (nn == 0.0) return 0.0;
          return std::max(0.0, (std::abs(a.axis.dot(x) - a.offset) - a.half_width) / nn);
        } else if constexpr (std::is_same_v<T, HalfspaceAtom>) {
          double nn = a.normal.norm();
          double s = a.normal.dot(x) - a.offset;
          if (nn == 0.0) return s >= 0.0 ? 0.0 : INFINITY;
          return std::max(0.0, -s / nn);
        } else if constexpr (std::is_same_v<T, BoxAtom>) {
          double v = 0.0;
          for (Index i = 0; i < x.size(); ++i) v = std::max({v, a.lo - x[i], x[i] - a.hi});
          return v;
        } else {
          double v = std::max(0.0, -x.minCoeff());
          double excess = a.constraint.value(x.cwiseMax(0.0)) - a.constraint.tau * a.constraint.tau;
          return std::max(v, excess > 0.0 ? excess / (1.0 + a.constraint.tau) : 0.0);
        }
      },
      atom);
}

Vector project_intersection(const std::vector<Atom>& atoms, const Vector& x, const ProjectionOptions& options) {
  if (atoms.empty()) return x;
  if (atoms.size() == 1) return project_atom(atoms.front(), x);
  double worst = 0.0;
  for (const auto& atom : atoms) worst = std::max(worst, atom_violation(atom, x));
  if (worst == 0.0) return x;

  std::vector<Vector> increments(atoms.size(), Vector::Zero(x.size()));
  Vector current = x;
  const double scale = 1.0 + x.norm();
  for (int it = 0; it < options.max_iter; ++it) {
    Vector start = current;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      Vector shifted = current + increments[j];
      Vector next = project_atom(atoms[j], shifted);
      increments[j] = shifted - next;
      current = std::move(next);
    }
    double moved = (current - start).norm();
    if (moved <= options.tol * scale) {
      worst = 0.0;
      for (const auto& atom : atoms) worst = std::max(worst, atom_violation(atom, current));
      if (worst <= 1e-10 * scale) return current;
    }
  }
  worst = 0.0;
  for (const auto& atom : atoms) worst = std::max(worst, atom_violation(atom, current));
  if (worst > 1e-7 * scale) {
    throw InfeasibleError("constraint set appears empty (violation " + format_double(worst) + " after " +
                          std::to_string(options.max_iter) + " projection sweeps)");
  }
  return current;
}

}  // namespace poison
