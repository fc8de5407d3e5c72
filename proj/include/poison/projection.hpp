#pragma once

#include "poison/dataset.hpp"
#include "poison/rounding.hpp"

#include <variant>
#include <vector>

namespace poison {

/// ||x - center|| <= radius
struct BallAtom {
  Vector center;
  double radius = 0.0;
};

/// |axis^T x - offset| <= half_width
struct BandAtom {
  Vector axis;
  double offset = 0.0;
  double half_width = 0.0;
};

/// normal^T x >= offset
struct HalfspaceAtom {
  Vector normal;
  double offset = 0.0;
};

/// lo <= x_i <= hi for every coordinate
struct BoxAtom {
  double lo = 0.0;
  double hi = 1.0;
};

/// Expected-norm LP constraint together with x >= 0.
struct ExpectedNormAtom {
  ExpectedNormConstraint constraint;
};

using Atom = std::variant<BallAtom, BandAtom, HalfspaceAtom, BoxAtom, ExpectedNormAtom>;

/// Exact Euclidean projection onto one atom.
Vector project_atom(const Atom& atom, const Vector& x);
/// Amount by which x violates the atom (0 when inside).
double atom_violation(const Atom& atom, const Vector& x);

struct ProjectionOptions {
  double tol = 1e-12;
  int max_iter = 10000;
};

/// Projection onto the intersection of atoms by Dykstra's algorithm. Throws
/// InfeasibleError when the iterates cannot reach the intersection.
Vector project_intersection(const std::vector<Atom>& atoms, const Vector& x, const ProjectionOptions& options = {});

}  // namespace poison
