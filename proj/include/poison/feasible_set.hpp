#pragma once

#include "poison/dataset.hpp"
#include "poison/linear_model.hpp"
#include "poison/projection.hpp"
#include "poison/rounding.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace poison {

/// |axis^T (x - center)| < half_width
struct SlabConstraint {
  Vector axis;
  Vector center;
  double half_width = 0.0;
};

/// loss(theta; x, y) < cap
struct DecoyCap {
  Vector theta;
  LossSpec loss;
  double cap = 0.0;
};

/// Margin m such that loss < cap exactly when y theta^T x > m.
double decoy_margin_floor(const LossSpec& loss, double cap);

struct ClassConstraints {
  std::optional<BallAtom> ball;                        ///< strict
  std::optional<SlabConstraint> slab;                  ///< strict
  std::optional<DecoyCap> decoy;                       ///< strict
  std::vector<HalfspaceAtom> halfspaces;               ///< closed
  std::optional<ExpectedNormConstraint> expected_norm; ///< closed, implies x >= 0
};

/// Per-class convex region a poisoned point must occupy, plus the input-domain box.
/// Integrality of NonnegInteger inputs is relaxed to x >= 0.
class FeasibleSet {
 public:
  FeasibleSet(Index dim = 0, InputDomain domain = InputDomain::Reals);

  Index dim() const { return dim_; }
  InputDomain domain() const { return domain_; }

  ClassConstraints& at(int y) { return y > 0 ? plus_ : minus_; }
  const ClassConstraints& at(int y) const { return y > 0 ? plus_ : minus_; }

  bool contains(const Eigen::Ref<const Vector>& x, int y) const;
  /// Constraint atoms for class y, with strict constraints tightened slightly so that
  /// projected points pass `contains`.
  std::vector<Atom> atoms(int y) const;
  /// Closest point of the class-y region.
  Vector project(const Eigen::Ref<const Vector>& x, int y) const;
  /// Deterministic reference point of the class-y region (the projected ball center).
  Vector anchor(int y) const;
  /// True when the class-y region is bounded.
  bool bounded(int y) const;

 private:
  Index dim_;
  InputDomain domain_;
  ClassConstraints minus_;
  ClassConstraints plus_;
};

struct FeasibleOptions {
  bool l2 = true;
  bool slab = true;
  /// NonnegInteger data: replace the L2 ball with the expected post-rounding norm constraint.
  bool lp_relax = false;
  /// Piece counts for the relaxation; empty means the data default.
  Eigen::VectorXi pieces;
};

/// Region that passes the L2 and slab defenses fitted on `data` with removal fraction p.
FeasibleSet feasible_from_defenses(const Dataset& data, double p, const FeasibleOptions& options = {});

/// Adds loss(theta_decoy; x, y) < cap_y to both classes.
void add_decoy_cap(FeasibleSet& set, const Vector& theta_decoy, const LossSpec& loss, double cap_minus,
                   double cap_plus);

/// Minimizer of y theta^T x over the class-y region. Returns the anchor when theta = 0.
Vector min_margin_point(const FeasibleSet& set, const Vector& theta, int y);

using AttackProcedure = std::function<Dataset(const FeasibleSet&)>;

struct ConstrainedAttackRun {
  Dataset poison;
  FeasibleSet feasible;
};

/// Alternates fitting the L2/slab region on D_c plus the current attack with the inner
/// attack. One round uses the region fitted on D_c alone.
ConstrainedAttackRun run_constrained_attack(const Dataset& clean, const AttackProcedure& attack, int rounds, double p,
                                            const FeasibleOptions& options = {});

struct CollapsedAttack {
  Dataset points;
  /// Scale alpha of every pairwise fold, in fold order.
  std::vector<double> fold_alphas;
};

/// Folds each class of an attack into one weighted point with the same total gradient at
/// theta. `coefficients` (per point of `poison`) gives the hinge subgradient weights at the
/// margin; when absent every point with margin <= 1 counts fully.
CollapsedAttack collapse_two_points(const Dataset& poison, const Vector& theta, const LossSpec& loss,
                                    const Vector* coefficients = nullptr);

struct CollapseCheck {
  bool ok = false;
  double parameter_gap = 0.0;
  double allowed_gap = 0.0;
  bool feasible = true;
};

/// Retrains with the sum-of-losses objective on D_c + D_p and on D_c + collapsed and
/// compares parameters. MeanLoss callers get lambda scaled by the original total weight.
CollapseCheck check_collapse(const Dataset& clean, const Dataset& poison, const Dataset& collapsed,
                             const LossSpec& loss, double lambda, double tol, const FeasibleSet* set = nullptr,
                             Objective objective = Objective::SumLoss);
bool verify_collapse(const Dataset& clean, const Dataset& poison, const Dataset& collapsed, const LossSpec& loss,
                     double lambda, double tol, const FeasibleSet* set = nullptr,
                     Objective objective = Objective::SumLoss);

}  // namespace poison
