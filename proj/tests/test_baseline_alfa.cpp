#include "oracles.hpp"
#include "poison/alfa.hpp"
#include "poison/error.hpp"

#include <doctest.h>

using namespace poison;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

bool is_flipped_test_point(const Dataset& test, const Eigen::Ref<const Vector>& x, int y) {
  for (Index j = 0; j < test.size(); ++j)
    if (test.x(j).transpose() == x && test.y(j) == -y) return true;
  return false;
}

}  // namespace

TEST_SUITE("baseline_alfa") {
  TEST_CASE("zero budget gives the clean result") {
    auto [clean, test] = synth_gaussians(1, 200, 3, 3.0, 0.5);
    EvalConfig eval;
    FeasibleSet set = feasible_from_defenses(clean, 0.05);
    AttackResult r = run_alfa(clean, test, 0.0, set, eval);
    CHECK(r.poison.empty());
    AttackResult none = make_result("none", 0.0, 0, Dataset(3), clean, test, eval);
    CHECK(r.min_over_defense == none.min_over_defense);
  }

  TEST_CASE("a single feasible candidate carries the whole budget") {
    Dataset clean(2);
    for (int i = 0; i < 50; ++i) clean.add(vec({1.0 + 0.01 * i, 0.1 * (i % 5)}), 1);
    for (int i = 0; i < 50; ++i) clean.add(vec({-1.0 - 0.01 * i, 0.1 * (i % 5)}), -1);
    Dataset test(2);
    test.add(vec({0.5, 0}), 1);
    test.add(vec({40, 40}), 1);
    test.add(vec({-40, 40}), -1);
    FeasibleSet set(2);
    for (int y : {-1, 1}) set.at(y).ball = BallAtom{Vector::Zero(2), 2.0};
    Dataset p = alfa_attack(clean, test, 0.04, set, LossSpec::hinge(), TrainConfig{});
    REQUIRE(p.size() == 1);
    CHECK(p.y(0) == -1);
    CHECK(p.x(0) == vec({0.5, 0}).transpose());
    CHECK(p.w(0) == doctest::Approx(4.0));
    FeasibleSet none(2);
    for (int y : {-1, 1}) none.at(y).ball = BallAtom{Vector::Constant(2, 100.0), 1.0};
    CHECK_THROWS_AS(alfa_attack(clean, test, 0.04, none, LossSpec::hinge(), TrainConfig{}), InfeasibleError);
  }

  TEST_CASE("picks are feasible flips of test points with exact total weight") {
    auto [clean, test] = synth_gaussians(2, 300, 4, 2.0, 0.5);
    FeasibleSet set = feasible_from_defenses(clean, 0.05);
    for (bool refine : {false, true}) {
      AlfaConfig options;
      options.refine = refine;
      Dataset p = alfa_attack(clean, test, 0.05, set, LossSpec::hinge(), TrainConfig{}, options);
      CHECK(p.total_weight() == doctest::Approx(0.05 * clean.total_weight()).epsilon(1e-12));
      for (Index i = 0; i < p.size(); ++i) {
        CHECK(set.contains(p.x(i).transpose(), p.y(i)));
        CHECK(is_flipped_test_point(test, p.x(i).transpose(), p.y(i)));
      }
    }
  }

  TEST_CASE("greedy order follows the flipped loss under the clean model") {
    auto [clean, test] = synth_gaussians(3, 300, 2, 2.0, 0.5);
    FeasibleSet set = feasible_from_defenses(clean, 0.05);
    Vector theta = train(clean, LossSpec::hinge(), TrainConfig{}).theta;
    Dataset p = alfa_attack(clean, test, 0.02, set, LossSpec::hinge(), TrainConfig{});
    double lowest_pick = 1e300;
    for (Index i = 0; i < p.size(); ++i)
      lowest_pick = std::min(lowest_pick, loss_point(LossSpec::hinge(), theta, p.x(i).transpose(), p.y(i)));
    for (Index j = 0; j < test.size(); ++j) {
      Vector x = test.x(j).transpose();
      int y = -test.y(j);
      if (!set.contains(x, y)) continue;
      bool picked = false;
      for (Index i = 0; i < p.size(); ++i) picked = picked || (p.x(i).transpose() == x && p.y(i) == y);
      if (!picked) CHECK(loss_point(LossSpec::hinge(), theta, x, y) <= lowest_pick + 1e-12);
    }
  }
}
