#include "oracles.hpp"
#include "poison/error.hpp"
#include "poison/influence_attack.hpp"

#include <doctest.h>

#include <set>

using namespace poison;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double e : v) out[i++] = e;
  return out;
}

FeasibleSet everything(Index d) { return FeasibleSet(d); }

InfluenceConfig quick_config() {
  InfluenceConfig config;
  config.eta_grid = {0.1};
  config.steps = 3;
  config.seed = 5;
  return config;
}

}  // namespace

TEST_SUITE("influence_attack") {
  TEST_CASE("test gradient examples") {
    CounterRng rng(1);
    LossSpec loss = LossSpec::logistic();
    Vector theta = oracle::random_vector(rng, 3);
    Dataset one(3);
    Vector x = oracle::random_vector(rng, 3);
    one.add(x, -1, 2.5);
    CHECK((test_gradient(theta, one, loss) - grad_point(loss, theta, x, -1)).norm() <= 1e-15);
    Dataset pair(3);
    pair.add(x, 1);
    pair.add(-x, 1);
    CHECK(test_gradient(Vector::Zero(3), pair, loss).norm() <= 1e-15);
  }

  TEST_CASE("test gradient matches finite differences of the average loss") {
    CounterRng rng(2);
    Dataset test = oracle::gaussian_blobs(rng, 30, 4, 0.5);
    for (LossSpec loss : {LossSpec::smoothed_hinge(0.2), LossSpec::logistic()}) {
      Vector theta = oracle::random_vector(rng, 4, 0.5);
      auto f = [&](const Vector& t) { return avg_loss(t, test, loss); };
      Vector fd = oracle::fd_gradient(f, theta, 1e-5);
      Vector g = test_gradient(theta, test, loss);
      CHECK((fd - g).norm() <= 1e-6 * std::max(1.0, g.norm()));
    }
  }

  TEST_CASE("influence vanishes without test gradient or curvature") {
    CounterRng rng(3);
    Dataset train_set = oracle::gaussian_blobs(rng, 40, 3, 1.0);
    LossSpec loss = LossSpec::smoothed_hinge(0.01);
    Vector theta = vec({1, 0.2, -0.3});
    CHECK(influence_gradient(theta, train_set, 0.1, Vector::Zero(3), vec({1, 1, 1}), 1, 1.0, loss).isZero());
    Vector far = 40.0 * theta;
    Vector g = oracle::random_vector(rng, 3);
    CHECK(influence_gradient(theta, train_set, 0.1, g, far, 1, 1.0, loss).norm() <= 1e-12);
  }

  TEST_CASE("influence gradient matches retraining differences on a small problem") {
    CounterRng rng(4);
    Dataset clean = oracle::gaussian_blobs(rng, 30, 3, 0.8);
    Dataset test = oracle::gaussian_blobs(rng, 40, 3, 0.8);
    LossSpec loss = LossSpec::smoothed_hinge(0.5);
    TrainConfig config;
    config.lambda = 0.1;
    config.optimizer = BatchExact{1e-13, 1000};
    Vector x = vec({0.2, -0.4, 0.1});
    auto test_loss = [&](const Vector& point) {
      Dataset full = clean;
      full.add(point, -1);
      return avg_loss(train(full, loss, config).theta, test, loss);
    };
    Dataset full = clean;
    full.add(x, -1);
    Vector theta = train(full, loss, config).theta;
    Vector g = influence_gradient(theta, full, 0.1, test_gradient(theta, test, loss), x, -1, 1.0, loss, 1e-12);
    Vector fd = oracle::fd_gradient(test_loss, x, 1e-4);
    CHECK((fd - g).norm() <= 1e-4 * g.norm());
  }

  TEST_CASE("label-flip initialization") {
    CounterRng rng(5);
    Dataset clean = oracle::gaussian_blobs(rng, 100, 2, 1.0);
    Dataset flips = init_label_flip(clean, 0.03, everything(2), 9);
    CHECK(flips.total_weight() == doctest::Approx(3.0));
    for (Index i = 0; i < flips.size(); ++i) {
      bool found = false;
      for (Index j = 0; j < clean.size() && !found; ++j)
        found = clean.x(j) == flips.x(i) && clean.y(j) == -flips.y(i);
      CHECK(found);
    }
    CHECK(init_label_flip(clean, 0.03, everything(2), 9) == flips);
    FeasibleSet nowhere(2);
    for (int y : {-1, 1}) nowhere.at(y).ball = BallAtom{Vector::Constant(2, 100.0), 1.0};
    CHECK_THROWS_AS(init_label_flip(clean, 0.03, nowhere, 9), InfeasibleError);
  }

  TEST_CASE("zero steps return the projected initialization") {
    CounterRng rng(6);
    Dataset clean = oracle::gaussian_blobs(rng, 80, 3, 1.5);
    Dataset test = oracle::gaussian_blobs(rng, 80, 3, 1.5);
    FeasibleSet set = feasible_from_defenses(clean, 0.05);
    InfluenceConfig config = quick_config();
    config.steps = 0;
    config.concentrated = false;
    InfluenceRun run = influence_attack(clean, test, 0.05, set, config, 0.01);
    Dataset flips = init_label_flip(clean, 0.05, set, config.seed);
    REQUIRE(run.poison.size() == flips.size());
    for (Index i = 0; i < flips.size(); ++i)
      CHECK((run.poison.x(i).transpose() - set.project(flips.x(i).transpose(), flips.y(i))).norm() <= 1e-12);
  }

  TEST_CASE("concentrated attack stays feasible and splits the budget by class balance") {
    CounterRng rng(7);
    auto [clean, test] = synth_gaussians(3, 150, 4, 2.0, 0.7);
    FeasibleSet set = feasible_from_defenses(clean, 0.05);
    InfluenceRun run = influence_attack(clean, test, 0.04, set, quick_config(), 0.01);
    CHECK(run.poison.size() <= 2);
    double P = clean.class_weight(1), N = clean.class_weight(-1);
    double total = 0.0;
    for (Index i = 0; i < run.poison.size(); ++i) {
      CHECK(set.contains(run.poison.x(i).transpose(), run.poison.y(i)));
      double expected = 0.04 * clean.total_weight() * (run.poison.y(i) > 0 ? N : P) / (P + N);
      CHECK(run.poison.w(i) == doctest::Approx(expected).epsilon(1e-12));
      total += run.poison.w(i);
    }
    CHECK(total == doctest::Approx(0.04 * clean.total_weight()).epsilon(1e-12));
    CHECK(run.trace.size() == 4);
  }

  TEST_CASE("every basic-mode iterate is feasible") {
    CounterRng rng(8);
    Dataset clean = oracle::gaussian_blobs(rng, 60, 3, 1.5);
    Dataset test = oracle::gaussian_blobs(rng, 60, 3, 1.5);
    FeasibleSet set = feasible_from_defenses(clean, 0.05);
    InfluenceConfig config = quick_config();
    config.concentrated = false;
    int seen = 0;
    config.on_iterate = [&](const Dataset& p) {
      ++seen;
      for (Index i = 0; i < p.size(); ++i) CHECK(set.contains(p.x(i).transpose(), p.y(i)));
    };
    influence_attack(clean, test, 0.05, set, config, 0.01);
    CHECK(seen == 4);
  }
}
