#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qsdfv/conditioned_evolution.hpp"
#include "qsdfv/qsd_solver.hpp"

using namespace qsdfv;

namespace {

Distribution b2_qsd(const RateMatrix& b2) {
  const double root5 = std::sqrt(5.0);
  return Distribution::normalized(b2.space_ptr(), {(3.0 - root5) / 2.0, (root5 - 1.0) / 2.0});
}

}  // namespace

TEST_CASE("phi_semigroup") {
  const auto b2 = two_state_example();
  const auto d1 = Distribution::delta(b2.space_ptr(), 0);
  SUBCASE("t = 0 returns mu") {
    const auto mu = Distribution::normalized(b2.space_ptr(), {0.3, 0.7});
    const auto phi = phi_semigroup(b2, mu, 0.0);
    CHECK(phi[0] == mu[0]);
    CHECK(phi[1] == mu[1]);
  }
  SUBCASE("matches a dense matrix exponential") {
    const auto phi = phi_semigroup(b2, d1, 1.0);
    const auto ref = oracle::conditioned(b2, {1.0, 0.0}, 1.0);
    CHECK(std::abs(phi[0] - ref[0]) <= 1e-10);
    CHECK(std::abs(phi[1] - ref[1]) <= 1e-10);
  }
  SUBCASE("the QSD is a fixed point") {
    const auto nu = b2_qsd(b2);
    for (double t : {0.5, 1.0, 2.0}) CHECK(sup_distance(phi_semigroup(b2, nu, t), nu) <= 1e-8);
  }
  SUBCASE("conditioning composes") {
    for (double t : {0.5, 1.0}) {
      for (double s : {0.5, 1.0}) {
        const auto direct = phi_semigroup(b2, d1, t + s);
        const auto stepped = phi_semigroup(b2, phi_semigroup(b2, d1, t), s);
        CHECK(sup_distance(direct, stepped) <= 1e-8);
      }
    }
  }
  SUBCASE("output is a distribution") {
    const auto walk = asymmetric_walk(0.3, 20);
    for (double t : {0.1, 1.0, 10.0, 200.0}) {
      const auto phi = phi_semigroup(walk, Distribution::uniform(walk.space_ptr()), t);
      double total = 0.0;
      for (double w : phi.weights()) {
        CHECK(w >= 0.0);
        total += w;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
  SUBCASE("vanishing survival") {
    auto space = std::make_shared<const StateSpace>(std::vector<std::string>{"x"});
    const RateMatrix fast(space, {}, {100.0});
    CHECK_THROWS_WITH_AS(phi_semigroup(fast, Distribution::delta(space, 0), 10.0),
                         "conditioning event has vanishing probability", Error);
  }
}

TEST_CASE("phi_ode") {
  const auto b2 = two_state_example();
  const auto d1 = Distribution::delta(b2.space_ptr(), 0);
  SUBCASE("t_end = 0") {
    const auto path = phi_ode(b2, d1, 0.0, 1e-3);
    REQUIRE(path.phis.size() == 1);
    CHECK(path.phis[0][0] == 1.0);
  }
  SUBCASE("agrees with the semigroup route") {
    const auto path = phi_ode(b2, d1, 1.0, 1e-3);
    CHECK(path.times.back() == 1.0);
    CHECK(sup_distance(path.phis.back(), phi_semigroup(b2, d1, 1.0)) <= 1e-6);
    CHECK(path.norm_drift < 1e-6);
  }
  SUBCASE("constant at the QSD") {
    const auto nu = b2_qsd(b2);
    const auto path = phi_ode(b2, nu, 2.0, 1e-3);
    for (const auto& phi : path.phis) CHECK(sup_distance(phi, nu) <= 1e-6);
  }
  SUBCASE("over-large steps are refused") {
    auto space = std::make_shared<const StateSpace>(std::vector<std::string>{"a", "b"});
    const RateMatrix stiff(space, {{0, 1, 100.0}, {1, 0, 1.0}}, {1.0, 0.0});
    CHECK_THROWS_WITH_AS(phi_ode(stiff, Distribution::delta(space, 0), 1.0, 0.5), doctest::Contains("reduce the step"),
                         Error);
  }
}

TEST_CASE("yaglom_iterate") {
  const auto b2 = two_state_example();
  const auto nu = b2_qsd(b2);
  SUBCASE("from delta_2") {
    const auto y = yaglom_iterate(b2, Distribution::delta(b2.space_ptr(), 1), 1.0, 1e-12, 10000);
    CHECK(y.converged);
    CHECK(y.final_delta < 1e-12);
    CHECK(sup_distance(y.limit, nu) <= 1e-10);
    CHECK(y.decay_rate == doctest::Approx((3.0 - std::sqrt(5.0)) / 2.0).epsilon(1e-10));
    CHECK(std::abs(y.decay_rate + qsd_power(b2, 1e-13).eigenvalue) <= 1e-9);
  }
  SUBCASE("from the fixed point") {
    const auto y = yaglom_iterate(b2, nu, 1.0, 1e-12, 10);
    CHECK(y.iterations == 1);
    CHECK(y.final_delta <= 1e-14);
  }
  SUBCASE("limit does not depend on the start") {
    const auto a = yaglom_iterate(b2, Distribution::delta(b2.space_ptr(), 0), 1.0, 1e-13, 10000).limit;
    const auto b = yaglom_iterate(b2, Distribution::delta(b2.space_ptr(), 1), 1.0, 1e-13, 10000).limit;
    const auto c = yaglom_iterate(b2, Distribution::uniform(b2.space_ptr()), 1.0, 1e-13, 10000).limit;
    CHECK(sup_distance(a, b) <= 1e-10);
    CHECK(sup_distance(a, c) <= 1e-10);
  }
  SUBCASE("non-convergence is reported") {
    const auto y = yaglom_iterate(asymmetric_walk(0.3, 20), Distribution::delta(asymmetric_walk(0.3, 20).space_ptr(), 19),
                                  1.0, 1e-14, 3);
    CHECK_FALSE(y.converged);
    CHECK(y.iterations == 3);
    CHECK(y.final_delta > 1e-14);
  }
}

TEST_CASE("forward equation and semigroup agree on the bundled chains") {
  for (const auto& rates : {two_state_example(), asymmetric_walk(0.3, 20), symmetric_two_state(0.5)}) {
    const auto mu = Distribution::delta(rates.space_ptr(), 0);
    const auto path = phi_ode(rates, mu, 2.0, 1e-3);
    double gap = 0.0;
    for (std::size_t k = 0; k < path.times.size(); k += 100) {
      gap = std::max(gap, sup_distance(path.phis[k], phi_semigroup(rates, mu, path.times[k])));
    }
    CHECK(gap <= 1e-6);
  }
}
