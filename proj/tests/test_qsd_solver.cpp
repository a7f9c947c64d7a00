#include <doctest.h>

#include <cmath>

#include "qsdfv/conditioned_evolution.hpp"
#include "qsdfv/qsd_solver.hpp"

using namespace qsdfv;

namespace {

const double kRoot5 = std::sqrt(5.0);

}  // namespace

TEST_CASE("qsd_power on the two-state example") {
  const auto b2 = two_state_example();
  const auto q = qsd_power(b2, 1e-13);
  REQUIRE(q.converged);
  CHECK(std::abs(q.nu[0] - (3.0 - kRoot5) / 2.0) <= 1e-10);
  CHECK(std::abs(q.nu[1] - (kRoot5 - 1.0) / 2.0) <= 1e-10);
  // lambda^2 + 3 lambda + 1 = 0, Perron root (-3 + sqrt 5)/2
  CHECK(std::abs(q.eigenvalue + (3.0 - kRoot5) / 2.0) <= 1e-10);
  CHECK(q.eigenvalue < 0.0);
  CHECK(q.residual <= 1e-13);
  CHECK_FALSE(q.boundary);
}

TEST_CASE("qsd_power on the symmetric chain") {
  for (double c : {0.1, 1.0, 3.0}) {
    const auto q = qsd_power(symmetric_two_state(c), 1e-12);
    REQUIRE(q.converged);
    CHECK(q.nu[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(q.eigenvalue == doctest::Approx(-c).epsilon(1e-10));
  }
}

TEST_CASE("qsd_power reports failure and boundary vectors") {
  const auto walk = asymmetric_walk(0.3, 20);
  const auto short_run = qsd_power(walk, 1e-12, 5);
  CHECK_FALSE(short_run.converged);
  CHECK(short_run.iterations == 5);

  auto space = std::make_shared<const StateSpace>(std::vector<std::string>{"a", "b"});
  const RateMatrix reducible(space, {{0, 1, 1.0}}, {2.0, 0.5});
  const auto q = qsd_power(reducible, 1e-12);
  CHECK(q.converged);
  CHECK(q.boundary);
  // I + Q/q̄ is nilpotent here
  const RateMatrix nilpotent(space, {{0, 1, 1.0}}, {0.0, 1.0});
  CHECK_NOTHROW(qsd_power(nilpotent, 1e-6, 1000));
}

TEST_CASE("qsd_residual") {
  const auto b2 = two_state_example();
  const auto nu = Distribution::normalized(b2.space_ptr(), {(3.0 - kRoot5) / 2.0, (kRoot5 - 1.0) / 2.0});
  CHECK(qsd_residual(b2, nu) <= 1e-12);
  CHECK(qsd_residual(b2, Distribution::uniform(b2.space_ptr())) == doctest::Approx(0.25));

  auto space = std::make_shared<const StateSpace>(std::vector<std::string>{"a", "b", "c"});
  const RateMatrix pure(space, {}, {0.4, 0.4, 0.4});
  CHECK(qsd_residual(pure, Distribution::normalized(space, {0.2, 0.3, 0.5})) <= 1e-16);
}

TEST_CASE("qsd_via_yaglom") {
  const auto b2 = two_state_example();
  const auto power = qsd_power(b2, 1e-13);
  const auto y = qsd_via_yaglom(b2, 1e-12);
  REQUIRE(y.converged);
  CHECK(sup_distance(power.nu, y.nu) <= 1e-9);
  const auto fixed = yaglom_iterate(b2, power.nu, 1.0, 1e-12, 10);
  CHECK(fixed.iterations == 1);

  const auto walk = asymmetric_walk(0.3, 20);
  const auto pw = qsd_power(walk, 1e-12);
  const auto yw = qsd_via_yaglom(walk, 1e-12);
  REQUIRE(pw.converged);
  REQUIRE(yw.converged);
  CHECK(sup_distance(pw.nu, yw.nu) <= 1e-8);
}

TEST_CASE("solver invariants") {
  const double tol = 1e-11;
  for (const auto& rates : {two_state_example(), asymmetric_walk(0.3, 20), symmetric_two_state(0.4),
                            asymmetric_walk(0.2, 8)}) {
    const auto q = qsd_power(rates, tol);
    REQUIRE(q.converged);
    CHECK(q.residual <= tol);
    double killing = 0.0;
    for (StateIndex y = 0; y < rates.size(); ++y) killing += q.nu[y] * rates.absorption(y);
    CHECK(std::abs(q.eigenvalue + killing) <= 10 * tol);
  }
}

TEST_CASE("the two solvers agree when alpha > C") {
  for (const auto& rates : {two_state_example(), symmetric_two_state(0.4)}) {
    const auto s = summarize_chain(rates);
    REQUIRE(s.alpha > s.C);
    CHECK(sup_distance(qsd_power(rates, 1e-12).nu, qsd_via_yaglom(rates, 1e-12).nu) <= 1e-8);
  }
}

TEST_CASE("time rescaling") {
  const auto walk = asymmetric_walk(0.3, 12);
  const auto base = qsd_power(walk, 1e-12);
  for (double kappa : {0.5, 3.0}) {
    const auto scaled = qsd_power(walk.scaled(kappa), 1e-12);
    CHECK(sup_distance(base.nu, scaled.nu) <= 1e-9);
    CHECK(scaled.eigenvalue == doctest::Approx(kappa * base.eigenvalue).epsilon(1e-8));
  }
}
