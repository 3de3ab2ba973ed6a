#include "doctest.h"

#include <cmath>
#include <random>

#include "fiberlay/model.hpp"

using namespace fiberlay;

namespace {

Eigen::Vector2d central_difference(const Potential& pot, const Eigen::Vector2d& x,
                                   double h) {
  Eigen::Vector2d g;
  for (int k = 0; k < 2; ++k) {
    Eigen::Vector2d e = Eigen::Vector2d::Zero();
    e(k) = h;
    g(k) = (pot.phi(x + e) - pot.phi(x - e)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("angle reduction lands in [0, 2pi) and is 2pi-periodic") {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(gen);
    const double r = reduce_angle(a);
    CHECK(r >= 0.0);
    CHECK(r < kTwoPi);
    for (int k : {-3, -1, 1, 5}) {
      const double rk = reduce_angle(a + kTwoPi * k);
      CHECK(std::abs(angle_difference(r, rk)) < 1e-9);
    }
  }
  CHECK(reduce_angle(kTwoPi) == doctest::Approx(0.0));
  CHECK(reduce_angle(-0.5) == doctest::Approx(kTwoPi - 0.5));
}

TEST_CASE("angle_difference wraps into (-pi, pi]") {
  CHECK(angle_difference(0.1, kTwoPi - 0.1) == doctest::Approx(-0.2));
  CHECK(angle_difference(kTwoPi - 0.1, 0.1) == doctest::Approx(0.2));
  CHECK(angle_difference(0.0, kPi) == doctest::Approx(kPi));
}

TEST_CASE("polar conversion examples") {
  auto p = to_polar(FullState(1.0, 0.0, kPi / 2));
  CHECK(p.r == doctest::Approx(1.0));
  CHECK(p.psi == doctest::Approx(0.0));
  CHECK(p.beta == doctest::Approx(kPi / 2));

  p = to_polar(FullState(0.0, 2.0, kPi / 2));
  CHECK(p.r == doctest::Approx(2.0));
  CHECK(p.psi == doctest::Approx(kPi / 2));
  CHECK(p.beta == doctest::Approx(0.0));

  auto s = to_cartesian({1.0, kPi / 2, 0.0});
  CHECK(s.xi.x() == doctest::Approx(1.0));
  CHECK(s.xi.y() == doctest::Approx(0.0));
  CHECK(s.alpha == doctest::Approx(kPi / 2));

  s = to_cartesian({1.0, 0.0, kPi});
  CHECK(s.xi.x() == doctest::Approx(-1.0));
  CHECK(std::abs(s.xi.y()) < 1e-15);
  CHECK(s.alpha == doctest::Approx(kPi));
}

TEST_CASE("polar round trip reproduces the state") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::uniform_real_distribution<double> a(0.0, kTwoPi);
  for (int i = 0; i < 2000; ++i) {
    FullState s(u(gen), u(gen), a(gen));
    if (s.xi.norm() <= 1e-6) continue;
    const FullState back = to_cartesian(to_polar(s));
    CHECK((back.xi - s.xi).norm() < 1e-12);
    CHECK(std::abs(angle_difference(back.alpha, s.alpha)) < 1e-12);
  }
}

TEST_CASE("degenerate radii are rejected") {
  CHECK_THROWS_AS(to_polar(FullState(0.0, 0.0, 1.0)), Error);
  CHECK_THROWS_AS(to_cartesian({0.0, 0.0, 0.0}), Error);
  CHECK_THROWS_AS(to_cartesian({-1.0, 0.0, 0.0}), Error);
}

TEST_CASE("check_assumption_a examples") {
  auto q = check_assumption_a(potentials::quadratic(), 1.0, 10.0, 1000);
  REQUIRE(q.has_value());
  CHECK(q->c == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q->monotone);

  auto half = check_assumption_a(potentials::quadratic(0.5), 2.0, 10.0, 1000);
  REQUIRE(half.has_value());
  CHECK(half->c == doctest::Approx(1.5).epsilon(1e-12));

  Potential flat = potentials::zero();
  flat.radial_profile = [](double r) { return 1.0 / r; };
  flat.eventual_radius = 0.0;
  CHECK_FALSE(check_assumption_a(flat, 1.0, 10.0, 100).has_value());

  CHECK_THROWS_AS(check_assumption_a(potentials::quadratic(), 1.0, 10.0, 1), Error);
  Potential nonradial = potentials::quadratic();
  nonradial.radial_profile = nullptr;
  try {
    check_assumption_a(nonradial, 1.0, 10.0, 10);
    FAIL("expected NotEventuallyRadial");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_eventually_radial);
  }
}

TEST_CASE("smoothed norm passes Assumption A only beyond the threshold") {
  const Potential pot = potentials::smoothed_norm();
  const double rs = potentials::smoothed_norm_threshold();
  CHECK(rs == doctest::Approx(1.272).epsilon(1e-3));
  CHECK_FALSE(check_assumption_a(pot, 1.0, 50.0, 2000).has_value());
  CHECK_FALSE(check_assumption_a(pot, rs, 50.0, 2000).has_value());
  auto ok = check_assumption_a(pot, 2.0, 50.0, 2000);
  REQUIRE(ok.has_value());
  CHECK(ok->c > 0.0);
  CHECK(ok->c < 1.0);
  CHECK_FALSE(pot.assumption_a.has_value());
}

TEST_CASE("builtin catalog examples") {
  const Potential q = potentials::quadratic();
  CHECK(q.phi({1.0, 1.0}) == doctest::Approx(2.0));
  CHECK(q.grad_phi({1.0, 1.0}).isApprox(Eigen::Vector2d(2.0, 2.0)));

  for (double c : {0.5, 1.0, 2.0}) {
    for (double R : {0.5, 1.0, 3.0}) {
      const Potential sc = potentials::special_case(c, R);
      CHECK(sc.radial_profile(2 * R) - 1.0 / (2 * R) == doctest::Approx(c));
      REQUIRE(sc.assumption_a.has_value());
      auto chk = check_assumption_a(sc, R, 20.0 * R, 500);
      REQUIRE(chk.has_value());
      CHECK(chk->c == doctest::Approx(c).epsilon(1e-9));
    }
  }

  const auto all = builtin_potentials();
  CHECK(all.size() >= 4);
  for (const auto& p : all) CHECK_FALSE(p.name.empty());
  CHECK_THROWS_AS(make_potential("no_such_potential", 1.0, 1.0, 1.0), Error);
  CHECK(make_potential("quadratic", 1.0, 1.0, 1.0).name == "quadratic");
}

TEST_CASE("gradients match central differences at O(h^2)") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (const Potential& pot :
       {potentials::quadratic(), potentials::smoothed_norm(),
        potentials::special_case(1.0, 1.0), potentials::special_case(2.0, 0.7)}) {
    CAPTURE(pot.name);
    for (int i = 0; i < 300; ++i) {
      const Eigen::Vector2d x(u(gen), u(gen));
      const Eigen::Vector2d g = pot.grad_phi(x);
      const double e1 = (g - central_difference(pot, x, 1e-3)).norm();
      const double e2 = (g - central_difference(pot, x, 5e-4)).norm();
      CHECK(e1 < 1e-4 * (1.0 + g.norm()));
      if (e1 > 1e-9) CHECK(e2 < 0.5 * e1);
    }
  }
}

TEST_CASE("eventual radiality of the gradient") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  std::uniform_real_distribution<double> rad(0.0, 6.0);
  for (const Potential& pot : {potentials::quadratic(), potentials::smoothed_norm(),
                               potentials::special_case(1.0, 1.0)}) {
    CAPTURE(pot.name);
    for (int i = 0; i < 500; ++i) {
      const double r = pot.eventual_radius + 1e-3 + rad(gen);
      const double t = ang(gen);
      const Eigen::Vector2d x(r * std::cos(t), r * std::sin(t));
      const Eigen::Vector2d g = pot.grad_phi(x);
      const Eigen::Vector2d e = x / r;
      const double angular = std::abs(-g.x() * e.y() + g.y() * e.x());
      CHECK(angular <= 1e-8 * std::max(1.0, g.norm()));
      CHECK(g.dot(e) == doctest::Approx(pot.radial_profile(r)).epsilon(1e-10));
    }
  }
}
