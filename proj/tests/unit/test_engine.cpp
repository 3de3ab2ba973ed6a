#include "doctest.h"

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <sstream>
#include <vector>

#include "fiberlay/engine.hpp"
#include "fiberlay/parallel.hpp"

using namespace fiberlay;

TEST_CASE("deterministic transport step") {
  SdeConfig cfg;
  cfg.dt = 1.0;
  cfg.t_max = 2.0;
  const FullState s = step_full(FullState(0.0, 0.0, 0.0), potentials::zero(), cfg, 0.0);
  CHECK(s.xi.x() == doctest::Approx(1.0));
  CHECK(s.xi.y() == doctest::Approx(0.0));
  CHECK(s.alpha == 0.0);
}

TEST_CASE("polar step examples") {
  SdeConfig cfg;
  cfg.dt = 0.1;
  const auto p = step_polar({1.0, kPi, 0.0}, [](double) { return 0.0; }, cfg, 0.0);
  CHECK(p.r == doctest::Approx(0.9));

  cfg.dt = 1e-3;
  const auto q = step_polar({1.0, kPi / 2, 0.0}, [](double r) { return 1.0 + 1.0 / r; },
                            cfg, 0.0);
  CHECK(q.beta - kPi / 2 == doctest::Approx(1e-3));

  cfg.dt = 0.5;
  CHECK_THROWS_AS(step_polar({0.4, kPi, 0.0}, [](double) { return 0.0; }, cfg, 0.0),
                  Error);
}

TEST_CASE("scalar step") {
  SdeConfig cfg;
  cfg.dt = 0.01;
  cfg.sigma = 2.0;
  CHECK(step_scalar_sde(kPi, [](double x) { return std::sin(x); }, cfg, 0.0) ==
        doctest::Approx(kPi));
  CHECK(step_scalar_sde(0.0, [](double) { return 0.0; }, cfg, 1.5) ==
        doctest::Approx(2.0 * 0.1 * 1.5));
}

TEST_CASE("drift-free angle is scaled Brownian motion") {
  SdeConfig cfg;
  cfg.sigma = 0.7;
  cfg.t_max = 0.5;
  const auto traj = simulate_full(FullState(0.0, 0.0, 1.0), potentials::zero(), cfg,
                                  RngStream(3, 4));
  RngStream replay(3, 4);
  double a = 1.0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    a += cfg.sigma * std::sqrt(cfg.dt) * replay.gaussian();
    CHECK(std::abs(angle_difference(traj.states[k].alpha, reduce_angle(a))) < 1e-12);
  }
}

TEST_CASE("trajectories are deterministic and respect the speed limit") {
  SdeConfig cfg;
  cfg.t_max = 2.0;
  const Potential pot = potentials::quadratic();
  const auto a = simulate_full(FullState(1.0, 2.0, 0.3), pot, cfg, RngStream(9, 1));
  const auto b = simulate_full(FullState(1.0, 2.0, 0.3), pot, cfg, RngStream(9, 1));
  REQUIRE(a.size() == cfg.n_steps() + 1);
  CHECK(a.times.front() == 0.0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a.states[k].xi == b.states[k].xi);
    CHECK(a.states[k].alpha == b.states[k].alpha);
    if (k > 0) {
      CHECK((a.states[k].xi - a.states[k - 1].xi).norm() <= cfg.dt * (1 + 1e-12));
    }
  }
  const auto strided = simulate_full(FullState(1.0, 2.0, 0.3), pot, cfg, RngStream(9, 1), 10);
  REQUIRE(strided.size() == cfg.n_steps() / 10 + 1);
  CHECK(strided.states.back().xi == a.states.back().xi);
  CHECK(strided.times[1] == doctest::Approx(10 * cfg.dt));
}

TEST_CASE("mean drift of the free fiber") {
  SdeConfig cfg;
  cfg.t_max = 1.0;
  cfg.dt = 1e-2;
  cfg.seed = 17;
  const std::size_t n = 20000;
  std::vector<double> x(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream s(cfg.seed, i);
    std::vector<std::size_t> cp{cfg.n_steps()};
    x[i] = propagate_full(FullState(0.0, 0.0, 0.0), potentials::zero(), cfg, s, cp)[0].xi.x();
  });
  const auto e = stats::mean_se(x);
  // Left-point sum of E cos(σB) over the grid.
  double want = 0.0;
  for (std::size_t k = 0; k < cfg.n_steps(); ++k) want += std::exp(-0.5 * k * cfg.dt) * cfg.dt;
  CHECK(std::abs(e.mean - want) < 3.0 * e.se);
  CHECK(std::abs(want - 2.0 * (1.0 - std::exp(-0.5))) < 0.01);
}

TEST_CASE("OU process reaches its standard normal stationary law") {
  SdeConfig cfg;
  cfg.sigma = std::sqrt(2.0);
  cfg.dt = 1e-2;
  cfg.t_max = 5.0;
  const std::size_t n = 20000;
  std::vector<double> x(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream s(5, i);
    double v = 3.0;
    for (std::size_t k = 0; k < cfg.n_steps(); ++k)
      v = step_scalar_sde(v, [](double y) { return -y; }, cfg, s.gaussian());
    x[i] = v;
  });
  const auto ks = stats::ks_one_sample(x, [](double v) {
    return boost::math::cdf(boost::math::normal_distribution<>(), v);
  });
  CHECK(ks.statistic < 0.02);
}

TEST_CASE("reflected Brownian motion") {
  SdeConfig cfg;
  cfg.t_max = 1.0;
  const auto up = reflected_bm(cfg, kPi, ReflectSide::above, RngStream(1, 2));
  const auto down = reflected_bm(cfg, kPi, ReflectSide::below, RngStream(1, 2));
  for (std::size_t k = 0; k < up.size(); ++k) {
    CHECK(up.states[k] >= kPi);
    CHECK(down.states[k] <= kPi);
    CHECK(up.states[k] - kPi == doctest::Approx(kPi - down.states[k]));
  }
  const std::size_t n = 20000;
  std::vector<double> d(n);
  cfg.dt = 1e-3;
  parallel_for(n, [&](std::size_t i) {
    d[i] = reflected_bm(cfg, 0.0, ReflectSide::above, RngStream(8, i)).states.back();
  });
  const auto e = stats::mean_se(d);
  CHECK(std::abs(e.mean - std::sqrt(2.0 / kPi)) < 3.0 * e.se + 0.03);
}

TEST_CASE("first_hit on deterministic and diffusive coordinates") {
  SdeConfig cfg;
  cfg.t_max = 2.0;
  cfg.sigma = 1e-14;
  RngStream s(0, 0);
  const RadialProfile b = [](double) { return 0.0; };
  auto res = first_hit(
      PolarState{1.0, kPi, 0.0},
      [&](const PolarState& p, double z) { return step_polar(p, b, cfg, z); },
      [](const PolarState& p) { return p.r; },
      LevelCrossing{0.5, CrossDirection::below, false}, cfg, s);
  CHECK(res.hit);
  CHECK(res.t_hit == doctest::Approx(0.5).epsilon(1e-9));

  auto now = first_hit(
      0.0, [&](double x, double z) { return step_scalar_sde(x, [](double) { return 0.0; }, cfg, z); },
      [](double x) { return x; }, LevelCrossing{0.0, CrossDirection::above, true}, cfg, s);
  CHECK(now.hit);
  CHECK(now.t_hit == 0.0);

  cfg.t_max = 1.0;
  cfg.sigma = 1.0;
  const std::size_t n = 20000;
  std::vector<double> hits(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream st(77, i);
    auto r = first_hit(
        0.0, [&](double x, double z) { return step_scalar_sde(x, [](double) { return 0.0; }, cfg, z); },
        [](double x) { return x; }, LevelCrossing{1.0, CrossDirection::above, true}, cfg, st);
    hits[i] = r.hit ? 1.0 : 0.0;
    if (r.hit) CHECK(r.t_hit <= r.censored_at);
  });
  const auto e = stats::mean_se(hits);
  CHECK(std::abs(e.mean - 0.3173105) < 3.0 * e.se);
}

TEST_CASE("Lyapunov functional stays below its starting value") {
  SdeConfig cfg;
  cfg.t_max = 1.0;
  cfg.dt = 1e-2;
  cfg.seed = 4;
  for (double r : {0.5, 2.0, 5.0}) {
    const FullState x0(r, 0.0, 1.0);
    const auto e = lyapunov_functional(x0, potentials::quadratic(), cfg, 10.0, 2000);
    CHECK(e.mean <= r * r + 1.0 + 3.0 * e.se);
  }
  const auto out = lyapunov_functional(FullState(20.0, 0.0, 0.0), potentials::quadratic(),
                                       cfg, 10.0, 10);
  CHECK(out.mean == doctest::Approx(401.0));
}

TEST_CASE("trajectory CSV format") {
  SdeConfig cfg;
  cfg.dt = 0.5;
  cfg.t_max = 1.0;
  std::ostringstream os;
  write_trajectory_csv(os, simulate_full(FullState(0.0, 0.0, 0.0), potentials::zero(), cfg,
                                         RngStream(1, 1)));
  const std::string text = os.str();
  CHECK(text.rfind("t,xi1,xi2,alpha\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}
