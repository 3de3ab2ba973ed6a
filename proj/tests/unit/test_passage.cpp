#include <doctest.h>

#include <cmath>
#include <memory>
#include <sstream>

#include "fiberlay/passage.hpp"

using namespace fiberlay;

namespace {

std::vector<double> exponential_sample(double rate, std::size_t n, std::uint64_t seed) {
  RngStream s(seed, 0);
  std::vector<double> out(n);
  for (auto& v : out) v = -std::log(s.uniform()) / rate;
  return out;
}

Trajectory<double> path(std::vector<double> t, std::vector<double> x) {
  Trajectory<double> tr;
  tr.times = std::move(t);
  tr.states = std::move(x);
  return tr;
}

}  // namespace

TEST_CASE("exponential tail recovers the rate") {
  const auto t = exponential_sample(2.0, 10000, 11);
  const auto fit = fit_exponential_tail(t, TailFitOptions{.seed = 3});
  CHECK(fit.lambda_hat == doctest::Approx(2.0).epsilon(0.05));
  CHECK(fit.ci.first <= fit.lambda_hat);
  CHECK(fit.ci.second >= fit.lambda_hat);
  CHECK(fit.ci.first < 2.0);
  CHECK(fit.ci.second > 2.0);
  CHECK(fit.r_squared > 0.98);
  CHECK(fit.n_events == 10000);
}

TEST_CASE("heavy tail is flagged by a poor fit") {
  RngStream s(5, 0);
  std::vector<double> t(10000);
  for (auto& v : t) v = std::pow(s.uniform(), -1.0 / 1.5);
  const auto fit = fit_exponential_tail(t, TailFitOptions{.n_boot = 0});
  CHECK(fit.r_squared < 0.95);
}

TEST_CASE("tail fit errors") {
  std::vector<double> few(50, 1.0);
  CHECK_THROWS_AS(fit_exponential_tail(few), Error);
  std::vector<double> same(500, 1.0);
  try {
    fit_exponential_tail(same);
    FAIL("expected DegenerateFit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate_fit);
  }
}

TEST_CASE("censored exponential sample") {
  auto t = exponential_sample(1.0, 20000, 7);
  std::unique_ptr<bool[]> ev(new bool[t.size()]);
  for (std::size_t i = 0; i < t.size(); ++i) {
    ev[i] = t[i] < 3.0;
    t[i] = std::min(t[i], 3.0);
  }
  const auto fit = fit_exponential_tail(t, std::span<const bool>(ev.get(), t.size()),
                                        TailFitOptions{.n_boot = 0});
  CHECK(fit.lambda_hat == doctest::Approx(1.0).epsilon(0.08));
  CHECK(fit.censor_fraction == doctest::Approx(std::exp(-3.0)).epsilon(0.15));
}

TEST_CASE("hand-built cycle") {
  const auto recs = decompose_cycles(
      path({0, 1, 2, 3, 4, 5}, {kPi, 1.5 * kPi, 2 * kPi, 2.5 * kPi, 3 * kPi, 3.5 * kPi}));
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].t_start == 0.0);
  CHECK(recs[0].t_boundary == 2.0);
  CHECK(recs[0].t_end == 4.0);
  CHECK(recs[0].increment_x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(recs[0].increment_x) <= recs[0].duration());
}

TEST_CASE("downward cycle and return") {
  // π → 0 (boundary) → π (return, new reference 0).
  const auto recs = decompose_cycles(path({0, 1, 2, 3}, {kPi, 0.0, 0.5 * kPi, kPi}));
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].t_boundary == 1.0);
  CHECK(recs[0].t_end == 3.0);
  CHECK(recs[0].increment_x == doctest::Approx(0.5 * (-1 + 1) + 0.5 * (1 + 0) + 0.5 * (0 - 1)));
}

TEST_CASE("incomplete path") {
  try {
    decompose_cycles(path({0, 1, 2}, {kPi, 1.2 * kPi, 0.9 * kPi}));
    FAIL("expected NoCompleteCycle");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_complete_cycle);
  }
}

TEST_CASE("simulated cycles satisfy the speed bound") {
  SdeConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 1e4;
  cfg.seed = 9;
  const auto recs = simulate_cycles(1.0, cfg, 200, 8);
  CHECK(recs.size() >= 200);
  for (const auto& r : recs) {
    CHECK(std::abs(r.increment_x) <= r.duration() + 1e-12);
    CHECK(r.t_start < r.t_boundary);
    CHECK(r.t_boundary < r.t_end);
  }
  CHECK_THROWS_AS(cycle_diagnostics(recs), Error);
  std::ostringstream os;
  write_cycles_csv(os, recs);
  CHECK(os.str().rfind("index,t_start,t_boundary,t_end,X\n", 0) == 0);
}

TEST_CASE("Dirichlet eigenvalue without drift") {
  for (auto [a, b] : {std::pair{0.0, kPi}, {0.5 * kPi, 1.5 * kPi}, {kPi, 2 * kPi}}) {
    const auto r = dirichlet_lambda0(0.0, a, b, EigenOptions{.grid_n = 512});
    CHECK(r.lambda_fd == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(r.lambda_check == doctest::Approx(r.lambda_fd).epsilon(1e-6));
  }
  const auto wide = dirichlet_lambda0(0.0, 0.0, 2 * kPi, EigenOptions{.grid_n = 512});
  CHECK(wide.lambda_fd == doctest::Approx(0.125).epsilon(1e-4));
}

TEST_CASE("Dirichlet eigenvalue with drift") {
  const EigenOptions opt{.grid_n = 1024};
  const auto lo = dirichlet_lambda0(1.0, 0.0, kPi, opt);
  const auto hi = dirichlet_lambda0(1.0, kPi, 2 * kPi, opt);
  CHECK(lo.lambda_fd == doctest::Approx(hi.lambda_fd).epsilon(1e-9));
  CHECK(lo.lambda_check == doctest::Approx(lo.lambda_fd).epsilon(1e-6));
  CHECK(lo.lambda_fine == doctest::Approx(lo.lambda_fd).epsilon(1e-3));
  const auto mid = dirichlet_lambda0(1.0, 0.5 * kPi, 1.5 * kPi, opt);
  // Drift towards π keeps the process inside longer.
  CHECK(mid.lambda_fd < 0.5);
  const auto m = lambda0_min(1.0, opt);
  CHECK(m.value() == doctest::Approx(mid.lambda_fd));
  CHECK_THROWS_AS(dirichlet_lambda0(1.0, 1.0, 0.0), Error);
  try {
    dirichlet_lambda0(50.0, 0.0, kPi, EigenOptions{.grid_n = 8});
    FAIL("expected GridTooCoarse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::grid_too_coarse);
  }
}

TEST_CASE("Monte Carlo exit rate matches the eigenvalue") {
  SdeConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 20.0;
  cfg.seed = 4;
  const auto fit = dirichlet_lambda0_mc(0.0, 0.0, kPi, cfg, 4000, TailFitOptions{.n_boot = 0});
  CHECK(fit.lambda_hat == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("deterministic random walk") {
  const IncrementSampler minus_one = [](RngStream&) { return -1.0; };
  const IncrementSampler one = [](RngStream&) { return 1.0; };
  const auto rw = rw_first_passage(minus_one, one, 0.0, 500, 100, 1);
  for (double s : rw.steps) CHECK(s == 1.0);
  for (bool p : rw.passed) CHECK(p);
  CHECK(rw.increment_mean == -1.0);
  CHECK_FALSE(rw.positive_mean_warning);
  CHECK_FALSE(rw.tail_fitted);
}

TEST_CASE("random walk with drift") {
  const IncrementSampler down = [](RngStream& s) { return -0.5 + s.gaussian(); };
  const IncrementSampler up = [](RngStream& s) { return 0.5 + s.gaussian(); };
  const IncrementSampler start = [](RngStream&) { return 5.0; };
  const auto rw = rw_first_passage(down, start, 0.0, 4000, 10000, 2);
  CHECK(rw.increment_mean == doctest::Approx(-0.5).epsilon(0.05));
  CHECK_FALSE(rw.positive_mean_warning);
  REQUIRE(rw.tail_fitted);
  CHECK(rw.tail.lambda_hat > 0.0);
  const auto bad = rw_first_passage(up, start, 0.0, 200, 200, 2);
  CHECK(bad.positive_mean_warning);
}

TEST_CASE("empirical sampler draws from its values") {
  const auto s = empirical_sampler({1.0, 2.0, 3.0});
  RngStream st(1, 0);
  for (int i = 0; i < 100; ++i) {
    const double v = s(st);
    CHECK((v == 1.0 || v == 2.0 || v == 3.0));
  }
  CHECK_THROWS_AS(empirical_sampler({}), Error);
}

TEST_CASE("entry radius") {
  const auto pot = potentials::quadratic();
  SdeConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 50.0;
  const auto at_pi = entry_radius_sample(pot.radial_profile, {2.0, kPi, 0.0}, cfg, 10);
  for (double r : at_pi) CHECK(r == 2.0);
  const auto r = entry_radius_sample(pot.radial_profile, {2.0, 0.3, 0.0}, cfg, 200);
  for (double v : r) CHECK(v > 0.0);
}

TEST_CASE("tau_R sample") {
  const auto pot = potentials::quadratic();
  SdeConfig cfg;
  cfg.dt = 1e-3;
  cfg.seed = 2;
  const auto s = tau_r_sample(pot, {3.0, 0.0, 0.0}, 1.0, cfg, 200);
  CHECK(s.c_hat == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.t_max == doctest::Approx(50.0));
  CHECK(s.n_events() == 200);
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    CHECK(s.times[i] >= 2.0 - 1e-9);  // |dr/dt| ≤ 1
    CHECK(s.r_end[i] <= 1.0 + 1e-9);
  }
  try {
    tau_r_sample(potentials::smoothed_norm(), {3.0, 0.0, 0.0}, 1.1, cfg, 10);
    FAIL("expected AssumptionAViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::assumption_a_violated);
  }
}

TEST_CASE("V_R and the drift probe") {
  const auto pot = potentials::quadratic();
  SdeConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 100.0;
  cfg.seed = 6;
  const FullState x(Eigen::Vector2d(3.0, 0.0), 0.0);
  std::vector<bool> hit;
  const auto tau = tau_r_delta_sample(x, pot, 1.0, 0.1, cfg, 500, &hit);
  const auto v0 = estimate_v_r(x, pot, 1.0, 0.0, 0.1, cfg, 500);
  CHECK(v0.value.mean == doctest::Approx(1.0 + stats::mean_se(tau).mean));
  CHECK(v0.ess == doctest::Approx(500.0));
  const auto v1 = estimate_v_r(x, pot, 1.0, 0.5 * v0.tail.lambda_hat, 0.1, cfg, 500);
  CHECK(v1.value.mean > v0.value.mean);
  CHECK(v1.ess > 100.0);
  try {
    estimate_v_r(x, pot, 1.0, 10.0 * v0.tail.lambda_hat, 0.1, cfg, 500);
    FAIL("expected LambdaTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::lambda_too_large);
  }
  const FullState inside(Eigen::Vector2d(0.5, 0.0), 0.0);
  const auto t_in = tau_r_delta_sample(inside, pot, 1.0, 0.0, cfg, 5);
  for (double t : t_in) CHECK(t == 0.0);

  const std::vector<FullState> xs{x};
  const auto probe = drift_condition_probe(pot, xs, 1.0, 0.0, 0.1, 0.0, cfg, 8, 50);
  REQUIRE(probe.points.size() == 1);
  CHECK(probe.points[0].ratio.mean == 1.0);
}

TEST_CASE("sigma sweep") {
  SdeConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 1e4;
  const std::vector<double> sigmas{1.5, 2.0};
  const auto rows = sigma_sweep(1.0, sigmas, cfg, 64);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.n_cycles >= 64);
    CHECK(std::abs(r.ratio.mean) <= 1.0);
  }
}
