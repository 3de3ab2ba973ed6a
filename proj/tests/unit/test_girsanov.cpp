#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fiberlay/girsanov.hpp"

using namespace fiberlay;

namespace {

SdeConfig config(double dt, double t_max, std::uint64_t seed) {
  SdeConfig cfg;
  cfg.dt = dt;
  cfg.t_max = t_max;
  cfg.seed = seed;
  return cfg;
}

const Observable kOne = [](const FullState&) { return 1.0; };
const Observable kCos = [](const FullState& s) { return std::cos(s.alpha); };

}  // namespace

TEST_CASE("weights have unit mean under the reference law") {
  const auto pot = potentials::quadratic();
  const FullState x0(Eigen::Vector2d(1.0, 0.5), 0.3);
  const std::vector<double> times{0.1, 0.25, 0.5};
  const auto ens = weighted_ensemble(kOne, pot, x0, config(1e-2, 0.5, 1), 4000, times);
  REQUIRE(ens.estimates.size() == 3);
  for (const auto& e : ens.estimates) {
    CHECK(std::abs(e.mean_weight.mean - 1.0) <= 4.0 * e.mean_weight.se);
    CHECK(e.value.mean == doctest::Approx(e.mean_weight.mean));
    CHECK(e.ess > 0.0);
    CHECK_FALSE(e.ess_low);
  }
  CHECK(ens.samples.size() == 3 * 4000);
}

TEST_CASE("zero potential gives unit weights") {
  const auto pot = potentials::zero();
  const FullState x0(Eigen::Vector2d(0.0, 0.0), 0.0);
  const auto est = reweighted_expectation(kCos, pot, x0, config(1e-2, 1.0, 2), 4000);
  CHECK(est.mean_weight.mean == 1.0);
  CHECK(est.ess == doctest::Approx(4000.0));
  CHECK(std::abs(est.value.mean - std::exp(-0.5)) <= 4.0 * est.value.se);
}

TEST_CASE("reweighting agrees with direct simulation") {
  const auto pot = potentials::quadratic();
  const FullState x0(Eigen::Vector2d(1.0, 0.0), 0.5 * kPi);
  const auto cfg = config(1e-2, 0.5, 3);
  const auto rw = reweighted_expectation(kCos, pot, x0, cfg, 8000);
  const auto direct = direct_expectation(kCos, pot, x0, cfg, 8000);
  CHECK(std::abs(rw.value.mean - direct.mean) <= 4.0 * std::hypot(rw.value.se, direct.se));
}

TEST_CASE("log weight is additive over steps") {
  const auto pot = potentials::quadratic();
  const FullState x0(Eigen::Vector2d(0.5, -0.5), 1.0);
  const auto cfg = config(1e-2, 1.0, 4);
  const auto wp = weighted_path(x0, pot, cfg, RngStream(4, 0));
  CHECK(girsanov_log_weight(wp.traj, pot) == doctest::Approx(wp.log_weight).epsilon(1e-12));

  WeightAccumulator first(pot, cfg.sigma), second(pot, cfg.sigma), whole(pot, cfg.sigma);
  const std::size_t half = wp.traj.size() / 2;
  for (std::size_t k = 1; k < wp.traj.size(); ++k) {
    (k <= half ? first : second).push(wp.traj.states[k - 1], wp.traj.states[k], cfg.dt);
    whole.push(wp.traj.states[k - 1], wp.traj.states[k], cfg.dt);
  }
  CHECK(first.log_weight() + second.log_weight() ==
        doctest::Approx(whole.log_weight()).epsilon(1e-12));
  whole.reset();
  CHECK(whole.log_weight() == 0.0);
}

TEST_CASE("single step weight") {
  // g = ∇φ·τ⊥ with φ = |ξ|², ξ = (1, 0), α = 0: τ⊥ = (0, 1), so g = 0.
  const auto pot = potentials::quadratic();
  WeightAccumulator acc(pot, 1.0);
  acc.push(FullState(Eigen::Vector2d(1.0, 0.0), 0.0), FullState(Eigen::Vector2d(1.0, 0.0), 0.1),
           0.01);
  CHECK(acc.log_weight() == 0.0);
  // α = π/2: τ⊥ = (−1, 0), g = −2; log M = −gΔα/σ² − g²dt/(2σ²).
  WeightAccumulator acc2(pot, 1.0);
  acc2.push(FullState(Eigen::Vector2d(1.0, 0.0), 0.5 * kPi),
            FullState(Eigen::Vector2d(1.0, 0.0), 0.5 * kPi + 0.1), 0.01);
  CHECK(acc2.log_weight() == doctest::Approx(2.0 * 0.1 - 4.0 * 0.01 / 2.0));
}

TEST_CASE("printed weight form differs") {
  const auto pot = potentials::quadratic();
  const FullState x0(Eigen::Vector2d(1.0, 0.3), 0.2);
  const auto cfg = config(1e-2, 0.5, 5);
  const auto a = weighted_path(x0, pot, cfg, RngStream(5, 0));
  const auto b = weighted_path(x0, pot, cfg, RngStream(5, 0), WeightForm::tangent_as_printed);
  CHECK(a.traj.states.back().alpha == b.traj.states.back().alpha);
  CHECK(a.log_weight != b.log_weight);
}

TEST_CASE("girsanov preconditions and output") {
  const auto pot = potentials::quadratic();
  const FullState x0(Eigen::Vector2d(1.0, 0.0), 0.0);
  const auto cfg = config(1e-2, 0.5, 6);
  auto traj = simulate_full(x0, pot, cfg, RngStream(6, 0), 2);
  CHECK_THROWS_AS(girsanov_log_weight(traj, pot), Error);
  const std::vector<double> bad{0.105};
  CHECK_THROWS_AS(weighted_ensemble(kOne, pot, x0, cfg, 10, bad), Error);
  CHECK_THROWS_AS(weighted_ensemble(kOne, pot, x0, cfg, 1, std::vector<double>{0.1}), Error);

  const std::vector<double> times{0.1};
  const auto ens = weighted_ensemble(kOne, pot, x0, cfg, 3, times);
  std::ostringstream os;
  write_weighted_csv(os, ens.samples);
  CHECK(os.str().rfind("stream_id,t,log_weight,f_value\n", 0) == 0);
}
