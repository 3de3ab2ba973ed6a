#include "fiberlay/engine.hpp"

#include <fmt/format.h>

#include <ostream>

#include "fiberlay/parallel.hpp"

namespace fiberlay {

void SdeConfig::validate() const {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::precondition,
          "sigma must be positive");
  require(dt > 0.0 && t_max > 0.0, ErrorCode::precondition,
          "dt and t_max must be positive");
  require(dt < t_max, ErrorCode::precondition, "dt must be smaller than t_max");
}

FullState step_full(const FullState& s, const Potential& pot,
                    const SdeConfig& cfg, double z) {
  const Eigen::Vector2d grad = pot.grad_phi(s.xi);
  require(grad.allFinite(), ErrorCode::non_finite_drift,
          "gradient of '" + pot.name + "' is not finite");
  const double c = std::cos(s.alpha);
  const double sn = std::sin(s.alpha);
  FullState out;
  out.xi = s.xi + cfg.dt * Eigen::Vector2d(c, sn);
  // ∇φ·τ^⊥ = −φ_1 sin α + φ_2 cos α.
  const double turn = -grad.x() * sn + grad.y() * c;
  out.alpha = reduce_angle(s.alpha + cfg.sigma * std::sqrt(cfg.dt) * z - turn * cfg.dt);
  return out;
}

PolarState step_polar(const PolarState& p, const RadialProfile& b,
                      const SdeConfig& cfg, double z) {
  require(p.r > kMinRadius, ErrorCode::radius_underflow, "r below r_min");
  const double sb = std::sin(p.beta);
  PolarState out;
  out.r = p.r + std::cos(p.beta) * cfg.dt;
  out.beta = reduce_angle(p.beta + (b(p.r) - 1.0 / p.r) * sb * cfg.dt +
                          cfg.sigma * std::sqrt(cfg.dt) * z);
  out.psi = reduce_angle(p.psi + sb / p.r * cfg.dt);
  require(out.r > kMinRadius, ErrorCode::radius_underflow,
          "polar step left the chart (r <= r_min)");
  return out;
}

namespace {

template <class State, class Step>
Trajectory<State> simulate(const State& x0, Step&& step, const SdeConfig& cfg,
                           RngStream stream, std::size_t stride) {
  cfg.validate();
  require(stride >= 1, ErrorCode::precondition, "stride must be at least 1");
  Trajectory<State> traj;
  traj.stride = stride;
  traj.config = cfg;
  traj.stream = stream;
  const std::size_t n = cfg.n_steps();
  traj.times.reserve(n / stride + 1);
  traj.states.reserve(n / stride + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  State s = x0;
  for (std::size_t k = 1; k <= n; ++k) {
    s = step(s, stream.gaussian());
    if (k % stride == 0) {
      traj.times.push_back(static_cast<double>(k) * cfg.dt);
      traj.states.push_back(s);
    }
  }
  return traj;
}

}  // namespace

Trajectory<FullState> simulate_full(const FullState& x0, const Potential& pot,
                                    const SdeConfig& cfg, RngStream stream,
                                    std::size_t stride) {
  return simulate(
      x0, [&](const FullState& s, double z) { return step_full(s, pot, cfg, z); },
      cfg, stream, stride);
}

Trajectory<PolarState> simulate_polar(const PolarState& p0, const RadialProfile& b,
                                      const SdeConfig& cfg, RngStream stream,
                                      std::size_t stride) {
  require(p0.r > kMinRadius, ErrorCode::radius_underflow, "r0 below r_min");
  return simulate(
      p0, [&](const PolarState& s, double z) { return step_polar(s, b, cfg, z); },
      cfg, stream, stride);
}

Trajectory<double> simulate_scalar(double x0,
                                   const std::function<double(double)>& drift,
                                   const SdeConfig& cfg, RngStream stream,
                                   std::size_t stride) {
  return simulate(
      x0, [&](double x, double z) { return step_scalar_sde(x, drift, cfg, z); },
      cfg, stream, stride);
}

std::vector<FullState> propagate_full(const FullState& x0, const Potential& pot,
                                      const SdeConfig& cfg, RngStream& stream,
                                      std::span<const std::size_t> checkpoints) {
  std::vector<FullState> out;
  out.reserve(checkpoints.size());
  FullState s = x0;
  std::size_t k = 0;
  for (std::size_t target : checkpoints) {
    require(target >= k, ErrorCode::precondition, "checkpoints must be sorted");
    for (; k < target; ++k) s = step_full(s, pot, cfg, stream.gaussian());
    out.push_back(s);
  }
  return out;
}

Trajectory<double> reflected_bm(const SdeConfig& cfg, double at, ReflectSide side,
                                RngStream stream) {
  cfg.validate();
  Trajectory<double> traj;
  traj.config = cfg;
  traj.stream = stream;
  const std::size_t n = cfg.n_steps();
  const double sign = side == ReflectSide::above ? 1.0 : -1.0;
  const double scale = cfg.sigma * std::sqrt(cfg.dt);
  traj.times.reserve(n + 1);
  traj.states.reserve(n + 1);
  Reflector refl;
  traj.times.push_back(0.0);
  traj.states.push_back(at);
  for (std::size_t k = 1; k <= n; ++k) {
    refl.push(scale * stream.gaussian());
    traj.times.push_back(static_cast<double>(k) * cfg.dt);
    traj.states.push_back(at + sign * refl.value());
  }
  return traj;
}

stats::Estimate lyapunov_functional(const FullState& x0, const Potential& pot,
                                    const SdeConfig& cfg, double R, std::size_t n) {
  cfg.validate();
  require(R > 0.0 && n >= 2, ErrorCode::precondition, "need R > 0 and n >= 2");
  std::vector<double> values(n);
  const std::size_t steps = cfg.n_steps();
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    FullState s = x0;
    std::size_t k = 0;
    // Starting outside the closed ball means σ_R = 0.
    if (s.xi.norm() <= R) {
      for (; k < steps; ++k) {
        s = step_full(s, pot, cfg, stream.gaussian());
        if (s.xi.norm() > R) {
          ++k;
          break;
        }
      }
    }
    const double t = static_cast<double>(k) * cfg.dt;
    values[i] = std::exp(-2.0 * t) * (s.xi.squaredNorm() + 1.0);
  });
  return stats::mean_se(values);
}

void write_trajectory_csv(std::ostream& os, const Trajectory<FullState>& traj) {
  os << "t,xi1,xi2,alpha\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.states[i];
    os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", traj.times[i], s.xi.x(),
                      s.xi.y(), s.alpha);
  }
}

void write_trajectory_csv(std::ostream& os, const Trajectory<PolarState>& traj) {
  os << "t,r,beta,psi\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.states[i];
    os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", traj.times[i], s.r, s.beta,
                      s.psi);
  }
}

void write_trajectory_csv(std::ostream& os, const Trajectory<double>& traj) {
  os << "t,x\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    os << fmt::format("{:.17g},{:.17g}\n", traj.times[i], traj.states[i]);
  }
}

}  // namespace fiberlay
