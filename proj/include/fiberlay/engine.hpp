#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fiberlay/error.hpp"
#include "fiberlay/model.hpp"
#include "fiberlay/rng.hpp"
#include "fiberlay/stats.hpp"

namespace fiberlay {

enum class Scheme {
  euler,
  // Euler plus a Brownian-bridge crossing test between grid points for
  // diffusive coordinates.
  euler_bridge,
};

struct SdeConfig {
  double sigma = 1.0;
  double dt = 1e-3;
  double t_max = 1.0;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::euler_bridge;

  void validate() const;
  std::size_t n_steps() const {
    return static_cast<std::size_t>(std::llround(t_max / dt));
  }
  double sqrt_dt() const { return std::sqrt(dt); }
};

template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::size_t stride = 1;
  SdeConfig config;
  RngStream stream;

  std::size_t size() const { return states.size(); }
};

/// One Euler–Maruyama step of dξ = τ(α)dt, dα = σdB − ∇φ(ξ)·τ(α)^⊥ dt.
FullState step_full(const FullState& s, const Potential& pot,
                    const SdeConfig& cfg, double z);

/// One step of the polar system
///   dr = cos β dt, dβ = (b(r) − 1/r) sin β dt + σ dB, dψ = sin β / r dt.
PolarState step_polar(const PolarState& p, const RadialProfile& b,
                      const SdeConfig& cfg, double z);

/// x' = x + drift(x)dt + σ√dt z.
template <class Drift>
double step_scalar_sde(double x, Drift&& drift, const SdeConfig& cfg, double z) {
  return x + drift(x) * cfg.dt + cfg.sigma * std::sqrt(cfg.dt) * z;
}

Trajectory<FullState> simulate_full(const FullState& x0, const Potential& pot,
                                    const SdeConfig& cfg, RngStream stream,
                                    std::size_t stride = 1);

Trajectory<PolarState> simulate_polar(const PolarState& p0, const RadialProfile& b,
                                      const SdeConfig& cfg, RngStream stream,
                                      std::size_t stride = 1);

Trajectory<double> simulate_scalar(double x0,
                                   const std::function<double(double)>& drift,
                                   const SdeConfig& cfg, RngStream stream,
                                   std::size_t stride = 1);

/// States of one full-SDE path at the given step indices (sorted ascending).
std::vector<FullState> propagate_full(const FullState& x0, const Potential& pot,
                                      const SdeConfig& cfg, RngStream& stream,
                                      std::span<const std::size_t> checkpoints);

/// Discrete Skorokhod map at zero: value = Y − min(0, min_{s≤t} Y_s) for the
/// running sum Y of the pushed increments.
class Reflector {
 public:
  void push(double increment) {
    y_ += increment;
    if (y_ < min_) min_ = y_;
  }
  double value() const { return y_ - min_; }
  void reset() { y_ = min_ = 0.0; }

 private:
  double y_ = 0.0;
  double min_ = 0.0;
};

enum class ReflectSide { above, below };

/// at ± σ(W_t − inf_{s≤t} W_s) on the grid 0, dt, …, t_max.
Trajectory<double> reflected_bm(const SdeConfig& cfg, double at, ReflectSide side,
                                RngStream stream);

enum class CrossDirection { below, above };

/// Half-space predicate on one coordinate: x ≤ level (below) or x ≥ level
/// (above). Diffusive coordinates get the bridge correction under
/// Scheme::euler_bridge; absolutely continuous ones get a linearly
/// interpolated crossing time.
struct LevelCrossing {
  double level = 0.0;
  CrossDirection direction = CrossDirection::below;
  bool diffusive = true;

  bool holds(double x) const {
    return direction == CrossDirection::below ? x <= level : x >= level;
  }
};

template <class State>
struct HittingResult {
  bool hit = false;
  double t_hit = 0.0;
  State state_at_hit{};
  double censored_at = 0.0;
};

/// Probability that a Brownian bridge with variance rate σ² over dt, running
/// from x0 to x1 on the same side of `level`, touches the level.
inline double bridge_crossing_probability(double x0, double x1, double level,
                                          double sigma, double dt) {
  const double a = (level - x0) * (level - x1);
  if (a <= 0.0) return 1.0;
  return std::exp(-2.0 * a / (sigma * sigma * dt));
}

/// Steps `step(state, z)` from s until `coord(state)` satisfies the crossing
/// predicate or t_max is reached.
template <class State, class Step, class Coord>
HittingResult<State> first_hit(State s, Step&& step, Coord&& coord,
                               const LevelCrossing& crossing,
                               const SdeConfig& cfg, RngStream& stream) {
  HittingResult<State> out;
  out.censored_at = cfg.t_max;
  double x = coord(s);
  if (crossing.holds(x)) {
    out.hit = true;
    out.state_at_hit = s;
    return out;
  }
  const bool bridge = crossing.diffusive && cfg.scheme == Scheme::euler_bridge;
  const std::size_t n = cfg.n_steps();
  for (std::size_t k = 0; k < n; ++k) {
    State next = step(s, stream.gaussian());
    const double x1 = coord(next);
    const double t0 = static_cast<double>(k) * cfg.dt;
    const double t1 = static_cast<double>(k + 1) * cfg.dt;
    if (crossing.holds(x1)) {
      out.hit = true;
      out.t_hit = crossing.diffusive ? t1 : t0 + cfg.dt * (x - crossing.level) / (x - x1);
      out.state_at_hit = next;
      return out;
    }
    if (bridge &&
        stream.uniform() <
            bridge_crossing_probability(x, x1, crossing.level, cfg.sigma, cfg.dt)) {
      out.hit = true;
      out.t_hit = t1;
      out.state_at_hit = next;
      return out;
    }
    s = next;
    x = x1;
  }
  out.state_at_hit = s;
  return out;
}

/// Monte Carlo estimate of E[e^{−2(t∧σ_R)} Ψ(X_{t∧σ_R})] with Ψ = |ξ|² + 1
/// and σ_R the exit time of the closed ball of radius R; the Lyapunov bound
/// says it never exceeds Ψ(x0).
stats::Estimate lyapunov_functional(const FullState& x0, const Potential& pot,
                                    const SdeConfig& cfg, double R, std::size_t n);

void write_trajectory_csv(std::ostream& os, const Trajectory<FullState>& traj);
void write_trajectory_csv(std::ostream& os, const Trajectory<PolarState>& traj);
void write_trajectory_csv(std::ostream& os, const Trajectory<double>& traj);

}  // namespace fiberlay
