#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fiberlay/engine.hpp"
#include "fiberlay/model.hpp"

namespace fiberlay {

/// Order statistics of per-path maximal excesses.
struct ExcessSummary {
  std::size_t n = 0;
  double max = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
};

ExcessSummary summarize_excess(std::vector<double> per_path);

// ---------------------------------------------------------------------------
// Reflected-BM domination of the angle near π and near 2π

struct TanakaReport {
  ExcessSummary excess;
  std::vector<double> per_path;
  // Paths whose σR reached π/2 before the exit, and those with |β − π| ≥ π/2 there.
  std::size_t exit_checks = 0;
  std::size_t exit_check_failures = 0;
};

/// |π − β_t| against σR_t, with R the running-infimum reflection of
/// ∫ sgn(β − π) dB, up to the exit of (π/2, 3π/2) or r ≤ r_stop. Needs β₀ = π.
TanakaReport tanaka_domination(const RadialProfile& b, const PolarState& p0,
                               const SdeConfig& cfg, std::size_t n, double r_stop = 1.0);

/// Mirror statement at 2π: σR_t against |2π − β_t| up to the exit of
/// (3π/2, 5π/2). Needs β₀ = 2π (≡ 0).
TanakaReport tanaka_domination_upper(const RadialProfile& b, const PolarState& p0,
                                     const SdeConfig& cfg, std::size_t n,
                                     double r_stop = 1.0);

// ---------------------------------------------------------------------------
// Comparison of two scalar SDEs with one driver

using ScalarDrift = std::function<double(double)>;

struct IwReport {
  ExcessSummary excess;
  // max |x1 − x2| over paths and times.
  double max_abs_difference = 0.0;
};

/// x1 and x2 share every Gaussian increment; reports (x1 − x2)⁺. Paths stop
/// when either leaves `window`. Throws DriftOrderViolated if b1 > b2 at a
/// visited point.
IwReport iw_compare(const ScalarDrift& b1, const ScalarDrift& b2, double x1_0, double x2_0,
                    const SdeConfig& cfg, std::size_t n,
                    std::pair<double, double> window = {-INFINITY, INFINITY});

// ---------------------------------------------------------------------------
// γ comparison process

enum class Regime : char {
  reflect_pi = 'a',   // reflected BM at π
  drift = 'b',        // dγ = σ dW + c sin γ dt
  reflect_2pi = 'c',  // reflected BM at 2π
  coincide = 'd',     // drift dynamics after |β − π| caught up with γ − π
};

struct RegimeSwitch {
  double t = 0.0;
  Regime regime = Regime::reflect_pi;
};

enum class Exclusion {
  gamma_at_pi_beta_away,
  simultaneous_events,
  regime_stall,
  censored,
};

std::string_view to_string(Exclusion e);

struct GammaConfig {
  double c = 1.0;
  double R = 1.0;
  double t_stall = 100.0;
  // |β − π| allowed at a γ return to π before the path counts as a rule gap.
  double restart_tolerance_sd = 5.0;
  bool record = true;
  std::size_t stride = 1;
};

struct CoupledPair {
  RngStream driver;
  // β on the circle and γ in [π, 2π], at recorded times.
  Trajectory<double> path_a;
  Trajectory<double> path_b;
  std::vector<Regime> regimes;
  std::vector<RegimeSwitch> regime_log;
  std::string reading = "three_bullet";

  double tau_r = 0.0;
  double tau_r_gamma = 0.0;
  bool hit = false;
  bool hit_gamma = false;
  // Up to τ_R: max (|β − π| − (γ − π))⁺ and max (r − r^γ)⁺.
  double distance_excess = 0.0;
  double radial_excess = 0.0;
  std::optional<Exclusion> excluded;
  double simulated_time = 0.0;
};

/// Builds γ next to the radial process started at (r0, π). Throws
/// RegimeStallDetected if no regime switch happens for t_stall.
CoupledPair build_gamma(const RadialProfile& b, double r0, const GammaConfig& gcfg,
                        const SdeConfig& cfg, RngStream driver);

struct GammaReport {
  std::size_t n_paths = 0;
  std::size_t n_used = 0;
  std::map<std::string, std::size_t> excluded;
  ExcessSummary distance_excess;
  ExcessSummary radial_excess;
  // Paths with τ_R > τ_R^γ + dt among the used ones.
  std::size_t order_violations = 0;
  double order_fraction = 1.0;
  double exclusion_fraction = 0.0;
};

GammaReport gamma_ensemble(const RadialProfile& b, double r0, const GammaConfig& gcfg,
                           const SdeConfig& cfg, std::size_t n);

void write_couple_csv(std::ostream& os, const CoupledPair& pair);

// ---------------------------------------------------------------------------
// Control path

struct ControlPath {
  double alpha_hat = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  double T = 0.0;
  FullState terminal;
  double distance = 0.0;
  // Break points of the piecewise linear angle.
  std::vector<double> times;
  std::vector<double> alphas;
};

/// Angle path α₀ → α̂ on [0, t1], α̂ on [t1, t2], α̂ → α_target on [t2, T],
/// integrated exactly. T ≤ 0 selects T = |ξ_target − ξ₀|.
ControlPath control_path(const FullState& x0, const FullState& target, double t1, double t2,
                         double T = 0.0);

/// Same three-segment shape with t1 = T − t2 = fraction·T, with α̂ and T
/// corrected by Newton so that ξ_T hits the target.
ControlPath control_path_exact(const FullState& x0, const FullState& target, double fraction);

}  // namespace fiberlay
