#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fiberlay/engine.hpp"
#include "fiberlay/model.hpp"
#include "fiberlay/stats.hpp"

namespace fiberlay {

// ---------------------------------------------------------------------------
// Radial hitting time τ_R

struct TauSample {
  std::vector<double> times;
  std::vector<bool> hit;
  // r at the hitting time, or at censoring.
  std::vector<double> r_end;
  double c_hat = 0.0;
  double t_max = 0.0;

  std::size_t n_events() const;
  double censor_fraction() const;
};

/// τ_R = first time r ≤ R for the polar system from p0. Checks Assumption A
/// on [R, r_hi] first. A non-positive t_max defaults to 50/ĉ.
TauSample tau_r_sample(const Potential& pot, const PolarState& p0, double R,
                       SdeConfig cfg, std::size_t n, double t_max = 0.0);

struct TailFit {
  double lambda_hat = 0.0;
  std::pair<double, double> ci;
  double r_squared = 0.0;
  std::size_t n_events = 0;
  double censor_fraction = 0.0;
  double knee = 0.0;
  std::size_t n_points = 0;
  std::vector<stats::SurvivalPoint> curve;
};

struct TailFitOptions {
  double knee_quantile = 0.6;
  std::size_t min_at_risk = 20;
  std::size_t min_events = 100;
  int n_boot = 200;
  std::uint64_t seed = 0;
};

/// Least squares on log Kaplan–Meier survival beyond the knee.
TailFit fit_exponential_tail(std::span<const double> times, std::span<const bool> events,
                             const TailFitOptions& opt = {});

/// Same with every observation an event.
TailFit fit_exponential_tail(std::span<const double> times,
                             const TailFitOptions& opt = {});

void write_tails_csv(std::ostream& os, std::span<const stats::SurvivalPoint> curve);

// ---------------------------------------------------------------------------
// Cycles of dβ = c sin β dt + σ dB on the lift

struct CycleRecord {
  std::size_t index = 0;
  double t_start = 0.0;
  double t_boundary = 0.0;
  double t_end = 0.0;
  double increment_x = 0.0;

  double duration() const { return t_end - t_start; }
};

/// Streaming cycle detector. A cycle starts at a reference point p, reaches
/// the boundary {p − π, p + π}, and ends on the next visit to a point at
/// distance π from that boundary point; the end becomes the next reference.
/// Crossings are read off the sample grid; increments use the trapezoid rule.
class CycleTracker {
 public:
  explicit CycleTracker(double reference = kPi) : reference_(reference) {}

  /// Feeds the next sample; true when it completes a cycle.
  bool push(double t, double beta);
  const std::vector<CycleRecord>& records() const { return records_; }
  std::size_t completed() const { return records_.size(); }

 private:
  double reference_;
  double boundary_ = 0.0;
  bool to_boundary_ = true;
  double t_start_ = 0.0;
  double t_boundary_ = 0.0;
  double integral_ = 0.0;
  double last_t_ = 0.0;
  double last_cos_ = 0.0;
  bool started_ = false;
  std::vector<CycleRecord> records_;
};

/// Cycles of a recorded lift path that starts at its reference point.
std::vector<CycleRecord> decompose_cycles(const Trajectory<double>& beta);

/// Simulates n_paths lifts from π until each has n_cycles/n_paths complete
/// cycles (rounded up); records are grouped by path.
std::vector<CycleRecord> simulate_cycles(double c, const SdeConfig& cfg,
                                         std::size_t n_cycles, std::size_t n_paths = 64);

void write_cycles_csv(std::ostream& os, std::span<const CycleRecord> records);

struct AutocorrelationCheck {
  std::size_t lag = 0;
  double value = 0.0;
  double bound = 0.0;

  bool within() const { return std::abs(value) <= bound; }
};

struct CycleDiagnostics {
  std::size_t n = 0;
  stats::Estimate mean_x;
  std::pair<double, double> mean_x_ci99;
  std::vector<AutocorrelationCheck> autocorrelation;
  // max(|X_i| − duration_i); never positive.
  double max_excess = 0.0;
  TailFit abs_x_tail;
  TailFit duration_tail;
};

CycleDiagnostics cycle_diagnostics(std::span<const CycleRecord> records,
                                   std::size_t max_lag = 5);

// ---------------------------------------------------------------------------
// Dirichlet eigenvalue of −σ²/2 d²/dx² − c sin x d/dx on (a, b)

struct EigenOptions {
  int grid_n = 2048;
  double sigma = 1.0;
  double richardson_tol = 0.01;
};

struct EigenResult {
  double c = 0.0;
  double a = 0.0;
  double b = 0.0;
  int grid_n = 0;
  double lambda_fd = 0.0;
  // Same operator on the doubled grid.
  double lambda_fine = 0.0;
  // Inverse iteration on the non-symmetric matrix.
  double lambda_check = 0.0;
};

EigenResult dirichlet_lambda0(double c, double a, double b, const EigenOptions& opt = {});

struct ExitSample {
  std::vector<double> times;
  std::vector<bool> exited;
};

/// Exit times of (a, b) for dX = c sin X dt + σ dB from x0, with the bridge
/// correction at both ends.
ExitSample exit_time_sample(double c, double a, double b, double x0, const SdeConfig& cfg,
                            std::size_t n);

/// Decay rate of the simulated exit-time survival from the midpoint.
TailFit dirichlet_lambda0_mc(double c, double a, double b, const SdeConfig& cfg,
                             std::size_t n, const TailFitOptions& opt = {});

struct Lambda0Min {
  double lambda_0_pi = 0.0;
  double lambda_half_pi = 0.0;
  double lambda_pi_2pi = 0.0;

  double value() const { return std::min({lambda_0_pi, lambda_half_pi, lambda_pi_2pi}); }
};

/// λ̃₀ = min over (0, π), (π/2, 3π/2), (π, 2π).
Lambda0Min lambda0_min(double c, const EigenOptions& opt = {});

/// E_{x0}[∫₀^ρ cos X_s ds] for ρ the exit time of (a, b).
stats::Estimate interval_cos_integral(double c, double a, double b, double x0,
                                      const SdeConfig& cfg, std::size_t n);

// ---------------------------------------------------------------------------
// Random walk of cycle increments

using IncrementSampler = std::function<double(RngStream&)>;

struct RandomWalkPassage {
  std::vector<double> steps;
  std::vector<bool> passed;
  double increment_mean = 0.0;
  bool positive_mean_warning = false;
  TailFit tail;
  bool tail_fitted = false;
};

/// T_− = inf{n ≥ 0 : s₀ + X₁ + … + X_n ≤ level}, censored at max_steps.
RandomWalkPassage rw_first_passage(const IncrementSampler& increments,
                                   const IncrementSampler& start, double level,
                                   std::size_t n, std::size_t max_steps,
                                   std::uint64_t seed, const TailFitOptions& opt = {});

/// Resamples recorded values uniformly.
IncrementSampler empirical_sampler(std::vector<double> values);

/// r at the first visit of β to π for the polar system from p0.
std::vector<double> entry_radius_sample(const RadialProfile& b, const PolarState& p0,
                                        const SdeConfig& cfg, std::size_t n);

// ---------------------------------------------------------------------------
// V_R and the drift condition

struct VrEstimate {
  stats::Estimate value;
  stats::Estimate mean_tau;
  double ess = 0.0;
  std::size_t censored = 0;
  TailFit tail;
};

/// τ_R(δ) = inf{t > δ : |ξ_t| ≤ R} for the full system from x.
std::vector<double> tau_r_delta_sample(const FullState& x, const Potential& pot, double R,
                                       double delta, const SdeConfig& cfg, std::size_t n,
                                       std::vector<bool>* hit = nullptr);

/// 1 + E[(e^{λτ} − 1)/λ] with τ = τ_R(δ); λ = 0 gives 1 + E τ. Throws
/// LambdaTooLarge when λ reaches the lower confidence bound of the tail rate.
VrEstimate estimate_v_r(const FullState& x, const Potential& pot, double R, double lambda,
                        double delta, const SdeConfig& cfg, std::size_t n);

struct DriftProbePoint {
  FullState x;
  double v_x = 0.0;
  stats::Estimate ps_v;
  stats::Estimate ratio;
};

struct DriftProbe {
  double s = 0.0;
  double lambda = 0.0;
  double tail_rate = 0.0;
  std::vector<DriftProbePoint> points;
};

/// P_s V_R(x) / V_R(x) by nested Monte Carlo. Inner estimates share one set of
/// streams across outer paths, so s = 0 reproduces V_R(x) exactly.
DriftProbe drift_condition_probe(const Potential& pot, std::span<const FullState> xs,
                                 double R, double lambda, double delta, double s,
                                 const SdeConfig& cfg, std::size_t n_outer,
                                 std::size_t n_inner);

struct SigmaSweepRow {
  double sigma = 0.0;
  stats::Estimate ratio;
  std::size_t n_cycles = 0;
};

/// E[X₁]/E[σ¹] across σ.
std::vector<SigmaSweepRow> sigma_sweep(double c, std::span<const double> sigmas,
                                       const SdeConfig& cfg, std::size_t n_cycles);

}  // namespace fiberlay
