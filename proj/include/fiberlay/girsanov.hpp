#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fiberlay/engine.hpp"
#include "fiberlay/model.hpp"
#include "fiberlay/stats.hpp"

namespace fiberlay {

using Observable = std::function<double(const FullState&)>;

/// Orientation of the turning term inside the exponential weight.
enum class WeightForm {
  // g = ∇φ·τ^⊥ with 1/σ² scaling; the density of the drifted scheme.
  perpendicular,
  // g = ∇φ·τ with the σ²/2 quadratic term, exactly as printed.
  tangent_as_printed,
};

/// Running log M over a drift-free path, one Euler step at a time:
///   log M += −g Δα/σ² − g² dt/(2σ²),  g = ∇φ(ξ_k)·τ(α_k)^⊥,
/// evaluated at the left point of each step.
class WeightAccumulator {
 public:
  WeightAccumulator(const Potential& pot, double sigma,
                    WeightForm form = WeightForm::perpendicular)
      : pot_(&pot), sigma_(sigma), form_(form) {}

  void push(const FullState& from, const FullState& to, double dt);
  double log_weight() const { return log_w_; }
  void reset() { log_w_ = 0.0; }

 private:
  const Potential* pot_;
  double sigma_;
  WeightForm form_;
  double log_w_ = 0.0;
};

/// log M_t for a stride-1 drift-free trajectory.
double girsanov_log_weight(const Trajectory<FullState>& traj, const Potential& pot,
                           WeightForm form = WeightForm::perpendicular);

struct WeightedPath {
  Trajectory<FullState> traj;
  double log_weight = 0.0;

  double weight() const { return std::exp(log_weight); }
};

/// Simulates the drift-free process from x0 and weights it for `pot`.
WeightedPath weighted_path(const FullState& x0, const Potential& pot,
                           const SdeConfig& cfg, RngStream stream,
                           WeightForm form = WeightForm::perpendicular);

struct WeightedSample {
  std::uint64_t stream_id = 0;
  double t = 0.0;
  double log_weight = 0.0;
  double f_value = 0.0;
};

struct ReweightedEstimate {
  double t = 0.0;
  // Mean and SE of f·M.
  stats::Estimate value;
  // Mean and SE of M alone.
  stats::Estimate mean_weight;
  // Kish effective sample size (Σw)²/Σw².
  double ess = 0.0;
  bool ess_low = false;
};

struct WeightedEnsemble {
  std::vector<WeightedSample> samples;
  std::vector<ReweightedEstimate> estimates;
};

/// n drift-free paths from x0, each weighted for `pot`, observed at every
/// time in `times` (each a positive multiple of dt, at most t_max).
WeightedEnsemble weighted_ensemble(const Observable& f, const Potential& pot,
                                   const FullState& x0, const SdeConfig& cfg,
                                   std::size_t n, std::span<const double> times,
                                   WeightForm form = WeightForm::perpendicular);

/// E_Q[f(X⁰_t) M_t] at t = t_max.
ReweightedEstimate reweighted_expectation(const Observable& f, const Potential& pot,
                                          const FullState& x0, const SdeConfig& cfg,
                                          std::size_t n,
                                          WeightForm form = WeightForm::perpendicular);

/// E_P[f(X_t)] at t = t_max by direct simulation of the drifted process. Uses
/// streams independent of the reweighted estimator.
stats::Estimate direct_expectation(const Observable& f, const Potential& pot,
                                   const FullState& x0, const SdeConfig& cfg,
                                   std::size_t n);

void write_weighted_csv(std::ostream& os, std::span<const WeightedSample> samples);

}  // namespace fiberlay
