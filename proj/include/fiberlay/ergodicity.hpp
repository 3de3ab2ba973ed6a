#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fiberlay/engine.hpp"
#include "fiberlay/girsanov.hpp"
#include "fiberlay/model.hpp"
#include "fiberlay/stats.hpp"

namespace fiberlay {

/// μ(dξ, dα) = e^{−φ(ξ)} dξ dα / N.
///
/// Radial potentials are tabulated along r; anything else falls back to
/// rejection sampling on a square window that holds all but a negligible
/// fraction of the mass.
class InvariantLaw {
 public:
  explicit InvariantLaw(Potential pot, int table_size = 20001);

  const Potential& potential() const { return pot_; }
  bool radial() const { return radial_; }

  /// N = 2π ∫ e^{−φ(ξ)} dξ.
  double norm() const { return norm_; }

  /// P_μ(|ξ| ≤ r); radial potentials only.
  double radial_cdf(double r) const;
  double radial_quantile(double u) const;

  /// Radius holding 99% of the mass.
  double r99() const { return r99_; }

  FullState sample(RngStream& stream) const;

 private:
  Potential pot_;
  bool radial_ = false;
  double norm_ = 0.0;
  double r99_ = 0.0;
  std::vector<double> r_grid_;
  std::vector<double> cdf_;
  // Rejection window [−half_width, half_width]² and envelope for e^{−(φ−φ_min)}.
  double half_width_ = 0.0;
  double phi_min_ = 0.0;
  double envelope_ = 1.0;
};

/// n i.i.d. draws; draw i uses stream (seed, i).
std::vector<FullState> sample_invariant(const InvariantLaw& law, std::size_t n,
                                        std::uint64_t seed);

/// Rectangular bins over |ξ_k| ≤ window and α ∈ [0, 2π), plus one bin for
/// everything with |ξ| > window.
struct BinGrid {
  double window = 1.0;
  int n_xi = 32;
  int n_alpha = 32;

  std::size_t size() const {
    return static_cast<std::size_t>(n_xi) * n_xi * n_alpha + 1;
  }
  std::size_t outside() const { return size() - 1; }
  std::size_t bin(const FullState& s) const;
  bool operator==(const BinGrid&) const = default;
};

struct EmpiricalLaw {
  BinGrid grid;
  std::vector<std::uint32_t> bin_of;
  std::vector<std::uint64_t> counts;
  std::size_t n_total = 0;

  std::uint64_t out_of_window() const { return counts.back(); }
};

EmpiricalLaw empirical_law(const BinGrid& grid, std::span<const FullState> states);

struct TvEstimate {
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  // Bootstrap standard deviation.
  double sd = 0.0;
};

/// ½ Σ |p̂₁ − p̂₂| over all bins including the out-of-window one, with a
/// percentile bootstrap interval.
TvEstimate tv_distance(const EmpiricalLaw& a, const EmpiricalLaw& b,
                       int n_boot = 200, std::uint64_t seed = 0);

/// Point estimate only.
double tv_point(const EmpiricalLaw& a, const EmpiricalLaw& b);

struct DecayFit {
  double rate = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::pair<double, double> ci_rate;
  std::size_t n_points = 0;
};

struct MixingOptions {
  std::vector<double> t_grid;
  std::size_t n = 100000;
  int n_xi = 10;
  int n_alpha = 10;
  int n_boot = 200;
  double ci_level = 0.95;
  // Points with t below this are reported but left out of the fit.
  double fit_from = 0.0;
};

struct TvPoint {
  double t = 0.0;
  TvEstimate tv;
  double floor = 0.0;
  bool fitted = false;
};

struct MixingResult {
  DecayFit fit;
  TvEstimate floor;
  std::vector<TvPoint> points;
  BinGrid grid;
};

/// Binned TV between the time-t ensemble from x0 and a μ sample, corrected by
/// a same-law noise floor, and a log-linear fit of the excess over the floor.
MixingResult mixing_rate(const Potential& pot, const FullState& x0, const SdeConfig& cfg,
                         const MixingOptions& opt);

/// Same as mixing_rate but the evolving ensemble also starts from μ; used to
/// exercise the floor-dominated path.
MixingResult mixing_rate_from_invariant(const Potential& pot, const SdeConfig& cfg,
                                        const MixingOptions& opt);

void write_tvdecay_csv(std::ostream& os, const MixingResult& res);

struct TimeAveragePoint {
  double t = 0.0;
  // √E_μ[(t⁻¹∫₀ᵗ f(X_s)ds − E_μ f)²] and its SE.
  double rms_error = 0.0;
  double se = 0.0;
};

struct TimeAverageResult {
  std::vector<TimeAveragePoint> points;
  // Power-law fit: rate is the exponent of t.
  DecayFit fit;
  double mean_f = 0.0;
};

/// Paths started from μ; mean_f is E_μ[f], supplied exactly by the caller.
TimeAverageResult time_average_decay(const Potential& pot, const Observable& f,
                                     double mean_f, const SdeConfig& cfg,
                                     std::span<const double> t_grid, std::size_t n);

/// A test function with the derivatives the generator needs.
struct TestFunction {
  std::string name;
  std::function<double(const FullState&)> f;
  std::function<Eigen::Vector2d(const FullState&)> grad_xi;
  std::function<double(const FullState&)> d_alpha;
  std::function<double(const FullState&)> d_alpha2;
};

std::vector<TestFunction> generator_catalog();

/// L_φ f = σ²/2 f_αα + τ(α)·∇_ξ f − (∇φ·τ^⊥) f_α.
double apply_generator(const TestFunction& fn, const Potential& pot, double sigma,
                       const FullState& s);

struct GeneratorReport {
  std::string name;
  stats::Estimate estimate;
};

std::vector<GeneratorReport> generator_orthogonality(
    const InvariantLaw& law, std::span<const TestFunction> catalog, double sigma,
    std::size_t n, std::uint64_t seed);

struct StationarityOptions {
  std::vector<double> checkpoints{1.0, 2.0, 5.0};
  std::size_t n = 100000;
  // Start from μ when empty, otherwise from this point.
  std::optional<FullState> x0;
  int alpha_bins = 64;
  // Only every k-th path enters the tests.
  std::size_t thinning = 1;
};

struct StationarityCheck {
  double t = 0.0;
  stats::KsResult ks_r;
  stats::ChiSquareResult chi2_alpha;
};

struct StationarityReport {
  std::vector<StationarityCheck> checks;
  std::size_t n_used = 0;
};

StationarityReport stationarity_test(const InvariantLaw& law, const SdeConfig& cfg,
                                     const StationarityOptions& opt);

}  // namespace fiberlay
