#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fiberlay::stats {

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

Estimate mean_se(std::span<const double> x);

/// Ratio of two sample means with a delta-method standard error; x and y are
/// paired observations.
Estimate ratio_of_means(std::span<const double> x, std::span<const double> y);

double normal_quantile(double p);
double student_t_quantile(double p, double dof);

/// Q(λ) = P(K > λ) for the Kolmogorov distribution.
double kolmogorov_survival(double lambda);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample test against a continuous CDF; p-value from the asymptotic
/// distribution with Stephens' finite-n correction.
KsResult ks_one_sample(std::vector<double> sample,
                       const std::function<double(double)>& cdf);
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

ChiSquareResult chi_square_uniform(std::span<const std::uint64_t> counts);

/// Bins angles in [0, 2π) into n_bins equal cells.
std::vector<std::uint64_t> angle_histogram(std::span<const double> angles,
                                           int n_bins);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_se = 0.0;
  std::size_t n = 0;

  /// Two-sided confidence interval for the slope at the given level.
  std::pair<double, double> slope_ci(double level = 0.95) const;
};

/// Ordinary least squares y = intercept + slope·x. Needs n ≥ 3 and
/// non-constant x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct SurvivalPoint {
  double t = 0.0;
  double survival = 1.0;
  std::size_t at_risk = 0;
};

/// Kaplan–Meier estimate; one point per distinct event time, starting with
/// (0, 1, n). Censored observations leave the risk set after events tied at
/// the same time.
std::vector<SurvivalPoint> kaplan_meier(std::span<const double> times,
                                        std::span<const bool> events);

/// Lag-k sample autocorrelation.
double autocorrelation(std::span<const double> x, std::size_t lag);

/// Linear-interpolation quantile of an unsorted sample.
double quantile(std::vector<double> x, double p);

}  // namespace fiberlay::stats
