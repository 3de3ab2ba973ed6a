#include "fiberlay/stats.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

#include "fiberlay/error.hpp"
#include "fiberlay/model.hpp"

namespace fiberlay::stats {

Estimate mean_se(std::span<const double> x) {
  Estimate e;
  e.n = x.size();
  if (x.empty()) return e;
  e.mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(e.n);
  if (e.n < 2) return e;
  double ss = 0.0;
  for (double v : x) ss += (v - e.mean) * (v - e.mean);
  e.se = std::sqrt(ss / static_cast<double>(e.n - 1) / static_cast<double>(e.n));
  return e;
}

Estimate ratio_of_means(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorCode::precondition,
          "ratio_of_means needs paired samples");
  const Estimate ex = mean_se(x);
  const Estimate ey = mean_se(y);
  require(ey.mean != 0.0, ErrorCode::precondition, "denominator mean is zero");
  const double q = ex.mean / ey.mean;
  const double n = static_cast<double>(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - q * y[i];
    s += d * d;
  }
  Estimate out;
  out.mean = q;
  out.se = std::sqrt(s / (n - 1.0) / n) / std::abs(ey.mean);
  out.n = x.size();
  return out;
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<>(0.0, 1.0), p);
}

double student_t_quantile(double p, double dof) {
  return boost::math::quantile(boost::math::students_t_distribution<>(dof), p);
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Small-λ form: P(K ≤ λ) = √(2π)/λ Σ exp(−(2j−1)²π²/(8λ²)).
    const double w = -kPi * kPi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int j = 1; j <= 6; ++j) {
      const double k = 2.0 * j - 1.0;
      s += std::exp(k * k * w);
    }
    return std::clamp(1.0 - std::sqrt(kTwoPi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    s += sign * term;
    if (term < 1e-17) break;
    sign = -sign;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

namespace {

double ks_p_value(double d, double effective_n) {
  const double sn = std::sqrt(effective_n);
  return kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
}

}  // namespace

KsResult ks_one_sample(std::vector<double> sample,
                       const std::function<double(double)>& cdf) {
  require(!sample.empty(), ErrorCode::empty_ensemble, "KS test on empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, ks_p_value(d, n), sample.size()};
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  require(!a.empty() && !b.empty(), ErrorCode::empty_ensemble,
          "KS test on empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return {d, ks_p_value(d, na * nb / (na + nb)), a.size() + b.size()};
}

ChiSquareResult chi_square_uniform(std::span<const std::uint64_t> counts) {
  require(counts.size() >= 2, ErrorCode::precondition, "need at least two bins");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  require(total > 0.0, ErrorCode::empty_ensemble, "chi-square on empty histogram");
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  ChiSquareResult r;
  r.statistic = stat;
  r.dof = static_cast<int>(counts.size()) - 1;
  r.p_value = boost::math::cdf(
      boost::math::complement(boost::math::chi_squared_distribution<>(r.dof), stat));
  return r;
}

std::vector<std::uint64_t> angle_histogram(std::span<const double> angles,
                                           int n_bins) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_bins), 0);
  for (double a : angles) {
    auto k = static_cast<int>(reduce_angle(a) / kTwoPi * n_bins);
    counts[static_cast<std::size_t>(std::clamp(k, 0, n_bins - 1))]++;
  }
  return counts;
}

std::pair<double, double> LinearFit::slope_ci(double level) const {
  const double t = student_t_quantile(0.5 + 0.5 * level, static_cast<double>(n) - 2.0);
  return {slope - t * slope_se, slope + t * slope_se};
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::precondition, "x and y lengths differ");
  require(x.size() >= 3, ErrorCode::fit_underdetermined,
          "a line fit with error bars needs at least three points");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = x[static_cast<std::size_t>(i)];
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const double x_spread = design.col(1).maxCoeff() - design.col(1).minCoeff();
  require(x_spread > 0.0, ErrorCode::degenerate_fit, "abscissae are all equal");

  const Eigen::Vector2d beta = design.colPivHouseholderQr().solve(rhs);
  const Eigen::VectorXd resid = rhs - design * beta;
  const double ss_res = resid.squaredNorm();
  const double ss_tot = (rhs.array() - rhs.mean()).square().sum();
  const double xbar = design.col(1).mean();
  const double sxx = (design.col(1).array() - xbar).square().sum();

  LinearFit fit;
  fit.intercept = beta(0);
  fit.slope = beta(1);
  fit.n = x.size();
  fit.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
  fit.slope_se = std::sqrt(ss_res / static_cast<double>(n - 2) / sxx);
  return fit;
}

std::vector<SurvivalPoint> kaplan_meier(std::span<const double> times,
                                        std::span<const bool> events) {
  require(times.size() == events.size(), ErrorCode::precondition,
          "times and event flags differ in length");
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return times[a] < times[b];
  });
  std::vector<SurvivalPoint> curve{{0.0, 1.0, times.size()}};
  double s = 1.0;
  std::size_t at_risk = times.size();
  for (std::size_t k = 0; k < idx.size();) {
    const double t = times[idx[k]];
    std::size_t deaths = 0, censored = 0;
    while (k < idx.size() && times[idx[k]] == t) {
      (events[idx[k]] ? deaths : censored)++;
      ++k;
    }
    if (deaths > 0) {
      s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      if (t == 0.0) {
        curve.front().survival = s;
      } else {
        curve.push_back({t, s, at_risk});
      }
    }
    at_risk -= deaths + censored;
  }
  return curve;
}

double autocorrelation(std::span<const double> x, std::size_t lag) {
  require(x.size() > lag + 1, ErrorCode::precondition,
          "series too short for the requested lag");
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    den += (x[i] - m) * (x[i] - m);
    if (i + lag < x.size()) num += (x[i] - m) * (x[i + lag] - m);
  }
  return den > 0.0 ? num / den : 0.0;
}

double quantile(std::vector<double> x, double p) {
  require(!x.empty(), ErrorCode::empty_ensemble, "quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = p * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace fiberlay::stats
