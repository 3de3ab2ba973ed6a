#include "fiberlay/ergodicity.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "fiberlay/parallel.hpp"

namespace fiberlay {

namespace {

constexpr double kTailLogDrop = 40.0;
constexpr double kMaxExtent = 1e6;

constexpr std::uint64_t kReferenceTag = 0x7265660a;
constexpr std::uint64_t kCalibrationTag = 0x63616c0a;
constexpr std::uint64_t kStartTag = 0x7374610a;
constexpr std::uint64_t kBootTag = 0x626f6f0a;

std::vector<std::size_t> steps_for(std::span<const double> times, const SdeConfig& cfg) {
  std::vector<std::size_t> steps;
  for (double t : times) {
    const auto k = static_cast<std::size_t>(std::llround(t / cfg.dt));
    require(k >= 1 && std::abs(static_cast<double>(k) * cfg.dt - t) < 1e-9 * (1.0 + t),
            ErrorCode::precondition, fmt::format("time {} is not a positive multiple of dt", t));
    require(steps.empty() || k > steps.back(), ErrorCode::precondition,
            "time grid must be strictly increasing");
    steps.push_back(k);
  }
  return steps;
}

// log(r e^{−φ(r)}); −∞ at r = 0.
double log_radial_integrand(const Potential& pot, double r) {
  return r > 0.0 ? std::log(r) - pot.radial_phi(r) : -INFINITY;
}

}  // namespace

InvariantLaw::InvariantLaw(Potential pot, int table_size) : pot_(std::move(pot)) {
  require(table_size >= 101, ErrorCode::precondition, "table too small");
  radial_ = pot_.radial_everywhere();
  if (radial_) {
    // Double the extent until the integrand has dropped far below its peak
    // and is falling.
    double peak = -INFINITY;
    double r_max = 0.5;
    for (;;) {
      r_max *= 2.0;
      require(r_max <= kMaxExtent, ErrorCode::not_normalizable,
              "e^{-phi} is not integrable for '" + pot_.name + "'");
      for (int i = 1; i <= 64; ++i)
        peak = std::max(peak, log_radial_integrand(pot_, r_max * i / 64.0));
      const double tail = log_radial_integrand(pot_, r_max);
      const double before = log_radial_integrand(pot_, 0.99 * r_max);
      if (std::isfinite(tail) && tail < peak - kTailLogDrop && tail < before) break;
    }
    const auto m = static_cast<std::size_t>(table_size);
    r_grid_.resize(m);
    std::vector<double> logh(m);
    for (std::size_t i = 0; i < m; ++i) {
      r_grid_[i] = r_max * static_cast<double>(i) / static_cast<double>(m - 1);
      logh[i] = log_radial_integrand(pot_, r_grid_[i]);
    }
    const double top = *std::max_element(logh.begin(), logh.end());
    cdf_.assign(m, 0.0);
    for (std::size_t i = 1; i < m; ++i) {
      const double h = r_grid_[i] - r_grid_[i - 1];
      cdf_[i] = cdf_[i - 1] + 0.5 * h * (std::exp(logh[i - 1] - top) + std::exp(logh[i] - top));
    }
    const double z = cdf_.back();
    require(z > 0.0 && std::isfinite(z), ErrorCode::not_normalizable,
            "radial mass is not finite");
    for (double& c : cdf_) c /= z;
    norm_ = kTwoPi * kTwoPi * z * std::exp(top);
    r99_ = radial_quantile(0.99);
    return;
  }

  // Square window: grow until φ on its boundary is far above the inside minimum.
  const int g = 400;
  auto boundary_min = [&](double w) {
    double lo = INFINITY;
    for (int i = 0; i <= g; ++i) {
      const double u = -w + 2.0 * w * i / g;
      for (const Eigen::Vector2d& x : {Eigen::Vector2d(u, -w), Eigen::Vector2d(u, w),
                                       Eigen::Vector2d(-w, u), Eigen::Vector2d(w, u)})
        lo = std::min(lo, pot_.phi(x));
    }
    return lo;
  };
  auto interior_min = [&](double w) {
    double lo = INFINITY;
    for (int i = 0; i <= g; ++i)
      for (int j = 0; j <= g; ++j)
        lo = std::min(lo, pot_.phi({-w + 2.0 * w * i / g, -w + 2.0 * w * j / g}));
    return lo;
  };
  double w = 1.0;
  for (;;) {
    require(w <= 1e4, ErrorCode::not_normalizable,
            "e^{-phi} is not integrable for '" + pot_.name + "'");
    const double inner = interior_min(w);
    if (boundary_min(w) - inner > kTailLogDrop + 2.0 * std::log(w + 1.0)) {
      phi_min_ = inner;
      break;
    }
    w *= 2.0;
  }
  half_width_ = w;
  // Trapezoid mass on a fine grid plus a radial mass profile for r99.
  const int m = 801;
  const double h = 2.0 * w / (m - 1);
  double mass = 0.0, top = 0.0;
  std::vector<std::pair<double, double>> by_radius;
  by_radius.reserve(static_cast<std::size_t>(m) * m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const Eigen::Vector2d x(-w + h * i, -w + h * j);
      const double v = std::exp(-(pot_.phi(x) - phi_min_));
      const double wt = (i == 0 || i == m - 1 ? 0.5 : 1.0) * (j == 0 || j == m - 1 ? 0.5 : 1.0);
      mass += wt * v;
      top = std::max(top, v);
      by_radius.emplace_back(x.norm(), wt * v);
    }
  }
  envelope_ = 1.5 * top;
  norm_ = kTwoPi * mass * h * h * std::exp(-phi_min_);
  std::sort(by_radius.begin(), by_radius.end());
  double acc = 0.0;
  for (const auto& [r, v] : by_radius) {
    acc += v;
    if (acc >= 0.99 * mass) {
      r99_ = r;
      break;
    }
  }
}

double InvariantLaw::radial_cdf(double r) const {
  require(radial_, ErrorCode::precondition, "radial CDF needs a radial potential");
  if (r <= 0.0) return 0.0;
  if (r >= r_grid_.back()) return 1.0;
  const double pos = r / r_grid_.back() * static_cast<double>(r_grid_.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return cdf_[i] + f * (cdf_[i + 1] - cdf_[i]);
}

double InvariantLaw::radial_quantile(double u) const {
  require(radial_, ErrorCode::precondition, "radial quantile needs a radial potential");
  const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.begin()) return 0.0;
  if (it == cdf_.end()) return r_grid_.back();
  const auto i = static_cast<std::size_t>(it - cdf_.begin());
  const double span = cdf_[i] - cdf_[i - 1];
  const double f = span > 0.0 ? (u - cdf_[i - 1]) / span : 0.0;
  return r_grid_[i - 1] + f * (r_grid_[i] - r_grid_[i - 1]);
}

FullState InvariantLaw::sample(RngStream& stream) const {
  if (radial_) {
    const double r = radial_quantile(stream.uniform());
    const double psi = kTwoPi * stream.uniform();
    return FullState(r * std::cos(psi), r * std::sin(psi), kTwoPi * stream.uniform());
  }
  for (;;) {
    const Eigen::Vector2d x(half_width_ * (2.0 * stream.uniform() - 1.0),
                            half_width_ * (2.0 * stream.uniform() - 1.0));
    if (stream.uniform() * envelope_ < std::exp(-(pot_.phi(x) - phi_min_)))
      return FullState(x, kTwoPi * stream.uniform());
  }
}

std::vector<FullState> sample_invariant(const InvariantLaw& law, std::size_t n,
                                        std::uint64_t seed) {
  std::vector<FullState> out(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(seed, i);
    out[i] = law.sample(stream);
  });
  return out;
}

std::size_t BinGrid::bin(const FullState& s) const {
  if (s.xi.norm() > window) return outside();
  auto cell = [](double v, double lo, double hi, int n) {
    const int k = static_cast<int>((v - lo) / (hi - lo) * n);
    return static_cast<std::size_t>(std::clamp(k, 0, n - 1));
  };
  const std::size_t i = cell(s.xi.x(), -window, window, n_xi);
  const std::size_t j = cell(s.xi.y(), -window, window, n_xi);
  const std::size_t k = cell(s.alpha, 0.0, kTwoPi, n_alpha);
  return (i * static_cast<std::size_t>(n_xi) + j) * static_cast<std::size_t>(n_alpha) + k;
}

EmpiricalLaw empirical_law(const BinGrid& grid, std::span<const FullState> states) {
  require(grid.window > 0.0 && grid.n_xi >= 1 && grid.n_alpha >= 1,
          ErrorCode::precondition, "invalid bin grid");
  EmpiricalLaw e;
  e.grid = grid;
  e.n_total = states.size();
  e.counts.assign(grid.size(), 0);
  e.bin_of.resize(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::size_t b = grid.bin(states[i]);
    e.bin_of[i] = static_cast<std::uint32_t>(b);
    ++e.counts[b];
  }
  return e;
}

namespace {

double tv_counts(std::span<const std::uint64_t> a, double na,
                 std::span<const std::uint64_t> b, double nb) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    s += std::abs(static_cast<double>(a[k]) / na - static_cast<double>(b[k]) / nb);
  return 0.5 * s;
}

void check_compatible(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  require(a.grid == b.grid && a.counts.size() == b.counts.size(), ErrorCode::bin_mismatch,
          "empirical laws use different bin grids");
  require(a.n_total > 0 && b.n_total > 0, ErrorCode::empty_ensemble,
          "TV distance of an empty ensemble");
}

}  // namespace

double tv_point(const EmpiricalLaw& a, const EmpiricalLaw& b) {
  check_compatible(a, b);
  return tv_counts(a.counts, static_cast<double>(a.n_total), b.counts,
                   static_cast<double>(b.n_total));
}

TvEstimate tv_distance(const EmpiricalLaw& a, const EmpiricalLaw& b, int n_boot,
                       std::uint64_t seed) {
  TvEstimate out;
  out.value = tv_point(a, b);
  out.ci_lo = out.ci_hi = out.value;
  if (n_boot < 2) return out;
  const auto reps = static_cast<std::size_t>(n_boot);
  std::vector<double> boot(reps);
  const double na = static_cast<double>(a.n_total);
  const double nb = static_cast<double>(b.n_total);
  parallel_for(reps, [&](std::size_t r) {
    RngStream stream(derive_seed(seed, kBootTag), r);
    std::vector<std::uint64_t> ca(a.counts.size(), 0), cb(b.counts.size(), 0);
    for (std::size_t i = 0; i < a.n_total; ++i)
      ++ca[a.bin_of[static_cast<std::size_t>(stream.uniform() * na)]];
    for (std::size_t i = 0; i < b.n_total; ++i)
      ++cb[b.bin_of[static_cast<std::size_t>(stream.uniform() * nb)]];
    boot[r] = tv_counts(ca, na, cb, nb);
  });
  out.sd = stats::mean_se(boot).se * std::sqrt(static_cast<double>(reps));
  out.ci_lo = stats::quantile(boot, 0.025);
  out.ci_hi = stats::quantile(boot, 0.975);
  return out;
}

namespace {

MixingResult mixing_impl(const Potential& pot, const SdeConfig& cfg,
                         const MixingOptions& opt,
                         const std::function<FullState(std::size_t)>& start) {
  cfg.validate();
  require(opt.t_grid.size() >= 3, ErrorCode::fit_underdetermined,
          "a decay fit needs at least three time points");
  require(opt.n >= 2, ErrorCode::empty_ensemble, "ensemble too small");
  const std::vector<std::size_t> steps = steps_for(opt.t_grid, cfg);
  const InvariantLaw law(pot);

  MixingResult res;
  res.grid = BinGrid{law.r99(), opt.n_xi, opt.n_alpha};

  const auto reference = sample_invariant(law, opt.n, derive_seed(cfg.seed, kReferenceTag));
  const auto calibration = sample_invariant(law, opt.n, derive_seed(cfg.seed, kCalibrationTag));
  const EmpiricalLaw ref = empirical_law(res.grid, reference);
  res.floor = tv_distance(ref, empirical_law(res.grid, calibration), opt.n_boot,
                          derive_seed(cfg.seed, 1));

  // Bins of every path at every checkpoint; states themselves are not kept.
  const std::size_t m = steps.size();
  std::vector<std::uint32_t> bins(opt.n * m);
  parallel_for(opt.n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    const auto states = propagate_full(start(i), pot, cfg, stream, steps);
    for (std::size_t j = 0; j < m; ++j)
      bins[i * m + j] = static_cast<std::uint32_t>(res.grid.bin(states[j]));
  });

  bool any_above = false;
  for (std::size_t j = 0; j < m; ++j) {
    EmpiricalLaw e;
    e.grid = res.grid;
    e.n_total = opt.n;
    e.counts.assign(res.grid.size(), 0);
    e.bin_of.resize(opt.n);
    for (std::size_t i = 0; i < opt.n; ++i) {
      e.bin_of[i] = bins[i * m + j];
      ++e.counts[e.bin_of[i]];
    }
    TvPoint p;
    p.t = opt.t_grid[j];
    p.tv = tv_distance(e, ref, opt.n_boot, derive_seed(cfg.seed, 2 + j));
    p.floor = res.floor.value;
    const bool above = p.tv.value > res.floor.value + 2.0 * res.floor.sd;
    any_above = any_above || above;
    p.fitted = above && p.t >= opt.fit_from;
    res.points.push_back(p);
  }
  require(any_above, ErrorCode::floor_dominates,
          "every TV estimate lies within two floor standard deviations of the floor");

  std::vector<double> xs, ys;
  for (const auto& p : res.points) {
    if (!p.fitted) continue;
    xs.push_back(p.t);
    ys.push_back(std::log(p.tv.value - res.floor.value));
  }
  require(xs.size() >= 3, ErrorCode::fit_underdetermined,
          "fewer than three fitted TV estimates rise above the noise floor");
  const auto fit = stats::linear_fit(xs, ys);
  res.fit.rate = -fit.slope;
  res.fit.intercept = fit.intercept;
  res.fit.r_squared = fit.r_squared;
  const auto ci = fit.slope_ci(opt.ci_level);
  res.fit.ci_rate = {-ci.second, -ci.first};
  res.fit.n_points = xs.size();
  return res;
}

}  // namespace

MixingResult mixing_rate(const Potential& pot, const FullState& x0, const SdeConfig& cfg,
                         const MixingOptions& opt) {
  return mixing_impl(pot, cfg, opt, [&](std::size_t) { return x0; });
}

MixingResult mixing_rate_from_invariant(const Potential& pot, const SdeConfig& cfg,
                                        const MixingOptions& opt) {
  const InvariantLaw law(pot);
  const std::uint64_t seed = derive_seed(cfg.seed, kStartTag);
  return mixing_impl(pot, cfg, opt, [&](std::size_t i) {
    RngStream stream(seed, i);
    return law.sample(stream);
  });
}

void write_tvdecay_csv(std::ostream& os, const MixingResult& res) {
  os << "t,tv,tv_ci_lo,tv_ci_hi,floor\n";
  for (const auto& p : res.points)
    os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", p.t, p.tv.value,
                      p.tv.ci_lo, p.tv.ci_hi, p.floor);
}

TimeAverageResult time_average_decay(const Potential& pot, const Observable& f,
                                     double mean_f, const SdeConfig& cfg,
                                     std::span<const double> t_grid, std::size_t n) {
  cfg.validate();
  require(t_grid.size() >= 3, ErrorCode::fit_underdetermined,
          "a power-law fit needs at least three time points");
  require(n >= 2, ErrorCode::empty_ensemble, "ensemble too small");
  const std::vector<std::size_t> steps = steps_for(t_grid, cfg);
  const InvariantLaw law(pot);
  const std::uint64_t start_seed = derive_seed(cfg.seed, kStartTag);
  const std::size_t m = steps.size();

  std::vector<double> sq(n * m);
  parallel_for(n, [&](std::size_t i) {
    RngStream init(start_seed, i);
    FullState s = law.sample(init);
    RngStream stream(cfg.seed, i);
    double fv = f(s);
    double integral = 0.0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < m; ++j) {
      for (; k < steps[j]; ++k) {
        s = step_full(s, pot, cfg, stream.gaussian());
        const double fn = f(s);
        integral += 0.5 * (fv + fn) * cfg.dt;
        fv = fn;
      }
      const double err = integral / (static_cast<double>(steps[j]) * cfg.dt) - mean_f;
      sq[i * m + j] = err * err;
    }
  });

  TimeAverageResult res;
  res.mean_f = mean_f;
  std::vector<double> col(n), xs, ys;
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = sq[i * m + j];
    const auto e = stats::mean_se(col);
    TimeAveragePoint p;
    p.t = t_grid[j];
    p.rms_error = std::sqrt(e.mean);
    if (p.rms_error <= 1e-12 * (1.0 + std::abs(mean_f))) p.rms_error = 0.0;
    p.se = p.rms_error > 0.0 ? e.se / (2.0 * p.rms_error) : 0.0;
    res.points.push_back(p);
    if (p.rms_error > 0.0) {
      xs.push_back(std::log(p.t));
      ys.push_back(std::log(p.rms_error));
    }
  }
  if (xs.size() >= 3) {
    const auto fit = stats::linear_fit(xs, ys);
    res.fit.rate = fit.slope;
    res.fit.intercept = fit.intercept;
    res.fit.r_squared = fit.r_squared;
    res.fit.ci_rate = fit.slope_ci();
    res.fit.n_points = xs.size();
  }
  return res;
}

std::vector<TestFunction> generator_catalog() {
  std::vector<TestFunction> c;
  c.push_back({"one", [](const FullState&) { return 1.0; },
               [](const FullState&) -> Eigen::Vector2d { return Eigen::Vector2d::Zero(); },
               [](const FullState&) { return 0.0; }, [](const FullState&) { return 0.0; }});
  c.push_back({"cos_alpha", [](const FullState& s) { return std::cos(s.alpha); },
               [](const FullState&) -> Eigen::Vector2d { return Eigen::Vector2d::Zero(); },
               [](const FullState& s) { return -std::sin(s.alpha); },
               [](const FullState& s) { return -std::cos(s.alpha); }});
  c.push_back({"sin_alpha", [](const FullState& s) { return std::sin(s.alpha); },
               [](const FullState&) -> Eigen::Vector2d { return Eigen::Vector2d::Zero(); },
               [](const FullState& s) { return std::cos(s.alpha); },
               [](const FullState& s) { return -std::sin(s.alpha); }});
  c.push_back({"sin_alpha_gauss",
               [](const FullState& s) { return std::sin(s.alpha) * std::exp(-s.xi.squaredNorm()); },
               [](const FullState& s) -> Eigen::Vector2d {
                 return -2.0 * std::sin(s.alpha) * std::exp(-s.xi.squaredNorm()) * s.xi;
               },
               [](const FullState& s) { return std::cos(s.alpha) * std::exp(-s.xi.squaredNorm()); },
               [](const FullState& s) {
                 return -std::sin(s.alpha) * std::exp(-s.xi.squaredNorm());
               }});
  c.push_back({"xi1_cos_alpha_gauss",
               [](const FullState& s) {
                 return s.xi.x() * std::cos(s.alpha) * std::exp(-s.xi.squaredNorm());
               },
               [](const FullState& s) -> Eigen::Vector2d {
                 const double e = std::cos(s.alpha) * std::exp(-s.xi.squaredNorm());
                 const double x = s.xi.x(), y = s.xi.y();
                 return {e * (1.0 - 2.0 * x * x), -2.0 * e * x * y};
               },
               [](const FullState& s) {
                 return -s.xi.x() * std::sin(s.alpha) * std::exp(-s.xi.squaredNorm());
               },
               [](const FullState& s) {
                 return -s.xi.x() * std::cos(s.alpha) * std::exp(-s.xi.squaredNorm());
               }});
  return c;
}

double apply_generator(const TestFunction& fn, const Potential& pot, double sigma,
                       const FullState& s) {
  const double turn = pot.grad_phi(s.xi).dot(tangent_perp(s.alpha));
  return 0.5 * sigma * sigma * fn.d_alpha2(s) + tangent(s.alpha).dot(fn.grad_xi(s)) -
         turn * fn.d_alpha(s);
}

std::vector<GeneratorReport> generator_orthogonality(
    const InvariantLaw& law, std::span<const TestFunction> catalog, double sigma,
    std::size_t n, std::uint64_t seed) {
  require(n >= 2, ErrorCode::empty_ensemble, "need at least two samples");
  const auto samples = sample_invariant(law, n, seed);
  std::vector<GeneratorReport> out;
  std::vector<double> v(n);
  for (const auto& fn : catalog) {
    parallel_for(n, [&](std::size_t i) {
      v[i] = apply_generator(fn, law.potential(), sigma, samples[i]);
    });
    out.push_back({fn.name, stats::mean_se(v)});
  }
  return out;
}

StationarityReport stationarity_test(const InvariantLaw& law, const SdeConfig& cfg,
                                     const StationarityOptions& opt) {
  cfg.validate();
  require(opt.n > 0, ErrorCode::empty_ensemble, "stationarity test with no paths");
  require(opt.thinning >= 1, ErrorCode::precondition, "thinning must be at least 1");
  require(law.radial(), ErrorCode::precondition,
          "the radial KS test needs a radial potential");
  const std::vector<std::size_t> steps = steps_for(opt.checkpoints, cfg);
  const std::size_t m = steps.size();
  const std::size_t used = (opt.n + opt.thinning - 1) / opt.thinning;
  const std::uint64_t start_seed = derive_seed(cfg.seed, kStartTag);

  std::vector<double> r(used * m), a(used * m);
  parallel_for(used, [&](std::size_t u) {
    const std::size_t i = u * opt.thinning;
    FullState x0;
    if (opt.x0) {
      x0 = *opt.x0;
    } else {
      RngStream init(start_seed, i);
      x0 = law.sample(init);
    }
    RngStream stream(cfg.seed, i);
    const auto states = propagate_full(x0, law.potential(), cfg, stream, steps);
    for (std::size_t j = 0; j < m; ++j) {
      r[j * used + u] = states[j].xi.norm();
      a[j * used + u] = states[j].alpha;
    }
  });

  StationarityReport rep;
  rep.n_used = used;
  for (std::size_t j = 0; j < m; ++j) {
    StationarityCheck c;
    c.t = opt.checkpoints[j];
    c.ks_r = stats::ks_one_sample(
        std::vector<double>(r.begin() + static_cast<std::ptrdiff_t>(j * used),
                            r.begin() + static_cast<std::ptrdiff_t>((j + 1) * used)),
        [&](double x) { return law.radial_cdf(x); });
    const auto hist = stats::angle_histogram(
        std::span<const double>(a.data() + j * used, used), opt.alpha_bins);
    c.chi2_alpha = stats::chi_square_uniform(hist);
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace fiberlay
