#include "fiberlay/passage.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>

#include "fiberlay/parallel.hpp"

namespace fiberlay {

namespace {

constexpr std::uint64_t kBootTag = 0x7461696c;
constexpr std::uint64_t kInnerTag = 0x696e6e72;
constexpr std::uint64_t kOuterTag = 0x6f757472;
constexpr std::uint64_t kPilotTag = 0x70696c74;

double sin_drift_step(double x, double c, const SdeConfig& cfg, double z) {
  return x + c * std::sin(x) * cfg.dt + cfg.sigma * std::sqrt(cfg.dt) * z;
}

// Runs dX = c sin X dt + σ dB from x0 until it leaves (a, b) or t_max.
// on_step(x_old, x_new) sees every step, including the exiting one.
template <class OnStep>
std::pair<double, bool> run_to_exit(double c, double a, double b, double x0,
                                    const SdeConfig& cfg, RngStream& stream,
                                    OnStep&& on_step) {
  if (x0 <= a || x0 >= b) return {0.0, true};
  const bool bridge = cfg.scheme == Scheme::euler_bridge;
  const std::size_t n = cfg.n_steps();
  double x = x0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x1 = sin_drift_step(x, c, cfg, stream.gaussian());
    on_step(x, x1);
    const double t1 = static_cast<double>(k + 1) * cfg.dt;
    if (x1 <= a || x1 >= b) return {t1, true};
    if (bridge) {
      const double pa = bridge_crossing_probability(x, x1, a, cfg.sigma, cfg.dt);
      const double pb = bridge_crossing_probability(x, x1, b, cfg.sigma, cfg.dt);
      if (stream.uniform() < 1.0 - (1.0 - pa) * (1.0 - pb)) return {t1, true};
    }
    x = x1;
  }
  return {static_cast<double>(n) * cfg.dt, false};
}

double lambda_from_curve(const std::vector<stats::SurvivalPoint>& curve, double knee,
                         std::size_t min_at_risk, stats::LinearFit* fit_out,
                         std::size_t* n_points) {
  std::vector<double> xs, ys;
  for (const auto& p : curve) {
    if (p.t < knee || p.at_risk < min_at_risk || p.survival <= 0.0) continue;
    xs.push_back(p.t);
    ys.push_back(std::log(p.survival));
  }
  require(xs.size() >= 3, ErrorCode::fit_underdetermined,
          "fewer than three survival points beyond the knee");
  const auto fit = stats::linear_fit(xs, ys);
  if (fit_out) *fit_out = fit;
  if (n_points) *n_points = xs.size();
  return -fit.slope;
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t TauSample::n_events() const {
  return static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true));
}

double TauSample::censor_fraction() const {
  return hit.empty() ? 0.0
                     : 1.0 - static_cast<double>(n_events()) / static_cast<double>(hit.size());
}

TauSample tau_r_sample(const Potential& pot, const PolarState& p0, double R, SdeConfig cfg,
                       std::size_t n, double t_max) {
  require(pot.eventually_radial(), ErrorCode::not_eventually_radial,
          "tau_R needs a radial profile");
  require(R > 0.0 && p0.r > 0.0, ErrorCode::precondition, "need R > 0 and r0 > 0");
  const double r_hi = std::max({10.0 * R, 10.0 * p0.r, R + 10.0});
  const auto check = check_assumption_a(pot, R, r_hi, 4000);
  require(check.has_value(), ErrorCode::assumption_a_violated,
          fmt::format("b(r) - 1/r is not bounded below by a positive constant on [{}, {}]",
                      R, r_hi));
  TauSample out;
  out.c_hat = check->c;
  out.t_max = t_max > 0.0 ? t_max : 50.0 / out.c_hat;
  cfg.t_max = out.t_max;
  cfg.validate();
  out.times.resize(n);
  out.r_end.resize(n);
  std::vector<char> hit(n);
  const RadialProfile& b = pot.radial_profile;
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    const auto res = first_hit(
        p0, [&](const PolarState& p, double z) { return step_polar(p, b, cfg, z); },
        [](const PolarState& p) { return p.r; },
        LevelCrossing{R, CrossDirection::below, false}, cfg, stream);
    out.times[i] = res.hit ? res.t_hit : res.censored_at;
    out.r_end[i] = res.state_at_hit.r;
    hit[i] = res.hit;
  });
  out.hit.assign(hit.begin(), hit.end());
  return out;
}

TailFit fit_exponential_tail(std::span<const double> times, std::span<const bool> events,
                             const TailFitOptions& opt) {
  require(times.size() == events.size(), ErrorCode::precondition,
          "times and event flags differ in length");
  std::vector<double> event_times;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (events[i]) event_times.push_back(times[i]);
  require(event_times.size() >= opt.min_events, ErrorCode::too_few_events,
          fmt::format("{} events, need at least {}", event_times.size(), opt.min_events));
  const auto [lo, hi] = std::minmax_element(event_times.begin(), event_times.end());
  require(*hi > *lo, ErrorCode::degenerate_fit, "all event times are equal");

  TailFit out;
  out.n_events = event_times.size();
  out.censor_fraction =
      1.0 - static_cast<double>(out.n_events) / static_cast<double>(times.size());
  out.knee = stats::quantile(event_times, opt.knee_quantile);
  out.curve = stats::kaplan_meier(times, events);
  stats::LinearFit fit;
  out.lambda_hat = lambda_from_curve(out.curve, out.knee, opt.min_at_risk, &fit, &out.n_points);
  out.r_squared = fit.r_squared;
  out.ci = {out.lambda_hat, out.lambda_hat};

  if (opt.n_boot >= 2) {
    const auto reps = static_cast<std::size_t>(opt.n_boot);
    std::vector<double> boot(reps, NAN);
    const std::size_t n = times.size();
    parallel_for(reps, [&](std::size_t r) {
      RngStream stream(derive_seed(opt.seed, kBootTag), r);
      std::vector<double> t(n), ev_times;
      std::unique_ptr<bool[]> e(new bool[n]);
      for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(stream.uniform() * static_cast<double>(n));
        t[i] = times[j];
        e[i] = events[j];
        if (e[i]) ev_times.push_back(t[i]);
      }
      if (ev_times.size() < 3) return;
      try {
        const auto curve = stats::kaplan_meier(t, std::span<const bool>(e.get(), n));
        boot[r] = lambda_from_curve(curve, stats::quantile(ev_times, opt.knee_quantile),
                                    opt.min_at_risk, nullptr, nullptr);
      } catch (const Error&) {
      }
    });
    std::erase_if(boot, [](double v) { return std::isnan(v); });
    if (boot.size() >= 2) {
      out.ci = {std::min(out.lambda_hat, stats::quantile(boot, 0.025)),
                std::max(out.lambda_hat, stats::quantile(boot, 0.975))};
    }
  }
  return out;
}

TailFit fit_exponential_tail(std::span<const double> times, const TailFitOptions& opt) {
  std::unique_ptr<bool[]> events(new bool[times.size()]);
  std::fill_n(events.get(), times.size(), true);
  return fit_exponential_tail(times, std::span<const bool>(events.get(), times.size()), opt);
}

void write_tails_csv(std::ostream& os, std::span<const stats::SurvivalPoint> curve) {
  os << "t,survival,at_risk\n";
  for (const auto& p : curve)
    os << fmt::format("{:.17g},{:.17g},{}\n", p.t, p.survival, p.at_risk);
}

// ---------------------------------------------------------------------------

bool CycleTracker::push(double t, double beta) {
  const double cb = std::cos(beta);
  if (!started_) {
    started_ = true;
    t_start_ = last_t_ = t;
    last_cos_ = cb;
    return false;
  }
  integral_ += 0.5 * (last_cos_ + cb) * (t - last_t_);
  last_t_ = t;
  last_cos_ = cb;
  if (to_boundary_) {
    if (std::abs(beta - reference_) >= kPi) {
      boundary_ = reference_ + (beta > reference_ ? kPi : -kPi);
      t_boundary_ = t;
      to_boundary_ = false;
    }
    return false;
  }
  if (std::abs(beta - boundary_) < kPi) return false;
  records_.push_back({records_.size(), t_start_, t_boundary_, t, integral_});
  reference_ = boundary_ + (beta > boundary_ ? kPi : -kPi);
  t_start_ = t;
  integral_ = 0.0;
  to_boundary_ = true;
  return true;
}

std::vector<CycleRecord> decompose_cycles(const Trajectory<double>& beta) {
  require(beta.size() >= 2, ErrorCode::no_complete_cycle, "path too short");
  CycleTracker tracker(beta.states.front());
  for (std::size_t k = 0; k < beta.size(); ++k) tracker.push(beta.times[k], beta.states[k]);
  require(tracker.completed() > 0, ErrorCode::no_complete_cycle,
          "the path never completes a cycle");
  return tracker.records();
}

std::vector<CycleRecord> simulate_cycles(double c, const SdeConfig& cfg, std::size_t n_cycles,
                                         std::size_t n_paths) {
  cfg.validate();
  require(n_cycles >= 1 && n_paths >= 1, ErrorCode::precondition,
          "need at least one cycle and one path");
  const std::size_t per_path = (n_cycles + n_paths - 1) / n_paths;
  std::vector<std::vector<CycleRecord>> per(n_paths);
  const std::size_t max_steps = cfg.n_steps();
  parallel_for(n_paths, [&](std::size_t p) {
    RngStream stream(cfg.seed, p);
    CycleTracker tracker(kPi);
    double x = kPi;
    tracker.push(0.0, x);
    for (std::size_t k = 1; k <= max_steps && tracker.completed() < per_path; ++k) {
      x = sin_drift_step(x, c, cfg, stream.gaussian());
      tracker.push(static_cast<double>(k) * cfg.dt, x);
    }
    per[p] = tracker.records();
  });
  std::vector<CycleRecord> out;
  for (auto& v : per)
    for (auto& r : v) {
      r.index = out.size();
      out.push_back(r);
    }
  require(!out.empty(), ErrorCode::no_complete_cycle, "no path completed a cycle");
  return out;
}

void write_cycles_csv(std::ostream& os, std::span<const CycleRecord> records) {
  os << "index,t_start,t_boundary,t_end,X\n";
  for (const auto& r : records)
    os << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.index, r.t_start,
                      r.t_boundary, r.t_end, r.increment_x);
}

CycleDiagnostics cycle_diagnostics(std::span<const CycleRecord> records, std::size_t max_lag) {
  require(records.size() >= 1000, ErrorCode::too_few_cycles,
          fmt::format("{} cycles, need at least 1000", records.size()));
  CycleDiagnostics d;
  d.n = records.size();
  std::vector<double> x, ax, dur;
  d.max_excess = -INFINITY;
  for (const auto& r : records) {
    x.push_back(r.increment_x);
    ax.push_back(std::abs(r.increment_x));
    dur.push_back(r.duration());
    d.max_excess = std::max(d.max_excess, std::abs(r.increment_x) - r.duration());
  }
  d.mean_x = stats::mean_se(x);
  const double z = stats::normal_quantile(0.995);
  d.mean_x_ci99 = {d.mean_x.mean - z * d.mean_x.se, d.mean_x.mean + z * d.mean_x.se};
  const double bound = 3.0 / std::sqrt(static_cast<double>(d.n));
  for (std::size_t lag = 1; lag <= max_lag; ++lag)
    d.autocorrelation.push_back({lag, stats::autocorrelation(x, lag), bound});
  d.abs_x_tail = fit_exponential_tail(ax);
  d.duration_tail = fit_exponential_tail(dur);
  return d;
}

// ---------------------------------------------------------------------------

namespace {

struct Tridiagonal {
  Eigen::VectorXd diag, lower, upper;  // lower(i) couples i+1 to i; upper(i) i to i+1
};

Tridiagonal assemble(double c, double a, double b, int n, double sigma) {
  const double h = (b - a) / (n + 1);
  const double s2 = sigma * sigma;
  Tridiagonal t;
  t.diag = Eigen::VectorXd::Constant(n, s2 / (h * h));
  t.lower.resize(n - 1);
  t.upper.resize(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    const double xi = a + h * (i + 1);
    const double xn = a + h * (i + 2);
    t.upper(i) = -0.5 * s2 / (h * h) - c * std::sin(xi) / (2.0 * h);
    t.lower(i) = -0.5 * s2 / (h * h) + c * std::sin(xn) / (2.0 * h);
  }
  return t;
}

double smallest_symmetrized(const Tridiagonal& t) {
  const auto n = t.diag.size();
  Eigen::VectorXd off(n - 1);
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    const double prod = t.upper(i) * t.lower(i);
    require(prod > 0.0, ErrorCode::grid_too_coarse,
            "off-diagonal signs differ; refine the grid");
    off(i) = -std::sqrt(prod);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(t.diag, off, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

// Inverse iteration with the Thomas algorithm on the original matrix.
double smallest_inverse_iteration(const Tridiagonal& t) {
  const auto n = t.diag.size();
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n), w(n), cp(n), dp(n);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    cp(0) = t.upper(0) / t.diag(0);
    dp(0) = v(0) / t.diag(0);
    for (Eigen::Index i = 1; i < n; ++i) {
      const double m = t.diag(i) - t.lower(i - 1) * (i < n ? cp(i - 1) : 0.0);
      if (i < n - 1) cp(i) = t.upper(i) / m;
      dp(i) = (v(i) - t.lower(i - 1) * dp(i - 1)) / m;
    }
    w(n - 1) = dp(n - 1);
    for (Eigen::Index i = n - 2; i >= 0; --i) w(i) = dp(i) - cp(i) * w(i + 1);
    const double next = v.squaredNorm() / v.dot(w);
    v = w / w.norm();
    if (it > 5 && std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

EigenResult dirichlet_lambda0(double c, double a, double b, const EigenOptions& opt) {
  require(b > a, ErrorCode::precondition, "empty interval");
  require(opt.grid_n >= 8, ErrorCode::precondition, "grid too small");
  EigenResult r;
  r.c = c;
  r.a = a;
  r.b = b;
  r.grid_n = opt.grid_n;
  const Tridiagonal coarse = assemble(c, a, b, opt.grid_n, opt.sigma);
  r.lambda_fd = smallest_symmetrized(coarse);
  r.lambda_fine = smallest_symmetrized(assemble(c, a, b, 2 * opt.grid_n + 1, opt.sigma));
  r.lambda_check = smallest_inverse_iteration(coarse);
  require(std::abs(r.lambda_fd - r.lambda_fine) <= opt.richardson_tol * std::abs(r.lambda_fine),
          ErrorCode::grid_too_coarse,
          fmt::format("grid refinement moves the eigenvalue from {} to {}", r.lambda_fd,
                      r.lambda_fine));
  return r;
}

ExitSample exit_time_sample(double c, double a, double b, double x0, const SdeConfig& cfg,
                            std::size_t n) {
  cfg.validate();
  ExitSample out;
  out.times.resize(n);
  std::vector<char> ex(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    const auto [t, exited] = run_to_exit(c, a, b, x0, cfg, stream, [](double, double) {});
    out.times[i] = t;
    ex[i] = exited;
  });
  out.exited.assign(ex.begin(), ex.end());
  return out;
}

TailFit dirichlet_lambda0_mc(double c, double a, double b, const SdeConfig& cfg, std::size_t n,
                             const TailFitOptions& opt) {
  const auto s = exit_time_sample(c, a, b, 0.5 * (a + b), cfg, n);
  std::unique_ptr<bool[]> ev(new bool[n]);
  std::copy(s.exited.begin(), s.exited.end(), ev.get());
  return fit_exponential_tail(s.times, std::span<const bool>(ev.get(), n), opt);
}

Lambda0Min lambda0_min(double c, const EigenOptions& opt) {
  Lambda0Min m;
  m.lambda_0_pi = dirichlet_lambda0(c, 0.0, kPi, opt).lambda_fd;
  m.lambda_half_pi = dirichlet_lambda0(c, 0.5 * kPi, 1.5 * kPi, opt).lambda_fd;
  m.lambda_pi_2pi = dirichlet_lambda0(c, kPi, kTwoPi, opt).lambda_fd;
  return m;
}

stats::Estimate interval_cos_integral(double c, double a, double b, double x0,
                                      const SdeConfig& cfg, std::size_t n) {
  cfg.validate();
  require(n >= 2, ErrorCode::empty_ensemble, "need at least two paths");
  std::vector<double> v(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    double integral = 0.0;
    run_to_exit(c, a, b, x0, cfg, stream, [&](double x, double x1) {
      integral += 0.5 * (std::cos(x) + std::cos(x1)) * cfg.dt;
    });
    v[i] = integral;
  });
  return stats::mean_se(v);
}

// ---------------------------------------------------------------------------

RandomWalkPassage rw_first_passage(const IncrementSampler& increments,
                                   const IncrementSampler& start, double level, std::size_t n,
                                   std::size_t max_steps, std::uint64_t seed,
                                   const TailFitOptions& opt) {
  require(n >= 1 && max_steps >= 1, ErrorCode::precondition, "need paths and steps");
  RandomWalkPassage out;
  out.steps.resize(n);
  std::vector<char> passed(n);
  std::vector<double> sums(n, 0.0);
  std::vector<std::size_t> counts(n, 0);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(seed, i);
    double s = start(stream);
    std::size_t k = 0;
    while (s > level && k < max_steps) {
      const double x = increments(stream);
      sums[i] += x;
      s += x;
      ++k;
    }
    counts[i] = k;
    out.steps[i] = static_cast<double>(k);
    passed[i] = s <= level;
  });
  out.passed.assign(passed.begin(), passed.end());
  const double total = std::accumulate(sums.begin(), sums.end(), 0.0);
  const auto draws = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  out.increment_mean = draws > 0 ? total / static_cast<double>(draws) : 0.0;
  out.positive_mean_warning = out.increment_mean >= 0.0;
  std::unique_ptr<bool[]> ev(new bool[n]);
  std::copy(out.passed.begin(), out.passed.end(), ev.get());
  try {
    out.tail = fit_exponential_tail(out.steps, std::span<const bool>(ev.get(), n), opt);
    out.tail_fitted = true;
  } catch (const Error&) {
    out.tail_fitted = false;
  }
  return out;
}

IncrementSampler empirical_sampler(std::vector<double> values) {
  require(!values.empty(), ErrorCode::empty_ensemble, "no values to resample");
  auto data = std::make_shared<const std::vector<double>>(std::move(values));
  return [data](RngStream& s) {
    const auto j = static_cast<std::size_t>(s.uniform() * static_cast<double>(data->size()));
    return (*data)[std::min(j, data->size() - 1)];
  };
}

std::vector<double> entry_radius_sample(const RadialProfile& b, const PolarState& p0,
                                        const SdeConfig& cfg, std::size_t n) {
  cfg.validate();
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    PolarState p = p0;
    // Signed lift distance to π; a π-visit is a crossing of a multiple of 2π.
    double d = angle_difference(kPi, p.beta);
    const std::size_t steps = cfg.n_steps();
    for (std::size_t k = 0; k < steps && d != 0.0; ++k) {
      const PolarState next = step_polar(p, b, cfg, stream.gaussian());
      const double d1 = d + angle_difference(p.beta, next.beta);
      p = next;
      bool crossed = std::floor(d / kTwoPi) != std::floor(d1 / kTwoPi);
      if (!crossed && cfg.scheme == Scheme::euler_bridge) {
        const double level = kTwoPi * std::round(0.5 * (d + d1) / kTwoPi);
        crossed = stream.uniform() <
                  bridge_crossing_probability(d, d1, level, cfg.sigma, cfg.dt);
      }
      if (crossed) break;
      d = d1;
    }
    out[i] = p.r;
  });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// One draw of τ_R(δ) from x.
double tau_delta_once(const FullState& x, const Potential& pot, double R, double delta,
                      const SdeConfig& cfg, RngStream& stream, bool& hit) {
  const auto k_delta = static_cast<std::size_t>(std::llround(delta / cfg.dt));
  const std::size_t n = cfg.n_steps();
  FullState s = x;
  std::size_t k = 0;
  for (; k < k_delta && k < n; ++k) s = step_full(s, pot, cfg, stream.gaussian());
  double r = s.xi.norm();
  hit = true;
  if (r <= R) return static_cast<double>(k) * cfg.dt;
  for (; k < n; ++k) {
    const FullState next = step_full(s, pot, cfg, stream.gaussian());
    const double r1 = next.xi.norm();
    if (r1 <= R) return cfg.dt * (static_cast<double>(k) + (r - R) / (r - r1));
    s = next;
    r = r1;
  }
  hit = false;
  return static_cast<double>(n) * cfg.dt;
}

double v_value(double tau, double lambda) {
  return 1.0 + (lambda > 0.0 ? std::expm1(lambda * tau) / lambda : tau);
}

}  // namespace

std::vector<double> tau_r_delta_sample(const FullState& x, const Potential& pot, double R,
                                       double delta, const SdeConfig& cfg, std::size_t n,
                                       std::vector<bool>* hit) {
  cfg.validate();
  require(R > 0.0 && delta >= 0.0, ErrorCode::precondition, "need R > 0 and delta >= 0");
  std::vector<double> tau(n);
  std::vector<char> h(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    bool ok = false;
    tau[i] = tau_delta_once(x, pot, R, delta, cfg, stream, ok);
    h[i] = ok;
  });
  if (hit) hit->assign(h.begin(), h.end());
  return tau;
}

VrEstimate estimate_v_r(const FullState& x, const Potential& pot, double R, double lambda,
                        double delta, const SdeConfig& cfg, std::size_t n) {
  require(lambda >= 0.0, ErrorCode::precondition, "lambda must be nonnegative");
  std::vector<bool> hit;
  const auto tau = tau_r_delta_sample(x, pot, R, delta, cfg, n, &hit);
  VrEstimate out;
  std::unique_ptr<bool[]> ev(new bool[n]);
  std::copy(hit.begin(), hit.end(), ev.get());
  out.tail = fit_exponential_tail(tau, std::span<const bool>(ev.get(), n));
  require(lambda < out.tail.ci.first, ErrorCode::lambda_too_large,
          fmt::format("lambda = {} reaches the tail rate {} (lower bound {})", lambda,
                      out.tail.lambda_hat, out.tail.ci.first));
  out.censored = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), false));
  std::vector<double> v(n);
  double sw = 0.0, sw2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = v_value(tau[i], lambda);
    const double w = std::exp(lambda * tau[i]);
    sw += w;
    sw2 += w * w;
  }
  out.value = stats::mean_se(v);
  out.mean_tau = stats::mean_se(tau);
  out.ess = sw * sw / sw2;
  return out;
}

DriftProbe drift_condition_probe(const Potential& pot, std::span<const FullState> xs,
                                 double R, double lambda, double delta, double s,
                                 const SdeConfig& cfg, std::size_t n_outer,
                                 std::size_t n_inner) {
  require(!xs.empty() && n_outer >= 2 && n_inner >= 2, ErrorCode::precondition,
          "need states, outer and inner paths");
  require(s >= 0.0, ErrorCode::precondition, "s must be nonnegative");
  DriftProbe probe;
  probe.s = s;
  probe.lambda = lambda;
  probe.tail_rate = INFINITY;

  SdeConfig pilot = cfg;
  pilot.seed = derive_seed(cfg.seed, kPilotTag);
  for (const auto& x : xs) {
    const auto est = estimate_v_r(x, pot, R, lambda, delta, pilot, std::max<std::size_t>(n_inner, 1000));
    probe.tail_rate = std::min(probe.tail_rate, est.tail.lambda_hat);
  }

  const std::uint64_t inner_seed = derive_seed(cfg.seed, kInnerTag);
  const std::uint64_t outer_seed = derive_seed(cfg.seed, kOuterTag);
  const auto s_steps = static_cast<std::size_t>(std::llround(s / cfg.dt));
  auto v_hat = [&](const FullState& at) {
    double sum = 0.0;
    for (std::size_t k = 0; k < n_inner; ++k) {
      RngStream stream(inner_seed, k);
      bool hit = false;
      sum += v_value(tau_delta_once(at, pot, R, delta, cfg, stream, hit), lambda);
    }
    return sum / static_cast<double>(n_inner);
  };

  for (const auto& x : xs) {
    DriftProbePoint pt;
    pt.x = x;
    std::vector<double> vx(n_inner);
    parallel_for(n_inner, [&](std::size_t k) {
      RngStream stream(inner_seed, k);
      bool hit = false;
      vx[k] = v_value(tau_delta_once(x, pot, R, delta, cfg, stream, hit), lambda);
    });
    const auto vx_est = stats::mean_se(vx);
    pt.v_x = v_hat(x);
    std::vector<double> a(n_outer);
    parallel_for(n_outer, [&](std::size_t j) {
      RngStream stream(outer_seed, j);
      FullState y = x;
      for (std::size_t k = 0; k < s_steps; ++k) y = step_full(y, pot, cfg, stream.gaussian());
      a[j] = s_steps == 0 ? pt.v_x : v_hat(y);
    });
    pt.ps_v = s_steps == 0 ? stats::Estimate{pt.v_x, 0.0, n_outer} : stats::mean_se(a);
    pt.ratio.mean = pt.ps_v.mean / pt.v_x;
    pt.ratio.se = std::abs(pt.ratio.mean) *
                  std::hypot(pt.ps_v.se / pt.ps_v.mean, vx_est.se / vx_est.mean);
    pt.ratio.n = n_outer;
    probe.points.push_back(pt);
  }
  return probe;
}

std::vector<SigmaSweepRow> sigma_sweep(double c, std::span<const double> sigmas,
                                       const SdeConfig& cfg, std::size_t n_cycles) {
  std::vector<SigmaSweepRow> rows;
  for (double sg : sigmas) {
    SdeConfig local = cfg;
    local.sigma = sg;
    const auto rec = simulate_cycles(c, local, n_cycles);
    std::vector<double> x, d;
    for (const auto& r : rec) {
      x.push_back(r.increment_x);
      d.push_back(r.duration());
    }
    rows.push_back({sg, stats::ratio_of_means(x, d), rec.size()});
  }
  return rows;
}

}  // namespace fiberlay
