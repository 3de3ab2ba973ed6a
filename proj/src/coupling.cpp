#include "fiberlay/coupling.hpp"

#include <Eigen/LU>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "fiberlay/parallel.hpp"
#include "fiberlay/stats.hpp"

namespace fiberlay {

ExcessSummary summarize_excess(std::vector<double> per_path) {
  ExcessSummary s;
  s.n = per_path.size();
  if (per_path.empty()) return s;
  s.max = *std::max_element(per_path.begin(), per_path.end());
  s.p50 = stats::quantile(per_path, 0.50);
  s.p95 = stats::quantile(per_path, 0.95);
  s.p99 = stats::quantile(per_path, 0.99);
  return s;
}

namespace {

double sgn(double x) { return x >= 0.0 ? 1.0 : -1.0; }

// Shared body of both Tanaka checks. `center` is π or 0 (≡ 2π); `lower` flips
// the inequality to σR ≤ distance.
TanakaReport tanaka_impl(const RadialProfile& b, const PolarState& p0, const SdeConfig& cfg,
                         std::size_t n, double r_stop, double center, bool lower) {
  cfg.validate();
  require(std::abs(angle_difference(center, p0.beta)) < 1e-12, ErrorCode::precondition,
          fmt::format("the angle must start at {}", center == 0.0 ? "2pi" : "pi"));
  TanakaReport rep;
  rep.per_path.assign(n, 0.0);
  std::vector<char> checked(n, 0), failed(n, 0);
  const double sq = cfg.sqrt_dt();
  const std::size_t steps = cfg.n_steps();
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    PolarState p = p0;
    double y = 0.0, y_min = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
      const double z = stream.gaussian();
      y += sgn(angle_difference(center, p.beta)) * sq * z;
      y_min = std::min(y_min, y);
      p = step_polar(p, b, cfg, z);
      const double reflected = cfg.sigma * (y - y_min);
      const double dist = std::abs(angle_difference(center, p.beta));
      worst = std::max(worst, lower ? dist - reflected : reflected - dist);
      if (lower && !checked[i] && reflected >= 0.5 * kPi) {
        checked[i] = 1;
        failed[i] = dist >= 0.5 * kPi;
      }
      if (dist >= 0.5 * kPi || p.r <= r_stop) break;
    }
    rep.per_path[i] = worst;
  });
  rep.exit_checks = static_cast<std::size_t>(std::count(checked.begin(), checked.end(), 1));
  rep.exit_check_failures =
      static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  rep.excess = summarize_excess(rep.per_path);
  return rep;
}

}  // namespace

TanakaReport tanaka_domination(const RadialProfile& b, const PolarState& p0,
                               const SdeConfig& cfg, std::size_t n, double r_stop) {
  return tanaka_impl(b, p0, cfg, n, r_stop, kPi, true);
}

TanakaReport tanaka_domination_upper(const RadialProfile& b, const PolarState& p0,
                                     const SdeConfig& cfg, std::size_t n,
                                     double r_stop) {
  return tanaka_impl(b, p0, cfg, n, r_stop, 0.0, false);
}

// ---------------------------------------------------------------------------

IwReport iw_compare(const ScalarDrift& b1, const ScalarDrift& b2, double x1_0, double x2_0,
                    const SdeConfig& cfg, std::size_t n, std::pair<double, double> window) {
  cfg.validate();
  require(x1_0 <= x2_0, ErrorCode::precondition, "need x1(0) <= x2(0)");
  auto check_order = [&](double x) {
    const double v1 = b1(x), v2 = b2(x);
    require(v1 <= v2 + 1e-12 * std::max(1.0, std::abs(v2)), ErrorCode::drift_order_violated,
            fmt::format("b1({}) = {} exceeds b2({}) = {}", x, v1, x, v2));
  };
  auto inside = [&](double x) { return x >= window.first && x <= window.second; };
  check_order(x1_0);
  check_order(x2_0);
  std::vector<double> excess(n, 0.0), diff(n, 0.0);
  const std::size_t steps = cfg.n_steps();
  const double sq = cfg.sqrt_dt();
  parallel_for(n, [&](std::size_t i) {
    RngStream stream(cfg.seed, i);
    double x1 = x1_0, x2 = x2_0;
    for (std::size_t k = 0; k < steps && inside(x1) && inside(x2); ++k) {
      const double noise = cfg.sigma * sq * stream.gaussian();
      const double d1 = b1(x1), d2 = b2(x2);
      x1 += d1 * cfg.dt + noise;
      x2 += d2 * cfg.dt + noise;
      if (inside(x1)) check_order(x1);
      if (inside(x2)) check_order(x2);
      excess[i] = std::max(excess[i], x1 - x2);
      diff[i] = std::max(diff[i], std::abs(x1 - x2));
    }
  });
  IwReport rep;
  rep.excess = summarize_excess(excess);
  if (n > 0) rep.max_abs_difference = *std::max_element(diff.begin(), diff.end());
  return rep;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Exclusion e) {
  switch (e) {
    case Exclusion::gamma_at_pi_beta_away: return "gamma_at_pi_beta_away";
    case Exclusion::simultaneous_events: return "simultaneous_events";
    case Exclusion::regime_stall: return "regime_stall";
    case Exclusion::censored: return "censored";
  }
  return "unknown";
}

CoupledPair build_gamma(const RadialProfile& b, double r0, const GammaConfig& gcfg,
                        const SdeConfig& cfg, RngStream driver) {
  cfg.validate();
  require(r0 > gcfg.R && gcfg.R > 0.0, ErrorCode::precondition, "need r0 > R > 0");
  require(gcfg.c >= 0.0 && gcfg.stride >= 1, ErrorCode::precondition,
          "need c >= 0 and stride >= 1");
  CoupledPair pair;
  pair.driver = driver;
  RngStream stream = driver;
  const double sq = cfg.sqrt_dt();
  const double tol = gcfg.restart_tolerance_sd * cfg.sigma * sq;
  const std::size_t steps = cfg.n_steps();

  PolarState p{r0, kPi, 0.0};
  double g = 0.0;  // γ − π
  double r_gamma = r0;
  Regime reg = Regime::reflect_pi;
  double last_switch = 0.0;
  pair.regime_log.push_back({0.0, reg});

  auto record = [&](double t) {
    if (!gcfg.record) return;
    pair.path_a.times.push_back(t);
    pair.path_a.states.push_back(p.beta);
    pair.path_b.times.push_back(t);
    pair.path_b.states.push_back(kPi + g);
    pair.regimes.push_back(reg);
  };
  pair.path_a.stride = pair.path_b.stride = gcfg.stride;
  pair.path_a.config = pair.path_b.config = cfg;
  pair.path_a.stream = pair.path_b.stream = driver;
  record(0.0);

  std::size_t k = 0;
  for (; k < steps; ++k) {
    const double t1 = static_cast<double>(k + 1) * cfg.dt;
    const double z = stream.gaussian();
    const double s = pair.hit ? 1.0 : sgn(angle_difference(kPi, p.beta));
    const double w = s * cfg.sigma * sq * z;
    r_gamma -= std::cos(g) * cfg.dt;
    if (!pair.hit) p = step_polar(p, b, cfg, z);

    switch (reg) {
      case Regime::reflect_pi: g = std::max(g + w, 0.0); break;
      case Regime::drift:
      case Regime::coincide: g = g + w - gcfg.c * std::sin(g) * cfg.dt; break;
      case Regime::reflect_2pi: g = std::min(g + w, kPi); break;
    }
    const double d = pair.hit ? 0.0 : std::abs(angle_difference(kPi, p.beta));
    const bool met = !pair.hit && d >= g;

    Regime next = reg;
    switch (reg) {
      case Regime::reflect_pi:
        if (g >= 0.5 * kPi) next = Regime::drift;
        break;
      case Regime::reflect_2pi:
        if (met) next = Regime::coincide;
        else if (g <= 0.5 * kPi) next = Regime::drift;
        break;
      case Regime::drift:
      case Regime::coincide:
        if (g <= 0.0) {
          g = 0.0;
          if (d > tol) pair.excluded = Exclusion::gamma_at_pi_beta_away;
          next = Regime::reflect_pi;
        } else if (g >= kPi) {
          g = kPi;
          if (met) pair.excluded = Exclusion::simultaneous_events;
          next = Regime::reflect_2pi;
        } else if (met && reg == Regime::drift) {
          next = Regime::coincide;
        }
        break;
    }
    if (next != reg) {
      reg = next;
      last_switch = t1;
      pair.regime_log.push_back({t1, reg});
    }
    require(t1 - last_switch <= gcfg.t_stall, ErrorCode::regime_stall,
            fmt::format("no regime switch since t = {}", last_switch));

    if (!pair.hit) {
      pair.distance_excess = std::max(pair.distance_excess, d - g);
      pair.radial_excess = std::max(pair.radial_excess, p.r - r_gamma);
      if (p.r <= gcfg.R) {
        pair.hit = true;
        pair.tau_r = t1;
      }
    }
    if (!pair.hit_gamma && r_gamma <= gcfg.R) {
      pair.hit_gamma = true;
      pair.tau_r_gamma = t1;
    }
    if ((k + 1) % gcfg.stride == 0) record(t1);
    if (pair.excluded || (pair.hit && pair.hit_gamma)) {
      ++k;
      break;
    }
  }
  pair.simulated_time = static_cast<double>(k) * cfg.dt;
  if (!pair.excluded && !(pair.hit && pair.hit_gamma)) pair.excluded = Exclusion::censored;
  return pair;
}

GammaReport gamma_ensemble(const RadialProfile& b, double r0, const GammaConfig& gcfg,
                           const SdeConfig& cfg, std::size_t n) {
  GammaConfig local = gcfg;
  local.record = false;
  std::vector<CoupledPair> pairs(n);
  std::vector<char> stalled(n, 0);
  parallel_for(n, [&](std::size_t i) {
    try {
      pairs[i] = build_gamma(b, r0, local, cfg, RngStream(cfg.seed, i));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::regime_stall) throw;
      stalled[i] = 1;
    }
  });
  GammaReport rep;
  rep.n_paths = n;
  std::vector<double> dist, rad;
  for (std::size_t i = 0; i < n; ++i) {
    if (stalled[i]) {
      ++rep.excluded[std::string(to_string(Exclusion::regime_stall))];
      continue;
    }
    const auto& pr = pairs[i];
    if (pr.excluded) {
      ++rep.excluded[std::string(to_string(*pr.excluded))];
      continue;
    }
    dist.push_back(pr.distance_excess);
    rad.push_back(pr.radial_excess);
    if (pr.tau_r > pr.tau_r_gamma + cfg.dt * (1.0 + 1e-9)) ++rep.order_violations;
  }
  rep.n_used = dist.size();
  rep.distance_excess = summarize_excess(dist);
  rep.radial_excess = summarize_excess(rad);
  rep.order_fraction =
      rep.n_used ? 1.0 - static_cast<double>(rep.order_violations) / rep.n_used : 1.0;
  rep.exclusion_fraction =
      n ? static_cast<double>(n - rep.n_used) / static_cast<double>(n) : 0.0;
  return rep;
}

void write_couple_csv(std::ostream& os, const CoupledPair& pair) {
  os << "t,beta,gamma,regime\n";
  for (std::size_t i = 0; i < pair.path_a.size(); ++i)
    os << fmt::format("{:.17g},{:.17g},{:.17g},{}\n", pair.path_a.times[i],
                      pair.path_a.states[i], pair.path_b.states[i],
                      static_cast<char>(pair.regimes[i]));
}

// ---------------------------------------------------------------------------

namespace {

Eigen::Vector2d segment_integral(double a, double b, double length) {
  const double d = b - a;
  if (std::abs(d) < 1e-8) {
    const double m = 0.5 * (a + b);
    // Second-order expansion around the midpoint.
    const double f = 1.0 - d * d / 24.0;
    return length * f * Eigen::Vector2d(std::cos(m), std::sin(m));
  }
  return length / d * Eigen::Vector2d(std::sin(b) - std::sin(a), std::cos(a) - std::cos(b));
}

struct Shape {
  double a0, a_hat, a_end, t1, t2, T;
};

Eigen::Vector2d endpoint(const Eigen::Vector2d& xi0, const Shape& s) {
  return xi0 + segment_integral(s.a0, s.a_hat, s.t1) +
         segment_integral(s.a_hat, s.a_hat, s.t2 - s.t1) +
         segment_integral(s.a_hat, s.a_end, s.T - s.t2);
}

ControlPath finish(const FullState& x0, const FullState& target, const Shape& s) {
  ControlPath out;
  out.alpha_hat = reduce_angle(s.a_hat);
  out.t1 = s.t1;
  out.t2 = s.t2;
  out.T = s.T;
  out.terminal = FullState(endpoint(x0.xi, s), reduce_angle(s.a_end));
  out.distance = (out.terminal.xi - target.xi).norm();
  out.times = {0.0, s.t1, s.t2, s.T};
  out.alphas = {s.a0, s.a_hat, s.a_hat, s.a_end};
  return out;
}

Shape initial_shape(const FullState& x0, const FullState& target) {
  const Eigen::Vector2d delta = target.xi - x0.xi;
  require(delta.norm() > 1e-12, ErrorCode::degenerate_target,
          "target position equals the start position");
  Shape s{};
  s.a0 = x0.alpha;
  s.a_hat = s.a0 + angle_difference(s.a0, std::atan2(delta.y(), delta.x()));
  s.a_end = s.a_hat + angle_difference(s.a_hat, target.alpha);
  s.T = delta.norm();
  return s;
}

}  // namespace

ControlPath control_path(const FullState& x0, const FullState& target, double t1, double t2,
                         double T) {
  Shape s = initial_shape(x0, target);
  if (T > 0.0) s.T = T;
  require(0.0 < t1 && t1 < t2 && t2 < s.T, ErrorCode::precondition,
          "need 0 < t1 < t2 < T");
  s.t1 = t1;
  s.t2 = t2;
  return finish(x0, target, s);
}

ControlPath control_path_exact(const FullState& x0, const FullState& target,
                               double fraction) {
  require(fraction > 0.0 && fraction < 0.5, ErrorCode::precondition,
          "fraction must lie in (0, 1/2)");
  Shape s = initial_shape(x0, target);
  auto eval = [&](double a_hat, double T) {
    Shape q = s;
    q.a_hat = a_hat;
    q.T = T;
    q.t1 = fraction * T;
    q.t2 = T - fraction * T;
    return std::pair{q, Eigen::Vector2d(endpoint(x0.xi, q) - target.xi)};
  };
  double a = s.a_hat, T = s.T;
  for (int it = 0; it < 50; ++it) {
    const auto [q, f] = eval(a, T);
    if (f.norm() < 1e-14 * std::max(1.0, T)) break;
    const double h = 1e-7;
    Eigen::Matrix2d J;
    J.col(0) = (eval(a + h, T).second - eval(a - h, T).second) / (2 * h);
    J.col(1) = (eval(a, T + h * T).second - eval(a, T - h * T).second) / (2 * h * T);
    const Eigen::Vector2d step = J.fullPivLu().solve(f);
    a -= step(0);
    T = std::max(0.5 * T, T - step(1));
  }
  return finish(x0, target, eval(a, T).first);
}

}  // namespace fiberlay
