#include "app.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "config.hpp"
#include "fiberlay/coupling.hpp"
#include "fiberlay/ergodicity.hpp"
#include "fiberlay/girsanov.hpp"
#include "fiberlay/parallel.hpp"
#include "fiberlay/passage.hpp"

namespace fiberlay::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Tolerance constant for pathwise excesses, in units of σ√dt.
constexpr double kExcessK = 6.0;

struct Run {
  const Config& cfg;
  fs::path out;
  json estimates = json::object();
  json checks = json::object();
  std::vector<std::string> artifacts;

  std::ofstream open(const std::string& name) {
    artifacts.push_back(name);
    std::ofstream os(out / name, std::ios::binary);
    if (!os) throw Error(ErrorCode::config, fmt::format("cannot write {}", (out / name).string()));
    return os;
  }
  void check(const std::string& name, bool pass, const std::string& detail) {
    checks[name] = {{"pass", pass}, {"detail", detail}};
  }
};

std::string num(double v) { return fmt::format("{:.17g}", v); }

json estimate_json(const stats::Estimate& e) { return {{"mean", e.mean}, {"se", e.se}, {"n", e.n}}; }

json excess_json(const ExcessSummary& s) {
  return {{"n", s.n}, {"max", s.max}, {"p50", s.p50}, {"p95", s.p95}, {"p99", s.p99}};
}

json tail_json(const TailFit& f) {
  return {{"lambda_hat", f.lambda_hat},           {"ci", {f.ci.first, f.ci.second}},
          {"r_squared", f.r_squared},             {"n_events", f.n_events},
          {"censor_fraction", f.censor_fraction}, {"knee", f.knee},
          {"n_points", f.n_points}};
}

SdeConfig sde_config(const Config& c, double default_t_max) {
  SdeConfig s;
  s.sigma = c.num("sde.sigma", 1.0);
  s.dt = c.num("sde.dt", 1e-3);
  s.t_max = c.num("sde.t_max", default_t_max);
  s.seed = c.count("seed", 1);
  const std::string scheme = c.str("sde.scheme", "euler_bridge");
  if (scheme == "euler") s.scheme = Scheme::euler;
  else if (scheme == "euler_bridge") s.scheme = Scheme::euler_bridge;
  else throw Error(ErrorCode::config, fmt::format("field 'sde.scheme' = '{}' is unknown", scheme));
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what());
  }
  return s;
}

Potential potential(const Config& c) {
  return make_potential(c.str("potential.name"), c.num("potential.scale", 1.0),
                        c.num("potential.c", 1.0), c.num("potential.R", 1.0));
}

Observable observable(const std::string& name) {
  for (const auto& fn : generator_catalog())
    if (fn.name == name) return fn.f;
  if (name == "cos_2alpha") return [](const FullState& s) { return std::cos(2.0 * s.alpha); };
  if (name == "xi1") return [](const FullState& s) { return s.xi.x(); };
  if (name == "r2") return [](const FullState& s) { return s.xi.squaredNorm(); };
  throw Error(ErrorCode::config, fmt::format("unknown observable '{}'", name));
}

TailFitOptions tail_options(const Config& c, const std::string& sec) {
  TailFitOptions o;
  o.knee_quantile = c.num(sec + ".knee_quantile", o.knee_quantile);
  o.min_at_risk = c.count(sec + ".min_at_risk", o.min_at_risk);
  o.min_events = c.count(sec + ".min_events", o.min_events);
  o.n_boot = static_cast<int>(c.count(sec + ".n_boot", 200));
  o.seed = derive_seed(c.count("seed", 1), 0x7461696c);
  return o;
}

// ---------------------------------------------------------------------------

void cmd_simulate(Run& r) {
  const auto pot = potential(r.cfg);
  const auto sde = sde_config(r.cfg, 1.0);
  const FullState x0 = r.cfg.state("simulate.x0", FullState(Eigen::Vector2d(1.0, 0.0), 0.0));
  const std::size_t stride = r.cfg.count("simulate.stride", 1);
  const std::string mode = r.cfg.str("simulate.mode", "full");
  auto os = r.open("trajectory.csv");
  if (mode == "full") {
    const auto traj = simulate_full(x0, pot, sde, RngStream(sde.seed, 0), stride);
    write_trajectory_csv(os, traj);
    const auto& s = traj.states.back();
    r.estimates["final"] = {{"x", s.xi.x()}, {"y", s.xi.y()}, {"alpha", s.alpha}};
    r.estimates["n_points"] = traj.size();
  } else if (mode == "polar") {
    const auto traj = simulate_polar(to_polar(x0), pot.radial_profile, sde,
                                     RngStream(sde.seed, 0), stride);
    write_trajectory_csv(os, traj);
    const auto& s = traj.states.back();
    r.estimates["final"] = {{"r", s.r}, {"beta", s.beta}, {"psi", s.psi}};
    r.estimates["n_points"] = traj.size();
  } else {
    throw Error(ErrorCode::config, fmt::format("field 'simulate.mode' = '{}' is unknown", mode));
  }
}

void cmd_stationary(Run& r) {
  const InvariantLaw law(potential(r.cfg));
  StationarityOptions opt;
  opt.checkpoints = r.cfg.list("stationary.checkpoints", {1.0, 2.0, 5.0});
  opt.n = r.cfg.count("stationary.n", 100000);
  opt.alpha_bins = static_cast<int>(r.cfg.count("stationary.alpha_bins", 64));
  opt.thinning = r.cfg.count("stationary.thinning", 1);
  if (r.cfg.has("stationary.x0")) opt.x0 = r.cfg.state("stationary.x0", {});
  const double p_min = r.cfg.num("stationary.p_min", 0.01);
  const auto sde = sde_config(r.cfg, opt.checkpoints.back());
  const auto rep = stationarity_test(law, sde, opt);
  auto os = r.open("stationary.csv");
  os << "t,ks_statistic,ks_p,chi2_statistic,chi2_p\n";
  json rows = json::array();
  bool pass = true;
  for (const auto& c : rep.checks) {
    os << fmt::format("{},{},{},{},{}\n", num(c.t), num(c.ks_r.statistic), num(c.ks_r.p_value),
                      num(c.chi2_alpha.statistic), num(c.chi2_alpha.p_value));
    rows.push_back({{"t", c.t}, {"ks_p", c.ks_r.p_value}, {"chi2_p", c.chi2_alpha.p_value}});
    pass = pass && c.ks_r.p_value > p_min && c.chi2_alpha.p_value > p_min;
  }
  r.estimates["checks"] = rows;
  r.estimates["n_used"] = rep.n_used;
  r.check("stationarity", pass, fmt::format("all KS and chi2 p-values above {}", p_min));
}

void cmd_mixing(Run& r) {
  const auto pot = potential(r.cfg);
  MixingOptions opt;
  opt.t_grid = r.cfg.list("mixing.t_grid", {0.5, 1, 1.5, 2, 2.5, 3, 3.5, 4, 4.5, 5, 5.5, 6});
  opt.n = r.cfg.count("mixing.n", 100000);
  opt.n_xi = static_cast<int>(r.cfg.count("mixing.n_xi", 10));
  opt.n_alpha = static_cast<int>(r.cfg.count("mixing.n_alpha", 10));
  opt.n_boot = static_cast<int>(r.cfg.count("mixing.n_boot", 200));
  opt.fit_from = r.cfg.num("mixing.fit_from", 0.0);
  const FullState x0 = r.cfg.state("mixing.x0", FullState(Eigen::Vector2d(3.0, 0.0), 0.0));
  const auto sde = sde_config(r.cfg, opt.t_grid.back());
  const auto res = mixing_rate(pot, x0, sde, opt);
  auto os = r.open("tvdecay.csv");
  write_tvdecay_csv(os, res);
  r.estimates["rate"] = res.fit.rate;
  r.estimates["rate_ci"] = {res.fit.ci_rate.first, res.fit.ci_rate.second};
  r.estimates["r_squared"] = res.fit.r_squared;
  r.estimates["n_fitted"] = res.fit.n_points;
  r.estimates["floor"] = {{"value", res.floor.value}, {"sd", res.floor.sd}};
  r.check("mixing_rate",
          res.fit.rate > 0 && res.fit.ci_rate.first > 0 && res.fit.r_squared > 0.9,
          "rate > 0, 95% CI excludes 0, R^2 > 0.9");
}

void cmd_avg(Run& r) {
  const auto pot = potential(r.cfg);
  const std::string fname = r.cfg.str("avg.f", "cos_alpha");
  const auto f = observable(fname);
  const double mean_f = r.cfg.num("avg.mean_f", 0.0);
  const auto grid = r.cfg.list("avg.t_grid", {5, 10, 20, 30, 40, 50});
  const std::size_t n = r.cfg.count("avg.n", 2000);
  const auto sde = sde_config(r.cfg, grid.back());
  const auto res = time_average_decay(pot, f, mean_f, sde, grid, n);
  auto os = r.open("avg.csv");
  os << "t,rms_error,se\n";
  for (const auto& p : res.points)
    os << fmt::format("{},{},{}\n", num(p.t), num(p.rms_error), num(p.se));
  r.estimates["exponent"] = res.fit.rate;
  r.estimates["exponent_ci"] = {res.fit.ci_rate.first, res.fit.ci_rate.second};
  r.estimates["r_squared"] = res.fit.r_squared;
  r.check("decay_exponent", res.fit.rate >= -0.65 && res.fit.rate <= -0.35,
          "log-log slope in [-0.65, -0.35]");
}

void cmd_girsanov(Run& r) {
  const auto pot = potential(r.cfg);
  const auto times = r.cfg.list("girsanov.times", {0.1, 0.25, 0.5});
  const std::size_t n = r.cfg.count("girsanov.n", 100000);
  const FullState x0 = r.cfg.state("girsanov.x0", FullState(Eigen::Vector2d(1.0, 0.0), 0.0));
  const std::string fname = r.cfg.str("girsanov.f", "cos_alpha");
  const std::string form_name = r.cfg.str("girsanov.form", "perpendicular");
  WeightForm form;
  if (form_name == "perpendicular") form = WeightForm::perpendicular;
  else if (form_name == "tangent_as_printed") form = WeightForm::tangent_as_printed;
  else throw Error(ErrorCode::config, fmt::format("field 'girsanov.form' = '{}' is unknown", form_name));
  const auto sde = sde_config(r.cfg, times.back());
  const auto f = observable(fname);
  const auto ens = weighted_ensemble(f, pot, x0, sde, n, times, form);
  auto os = r.open("weights.csv");
  write_weighted_csv(os, ens.samples);
  json rows = json::array();
  bool unit = true, match = true;
  for (std::size_t k = 0; k < ens.estimates.size(); ++k) {
    const auto& e = ens.estimates[k];
    SdeConfig direct_cfg = sde;
    direct_cfg.t_max = times[k];
    const auto direct = direct_expectation(f, pot, x0, direct_cfg, n);
    rows.push_back({{"t", e.t},
                    {"reweighted", estimate_json(e.value)},
                    {"direct", estimate_json(direct)},
                    {"mean_weight", estimate_json(e.mean_weight)},
                    {"ess", e.ess},
                    {"ess_low", e.ess_low}});
    unit = unit && std::abs(e.mean_weight.mean - 1.0) <= 3.0 * e.mean_weight.se;
    match = match &&
            std::abs(e.value.mean - direct.mean) <= 3.0 * std::hypot(e.value.se, direct.se);
  }
  r.estimates["times"] = rows;
  r.check("unit_mean_weight", unit, "|E M_t - 1| <= 3 SE at every time");
  r.check("reweighted_matches_direct", match,
          "reweighted and direct estimates within 3 combined SE at every time");
}

void cmd_passage(Run& r) {
  const auto pot = potential(r.cfg);
  const double R = r.cfg.num("passage.R", 1.0);
  const PolarState p0{r.cfg.num("passage.r0", 2.0), r.cfg.num("passage.beta0", 0.0), 0.0};
  const std::size_t n = r.cfg.count("passage.n", 10000);
  const double t_max = r.cfg.num("passage.t_max", 0.0);
  const auto sde = sde_config(r.cfg, 1.0);
  const auto s = tau_r_sample(pot, p0, R, sde, n, t_max);
  std::unique_ptr<bool[]> ev(new bool[n]);
  std::copy(s.hit.begin(), s.hit.end(), ev.get());
  const auto fit = fit_exponential_tail(s.times, std::span<const bool>(ev.get(), n),
                                        tail_options(r.cfg, "passage"));
  {
    auto os = r.open("tau.csv");
    os << "index,tau,hit,r_end\n";
    for (std::size_t i = 0; i < n; ++i)
      os << fmt::format("{},{},{},{}\n", i, num(s.times[i]), s.hit[i] ? 1 : 0, num(s.r_end[i]));
  }
  auto os = r.open("tails.csv");
  write_tails_csv(os, fit.curve);
  r.estimates["c_hat"] = s.c_hat;
  r.estimates["t_max"] = s.t_max;
  r.estimates["tail"] = tail_json(fit);
  r.check("tau_tail", fit.r_squared > 0.95 && fit.censor_fraction < 0.2,
          "R^2 > 0.95 beyond the knee and censor fraction < 20%");
}

void cmd_cycles(Run& r) {
  const double c = r.cfg.num("cycles.c", 1.0);
  const std::size_t n_cycles = r.cfg.count("cycles.n_cycles", 10000);
  const std::size_t n_paths = r.cfg.count("cycles.n_paths", 64);
  const auto sde = sde_config(r.cfg, 1e6);
  const auto rec = simulate_cycles(c, sde, n_cycles, n_paths);
  {
    auto os = r.open("cycles.csv");
    write_cycles_csv(os, rec);
  }
  r.estimates["n_cycles"] = rec.size();
  if (rec.size() >= 1000) {
    const auto d = cycle_diagnostics(rec, r.cfg.count("cycles.max_lag", 5));
    r.estimates["mean_x"] = estimate_json(d.mean_x);
    r.estimates["mean_x_ci99"] = {d.mean_x_ci99.first, d.mean_x_ci99.second};
    json ac = json::array();
    bool ac_ok = true;
    for (const auto& a : d.autocorrelation) {
      ac.push_back({{"lag", a.lag}, {"value", a.value}, {"bound", a.bound}});
      ac_ok = ac_ok && a.within();
    }
    r.estimates["autocorrelation"] = ac;
    r.estimates["max_excess"] = d.max_excess;
    r.estimates["abs_x_tail"] = tail_json(d.abs_x_tail);
    r.estimates["duration_tail"] = tail_json(d.duration_tail);
    const auto lm = lambda0_min(c, EigenOptions{.grid_n = 2048, .sigma = sde.sigma});
    r.estimates["lambda0_min"] = lm.value();
    r.check("cycle_increments",
            d.mean_x_ci99.second < 0.0 && ac_ok && d.max_excess <= 1e-9,
            "mean X < 0 with 99% CI excluding 0, lag 1-5 autocorrelations within 3/sqrt(n), "
            "|X| <= duration");
  } else {
    r.check("cycle_increments", false, "fewer than 1000 cycles");
  }
  const auto sigmas = r.cfg.list("cycles.sigmas", {});
  if (!sigmas.empty()) {
    const auto rows = sigma_sweep(c, sigmas, sde, r.cfg.count("cycles.sweep_cycles", 1000));
    auto os = r.open("sigma_sweep.csv");
    os << "sigma,ratio,se,n_cycles\n";
    for (const auto& row : rows)
      os << fmt::format("{},{},{},{}\n", num(row.sigma), num(row.ratio.mean), num(row.ratio.se),
                        row.n_cycles);
  }
}

void cmd_eigen(Run& r) {
  const double c = r.cfg.num("eigen.c", 1.0);
  EigenOptions opt;
  opt.grid_n = static_cast<int>(r.cfg.count("eigen.grid_n", 2048));
  opt.sigma = r.cfg.num("sde.sigma", 1.0);
  std::vector<std::pair<double, double>> intervals;
  if (r.cfg.has("eigen.a") || r.cfg.has("eigen.b")) {
    intervals.push_back({r.cfg.num("eigen.a"), r.cfg.num("eigen.b")});
  } else {
    intervals = {{0.0, kPi}, {0.5 * kPi, 1.5 * kPi}, {kPi, kTwoPi}};
  }
  const std::size_t mc_n = r.cfg.count("eigen.mc_n", 0);
  const auto sde = sde_config(r.cfg, 30.0);
  auto os = r.open("eigen.csv");
  os << "a,b,lambda_fd,lambda_fine,lambda_check,lambda_mc\n";
  json rows = json::array();
  double lambda_min = INFINITY;
  bool agree = true;
  for (const auto& [a, b] : intervals) {
    const auto e = dirichlet_lambda0(c, a, b, opt);
    lambda_min = std::min(lambda_min, e.lambda_fd);
    json row = {{"a", a}, {"b", b}, {"lambda_fd", e.lambda_fd}, {"lambda_fine", e.lambda_fine},
                {"lambda_check", e.lambda_check}};
    double mc = NAN;
    if (mc_n > 0) {
      const auto fit = dirichlet_lambda0_mc(c, a, b, sde, mc_n, tail_options(r.cfg, "eigen"));
      mc = fit.lambda_hat;
      row["mc"] = tail_json(fit);
      agree = agree && std::abs(mc - e.lambda_fd) <= 0.05 * e.lambda_fd;
    }
    os << fmt::format("{},{},{},{},{},{}\n", num(a), num(b), num(e.lambda_fd),
                      num(e.lambda_fine), num(e.lambda_check), num(mc));
    rows.push_back(row);
  }
  r.estimates["intervals"] = rows;
  r.estimates["lambda_fd"] = rows.front()["lambda_fd"];
  r.estimates["lambda0_min"] = lambda_min;
  if (mc_n > 0) r.check("fd_vs_mc", agree, "survival regression within 5% of the FD eigenvalue");
}

void cmd_couple(Run& r) {
  const auto pot = potential(r.cfg);
  const auto& b = pot.radial_profile;
  if (!b) throw Error(ErrorCode::not_eventually_radial, "coupling needs a radial profile");
  const std::string mode = r.cfg.str("couple.mode", "all");
  const std::size_t n = r.cfg.count("couple.n", 1000);
  const auto sde = sde_config(r.cfg, r.cfg.num("couple.t_max", 200.0));
  const double tol = kExcessK * sde.sigma * std::sqrt(sde.dt);
  json v = json::object();
  v["tolerance"] = tol;
  const bool all = mode == "all";
  if (!all && mode != "tanaka" && mode != "gamma" && mode != "iw")
    throw Error(ErrorCode::config, fmt::format("field 'couple.mode' = '{}' is unknown", mode));
  if (all || mode == "tanaka") {
    const double r0 = r.cfg.num("couple.tanaka_r0", 5.0);
    const auto lo = tanaka_domination(b, {r0, kPi, 0.0}, sde, n);
    const auto hi = tanaka_domination_upper(b, {r0, 0.0, 0.0}, sde, n);
    v["tanaka"] = excess_json(lo.excess);
    v["tanaka"]["exit_checks"] = lo.exit_checks;
    v["tanaka"]["exit_check_failures"] = lo.exit_check_failures;
    v["tanaka_upper"] = excess_json(hi.excess);
    r.check("tanaka", lo.excess.max <= tol && hi.excess.max <= tol,
            "reflected-BM domination excess <= K sqrt(dt)");
  }
  if (all || mode == "gamma") {
    GammaConfig g;
    g.c = r.cfg.num("couple.c", 1.0);
    g.R = r.cfg.num("couple.R", 1.0);
    g.t_stall = r.cfg.num("couple.t_stall", 100.0);
    g.stride = r.cfg.count("couple.stride", 10);
    const double r0 = r.cfg.num("couple.r0", 3.0);
    const auto rep = gamma_ensemble(b, r0, g, sde, n);
    json ex = json::object();
    for (const auto& [k, c] : rep.excluded) ex[k] = c;
    v["gamma"] = {{"n_paths", rep.n_paths},
                  {"n_used", rep.n_used},
                  {"excluded", ex},
                  {"distance_excess", excess_json(rep.distance_excess)},
                  {"radial_excess", excess_json(rep.radial_excess)},
                  {"order_violations", rep.order_violations},
                  {"order_fraction", rep.order_fraction},
                  {"exclusion_fraction", rep.exclusion_fraction},
                  {"reading", "three_bullet"}};
    const auto pair = build_gamma(b, r0, g, sde, RngStream(sde.seed, 0));
    auto os = r.open("couple.csv");
    write_couple_csv(os, pair);
    r.check("gamma",
            rep.distance_excess.max <= tol && rep.order_fraction >= 0.99 &&
                rep.exclusion_fraction < 0.01,
            "distance excess <= K sqrt(dt), hitting order on >= 99%, exclusions < 1%");
  }
  if (all || mode == "iw") {
    const double c1 = r.cfg.num("couple.iw_c1", 1.0);
    const double c2 = r.cfg.num("couple.iw_c2", 0.5);
    const ScalarDrift b1 = [c1](double x) { return c1 * std::sin(x); };
    const ScalarDrift b2 = [c2](double x) { return c2 * std::sin(x); };
    SdeConfig iw_cfg = sde;
    iw_cfg.t_max = r.cfg.num("couple.iw_t_max", 5.0);
    const auto rep = iw_compare(b1, b2, r.cfg.num("couple.iw_x1", 1.4 * kPi),
                                r.cfg.num("couple.iw_x2", 1.5 * kPi), iw_cfg, n,
                                {kPi + 1e-9, kTwoPi - 1e-9});
    v["iw"] = excess_json(rep.excess);
    r.check("iw", rep.excess.max <= tol, "comparison excess <= K sqrt(dt)");
  }
  auto os = r.open("violations.json");
  os << v.dump(2) << "\n";
  r.estimates["violations"] = v;
}

void cmd_reach(Run& r) {
  const FullState x0 = r.cfg.state("reach.x0", FullState(Eigen::Vector2d(0.0, 0.0), 0.0));
  const double fraction = r.cfg.num("reach.fraction", 1e-3);
  const double eps = r.cfg.num("reach.eps", 1e-3);
  const bool exact = r.cfg.flag("reach.exact", false);
  std::vector<FullState> targets;
  if (r.cfg.has("reach.target")) {
    targets.push_back(r.cfg.state("reach.target", {}));
  } else {
    const std::size_t k = r.cfg.count("reach.n_targets", 10);
    const double radius = r.cfg.num("reach.max_distance", 0.4);
    RngStream s(derive_seed(r.cfg.count("seed", 1), 0x72656163), 0);
    for (std::size_t i = 0; i < k; ++i) {
      const double rho = radius * std::sqrt(s.uniform());
      const double th = kTwoPi * s.uniform();
      targets.emplace_back(x0.xi + rho * Eigen::Vector2d(std::cos(th), std::sin(th)),
                           kTwoPi * s.uniform());
    }
  }
  auto os = r.open("reach.csv");
  os << "target_x,target_y,target_alpha,alpha_hat,T,terminal_x,terminal_y,distance\n";
  double worst = 0.0;
  for (const auto& t : targets) {
    const double T = (t.xi - x0.xi).norm();
    const auto p = exact ? control_path_exact(x0, t, fraction)
                         : control_path(x0, t, fraction * T, T - fraction * T);
    worst = std::max(worst, p.distance);
    os << fmt::format("{},{},{},{},{},{},{},{}\n", num(t.xi.x()), num(t.xi.y()), num(t.alpha),
                      num(p.alpha_hat), num(p.T), num(p.terminal.xi.x()),
                      num(p.terminal.xi.y()), num(p.distance));
  }
  r.estimates["n_targets"] = targets.size();
  r.estimates["max_distance"] = worst;
  r.check("reach", worst < eps, fmt::format("every terminal point within {} of its target", eps));
}

void cmd_vfun(Run& r) {
  const auto pot = potential(r.cfg);
  const FullState x = r.cfg.state("vfun.x0", FullState(Eigen::Vector2d(3.0, 0.0), 0.0));
  const double R = r.cfg.num("vfun.R", 1.0);
  const double delta = r.cfg.num("vfun.delta", 0.1);
  const std::size_t n = r.cfg.count("vfun.n", 2000);
  const auto sde = sde_config(r.cfg, 100.0);
  double lambda = r.cfg.num("vfun.lambda", 0.0);
  if (r.cfg.has("vfun.lambda_fraction")) {
    const auto pilot = estimate_v_r(x, pot, R, 0.0, delta, sde, n);
    lambda = r.cfg.num("vfun.lambda_fraction") * pilot.tail.lambda_hat;
  }
  const auto v = estimate_v_r(x, pot, R, lambda, delta, sde, n);
  r.estimates["lambda"] = lambda;
  r.estimates["v_r"] = estimate_json(v.value);
  r.estimates["mean_tau"] = estimate_json(v.mean_tau);
  r.estimates["ess"] = v.ess;
  r.estimates["censored"] = v.censored;
  r.estimates["tail"] = tail_json(v.tail);
  auto os = r.open("vfun.csv");
  os << "s,x,y,alpha,v_x,ps_v,ps_v_se,ratio,ratio_se\n";
  const double s = r.cfg.num("vfun.s", 0.0);
  if (r.cfg.has("vfun.s")) {
    const std::vector<FullState> xs{x};
    const auto probe = drift_condition_probe(pot, xs, R, lambda, delta, s, sde,
                                             r.cfg.count("vfun.n_outer", 200),
                                             r.cfg.count("vfun.n_inner", 200));
    for (const auto& p : probe.points)
      os << fmt::format("{},{},{},{},{},{},{},{},{}\n", num(s), num(p.x.xi.x()), num(p.x.xi.y()),
                        num(p.x.alpha), num(p.v_x), num(p.ps_v.mean), num(p.ps_v.se),
                        num(p.ratio.mean), num(p.ratio.se));
    r.estimates["probe_tail_rate"] = probe.tail_rate;
  }
  r.check("ess", v.ess > 100.0, "effective sample size of e^{lambda tau} above 100");
}

using Command = std::function<void(Run&)>;

const std::map<std::string, std::pair<Command, std::string>>& registry() {
  static const std::map<std::string, std::pair<Command, std::string>> m{
      {"simulate", {cmd_simulate, "simulate one trajectory"}},
      {"stationary", {cmd_stationary, "KS/chi2 preservation test of the invariant law"}},
      {"mixing", {cmd_mixing, "total-variation decay and rate fit"}},
      {"avg", {cmd_avg, "time-average error decay"}},
      {"girsanov", {cmd_girsanov, "reweighted against direct expectations"}},
      {"passage", {cmd_passage, "radial hitting time and tail fit"}},
      {"cycles", {cmd_cycles, "cycle decomposition and diagnostics"}},
      {"eigen", {cmd_eigen, "Dirichlet eigenvalues"}},
      {"couple", {cmd_couple, "pathwise comparison experiments"}},
      {"reach", {cmd_reach, "control path reachability"}},
      {"vfun", {cmd_vfun, "Lyapunov function V_R and drift probe"}},
  };
  return m;
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::vector<std::string> subcommands() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"fiber lay-down SDE toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir = "out";
  std::vector<std::string> overrides;
  int threads = 0;
  bool assert_mode = false;
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--set", overrides, "override, key=value")
      ->expected(1)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker count");
  app.add_flag("--assert", assert_mode, "exit 4 when a statistical check fails");
  std::map<CLI::App*, std::string> subs;
  for (const auto& [name, entry] : registry()) subs[app.add_subcommand(name, entry.second)] = name;

  std::vector<std::string> rest(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  std::string command;
  for (const auto& [ptr, name] : subs)
    if (ptr->parsed()) command = name;

  const auto start = std::chrono::steady_clock::now();
  try {
    Config cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw Error(ErrorCode::config, fmt::format("cannot read config '{}'", config_path));
      cfg = Config::parse(in, config_path);
    }
    for (const auto& o : overrides) cfg.set_assignment(o);
    if (threads > 0) set_worker_count(threads);

    fs::create_directories(out_dir);
    Run r{cfg, out_dir, json::object(), json::object(), {}};
    registry().at(command).first(r);

    json manifest = json::array();
    for (const auto& a : r.artifacts) {
      std::ifstream in(fs::path(out_dir) / a, std::ios::binary);
      std::ostringstream buf;
      buf << in.rdbuf();
      manifest.push_back({{"file", a}, {"bytes", buf.str().size()}, {"sha256", sha256_hex(buf.str())}});
    }
    {
      std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::binary);
      os << json_text({{"command", command}, {"artifacts", manifest}});
    }

    json cj = json::object(), eff = json::object();
    for (const auto& [k, v] : cfg.canonical()) cj[k] = v;
    for (const auto& [k, v] : cfg.effective()) eff[k] = v;
    bool all_pass = true;
    for (const auto& [k, c] : r.checks.items()) all_pass = all_pass && c["pass"].get<bool>();
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json summary = {{"command", command},
                    {"seed", cfg.count("seed", 1)},
                    {"config_hash", cfg.hash(command)},
                    {"config", cj},
                    {"effective_config", eff},
                    {"estimates", r.estimates},
                    {"checks", r.checks},
                    {"all_checks_pass", all_pass},
                    {"wall_time_s", wall}};
    {
      std::ofstream os(fs::path(out_dir) / "summary.json", std::ios::binary);
      os << json_text(summary);
    }
    for (const auto& k : cfg.unused()) std::cerr << "warning: unused config key '" << k << "'\n";
    for (const auto& [k, c] : r.checks.items())
      std::cout << fmt::format("{} {}: {}\n", c["pass"].get<bool>() ? "PASS" : "FAIL", k,
                               c["detail"].get<std::string>());
    if (assert_mode && !all_pass) return kExitAssert;
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::config ? kExitConfig : kExitPrecondition;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace fiberlay::cli
