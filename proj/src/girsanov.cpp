#include "fiberlay/girsanov.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "fiberlay/parallel.hpp"

namespace fiberlay {

namespace {

// Tags keeping the drift-free and drifted ensembles on disjoint streams.
constexpr std::uint64_t kWeightedSalt = 0x9e11a5a1;
constexpr std::uint64_t kDirectSalt = 0xd12ec7;

}  // namespace

void WeightAccumulator::push(const FullState& from, const FullState& to, double dt) {
  const Eigen::Vector2d grad = pot_->grad_phi(from.xi);
  const double d_alpha = angle_difference(from.alpha, to.alpha);
  const double s2 = sigma_ * sigma_;
  if (form_ == WeightForm::perpendicular) {
    const double g = grad.dot(tangent_perp(from.alpha));
    log_w_ += -g * d_alpha / s2 - 0.5 * g * g * dt / s2;
  } else {
    const double g = grad.dot(tangent(from.alpha));
    log_w_ += -g * d_alpha - 0.5 * s2 * g * g * dt;
  }
}

double girsanov_log_weight(const Trajectory<FullState>& traj, const Potential& pot,
                           WeightForm form) {
  require(traj.stride == 1, ErrorCode::precondition,
          "the weight needs every step of the path (stride 1)");
  WeightAccumulator acc(pot, traj.config.sigma, form);
  for (std::size_t k = 1; k < traj.size(); ++k)
    acc.push(traj.states[k - 1], traj.states[k], traj.config.dt);
  return acc.log_weight();
}

WeightedPath weighted_path(const FullState& x0, const Potential& pot,
                           const SdeConfig& cfg, RngStream stream, WeightForm form) {
  WeightedPath out;
  out.traj = simulate_full(x0, potentials::zero(), cfg, stream, 1);
  out.log_weight = girsanov_log_weight(out.traj, pot, form);
  return out;
}

WeightedEnsemble weighted_ensemble(const Observable& f, const Potential& pot,
                                   const FullState& x0, const SdeConfig& cfg,
                                   std::size_t n, std::span<const double> times,
                                   WeightForm form) {
  cfg.validate();
  require(n >= 2, ErrorCode::empty_ensemble, "need at least two paths");
  require(!times.empty(), ErrorCode::precondition, "no observation times");
  std::vector<std::size_t> steps;
  for (double t : times) {
    const auto k = static_cast<std::size_t>(std::llround(t / cfg.dt));
    require(k >= 1 && k <= cfg.n_steps() && std::abs(k * cfg.dt - t) < 1e-9 * (1 + t),
            ErrorCode::precondition, "observation times must be multiples of dt in (0, t_max]");
    require(steps.empty() || k > steps.back(), ErrorCode::precondition,
            "observation times must increase");
    steps.push_back(k);
  }
  const std::size_t m = steps.size();
  const Potential free = potentials::zero();

  WeightedEnsemble out;
  out.samples.resize(n * m);
  parallel_for(n, [&](std::size_t i) {
    RngStream stream = RngStream(cfg.seed, i).substream(kWeightedSalt);
    WeightAccumulator acc(pot, cfg.sigma, form);
    FullState s = x0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < m; ++j) {
      for (; k < steps[j]; ++k) {
        const FullState next = step_full(s, free, cfg, stream.gaussian());
        acc.push(s, next, cfg.dt);
        s = next;
      }
      out.samples[i * m + j] = {i, static_cast<double>(steps[j]) * cfg.dt,
                                acc.log_weight(), f(s)};
    }
  });

  std::vector<double> fw(n), w(n);
  for (std::size_t j = 0; j < m; ++j) {
    double sw = 0.0, sw2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& smp = out.samples[i * m + j];
      w[i] = std::exp(smp.log_weight);
      fw[i] = smp.f_value * w[i];
      sw += w[i];
      sw2 += w[i] * w[i];
    }
    ReweightedEstimate e;
    e.t = static_cast<double>(steps[j]) * cfg.dt;
    e.value = stats::mean_se(fw);
    e.mean_weight = stats::mean_se(w);
    e.ess = sw2 > 0.0 ? sw * sw / sw2 : 0.0;
    e.ess_low = e.ess < 0.01 * static_cast<double>(n);
    out.estimates.push_back(e);
  }
  return out;
}

ReweightedEstimate reweighted_expectation(const Observable& f, const Potential& pot,
                                          const FullState& x0, const SdeConfig& cfg,
                                          std::size_t n, WeightForm form) {
  const double t = static_cast<double>(cfg.n_steps()) * cfg.dt;
  const double times[] = {t};
  return weighted_ensemble(f, pot, x0, cfg, n, times, form).estimates.front();
}

stats::Estimate direct_expectation(const Observable& f, const Potential& pot,
                                   const FullState& x0, const SdeConfig& cfg,
                                   std::size_t n) {
  cfg.validate();
  require(n >= 2, ErrorCode::empty_ensemble, "need at least two paths");
  std::vector<double> v(n);
  const std::size_t cp[] = {cfg.n_steps()};
  parallel_for(n, [&](std::size_t i) {
    RngStream stream = RngStream(cfg.seed, i).substream(kDirectSalt);
    v[i] = f(propagate_full(x0, pot, cfg, stream, cp).front());
  });
  return stats::mean_se(v);
}

void write_weighted_csv(std::ostream& os, std::span<const WeightedSample> samples) {
  os << "stream_id,t,log_weight,f_value\n";
  for (const auto& s : samples)
    os << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", s.stream_id, s.t, s.log_weight,
                      s.f_value);
}

}  // namespace fiberlay
