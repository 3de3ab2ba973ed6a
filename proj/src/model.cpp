#include "fiberlay/model.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>

#include "fiberlay/error.hpp"

namespace fiberlay {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::precondition: return "PreconditionViolated";
    case ErrorCode::degenerate_radius: return "DegenerateRadius";
    case ErrorCode::not_eventually_radial: return "NotEventuallyRadial";
    case ErrorCode::non_finite_drift: return "NonFiniteDrift";
    case ErrorCode::radius_underflow: return "RadiusUnderflow";
    case ErrorCode::not_normalizable: return "NotNormalizable";
    case ErrorCode::bin_mismatch: return "BinMismatch";
    case ErrorCode::fit_underdetermined: return "FitUnderdetermined";
    case ErrorCode::floor_dominates: return "FloorDominates";
    case ErrorCode::too_few_events: return "TooFewEvents";
    case ErrorCode::degenerate_fit: return "DegenerateFit";
    case ErrorCode::no_complete_cycle: return "NoCompleteCycle";
    case ErrorCode::too_few_cycles: return "TooFewCycles";
    case ErrorCode::grid_too_coarse: return "GridTooCoarse";
    case ErrorCode::assumption_a_violated: return "AssumptionAViolated";
    case ErrorCode::lambda_too_large: return "LambdaTooLarge";
    case ErrorCode::drift_order_violated: return "DriftOrderViolated";
    case ErrorCode::regime_stall: return "RegimeStallDetected";
    case ErrorCode::degenerate_target: return "DegenerateTarget";
    case ErrorCode::empty_ensemble: return "EmptyEnsemble";
    case ErrorCode::config: return "ConfigError";
  }
  return "Unknown";
}

double reduce_angle(double a) {
  if (a >= 0.0 && a < kTwoPi) return a;
  if (a >= kTwoPi && a < 2.0 * kTwoPi) return a - kTwoPi;
  if (a < 0.0 && a >= -kTwoPi) {
    const double r = a + kTwoPi;
    return r >= kTwoPi ? 0.0 : r;
  }
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a tiny negative number can round up to exactly 2π.
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double angle_difference(double a, double b) {
  double d = std::remainder(b - a, kTwoPi);
  if (d <= -kPi) d += kTwoPi;
  return d;
}

PolarState to_polar(const FullState& s) {
  const double r = s.xi.norm();
  require(r > kMinRadius, ErrorCode::degenerate_radius,
          "|xi| is below the polar chart threshold");
  const double psi = reduce_angle(std::atan2(s.xi.y(), s.xi.x()));
  return {r, reduce_angle(s.alpha - psi), psi};
}

FullState to_cartesian(const PolarState& p) {
  require(p.r > 0.0, ErrorCode::degenerate_radius, "r must be positive");
  return FullState(Eigen::Vector2d(p.r * std::cos(p.psi), p.r * std::sin(p.psi)),
                   p.beta + p.psi);
}

std::optional<AssumptionACheck> check_assumption_a(const Potential& pot,
                                                   double R, double r_hi,
                                                   int grid_n) {
  require(pot.eventually_radial(), ErrorCode::not_eventually_radial,
          "potential '" + pot.name + "' has no radial profile");
  require(R >= pot.eventual_radius && R > 0.0, ErrorCode::precondition,
          "R must be positive and at least the eventual radius");
  require(r_hi > R && grid_n >= 2, ErrorCode::precondition,
          "need r_hi > R and at least two grid points");

  auto g = [&](double r) { return pot.radial_profile(r) - 1.0 / r; };
  AssumptionACheck out;
  out.monotone = true;
  double inf = g(R);
  double prev = inf;
  for (int i = 1; i < grid_n; ++i) {
    const double r = R + (r_hi - R) * static_cast<double>(i) / (grid_n - 1);
    const double v = g(r);
    if (v < prev - 1e-14 * std::max(1.0, std::abs(prev))) out.monotone = false;
    inf = std::min(inf, v);
    prev = v;
  }
  const double h = 1e-4 * r_hi;
  out.endpoint_nondecreasing = g(r_hi + h) - g(r_hi - h) >= 0.0;
  if (!(inf > 0.0)) return std::nullopt;
  out.c = inf;
  return out;
}

namespace potentials {

Potential quadratic(double scale) {
  require(scale > 0.0, ErrorCode::precondition, "quadratic scale must be > 0");
  Potential p;
  p.name = "quadratic";
  p.phi = [scale](const Eigen::Vector2d& x) { return scale * x.squaredNorm(); };
  p.grad_phi = [scale](const Eigen::Vector2d& x) -> Eigen::Vector2d {
    return 2.0 * scale * x;
  };
  p.radial_profile = [scale](double r) { return 2.0 * scale * r; };
  p.radial_phi = [scale](double r) { return scale * r * r; };
  // 2kr − 1/r is increasing, so its infimum on [R, ∞) sits at R = 1.
  if (2.0 * scale - 1.0 > 0.0) p.assumption_a = AssumptionA{1.0, 2.0 * scale - 1.0};
  return p;
}

double smoothed_norm_threshold() {
  // r/√(1+r²) = 1/r  ⇔  r⁴ = 1 + r².
  return std::sqrt(0.5 * (1.0 + std::sqrt(5.0)));
}

Potential smoothed_norm() {
  Potential p;
  p.name = "smoothed_norm";
  p.phi = [](const Eigen::Vector2d& x) { return std::sqrt(1.0 + x.squaredNorm()); };
  p.grad_phi = [](const Eigen::Vector2d& x) -> Eigen::Vector2d {
    return x / std::sqrt(1.0 + x.squaredNorm());
  };
  p.radial_profile = [](double r) { return r / std::sqrt(1.0 + r * r); };
  p.radial_phi = [](double r) { return std::sqrt(1.0 + r * r); };
  p.note =
      "C2 surrogate for |xi|; b(r) - 1/r < 1 everywhere and is not positive "
      "for r <= 1.272, so Assumption A fails at R = 1 and holds only with "
      "c < 1 for larger R";
  return p;
}

namespace {

// Quintic smoothstep: C² with h(0) = 0, h(1) = 1 and vanishing first and
// second derivatives at both ends.
double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (t * (6.0 * t - 15.0) + 10.0);
}

}  // namespace

Potential special_case(double c, double R) {
  require(c > 0.0 && R > 0.0, ErrorCode::precondition,
          "special-case potential needs c > 0 and R > 0");
  const double a = 0.5 * R;
  auto b = [c, a, R](double r) {
    if (r <= a) return 0.0;
    return smoothstep((r - a) / (R - a)) * (c + 1.0 / r);
  };
  using Quadrature = boost::math::quadrature::gauss<double, 30>;
  auto blend_integral = [b, a](double r) {
    return r <= a ? 0.0 : Quadrature::integrate(b, a, r);
  };
  const double phi_R = blend_integral(R);
  auto phi_r = [=](double r) {
    if (r >= R) return phi_R + c * (r - R) + std::log(r / R);
    return blend_integral(r);
  };

  Potential p;
  p.name = "special_case";
  p.radial_profile = b;
  p.radial_phi = phi_r;
  p.phi = [phi_r](const Eigen::Vector2d& x) { return phi_r(x.norm()); };
  p.grad_phi = [b](const Eigen::Vector2d& x) -> Eigen::Vector2d {
    const double r = x.norm();
    if (r == 0.0) return Eigen::Vector2d::Zero();
    return b(r) / r * x;
  };
  p.assumption_a = AssumptionA{R, c};
  p.note = "b(r) = c + 1/r for r >= R, blended to 0 on [R/2, R]";
  return p;
}

Potential zero() {
  Potential p;
  p.name = "zero";
  p.phi = [](const Eigen::Vector2d&) { return 0.0; };
  p.grad_phi = [](const Eigen::Vector2d&) -> Eigen::Vector2d {
    return Eigen::Vector2d::Zero();
  };
  p.radial_profile = [](double) { return 0.0; };
  p.radial_phi = [](double) { return 0.0; };
  p.note = "drift-free reference process; exp(-phi) is not integrable";
  return p;
}

}  // namespace potentials

std::vector<Potential> builtin_potentials() {
  return {potentials::quadratic(), potentials::smoothed_norm(),
          potentials::special_case(), potentials::zero()};
}

Potential make_potential(const std::string& name, double scale, double c,
                         double R) {
  if (name == "quadratic") return potentials::quadratic(scale);
  if (name == "smoothed_norm") return potentials::smoothed_norm();
  if (name == "special_case") return potentials::special_case(c, R);
  if (name == "zero") return potentials::zero();
  throw Error(ErrorCode::config, "unknown potential '" + name + "'");
}

}  // namespace fiberlay
