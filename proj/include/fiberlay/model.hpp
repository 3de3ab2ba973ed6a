#pragma once

#include <Eigen/Core>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "fiberlay/error.hpp"

namespace fiberlay {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduces an angle into [0, 2π).
double reduce_angle(double a);

/// Signed difference b − a wrapped into (−π, π].
double angle_difference(double a, double b);

/// τ(α) = (cos α, sin α).
inline Eigen::Vector2d tangent(double alpha) {
  return {std::cos(alpha), std::sin(alpha)};
}

/// τ(α)^⊥ = (−sin α, cos α).
inline Eigen::Vector2d tangent_perp(double alpha) {
  return {-std::sin(alpha), std::cos(alpha)};
}

/// Position on the belt plus fiber angle on the circle.
struct FullState {
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();
  double alpha = 0.0;

  FullState() = default;
  FullState(const Eigen::Vector2d& position, double angle)
      : xi(position), alpha(reduce_angle(angle)) {}
  FullState(double x1, double x2, double angle)
      : FullState(Eigen::Vector2d(x1, x2), angle) {}
};

/// Radial reduction: ξ = r(cos ψ, sin ψ), β = α − ψ.
struct PolarState {
  double r = 1.0;
  double beta = 0.0;
  double psi = 0.0;
};

/// Below this radius the polar chart is treated as degenerate.
inline constexpr double kMinRadius = 1e-6;

PolarState to_polar(const FullState& s);
FullState to_cartesian(const PolarState& p);

struct AssumptionA {
  double R = 0.0;
  double c = 0.0;
};

using RadialProfile = std::function<double(double)>;

/// A C² confining potential φ on the plane. Eventually radial potentials also
/// carry their radial profile b(r) = φ'(r), valid for r ≥ eventual_radius.
struct Potential {
  std::string name;
  std::function<double(const Eigen::Vector2d&)> phi;
  std::function<Eigen::Vector2d(const Eigen::Vector2d&)> grad_phi;
  RadialProfile radial_profile;
  // φ as a function of the radius, valid where radial_profile is.
  std::function<double(double)> radial_phi;
  double eventual_radius = 0.0;
  std::optional<AssumptionA> assumption_a;
  std::string note;

  bool eventually_radial() const { return static_cast<bool>(radial_profile); }
  bool radial_everywhere() const {
    return eventually_radial() && radial_phi && eventual_radius == 0.0;
  }
};

struct AssumptionACheck {
  double c = 0.0;
  // b(r) − 1/r nondecreasing along the grid.
  bool monotone = false;
  // Derivative of b(r) − 1/r at r_hi is nonnegative, so the grid infimum is
  // not undercut just beyond the window.
  bool endpoint_nondecreasing = false;
};

/// Grid infimum of b(r) − 1/r over [R, r_hi]; empty when the infimum is not
/// positive.
std::optional<AssumptionACheck> check_assumption_a(const Potential& pot,
                                                   double R, double r_hi,
                                                   int grid_n);

namespace potentials {

/// φ = k|ξ|², b(r) = 2kr.
Potential quadratic(double scale = 1.0);

/// φ = √(1 + |ξ|²): C² stand-in for |ξ|. Satisfies Assumption A only for
/// R above the golden-ratio root r* = √φ_golden ≈ 1.272.
Potential smoothed_norm();

/// b(r) = c + 1/r for r ≥ R, blended to zero on [R/2, R] with a quintic
/// smoothstep so φ is C² and constant near the origin.
Potential special_case(double c = 1.0, double R = 1.0);

/// Radius below which b(r) − 1/r is not positive for the smoothed norm.
double smoothed_norm_threshold();

/// φ ≡ 0 (drift-free process; not normalizable).
Potential zero();

}  // namespace potentials

/// Every built-in potential with default parameters.
std::vector<Potential> builtin_potentials();

/// Looks up a built-in potential by name. Parameters not used by the named
/// potential are ignored. Throws Error(config) for an unknown name.
Potential make_potential(const std::string& name, double scale, double c,
                         double R);

}  // namespace fiberlay
