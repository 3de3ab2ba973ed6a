#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fiberlay {

enum class ErrorCode {
  precondition,
  degenerate_radius,
  not_eventually_radial,
  non_finite_drift,
  radius_underflow,
  not_normalizable,
  bin_mismatch,
  fit_underdetermined,
  floor_dominates,
  too_few_events,
  degenerate_fit,
  no_complete_cycle,
  too_few_cycles,
  grid_too_coarse,
  assumption_a_violated,
  lambda_too_large,
  drift_order_violated,
  regime_stall,
  degenerate_target,
  empty_ensemble,
  config,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// command line front end can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace fiberlay
