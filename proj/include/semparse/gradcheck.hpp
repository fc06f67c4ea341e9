#pragma once

#include <functional>
#include <span>

#include "semparse/nn.hpp"
#include "semparse/rng.hpp"

namespace semparse::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  int probes = 0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
/// Entries whose true gradient is below the central-difference noise level
/// would otherwise report meaningless ratios.
inline constexpr double kGradCheckFloor = 1e-6;

/// Compares the analytic gradients already stored in each Parameter::grad
/// against central differences (f(θ+h) - f(θ-h)) / 2h of `loss` at `probes`
/// entries. Each probe picks a parameter uniformly, then an entry uniformly.
/// `loss` must be deterministic; values are restored after every probe. It
/// returns long double so that a loss evaluated in extended precision keeps
/// the difference quotient above rounding noise; the step is the exact
/// distance between the two perturbed double values.
GradCheckResult finite_difference_check(const std::function<long double()>& loss,
                                        std::span<Parameter* const> params,
                                        int probes, double h, Rng& rng);

}  // namespace semparse::nn
