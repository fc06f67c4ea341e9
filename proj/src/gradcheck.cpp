#include "semparse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace semparse::nn {

GradCheckResult finite_difference_check(const std::function<long double()>& loss,
                                        std::span<Parameter* const> params,
                                        int probes, double h, Rng& rng) {
  GradCheckResult result;
  if (params.empty()) return result;
  for (int probe = 0; probe < probes; ++probe) {
    Parameter* p = params[rng.below(params.size())];
    if (p->size() == 0) continue;
    const Eigen::Index k = static_cast<Eigen::Index>(rng.below(p->size()));
    double& theta = p->value.data()[k];
    const double saved = theta;
    const double hi = saved + h;
    const double lo = saved - h;
    theta = hi;
    const long double plus = loss();
    theta = lo;
    const long double minus = loss();
    theta = saved;

    const auto numeric = static_cast<double>(
        (plus - minus) / (static_cast<long double>(hi) - static_cast<long double>(lo)));
    const double analytic = p->grad.data()[k];
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++result.probes;
    if (rel > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = std::max(rel, result.max_relative_error);
      result.worst_parameter = p->name;
      result.worst_index = k;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace semparse::nn
