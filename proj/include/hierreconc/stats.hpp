#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hierreconc/error.hpp"

namespace hierreconc {

/// Inverse empirical CDF: the smallest x with F_n(x) >= p, i.e. the
/// ceil(n p)-th order statistic (the first one for p = 0). Ties resolve to
/// the lower value, so the median of {0, 0, 0, 1, 2} is 0.
inline double empirical_quantile(std::vector<double> values, double p) {
  detail::require(!values.empty(), ErrorCode::kEmptySamples, "quantile of an empty sample");
  detail::require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidParameter, "quantile level must lie in [0, 1]");
  const auto n = static_cast<double>(values.size());
  // The slack keeps levels such as 0.95 * 100 from rounding up a rank.
  auto rank = static_cast<std::size_t>(std::ceil(n * p - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

/// Several quantiles of one sample, sorting once.
inline std::vector<double> empirical_quantiles(std::vector<double> values, const std::vector<double>& levels) {
  detail::require(!values.empty(), ErrorCode::kEmptySamples, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  std::vector<double> out;
  out.reserve(levels.size());
  for (double p : levels) {
    detail::require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidParameter, "quantile level must lie in [0, 1]");
    auto rank = static_cast<std::size_t>(std::ceil(n * p - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    out.push_back(values[rank - 1]);
  }
  return out;
}

/// Same convention for a finite pmf given as sorted (value, prob) pairs.
inline double pmf_quantile(const std::vector<double>& values, const std::vector<double>& probs, double p) {
  detail::require(!values.empty() && values.size() == probs.size(), ErrorCode::kEmptySamples,
                  "quantile of an empty pmf");
  double cdf = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    cdf += probs[i];
    if (probs[i] > 0.0 && cdf >= p - 1e-12) {
      return values[i];
    }
  }
  return values.back();
}

/// Standard normal quantile: bisection on erfc in the lower half, symmetry
/// above the median.
inline double normal_quantile(double p) {
  detail::require(p > 0.0 && p < 1.0, ErrorCode::kInvalidParameter, "normal quantile level must lie in (0, 1)");
  if (p > 0.5) {
    return -normal_quantile(1.0 - p);
  }
  constexpr double kSqrt2 = 1.41421356237309504880;
  double lo = -40.0;
  double hi = 0.0;
  for (int iter = 0; iter < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / kSqrt2) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace hierreconc
