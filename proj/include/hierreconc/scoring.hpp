#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/error.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/stats.hpp"

namespace hierreconc {

/// Estimator of E||s - s'||^beta in the energy score.
enum class EnergyPairing {
  /// Disjoint consecutive pairs (s_0, s_1), (s_2, s_3), ...
  kConsecutive,
  /// All ordered pairs i != j. O(N^2) unless beta = 2.
  kAllPairs,
};

/// Sampling estimate of ES(P, y) = E||y - s||^beta - 1/2 E||s - s'||^beta
/// from an N x n matrix of draws of P.
inline double energy_score(const Eigen::MatrixXd& samples, const Eigen::VectorXd& y, double beta = 2.0,
                           EnergyPairing pairing = EnergyPairing::kConsecutive) {
  detail::require(samples.rows() >= 2, ErrorCode::kInsufficientSamples, "energy score needs at least two draws");
  detail::require(samples.cols() == y.size(), ErrorCode::kDimensionMismatch,
                  "observation length does not match the draws");
  detail::require(beta > 0.0 && beta <= 2.0, ErrorCode::kInvalidParameter, "energy score exponent must lie in (0, 2]");
  const auto power = [beta](double squared_norm) {
    return beta == 2.0 ? squared_norm : std::pow(squared_norm, 0.5 * beta);
  };
  const Eigen::Index n = samples.rows();

  double first = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    first += power((samples.row(i).transpose() - y).squaredNorm());
  }
  first /= static_cast<double>(n);

  double second = 0.0;
  if (pairing == EnergyPairing::kConsecutive) {
    const Eigen::Index pairs = n / 2;
    for (Eigen::Index k = 0; k < pairs; ++k) {
      second += power((samples.row(2 * k) - samples.row(2 * k + 1)).squaredNorm());
    }
    second /= static_cast<double>(pairs);
  } else if (beta == 2.0) {
    // mean over i != j of ||s_i - s_j||^2 = 2 N / (N - 1) * sum of column variances
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const double ss = (samples.rowwise() - mean).squaredNorm() / static_cast<double>(n);
    second = 2.0 * static_cast<double>(n) / static_cast<double>(n - 1) * ss;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        second += power((samples.row(i) - samples.row(j)).squaredNorm());
      }
    }
    second /= 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  }
  return first - 0.5 * second;
}

/// IS_alpha(l, u; y): width plus 2/alpha times the miss distance.
inline double interval_score(double lower, double upper, double y, double alpha) {
  detail::require(lower <= upper, ErrorCode::kInvertedInterval, "interval lower bound exceeds upper bound");
  detail::require(alpha > 0.0 && alpha < 1.0, ErrorCode::kInvalidParameter, "interval level alpha must lie in (0, 1)");
  double score = upper - lower;
  if (y < lower) {
    score += 2.0 / alpha * (lower - y);
  } else if (y > upper) {
    score += 2.0 / alpha * (y - upper);
  }
  return score;
}

struct PointErrors {
  double se = 0.0;
  double ae = 0.0;
  /// SE-optimal point forecast.
  double mean = 0.0;
  /// AE-optimal point forecast (lower median).
  double median = 0.0;
};

inline PointErrors point_errors(const std::vector<double>& samples, double y) {
  detail::require(!samples.empty(), ErrorCode::kEmptySamples, "no samples for point errors");
  PointErrors out;
  double sum = 0.0;
  for (double s : samples) {
    sum += s;
  }
  out.mean = sum / static_cast<double>(samples.size());
  out.median = empirical_quantile(samples, 0.5);
  out.se = (y - out.mean) * (y - out.mean);
  out.ae = std::abs(y - out.median);
  return out;
}

/// (base - reconc) / ((base + reconc) / 2); positive when reconciliation
/// helps, bounded in [-2, 2], 0 when both metrics are 0.
inline double skill_score(double metric_base, double metric_reconc) {
  detail::require(metric_base >= 0.0 && metric_reconc >= 0.0, ErrorCode::kNegativeMetric,
                  "skill score needs non-negative metrics");
  const double denom = 0.5 * (metric_base + metric_reconc);
  if (denom == 0.0) {
    return 0.0;
  }
  return (metric_base - metric_reconc) / denom;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  [[nodiscard]] double width() const { return upper - lower; }
  [[nodiscard]] bool covers(double y) const { return lower <= y && y <= upper; }
};

/// Central interval from the (1-level)/2 and (1+level)/2 empirical quantiles.
inline Interval interval_from_samples(const std::vector<double>& samples, double level = 0.9) {
  detail::require(!samples.empty(), ErrorCode::kEmptySamples, "no samples for an interval");
  detail::require(level > 0.0 && level < 1.0, ErrorCode::kInvalidParameter, "interval level must lie in (0, 1)");
  const double tail = 0.5 * (1.0 - level);
  const auto q = empirical_quantiles(samples, {tail, 1.0 - tail});
  return {q[0], q[1]};
}

/// Fraction of observations inside their intervals.
inline double coverage(const std::vector<Interval>& intervals, const std::vector<double>& ys) {
  detail::require(!intervals.empty() && intervals.size() == ys.size(), ErrorCode::kDimensionMismatch,
                  "coverage needs one observation per interval");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    hits += intervals[i].covers(ys[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(ys.size());
}

/// Bottom medians of the reconciled draws, uppers as their aggregate.
/// `bottom_samples` is N x m.
inline Eigen::VectorXd coherent_point_forecast(const Hierarchy& h, const Eigen::MatrixXd& bottom_samples) {
  detail::require(bottom_samples.rows() > 0, ErrorCode::kEmptySamples, "no reconciled samples");
  detail::require(bottom_samples.cols() == h.m(), ErrorCode::kDimensionMismatch,
                  "reconciled samples do not match the bottom level");
  Eigen::VectorXd medians(h.m());
  for (Eigen::Index j = 0; j < h.m(); ++j) {
    const auto col = bottom_samples.col(j);
    medians[j] = empirical_quantile(std::vector<double>(col.data(), col.data() + col.size()), 0.5);
  }
  return h.complete(medians);
}

/// Scores of a base and a reconciled forecast for one time step.
struct ScoreReport {
  double es_base = 0.0;
  double es_reconc = 0.0;
  /// Per series, hierarchy order.
  std::vector<double> is_base, is_reconc;
  std::vector<double> se_base, se_reconc;
  std::vector<double> ae_base, ae_reconc;
  std::vector<Interval> interval_base, interval_reconc;
  std::vector<bool> covered_base, covered_reconc;
};

/// Scores both forecasts, given as N x n draws, against observation y.
inline ScoreReport score_step(const Eigen::MatrixXd& base_draws, const Eigen::MatrixXd& reconc_draws,
                              const Eigen::VectorXd& y, double alpha) {
  detail::require(base_draws.cols() == y.size() && reconc_draws.cols() == y.size(), ErrorCode::kDimensionMismatch,
                  "draws and observation differ in length");
  ScoreReport r;
  r.es_base = energy_score(base_draws, y);
  r.es_reconc = energy_score(reconc_draws, y);
  const auto per_series = [&](const Eigen::MatrixXd& draws, std::vector<double>& is, std::vector<double>& se,
                              std::vector<double>& ae, std::vector<Interval>& iv, std::vector<bool>& cov) {
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      const auto col = draws.col(j);
      const std::vector<double> values(col.data(), col.data() + col.size());
      const auto interval = interval_from_samples(values, 1.0 - alpha);
      const auto errors = point_errors(values, y[j]);
      is.push_back(interval_score(interval.lower, interval.upper, y[j], alpha));
      se.push_back(errors.se);
      ae.push_back(errors.ae);
      iv.push_back(interval);
      cov.push_back(interval.covers(y[j]));
    }
  };
  per_series(base_draws, r.is_base, r.se_base, r.ae_base, r.interval_base, r.covered_base);
  per_series(reconc_draws, r.is_reconc, r.se_reconc, r.ae_reconc, r.interval_reconc, r.covered_reconc);
  return r;
}

}  // namespace hierreconc
