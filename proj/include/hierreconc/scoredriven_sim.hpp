#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/csv.hpp"
#include "hierreconc/distributions.hpp"
#include "hierreconc/error.hpp"
#include "hierreconc/random.hpp"

namespace hierreconc {

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Log-location recursion of a k-variate negative binomial model:
///   log mu_{t+1} = C + D log mu_t + E (y_t - mu_t) / (alpha mu_t + 1),
/// with the score scaled elementwise.
struct ScoreDrivenParams {
  Eigen::VectorXd c;
  Eigen::MatrixXd d;
  Eigen::MatrixXd e;
  Eigen::VectorXd alpha;
  Eigen::VectorXd mu0;

  [[nodiscard]] Eigen::Index k() const noexcept { return c.size(); }

  void validate() const {
    const Eigen::Index n = k();
    detail::require(n >= 1, ErrorCode::kInvalidParameter, "score-driven model needs at least one series");
    detail::require(d.rows() == n && d.cols() == n && e.rows() == n && e.cols() == n && alpha.size() == n &&
                        mu0.size() == n,
                    ErrorCode::kDimensionMismatch, "score-driven parameter shapes disagree");
    detail::require(c.allFinite() && d.allFinite() && e.allFinite() && alpha.allFinite() && mu0.allFinite(),
                    ErrorCode::kInvalidParameter, "score-driven parameters must be finite");
    detail::require((alpha.array() >= 0.0).all(), ErrorCode::kInvalidParameter, "dispersions must be non-negative");
    detail::require((mu0.array() > 0.0).all(), ErrorCode::kInvalidParameter, "initial locations must be positive");
    const Eigen::EigenSolver<Eigen::MatrixXd> eig(d, false);
    const double radius = eig.eigenvalues().cwiseAbs().maxCoeff();
    detail::require(radius < 1.0, ErrorCode::kInvalidParameter,
                    "autoregressive matrix has spectral radius " + std::to_string(radius) + " >= 1");
  }
};

inline constexpr double kLogLocationBound = 50.0;

/// One step of the location recursion.
inline Eigen::VectorXd step_mu(const ScoreDrivenParams& params, const Eigen::VectorXd& mu_t,
                               const Eigen::VectorXd& y_t) {
  detail::require(mu_t.size() == params.k() && y_t.size() == params.k(), ErrorCode::kDimensionMismatch,
                  "location or count vector has the wrong length");
  detail::require((mu_t.array() > 0.0).all(), ErrorCode::kInvalidParameter, "locations must be positive");
  const Eigen::ArrayXd score = (y_t - mu_t).array() / (params.alpha.array() * mu_t.array() + 1.0);
  const Eigen::VectorXd log_next = params.c + params.d * mu_t.array().log().matrix() + params.e * score.matrix();
  detail::require(log_next.allFinite() && log_next.cwiseAbs().maxCoeff() <= kLogLocationBound,
                  ErrorCode::kNonFiniteUpdate, "log-location left [-50, 50]");
  return log_next.array().exp().matrix();
}

/// T steps of a simulated panel. Row t holds the count y_t drawn from
/// NB(mu_t, alpha), its location mu_t, and the one-step-ahead forecast
/// location mu_{t+1} computed after observing y_t.
struct SimulatedPanel {
  CountMatrix counts;
  Eigen::MatrixXd mus;
  Eigen::MatrixXd forecast_mus;
  Eigen::VectorXd alpha;

  [[nodiscard]] NegativeBinomial forecast(Eigen::Index t, Eigen::Index series) const {
    return {forecast_mus(t, series), alpha[series]};
  }
};

inline SimulatedPanel simulate_panel(const ScoreDrivenParams& params, Eigen::Index horizon, std::uint64_t seed) {
  params.validate();
  detail::require(horizon >= 1, ErrorCode::kInvalidParameter, "horizon must be at least 1");
  const Eigen::Index k = params.k();
  SimulatedPanel panel;
  panel.counts.resize(horizon, k);
  panel.mus.resize(horizon, k);
  panel.forecast_mus.resize(horizon, k);
  panel.alpha = params.alpha;

  std::vector<Rng> rngs;
  rngs.reserve(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    rngs.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
  }
  Eigen::VectorXd mu = params.mu0;
  Eigen::VectorXd y(k);
  for (Eigen::Index t = 0; t < horizon; ++t) {
    for (Eigen::Index i = 0; i < k; ++i) {
      const CountSampler sampler(NegativeBinomial(mu[i], params.alpha[i]));
      const auto draw = sampler(rngs[static_cast<std::size_t>(i)]);
      panel.counts(t, i) = draw;
      y[i] = static_cast<double>(draw);
    }
    panel.mus.row(t) = mu.transpose();
    mu = step_mu(params, mu, y);
    panel.forecast_mus.row(t) = mu.transpose();
  }
  return panel;
}

/// Average inter-demand interval: length / number of non-zero entries.
inline double adi(const std::vector<std::int64_t>& series) {
  std::size_t nonzero = 0;
  for (auto v : series) {
    nonzero += v != 0 ? 1 : 0;
  }
  detail::require(nonzero > 0, ErrorCode::kAllZeroSeries, "series has no non-zero entry");
  return static_cast<double>(series.size()) / static_cast<double>(nonzero);
}

inline double zero_fraction(const std::vector<std::int64_t>& series) {
  detail::require(!series.empty(), ErrorCode::kEmptySamples, "empty series");
  std::size_t zeros = 0;
  for (auto v : series) {
    zeros += v == 0 ? 1 : 0;
  }
  return static_cast<double>(zeros) / static_cast<double>(series.size());
}

inline std::vector<std::int64_t> column(const CountMatrix& counts, Eigen::Index j) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(counts.rows()));
  for (Eigen::Index t = 0; t < counts.rows(); ++t) {
    out[static_cast<std::size_t>(t)] = counts(t, j);
  }
  return out;
}

/// Location path of a univariate recursion run on an aggregate series.
struct UpperForecastPath {
  /// Location mu_t in force when y_t was observed.
  Eigen::VectorXd mus;
  /// mu_{t+1}, the location of the forecast for step t + 1.
  Eigen::VectorXd forecast_mus;
  double alpha = 0.0;

  [[nodiscard]] NegativeBinomial forecast(Eigen::Index t) const { return {forecast_mus[t], alpha}; }
};

/// Runs the univariate recursion `upper_params` over the row sums of
/// `bottom_counts` (T x k). Parameters are supplied, not fitted.
inline UpperForecastPath aggregate_forecast(const CountMatrix& bottom_counts, const ScoreDrivenParams& upper_params) {
  upper_params.validate();
  detail::require(upper_params.k() == 1, ErrorCode::kDimensionMismatch, "upper model must be univariate");
  detail::require(bottom_counts.cols() >= 1 && bottom_counts.rows() >= 1, ErrorCode::kDimensionMismatch,
                  "need at least one bottom series and one step");
  UpperForecastPath path;
  path.alpha = upper_params.alpha[0];
  path.mus.resize(bottom_counts.rows());
  path.forecast_mus.resize(bottom_counts.rows());
  Eigen::VectorXd mu = upper_params.mu0;
  Eigen::VectorXd y(1);
  for (Eigen::Index t = 0; t < bottom_counts.rows(); ++t) {
    y[0] = static_cast<double>(bottom_counts.row(t).sum());
    path.mus[t] = mu[0];
    mu = step_mu(upper_params, mu, y);
    path.forecast_mus[t] = mu[0];
  }
  return path;
}

/// Columns: t, series, count, mu, forecast_mu, forecast_alpha.
inline void write_panel_csv(std::ostream& os, const SimulatedPanel& panel, const std::vector<std::string>& labels) {
  csv::write_row(os, {"t", "series", "count", "mu", "forecast_mu", "forecast_alpha"});
  for (Eigen::Index t = 0; t < panel.counts.rows(); ++t) {
    for (Eigen::Index i = 0; i < panel.counts.cols(); ++i) {
      csv::write_row(os, {std::to_string(t), labels[static_cast<std::size_t>(i)], std::to_string(panel.counts(t, i)),
                          csv::number(panel.mus(t, i)), csv::number(panel.forecast_mus(t, i)),
                          csv::number(panel.alpha[i])});
    }
  }
}

}  // namespace hierreconc
