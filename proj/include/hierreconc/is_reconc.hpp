#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/csv.hpp"
#include "hierreconc/distributions.hpp"
#include "hierreconc/error.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/random.hpp"
#include "hierreconc/stats.hpp"

namespace hierreconc {

enum class Resampling {
  /// N independent draws with replacement (the default).
  kMultinomial,
  /// One uniform offset, N evenly spaced positions.
  kSystematic,
};

inline constexpr std::size_t kDefaultDraws = 100000;
inline constexpr std::size_t kMinDraws = 1000;

struct IsOptions {
  std::size_t n_draws = kDefaultDraws;
  std::uint64_t seed = 0;
  Resampling resampling = Resampling::kMultinomial;
};

/// Stream ids under the reconciliation seed. Bottom variable j uses stream j.
namespace streams {
inline constexpr std::uint64_t kResample = 0xFFFF0001ULL;
inline constexpr std::uint64_t kUpper = 0xFFFF0002ULL;
}  // namespace streams

/// Unweighted draws from the reconciled distribution.
struct ReconciledSamples {
  /// N x m reconciled bottom draws.
  Eigen::MatrixXd bottom;
  /// N x n draws [A b; b], upper columns first.
  Eigen::MatrixXd full;
  /// N x m draws from the base bottom forecast, before weighting.
  Eigen::MatrixXd proposal;
  /// (sum w)^2 / sum w^2 of the importance weights.
  double ess = 0.0;
  /// ess < 0.01 N.
  bool ess_warning = false;
  /// No proposal point had positive weight; all matrices are empty.
  bool weight_sum_zero = false;
  std::size_t n_draws = 0;
  std::uint64_t seed = 0;
  /// Mean unnormalized weight. For a discrete upper forecast this is an
  /// unbiased estimate of P(U = A B) under independent base forecasts.
  double mean_weight = 0.0;
  double mean_weight_std_error = 0.0;
  /// Discrete bottoms, so draws are integer valued and coherence is exact.
  bool integer_valued = false;
};

namespace detail {

/// Draws the N x m proposal from the base bottom forecast.
inline Eigen::MatrixXd draw_bottom(const BlockForecast& bottom, std::size_t n, std::uint64_t seed) {
  if (const auto* counts = std::get_if<std::vector<CountDistribution>>(&bottom)) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(counts->size()));
    for (std::size_t j = 0; j < counts->size(); ++j) {
      Rng rng(derive_seed(seed, j));
      const CountSampler sampler((*counts)[j]);
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out(i, static_cast<Eigen::Index>(j)) = static_cast<double>(sampler(rng));
      }
    }
    return out;
  }
  Rng rng(derive_seed(seed, 0));
  return sample(std::get<MultivariateGaussian>(bottom), rng, n);
}

/// log pi_U(u) for every aggregate in `aggregates`.
inline std::vector<double> upper_log_weights(const BlockForecast& upper, const Eigen::VectorXd& aggregates) {
  std::vector<double> out(static_cast<std::size_t>(aggregates.size()));
  if (const auto* counts = std::get_if<std::vector<CountDistribution>>(&upper)) {
    const CountDistribution& dist = counts->front();
    const auto lo = static_cast<std::int64_t>(aggregates.minCoeff());
    const auto hi = static_cast<std::int64_t>(aggregates.maxCoeff());
    // Aggregates of count draws are small integers; tabulate once.
    std::vector<double> table(static_cast<std::size_t>(hi - lo + 1));
    for (std::int64_t k = lo; k <= hi; ++k) {
      table[static_cast<std::size_t>(k - lo)] = log_pmf(dist, k);
    }
    for (Eigen::Index i = 0; i < aggregates.size(); ++i) {
      out[static_cast<std::size_t>(i)] = table[static_cast<std::size_t>(static_cast<std::int64_t>(aggregates[i]) - lo)];
    }
    return out;
  }
  const auto& gauss = std::get<MultivariateGaussian>(upper);
  const double mean = gauss.mean()[0];
  const double var = gauss.cov()(0, 0);
  require(var > 0.0, ErrorCode::kFactorizationFailure, "upper Gaussian forecast has zero variance");
  constexpr double kLog2Pi = 1.8378770664093454836;
  const double norm = -0.5 * (kLog2Pi + std::log(var));
  for (Eigen::Index i = 0; i < aggregates.size(); ++i) {
    const double d = aggregates[i] - mean;
    out[static_cast<std::size_t>(i)] = norm - 0.5 * d * d / var;
  }
  return out;
}

inline std::vector<std::size_t> resample_indices(const std::vector<double>& weights, std::size_t n,
                                                 Resampling scheme, Rng& rng) {
  std::vector<double> cumulative(weights.size());
  double running = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    running += weights[i];
    cumulative[i] = running;
  }
  const double total = running;
  std::vector<std::size_t> out(n);
  const auto pick = [&](double position) {
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), position);
    if (it == cumulative.end()) {
      --it;
    }
    return static_cast<std::size_t>(it - cumulative.begin());
  };
  if (scheme == Resampling::kSystematic) {
    const double offset = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = pick((static_cast<double>(i) + offset) / static_cast<double>(n) * total);
    }
  } else {
    for (auto& idx : out) {
      idx = pick(rng.uniform() * total);
    }
  }
  return out;
}

inline void check_is_preconditions(const Hierarchy& h, const HierForecast& base, std::size_t n_draws) {
  base.validate(h);
  require(base.independent, ErrorCode::kDependentBlocks,
          "importance sampling needs independent upper and bottom base forecasts");
  require(h.upper_count() == 1, ErrorCode::kMultipleUppersUnsupported,
          "importance sampling reconciles hierarchies with a single upper variable, got " +
              std::to_string(h.upper_count()));
  require(n_draws >= kMinDraws, ErrorCode::kInvalidParameter,
          "importance sampling needs at least " + std::to_string(kMinDraws) + " draws");
  require(!(is_discrete(base.upper) && !is_discrete(base.bottom)), ErrorCode::kContinuousUnsupported,
          "a discrete upper forecast cannot weight continuous bottom draws");
}

}  // namespace detail

/// Importance-sampling reconciliation. Bottom draws from the base forecast
/// are weighted by the upper base pmf (or density) at their aggregate and
/// resampled with replacement. A zero total weight is reported through
/// `weight_sum_zero` instead of an exception.
inline ReconciledSamples try_reconcile_is(const Hierarchy& h, const HierForecast& base, const IsOptions& options) {
  detail::check_is_preconditions(h, base, options.n_draws);
  ReconciledSamples out;
  out.n_draws = options.n_draws;
  out.seed = options.seed;
  out.integer_valued = is_discrete(base.bottom);

  Eigen::MatrixXd proposal = detail::draw_bottom(base.bottom, options.n_draws, options.seed);
  const Eigen::VectorXd aggregates = proposal * h.aggregation_real().row(0).transpose();
  const std::vector<double> log_weights = detail::upper_log_weights(base.upper, aggregates);

  const double max_log = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(max_log)) {
    out.weight_sum_zero = true;
    return out;
  }
  std::vector<double> weights(log_weights.size());
  double total = 0.0;
  double total_sq = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = std::exp(log_weights[i] - max_log);
    total += weights[i];
    total_sq += weights[i] * weights[i];
  }
  const auto n = static_cast<double>(options.n_draws);
  out.ess = total * total / total_sq;
  out.ess_warning = out.ess < 0.01 * n;
  const double scale = std::exp(max_log);
  const double mean_w = total / n;
  const double var_w = std::max(0.0, total_sq / n - mean_w * mean_w);
  out.mean_weight = scale * mean_w;
  out.mean_weight_std_error = scale * std::sqrt(var_w * n / (n - 1.0) / n);

  Rng rng(derive_seed(options.seed, streams::kResample));
  const auto picks = detail::resample_indices(weights, options.n_draws, options.resampling, rng);
  out.bottom.resize(proposal.rows(), proposal.cols());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    out.bottom.row(static_cast<Eigen::Index>(i)) = proposal.row(static_cast<Eigen::Index>(picks[i]));
  }
  out.full.resize(out.bottom.rows(), h.n());
  out.full.leftCols(h.upper_count()) = out.bottom * h.aggregation_real().transpose();
  out.full.rightCols(h.m()) = out.bottom;
  out.proposal = std::move(proposal);
  return out;
}

/// As try_reconcile_is, but a zero total weight raises AllWeightsZero.
inline ReconciledSamples reconcile_is(const Hierarchy& h, const HierForecast& base, const IsOptions& options) {
  auto out = try_reconcile_is(h, base, options);
  detail::require(!out.weight_sum_zero, ErrorCode::kAllWeightsZero,
                  "no bottom draw aggregates to a value the upper forecast supports");
  return out;
}

struct ProbabilityEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo P(U = A B) from joint draws of independent upper and bottom
/// base forecasts, with the binomial standard error.
inline ProbabilityEstimate estimate_pc(const Hierarchy& h, const HierForecast& base, std::size_t n_draws,
                                       std::uint64_t seed) {
  base.validate(h);
  detail::require(base.discrete(), ErrorCode::kContinuousUnsupported,
                  "coherence has probability zero for continuous forecasts");
  detail::require(base.independent, ErrorCode::kDependentBlocks,
                  "coherence estimate needs independent upper and bottom base forecasts");
  detail::require(n_draws >= 1, ErrorCode::kInvalidParameter, "need at least one draw");
  const Eigen::MatrixXd bottom = detail::draw_bottom(base.bottom, n_draws, seed);
  const Eigen::MatrixXd aggregates = bottom * h.aggregation_real().transpose();
  const auto& uppers = std::get<std::vector<CountDistribution>>(base.upper);
  std::vector<bool> coherent(n_draws, true);
  for (std::size_t k = 0; k < uppers.size(); ++k) {
    Rng rng(derive_seed(seed, streams::kUpper + k));
    const CountSampler sampler(uppers[k]);
    for (std::size_t i = 0; i < n_draws; ++i) {
      const auto u = static_cast<double>(sampler(rng));
      coherent[i] = coherent[i] && u == aggregates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
  const auto hits = static_cast<double>(std::count(coherent.begin(), coherent.end(), true));
  const auto n = static_cast<double>(n_draws);
  const double p = hits / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

struct SeriesStats {
  double mean = 0.0;
  double variance = 0.0;
  double median = 0.0;
  /// One entry per requested level.
  std::vector<double> quantiles;
};

/// Per-column summaries of a draws matrix. Variances divide by N; quantiles
/// use the inverse empirical CDF.
inline std::vector<SeriesStats> column_stats(const Eigen::MatrixXd& draws, const std::vector<double>& levels) {
  detail::require(draws.rows() > 0, ErrorCode::kEmptySamples, "no samples to summarize");
  std::vector<SeriesStats> out;
  out.reserve(static_cast<std::size_t>(draws.cols()));
  std::vector<double> all_levels = levels;
  all_levels.push_back(0.5);
  for (Eigen::Index j = 0; j < draws.cols(); ++j) {
    const auto col = draws.col(j);
    SeriesStats s;
    s.mean = col.mean();
    s.variance = (col.array() - s.mean).square().mean();
    std::vector<double> values(col.data(), col.data() + col.size());
    auto q = empirical_quantiles(std::move(values), all_levels);
    s.median = q.back();
    q.pop_back();
    s.quantiles = std::move(q);
    out.push_back(std::move(s));
  }
  return out;
}

/// Per-variable summaries of reconciled draws, in hierarchy order.
inline std::vector<SeriesStats> sample_stats(const ReconciledSamples& s, const std::vector<double>& levels = {0.05, 0.95}) {
  detail::require(s.full.rows() > 0, ErrorCode::kEmptySamples, "reconciled sample is empty");
  return column_stats(s.full, levels);
}

/// One row per draw, one column per hierarchy label.
inline void write_samples_csv(std::ostream& os, const Hierarchy& h, const ReconciledSamples& s) {
  csv::write_row(os, h.labels());
  std::vector<std::string> row(static_cast<std::size_t>(h.n()));
  for (Eigen::Index i = 0; i < s.full.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.full.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = csv::number(s.full(i, j));
    }
    csv::write_row(os, row);
  }
}

}  // namespace hierreconc
