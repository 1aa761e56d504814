#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/error.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/random.hpp"

namespace hierreconc {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

class Poisson {
 public:
  explicit Poisson(double lambda) : lambda_(lambda) {
    detail::require(std::isfinite(lambda) && lambda > 0.0, ErrorCode::kInvalidParameter,
                    "Poisson rate must be positive, got " + std::to_string(lambda));
  }
  [[nodiscard]] double lambda() const noexcept { return lambda_; }

 private:
  double lambda_;
};

/// Negative binomial in the mean/dispersion form: E = mu, Var = mu + alpha mu^2.
/// alpha = 0 is the Poisson(mu) limit. The size/prob form has size = 1/alpha
/// and prob = 1/(1 + alpha mu).
class NegativeBinomial {
 public:
  NegativeBinomial(double mu, double alpha) : mu_(mu), alpha_(alpha) {
    detail::require(std::isfinite(mu) && mu > 0.0, ErrorCode::kInvalidParameter,
                    "negative binomial mean must be positive, got " + std::to_string(mu));
    detail::require(std::isfinite(alpha) && alpha >= 0.0, ErrorCode::kInvalidParameter,
                    "negative binomial dispersion must be non-negative, got " + std::to_string(alpha));
  }
  [[nodiscard]] double mu() const noexcept { return mu_; }
  [[nodiscard]] double alpha() const noexcept { return alpha_; }

 private:
  double mu_;
  double alpha_;
};

class Bernoulli {
 public:
  explicit Bernoulli(double p) : p_(p) {
    detail::require(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidParameter,
                    "Bernoulli probability must lie in [0, 1], got " + std::to_string(p));
  }
  [[nodiscard]] double p() const noexcept { return p_; }

 private:
  double p_;
};

/// Finite pmf over an explicit integer support, stored sorted by value.
class TabulatedPmf {
 public:
  TabulatedPmf(std::vector<std::int64_t> support, std::vector<double> probs) {
    detail::require(!support.empty() && support.size() == probs.size(), ErrorCode::kInvalidParameter,
                    "tabulated pmf needs equally many (>0) support points and probabilities");
    double total = 0.0;
    for (double p : probs) {
      detail::require(std::isfinite(p) && p >= 0.0, ErrorCode::kInvalidParameter,
                      "tabulated probabilities must be non-negative");
      total += p;
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, ErrorCode::kInvalidParameter,
                    "tabulated probabilities sum to " + std::to_string(total) + ", expected 1");
    std::vector<std::size_t> order(support.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return support[a] < support[b]; });
    support_.reserve(order.size());
    probs_.reserve(order.size());
    for (std::size_t idx : order) {
      detail::require(support_.empty() || support_.back() != support[idx], ErrorCode::kInvalidParameter,
                      "tabulated support has duplicate value " + std::to_string(support[idx]));
      support_.push_back(support[idx]);
      probs_.push_back(probs[idx]);
    }
  }

  /// pmf on {0, 1, ..., probs.size() - 1}.
  static TabulatedPmf on_range(std::vector<double> probs) {
    std::vector<std::int64_t> support(probs.size());
    std::iota(support.begin(), support.end(), std::int64_t{0});
    return {std::move(support), std::move(probs)};
  }

  [[nodiscard]] const std::vector<std::int64_t>& support() const noexcept { return support_; }
  [[nodiscard]] const std::vector<double>& probs() const noexcept { return probs_; }

  [[nodiscard]] double at(std::int64_t k) const {
    auto it = std::lower_bound(support_.begin(), support_.end(), k);
    if (it == support_.end() || *it != k) {
      return 0.0;
    }
    return probs_[static_cast<std::size_t>(it - support_.begin())];
  }

 private:
  std::vector<std::int64_t> support_;
  std::vector<double> probs_;
};

using CountDistribution = std::variant<Poisson, NegativeBinomial, Bernoulli, TabulatedPmf>;

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline double poisson_log_pmf(double lambda, std::int64_t k) {
  const auto kd = static_cast<double>(k);
  return kd * std::log(lambda) - lambda - std::lgamma(kd + 1.0);
}

}  // namespace detail

/// log P(X = k); -infinity outside the support (including k < 0).
inline double log_pmf(const CountDistribution& dist, std::int64_t k) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  return std::visit(
      detail::overloaded{
          [&](const Poisson& d) { return k < 0 ? kNegInf : detail::poisson_log_pmf(d.lambda(), k); },
          [&](const NegativeBinomial& d) {
            if (k < 0) {
              return kNegInf;
            }
            if (d.alpha() == 0.0) {
              return detail::poisson_log_pmf(d.mu(), k);
            }
            const double size = 1.0 / d.alpha();
            const double am = d.alpha() * d.mu();
            const auto kd = static_cast<double>(k);
            return std::lgamma(kd + size) - std::lgamma(size) - std::lgamma(kd + 1.0) -
                   size * std::log1p(am) + kd * (std::log(am) - std::log1p(am));
          },
          [&](const Bernoulli& d) {
            if (k == 0) {
              return std::log1p(-d.p());
            }
            if (k == 1) {
              return std::log(d.p());
            }
            return kNegInf;
          },
          [&](const TabulatedPmf& d) {
            const double p = d.at(k);
            return p > 0.0 ? std::log(p) : kNegInf;
          },
      },
      dist);
}

inline double pmf(const CountDistribution& dist, std::int64_t k) {
  if (const auto* b = std::get_if<Bernoulli>(&dist)) {
    return k == 0 ? 1.0 - b->p() : (k == 1 ? b->p() : 0.0);
  }
  if (const auto* t = std::get_if<TabulatedPmf>(&dist)) {
    return t->at(k);
  }
  return std::exp(log_pmf(dist, k));
}

inline Moments mean_var(const CountDistribution& dist) {
  return std::visit(
      detail::overloaded{
          [](const Poisson& d) { return Moments{d.lambda(), d.lambda()}; },
          [](const NegativeBinomial& d) {
            return Moments{d.mu(), d.mu() + d.alpha() * d.mu() * d.mu()};
          },
          [](const Bernoulli& d) { return Moments{d.p(), d.p() * (1.0 - d.p())}; },
          [](const TabulatedPmf& d) {
            double mean = 0.0;
            for (std::size_t i = 0; i < d.support().size(); ++i) {
              mean += d.probs()[i] * static_cast<double>(d.support()[i]);
            }
            double var = 0.0;
            for (std::size_t i = 0; i < d.support().size(); ++i) {
              const double dev = static_cast<double>(d.support()[i]) - mean;
              var += d.probs()[i] * dev * dev;
            }
            return Moments{mean, var};
          },
      },
      dist);
}

/// True for families with finitely many support points.
inline bool has_finite_support(const CountDistribution& dist) {
  return std::holds_alternative<Bernoulli>(dist) || std::holds_alternative<TabulatedPmf>(dist);
}

/// Support points of a count distribution, truncated for unbounded families.
struct TruncatedSupport {
  std::vector<std::int64_t> values;
  std::vector<double> probs;
  /// Probability mass outside `values` (0 for finite supports).
  double tail_mass = 0.0;
  /// Set when the cap was hit before the tail dropped below the tolerance.
  bool truncation_warning = false;
};

inline constexpr std::int64_t kSupportCap = 10000;

/// Extends the support from 0 until the remaining tail mass is below
/// `tail_tol`, keeping at most `cap` points.
inline TruncatedSupport truncate_support(const CountDistribution& dist, double tail_tol,
                                         std::int64_t cap = kSupportCap) {
  detail::require(tail_tol > 0.0 && tail_tol < 1.0, ErrorCode::kInvalidParameter,
                  "tail tolerance must lie in (0, 1)");
  TruncatedSupport out;
  if (const auto* b = std::get_if<Bernoulli>(&dist)) {
    out.values = {0, 1};
    out.probs = {1.0 - b->p(), b->p()};
    return out;
  }
  if (const auto* t = std::get_if<TabulatedPmf>(&dist)) {
    out.values = t->support();
    out.probs = t->probs();
    return out;
  }
  const double mean = mean_var(dist).mean;
  double cdf = 0.0;
  for (std::int64_t k = 0;; ++k) {
    const double p = pmf(dist, k);
    out.values.push_back(k);
    out.probs.push_back(p);
    cdf += p;
    const double tail = std::max(0.0, 1.0 - cdf);
    if (static_cast<double>(k) >= mean && tail < tail_tol) {
      out.tail_mass = tail;
      break;
    }
    if (k + 1 >= cap) {
      out.tail_mass = tail;
      out.truncation_warning = true;
      break;
    }
  }
  return out;
}

/// Inverse-CDF sampler for a count distribution. The table is built once;
/// draws beyond it extend the cdf term by term, so sampling is exact.
class CountSampler {
 public:
  explicit CountSampler(CountDistribution dist) : dist_(std::move(dist)) {
    const auto table = truncate_support(dist_, 1e-12);
    values_ = table.values;
    cdf_.resize(table.probs.size());
    std::partial_sum(table.probs.begin(), table.probs.end(), cdf_.begin());
    if (has_finite_support(dist_)) {
      cdf_.back() = 1.0;
    }
  }

  std::int64_t operator()(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it != cdf_.end()) {
      return values_[static_cast<std::size_t>(it - cdf_.begin())];
    }
    // Far tail: keep accumulating past the table.
    double cdf = cdf_.back();
    std::int64_t k = values_.back();
    const double mean = mean_var(dist_).mean;
    while (cdf <= u) {
      ++k;
      const double p = pmf(dist_, k);
      if (p == 0.0 && static_cast<double>(k) > mean) {
        break;
      }
      cdf += p;
    }
    return k;
  }

  [[nodiscard]] const CountDistribution& distribution() const noexcept { return dist_; }

 private:
  CountDistribution dist_;
  std::vector<std::int64_t> values_;
  std::vector<double> cdf_;
};

inline std::vector<std::int64_t> sample(const CountDistribution& dist, Rng& rng, std::size_t count) {
  detail::require(count >= 1, ErrorCode::kInvalidParameter, "sample count must be at least 1");
  const CountSampler sampler(dist);
  std::vector<std::int64_t> out(count);
  for (auto& x : out) {
    x = sampler(rng);
  }
  return out;
}

/// Jointly Gaussian forecast. The covariance must be symmetric; positive
/// semi-definiteness is checked where a factorization is needed.
class MultivariateGaussian {
 public:
  MultivariateGaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov)
      : mean_(std::move(mean)), cov_(std::move(cov)) {
    detail::require(mean_.size() > 0, ErrorCode::kInvalidParameter, "Gaussian mean is empty");
    detail::require(cov_.rows() == mean_.size() && cov_.cols() == mean_.size(),
                    ErrorCode::kDimensionMismatch, "Gaussian covariance shape does not match the mean");
    detail::require(mean_.allFinite() && cov_.allFinite(), ErrorCode::kInvalidParameter,
                    "Gaussian parameters must be finite");
    const double scale = cov_.cwiseAbs().maxCoeff();
    detail::require((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
                    ErrorCode::kInvalidParameter, "Gaussian covariance is not symmetric");
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return mean_.size(); }
  [[nodiscard]] const Eigen::VectorXd& mean() const noexcept { return mean_; }
  [[nodiscard]] const Eigen::MatrixXd& cov() const noexcept { return cov_; }

  /// True if every eigenvalue is >= -1e-10 * trace.
  [[nodiscard]] bool is_psd() const {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() >= -1e-10 * std::abs(cov_.trace());
  }

  /// Log density; requires a positive-definite covariance.
  [[nodiscard]] double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    detail::require(x.size() == dim(), ErrorCode::kDimensionMismatch, "point dimension mismatch");
    const Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    detail::require(llt.info() == Eigen::Success, ErrorCode::kFactorizationFailure,
                    "Gaussian covariance is not positive definite");
    const Eigen::VectorXd z = llt.matrixL().solve(x - mean_);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    constexpr double kLog2Pi = 1.8378770664093454836;
    return -0.5 * (static_cast<double>(dim()) * kLog2Pi + log_det + z.squaredNorm());
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
};

/// Draws from a MultivariateGaussian through a symmetric eigen factorization,
/// which also handles singular (PSD) covariances.
class GaussianSampler {
 public:
  explicit GaussianSampler(const MultivariateGaussian& dist) : mean_(dist.mean()) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(dist.cov());
    detail::require(eig.info() == Eigen::Success, ErrorCode::kFactorizationFailure,
                    "eigen decomposition of the covariance failed");
    const double floor = -1e-10 * std::abs(dist.cov().trace());
    detail::require(eig.eigenvalues().minCoeff() >= floor, ErrorCode::kFactorizationFailure,
                    "covariance is not positive semi-definite");
    factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  template <class Out>
  void draw(Rng& rng, Out&& out) const {
    Eigen::VectorXd z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = rng.normal();
    }
    out = mean_ + factor_ * z;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd factor_;
};

/// count x dim matrix of i.i.d. draws.
inline Eigen::MatrixXd sample(const MultivariateGaussian& dist, Rng& rng, std::size_t count) {
  detail::require(count >= 1, ErrorCode::kInvalidParameter, "sample count must be at least 1");
  const GaussianSampler sampler(dist);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), dist.dim());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    sampler.draw(rng, out.row(i).transpose());
  }
  return out;
}

/// Base forecast for one block of the hierarchy: independent count marginals
/// or one joint Gaussian.
using BlockForecast = std::variant<std::vector<CountDistribution>, MultivariateGaussian>;

inline Eigen::Index block_size(const BlockForecast& block) {
  return std::visit(
      detail::overloaded{
          [](const std::vector<CountDistribution>& v) { return static_cast<Eigen::Index>(v.size()); },
          [](const MultivariateGaussian& g) { return g.dim(); },
      },
      block);
}

inline bool is_discrete(const BlockForecast& block) {
  return std::holds_alternative<std::vector<CountDistribution>>(block);
}

/// Base forecasts for the whole hierarchy.
struct HierForecast {
  BlockForecast upper;
  BlockForecast bottom;
  /// Upper and bottom base forecasts are independent.
  bool independent = true;

  void validate(const Hierarchy& h) const {
    detail::require(block_size(upper) == h.upper_count(), ErrorCode::kDimensionMismatch,
                    "forecast has " + std::to_string(block_size(upper)) + " upper variables, hierarchy has " +
                        std::to_string(h.upper_count()));
    detail::require(block_size(bottom) == h.m(), ErrorCode::kDimensionMismatch,
                    "forecast has " + std::to_string(block_size(bottom)) +
                        " bottom variables, hierarchy has " + std::to_string(h.m()));
  }

  [[nodiscard]] bool discrete() const { return is_discrete(upper) && is_discrete(bottom); }

  /// Base means of the upper block.
  [[nodiscard]] Eigen::VectorXd upper_mean() const { return block_mean(upper); }
  /// Base means of the bottom block.
  [[nodiscard]] Eigen::VectorXd bottom_mean() const { return block_mean(bottom); }

  static Eigen::VectorXd block_mean(const BlockForecast& block) {
    return std::visit(detail::overloaded{
                          [](const std::vector<CountDistribution>& v) {
                            Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
                            for (std::size_t i = 0; i < v.size(); ++i) {
                              out[static_cast<Eigen::Index>(i)] = mean_var(v[i]).mean;
                            }
                            return out;
                          },
                          [](const MultivariateGaussian& g) { return Eigen::VectorXd(g.mean()); },
                      },
                      block);
  }
};

}  // namespace hierreconc
