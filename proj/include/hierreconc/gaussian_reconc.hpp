#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "hierreconc/distributions.hpp"
#include "hierreconc/error.hpp"
#include "hierreconc/hierarchy.hpp"

namespace hierreconc {

/// Reconciled Gaussian obtained by conditioning the base forecast on u = A b.
struct GaussianReconciliation {
  Eigen::VectorXd bottom_mean;
  Eigen::MatrixXd bottom_cov;
  Eigen::VectorXd upper_mean;
  Eigen::MatrixXd upper_cov;
  /// Covariance of the incoherence U - A B under the base forecast.
  Eigen::MatrixXd q;
  /// A b_hat - u_hat.
  Eigen::VectorXd incoherence;

  /// The reconciled law over the whole hierarchy, [u; b] ordering.
  [[nodiscard]] MultivariateGaussian joint(const Hierarchy& h) const {
    const Eigen::MatrixXd s = h.summing_matrix();
    Eigen::MatrixXd cov = s * bottom_cov * s.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    return {s * bottom_mean, std::move(cov)};
  }
};

namespace detail {

/// Symmetrizes `m`, then clips small negative eigenvalues. Eigenvalues below
/// -1e-9 * trace are a breakdown.
inline Eigen::MatrixXd repair_psd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  if (sym.size() == 0) {
    return sym;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  require(eig.info() == Eigen::Success, ErrorCode::kNumericalBreakdown,
          std::string("eigen decomposition failed for ") + what);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig >= 0.0) {
    return sym;
  }
  const double trace = std::abs(sym.trace());
  require(min_eig > -1e-9 * trace, ErrorCode::kNumericalBreakdown,
          std::string(what) + " has eigenvalue " + std::to_string(min_eig) + " below tolerance");
  Eigen::MatrixXd clipped = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() *
                            eig.eigenvectors().transpose();
  return 0.5 * (clipped + clipped.transpose());
}

struct GaussianBlocks {
  Eigen::VectorXd upper_mean;
  Eigen::VectorXd bottom_mean;
  Eigen::MatrixXd upper_cov;
  Eigen::MatrixXd bottom_cov;
  /// Cov(U, B), (n - m) x m.
  Eigen::MatrixXd cross_cov;
};

inline GaussianBlocks split_blocks(const Hierarchy& h, const MultivariateGaussian& base) {
  require(base.dim() == h.n(), ErrorCode::kDimensionMismatch,
          "base Gaussian has dimension " + std::to_string(base.dim()) + ", hierarchy has " +
              std::to_string(h.n()) + " variables");
  const Eigen::Index k = h.upper_count();
  const Eigen::Index m = h.m();
  return {base.mean().head(k), base.mean().tail(m), base.cov().topLeftCorner(k, k),
          base.cov().bottomRightCorner(m, m), base.cov().topRightCorner(k, m)};
}

}  // namespace detail

/// Closed-form reconciliation of a joint Gaussian base forecast.
///
/// With Q = Cov(U - A B) and r = A b - u, the bottom mean moves by
/// (S_UB^T - S_B A^T) Q^-1 r and the upper mean by (S_U - S_UB A^T) Q^-1 r;
/// the covariances shrink by the matching quadratic forms. Q^-1 is never
/// formed: every product goes through one Cholesky factorization of Q.
inline GaussianReconciliation reconcile_gaussian(const Hierarchy& h, const MultivariateGaussian& base) {
  const auto blocks = detail::split_blocks(h, base);
  const Eigen::MatrixXd& a = h.aggregation_real();

  const Eigen::MatrixXd cross_a = blocks.cross_cov * a.transpose();  // S_UB A^T
  Eigen::MatrixXd q = blocks.upper_cov - cross_a - cross_a.transpose() +
                      a * blocks.bottom_cov * a.transpose();
  q = 0.5 * (q + q.transpose()).eval();

  const Eigen::LLT<Eigen::MatrixXd> llt(q);
  detail::require(llt.info() == Eigen::Success, ErrorCode::kSingularQ,
                  "covariance of the incoherence U - A B is not positive definite");

  const Eigen::VectorXd incoherence = a * blocks.bottom_mean - blocks.upper_mean;
  const Eigen::MatrixXd gain_bottom = blocks.cross_cov.transpose() - blocks.bottom_cov * a.transpose();
  const Eigen::MatrixXd gain_upper = blocks.upper_cov - cross_a;

  const Eigen::VectorXd shift = llt.solve(incoherence);
  GaussianReconciliation out;
  out.bottom_mean = blocks.bottom_mean + gain_bottom * shift;
  out.upper_mean = blocks.upper_mean + gain_upper * shift;
  out.bottom_cov = detail::repair_psd(
      blocks.bottom_cov - gain_bottom * llt.solve(gain_bottom.transpose()), "reconciled bottom covariance");
  out.upper_cov = detail::repair_psd(
      blocks.upper_cov - gain_upper * llt.solve(gain_upper.transpose()), "reconciled upper covariance");
  out.q = std::move(q);
  out.incoherence = incoherence;
  return out;
}

/// Weights of the single-upper, uncorrelated-blocks case, where the
/// reconciled upper mean is w_base * u_hat + w_bottom_up * (A b_hat).
struct ConvexWeights {
  double w_base = 0.0;
  double w_bottom_up = 0.0;
  /// A S_B A^T.
  double bottom_up_var = 0.0;
  double upper_var = 0.0;
  double reconciled_upper_mean = 0.0;
};

inline ConvexWeights convex_weights_single_upper(const Hierarchy& h, const MultivariateGaussian& base) {
  detail::require(h.upper_count() == 1, ErrorCode::kMultipleUppers,
                  "convex weights need exactly one upper variable, hierarchy has " +
                      std::to_string(h.upper_count()));
  const auto blocks = detail::split_blocks(h, base);
  detail::require(blocks.cross_cov.cwiseAbs().maxCoeff() <= 1e-12, ErrorCode::kCorrelatedBlocks,
                  "upper and bottom base forecasts are correlated");
  const Eigen::RowVectorXd a = h.aggregation_real().row(0);
  ConvexWeights out;
  out.upper_var = blocks.upper_cov(0, 0);
  out.bottom_up_var = a * blocks.bottom_cov * a.transpose();
  const double upper_mean = blocks.upper_mean[0];
  const double bottom_up_mean = a * blocks.bottom_mean;
  const double total = out.upper_var + out.bottom_up_var;
  if (total == 0.0) {
    // Two point masses: only defined when they already agree.
    detail::require(upper_mean == bottom_up_mean, ErrorCode::kDegenerateWeights,
                    "both forecasts are point masses at different values");
    out.w_base = 0.5;
    out.w_bottom_up = 0.5;
    out.reconciled_upper_mean = upper_mean;
    return out;
  }
  out.w_base = out.bottom_up_var / total;
  out.w_bottom_up = 1.0 - out.w_base;
  out.reconciled_upper_mean = out.w_base * upper_mean + out.w_bottom_up * bottom_up_mean;
  return out;
}

/// Probabilistic bottom-up: the law of S B for B ~ bottom.
inline MultivariateGaussian bottom_up_gaussian(const Hierarchy& h, const MultivariateGaussian& bottom) {
  detail::require(bottom.dim() == h.m(), ErrorCode::kDimensionMismatch,
                  "bottom Gaussian has dimension " + std::to_string(bottom.dim()) + ", hierarchy has " +
                      std::to_string(h.m()) + " bottom variables");
  const Eigen::MatrixXd s = h.summing_matrix();
  Eigen::MatrixXd cov = s * bottom.cov() * s.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  return {s * bottom.mean(), std::move(cov)};
}

}  // namespace hierreconc
