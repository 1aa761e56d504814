#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/error.hpp"

namespace hierreconc {

/// Linear aggregation constraints u = A b of a summation hierarchy.
///
/// Variables are ordered upper block first, then bottom block, so a full
/// vector is y = [u; b] and the summing matrix is S = [A; I_m]. Immutable
/// after construction.
class Hierarchy {
 public:
  /// Validates `aggregation` (non-empty, non-negative integers, no all-zero
  /// row) and `labels` (one per upper row plus one per bottom column).
  Hierarchy(Eigen::MatrixXi aggregation, std::vector<std::string> labels)
      : aggregation_(std::move(aggregation)), labels_(std::move(labels)) {
    detail::require(aggregation_.rows() > 0 && aggregation_.cols() > 0, ErrorCode::kEmptyMatrix,
                    "aggregation matrix has no rows or no columns");
    for (Eigen::Index i = 0; i < aggregation_.rows(); ++i) {
      bool any = false;
      for (Eigen::Index j = 0; j < aggregation_.cols(); ++j) {
        detail::require(aggregation_(i, j) >= 0, ErrorCode::kNegativeEntry,
                        "aggregation matrix entry (" + std::to_string(i) + "," +
                            std::to_string(j) + ") is negative");
        any = any || aggregation_(i, j) != 0;
      }
      detail::require(any, ErrorCode::kAllZeroRow,
                      "aggregation row " + std::to_string(i) + " is all zero");
    }
    const auto expected = static_cast<std::size_t>(aggregation_.rows() + aggregation_.cols());
    detail::require(labels_.size() == expected, ErrorCode::kLabelCountMismatch,
                    "expected " + std::to_string(expected) + " labels, got " +
                        std::to_string(labels_.size()));
    aggregation_real_ = aggregation_.cast<double>();
  }

  /// Number of bottom variables.
  [[nodiscard]] Eigen::Index m() const noexcept { return aggregation_.cols(); }
  /// Number of upper variables.
  [[nodiscard]] Eigen::Index upper_count() const noexcept { return aggregation_.rows(); }
  /// Number of variables in the whole hierarchy.
  [[nodiscard]] Eigen::Index n() const noexcept { return aggregation_.rows() + aggregation_.cols(); }

  [[nodiscard]] const Eigen::MatrixXi& aggregation() const noexcept { return aggregation_; }
  [[nodiscard]] const Eigen::MatrixXd& aggregation_real() const noexcept { return aggregation_real_; }
  [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }

  [[nodiscard]] std::vector<std::string> upper_labels() const {
    return {labels_.begin(), labels_.begin() + upper_count()};
  }
  [[nodiscard]] std::vector<std::string> bottom_labels() const {
    return {labels_.begin() + upper_count(), labels_.end()};
  }

  /// S = [A; I_m].
  [[nodiscard]] Eigen::MatrixXd summing_matrix() const {
    Eigen::MatrixXd s(n(), m());
    s.topRows(upper_count()) = aggregation_real_;
    s.bottomRows(m()).setIdentity();
    return s;
  }

  /// u = A b. Integer inputs give integer-exact results.
  template <class Derived>
  [[nodiscard]] Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> aggregate(
      const Eigen::MatrixBase<Derived>& bottom) const {
    detail::require(bottom.rows() == m() && bottom.cols() == 1, ErrorCode::kDimensionMismatch,
                    "bottom vector has length " + std::to_string(bottom.rows()) + ", expected " +
                        std::to_string(m()));
    return aggregation_.cast<typename Derived::Scalar>() * bottom;
  }

  /// [A b; b].
  template <class Derived>
  [[nodiscard]] Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> complete(
      const Eigen::MatrixBase<Derived>& bottom) const {
    Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> full(n());
    full.head(upper_count()) = aggregate(bottom);
    full.tail(m()) = bottom;
    return full;
  }

  /// True iff ||u - A b||_inf <= tol for y = [u; b].
  template <class Derived>
  [[nodiscard]] bool is_coherent(const Eigen::MatrixBase<Derived>& y, double tol) const {
    detail::require(y.rows() == n() && y.cols() == 1, ErrorCode::kDimensionMismatch,
                    "full vector has length " + std::to_string(y.rows()) + ", expected " +
                        std::to_string(n()));
    detail::require(tol >= 0.0, ErrorCode::kInvalidParameter, "tolerance must be non-negative");
    const Eigen::VectorXd full = y.template cast<double>();
    const Eigen::VectorXd gap = full.head(upper_count()) - aggregation_real_ * full.tail(m());
    return gap.cwiseAbs().maxCoeff() <= tol;
  }

 private:
  Eigen::MatrixXi aggregation_;
  Eigen::MatrixXd aggregation_real_;
  std::vector<std::string> labels_;
};

inline Hierarchy build_hierarchy(Eigen::MatrixXi aggregation, std::vector<std::string> labels) {
  return {std::move(aggregation), std::move(labels)};
}

/// One upper variable summing all `labels.size() - 1` bottoms; the first
/// label names the upper.
inline Hierarchy single_level_hierarchy(std::vector<std::string> labels) {
  detail::require(labels.size() >= 2, ErrorCode::kLabelCountMismatch,
                  "a single-level hierarchy needs an upper label and at least one bottom label");
  Eigen::MatrixXi ones = Eigen::MatrixXi::Ones(1, static_cast<Eigen::Index>(labels.size() - 1));
  return {std::move(ones), std::move(labels)};
}

}  // namespace hierreconc
