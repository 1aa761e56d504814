#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "hierreconc/csv.hpp"
#include "hierreconc/distributions.hpp"
#include "hierreconc/error.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/stats.hpp"

namespace hierreconc {

inline constexpr double kDefaultTailTol = 1e-9;
inline constexpr double kMaxEnumeration = 1e8;

/// Reconciled bottom pmf as an explicit table, in lexicographic order of the
/// bottom vectors.
struct JointPmfTable {
  Eigen::Index m = 0;
  /// Row-major, size() x m.
  std::vector<std::int64_t> support;
  std::vector<double> probs;
  /// A b of each support point (single upper variable).
  std::vector<std::int64_t> upper;
  /// Base mass of the coherent set before normalization: P(U = A B) over the
  /// enumerated box.
  double coherent_mass = 0.0;
  /// Bound on the base bottom mass outside the enumerated box.
  double truncation_bound = 0.0;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t size() const noexcept { return probs.size(); }

  [[nodiscard]] std::int64_t value(std::size_t row, Eigen::Index j) const {
    return support[row * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
  }

  /// Marginal pmf of bottom j as sorted (values, probs).
  [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> bottom_marginal(Eigen::Index j) const {
    std::vector<std::int64_t> col(size());
    for (std::size_t r = 0; r < size(); ++r) {
      col[r] = value(r, j);
    }
    return collapse(col);
  }

  [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> upper_marginal() const {
    return collapse(upper);
  }

  [[nodiscard]] Moments bottom_moments(Eigen::Index j) const {
    const auto [values, ps] = bottom_marginal(j);
    return moments_of(values, ps);
  }
  [[nodiscard]] Moments upper_moments() const {
    const auto [values, ps] = upper_marginal();
    return moments_of(values, ps);
  }

  static Moments moments_of(const std::vector<double>& values, const std::vector<double>& ps) {
    Moments out;
    for (std::size_t i = 0; i < values.size(); ++i) {
      out.mean += ps[i] * values[i];
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      out.variance += ps[i] * (values[i] - out.mean) * (values[i] - out.mean);
    }
    return out;
  }

 private:
  [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> collapse(
      const std::vector<std::int64_t>& col) const {
    std::int64_t lo = col.front();
    std::int64_t hi = col.front();
    for (auto v : col) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::vector<double> acc(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (std::size_t r = 0; r < col.size(); ++r) {
      acc[static_cast<std::size_t>(col[r] - lo)] += probs[r];
    }
    std::vector<double> values;
    std::vector<double> ps;
    for (std::size_t k = 0; k < acc.size(); ++k) {
      if (acc[k] > 0.0) {
        values.push_back(static_cast<double>(lo + static_cast<std::int64_t>(k)));
        ps.push_back(acc[k]);
      }
    }
    return {values, ps};
  }
};

namespace detail {

struct BottomGrid {
  std::vector<TruncatedSupport> marginals;
  double points = 1.0;
  double truncation_bound = 0.0;
  std::vector<std::string> warnings;
};

inline void check_enumerable(const Hierarchy& h, const HierForecast& base) {
  base.validate(h);
  require(base.discrete(), ErrorCode::kContinuousUnsupported, "enumeration needs discrete base forecasts");
  require(h.upper_count() == 1, ErrorCode::kMultipleUppersUnsupported,
          "enumeration supports a single upper variable, got " + std::to_string(h.upper_count()));
  require(base.independent, ErrorCode::kDependentBlocks,
          "enumeration needs independent upper and bottom base forecasts");
}

inline BottomGrid bottom_grid(const Hierarchy& h, const HierForecast& base, double tail_tol) {
  const auto& bottoms = std::get<std::vector<CountDistribution>>(base.bottom);
  BottomGrid grid;
  double inside = 1.0;
  for (std::size_t j = 0; j < bottoms.size(); ++j) {
    grid.marginals.push_back(truncate_support(bottoms[j], tail_tol));
    const auto& t = grid.marginals.back();
    grid.points *= static_cast<double>(t.values.size());
    inside *= 1.0 - t.tail_mass;
    if (t.truncation_warning) {
      grid.warnings.push_back("TruncationWarning: support of " + h.bottom_labels()[j] + " capped at " +
                              std::to_string(kSupportCap));
    }
  }
  grid.truncation_bound = std::max(0.0, 1.0 - inside);
  require(grid.points <= kMaxEnumeration, ErrorCode::kSupportExplosion,
          "enumeration would visit " + std::to_string(grid.points) + " points");
  return grid;
}

/// Calls visit(index vector) for every point of the grid, last index fastest.
template <class Visit>
void for_each_point(const std::vector<std::size_t>& sizes, Visit&& visit) {
  std::vector<std::size_t> idx(sizes.size(), 0);
  while (true) {
    visit(idx);
    std::size_t d = sizes.size();
    while (d > 0) {
      --d;
      if (++idx[d] < sizes[d]) {
        break;
      }
      idx[d] = 0;
      if (d == 0) {
        return;
      }
    }
  }
}

/// log-free pmf lookup over a contiguous integer range.
class PmfCache {
 public:
  PmfCache(const CountDistribution& dist, std::int64_t lo, std::int64_t hi) : dist_(dist), lo_(lo) {
    if (hi - lo < 10000000) {
      table_.resize(static_cast<std::size_t>(hi - lo + 1));
      for (std::int64_t k = lo; k <= hi; ++k) {
        table_[static_cast<std::size_t>(k - lo)] = pmf(dist, k);
      }
    }
  }
  [[nodiscard]] double operator()(std::int64_t k) const {
    if (!table_.empty()) {
      return table_[static_cast<std::size_t>(k - lo_)];
    }
    return pmf(dist_, k);
  }

 private:
  const CountDistribution& dist_;
  std::int64_t lo_;
  std::vector<double> table_;
};

/// Unnormalized table pi_U(A b) prod_j pi_j(b_j) over the truncated grid,
/// keeping positive entries only.
inline JointPmfTable enumerate_unnormalized(const Hierarchy& h, const HierForecast& base, double tail_tol) {
  check_enumerable(h, base);
  const auto grid = bottom_grid(h, base, tail_tol);
  const auto& upper = std::get<std::vector<CountDistribution>>(base.upper).front();
  const Eigen::VectorXi a = h.aggregation().row(0).transpose();

  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::vector<std::size_t> sizes;
  for (std::size_t j = 0; j < grid.marginals.size(); ++j) {
    const auto& vals = grid.marginals[j].values;
    lo += a[static_cast<Eigen::Index>(j)] * vals.front();
    hi += a[static_cast<Eigen::Index>(j)] * vals.back();
    sizes.push_back(vals.size());
  }
  const PmfCache upper_pmf(upper, lo, hi);

  JointPmfTable table;
  table.m = h.m();
  table.truncation_bound = grid.truncation_bound;
  table.warnings = grid.warnings;
  for_each_point(sizes, [&](const std::vector<std::size_t>& idx) {
    double w = 1.0;
    std::int64_t agg = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      w *= grid.marginals[j].probs[idx[j]];
      agg += a[static_cast<Eigen::Index>(j)] * grid.marginals[j].values[idx[j]];
    }
    w *= upper_pmf(agg);
    if (w > 0.0) {
      for (std::size_t j = 0; j < idx.size(); ++j) {
        table.support.push_back(grid.marginals[j].values[idx[j]]);
      }
      table.upper.push_back(agg);
      table.probs.push_back(w);
      table.coherent_mass += w;
    }
  });
  return table;
}

}  // namespace detail

/// Exact reconciled bottom pmf by enumerating the bottom support (each
/// unbounded marginal truncated at tail mass < tail_tol).
inline JointPmfTable enumerate_reconciled(const Hierarchy& h, const HierForecast& base,
                                          double tail_tol = kDefaultTailTol) {
  auto table = detail::enumerate_unnormalized(h, base, tail_tol);
  detail::require(table.coherent_mass > 0.0, ErrorCode::kZeroNormalizer,
                  "upper and bottom base forecasts share no coherent support point");
  for (auto& p : table.probs) {
    p /= table.coherent_mass;
  }
  return table;
}

struct CoherenceProbability {
  double p_c = 0.0;
  /// p_c is exact up to this much missing base mass.
  double truncation_bound = 0.0;
};

/// P(U = A B) under independent base forecasts, summed over the truncated
/// joint support. Disjoint supports give 0.
inline CoherenceProbability exact_pc(const Hierarchy& h, const HierForecast& base,
                                     double tail_tol = kDefaultTailTol) {
  const auto table = detail::enumerate_unnormalized(h, base, tail_tol);
  return {table.coherent_mass, table.truncation_bound};
}

/// Reconciled minimal hierarchy with Bernoulli bottoms and a pmf on {0,1,2}
/// for the upper.
struct BernoulliReconciliation {
  double p1 = 0.0;
  double p2 = 0.0;
  std::array<double, 3> q{};
  /// Normalizing constant; equals the coherence probability.
  double normalizer = 0.0;

  [[nodiscard]] double upper_mean() const { return q[1] + 2.0 * q[2]; }
  [[nodiscard]] double upper_variance() const {
    const double mean = upper_mean();
    return q[1] + 4.0 * q[2] - mean * mean;
  }
};

inline BernoulliReconciliation bernoulli_closed_form(double p1, double p2, const std::array<double, 3>& q) {
  detail::require(p1 >= 0.0 && p1 <= 1.0 && p2 >= 0.0 && p2 <= 1.0, ErrorCode::kInvalidParameter,
                  "Bernoulli probabilities must lie in [0, 1]");
  for (double qk : q) {
    detail::require(qk >= 0.0, ErrorCode::kInvalidParameter, "upper pmf must be non-negative");
  }
  detail::require(std::abs(q[0] + q[1] + q[2] - 1.0) <= 1e-12, ErrorCode::kInvalidParameter,
                  "upper pmf must sum to 1");
  const double w00 = (1.0 - p1) * (1.0 - p2) * q[0];
  const double w10 = p1 * (1.0 - p2) * q[1];
  const double w01 = (1.0 - p1) * p2 * q[1];
  const double w11 = p1 * p2 * q[2];
  const double s = w00 + w10 + w01 + w11;
  detail::require(s > 0.0, ErrorCode::kZeroNormalizer, "base forecasts have no coherent point");
  BernoulliReconciliation out;
  out.normalizer = s;
  out.p1 = ((1.0 - p2) * q[1] + p2 * q[2]) * p1 / s;
  out.p2 = ((1.0 - p1) * q[1] + p1 * q[2]) * p2 / s;
  out.q = {w00 / s, (p1 + p2 - 2.0 * p1 * p2) * q[1] / s, w11 / s};
  return out;
}

/// Pieces of the discrete reconciled-variance identity for one bottom
/// variable, with the directly enumerated variance alongside.
struct VarianceDecomposition {
  /// Var(B_j) under the base forecast.
  double base_var = 0.0;
  /// Var(B_j | U != A B).
  double cond_var_incoherent = 0.0;
  double p_c = 0.0;
  /// E(B_j | U != A B); 0 when p_c = 1.
  double a = 0.0;
  /// E(B_j | U = A B).
  double b = 0.0;
  /// (base_var - (1 - p_c) cond_var_incoherent - p_c (1 - p_c)(a - b)^2) / p_c.
  double reconciled_var = 0.0;
  /// Var of bottom j read off enumerate_reconciled.
  double direct_var = 0.0;
  double truncation_bound = 0.0;
};

/// Computes every piece by enumerating the joint (u, b) support of the
/// truncated base forecast; unbounded marginals are truncated and
/// renormalized first so that all pieces describe the same law.
inline VarianceDecomposition variance_decomposition(const Hierarchy& h, const HierForecast& base, Eigen::Index j,
                                                    double tail_tol = kDefaultTailTol) {
  detail::check_enumerable(h, base);
  detail::require(j >= 0 && j < h.m(), ErrorCode::kDimensionMismatch, "bottom index out of range");
  auto grid = detail::bottom_grid(h, base, tail_tol);
  const Eigen::VectorXi a = h.aggregation().row(0).transpose();
  // The upper grid must contain every reachable aggregate, or coherent points
  // would go missing relative to enumerate_reconciled.
  const auto& upper_dist = std::get<std::vector<CountDistribution>>(base.upper).front();
  auto upper = truncate_support(upper_dist, tail_tol);
  {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    for (std::size_t k = 0; k < grid.marginals.size(); ++k) {
      lo += a[static_cast<Eigen::Index>(k)] * grid.marginals[k].values.front();
      hi += a[static_cast<Eigen::Index>(k)] * grid.marginals[k].values.back();
    }
    std::vector<std::int64_t> values = upper.values;
    for (std::int64_t v = lo; v <= hi; ++v) {
      values.push_back(v);
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    upper.probs.clear();
    for (auto v : values) {
      upper.probs.push_back(pmf(upper_dist, v));
    }
    upper.values = std::move(values);
  }
  const auto renormalize = [](TruncatedSupport& t) {
    double total = 0.0;
    for (double p : t.probs) {
      total += p;
    }
    for (double& p : t.probs) {
      p /= total;
    }
  };
  for (auto& marginal : grid.marginals) {
    renormalize(marginal);
  }
  renormalize(upper);
  detail::require(grid.points * static_cast<double>(upper.values.size()) <= kMaxEnumeration,
                  ErrorCode::kSupportExplosion, "joint enumeration is too large");

  std::vector<std::size_t> sizes;
  for (const auto& marginal : grid.marginals) {
    sizes.push_back(marginal.values.size());
  }
  sizes.push_back(upper.values.size());
  const auto ju = static_cast<std::size_t>(j);

  // visit(mass, b_j, coherent) over every (b, u) point.
  const auto sweep = [&](auto&& visit) {
    detail::for_each_point(sizes, [&](const std::vector<std::size_t>& idx) {
      double mass = upper.probs[idx.back()];
      std::int64_t agg = 0;
      for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        mass *= grid.marginals[k].probs[idx[k]];
        agg += a[static_cast<Eigen::Index>(k)] * grid.marginals[k].values[idx[k]];
      }
      visit(mass, static_cast<double>(grid.marginals[ju].values[idx[ju]]), agg == upper.values[idx.back()]);
    });
  };

  double mass_coh = 0.0;
  double mass_inc = 0.0;
  double sum_coh = 0.0;
  double sum_inc = 0.0;
  sweep([&](double mass, double bj, bool coherent) {
    (coherent ? mass_coh : mass_inc) += mass;
    (coherent ? sum_coh : sum_inc) += mass * bj;
  });
  detail::require(mass_coh > 0.0, ErrorCode::kZeroCoherence, "coherence probability is zero");
  const double total = mass_coh + mass_inc;
  const double mean_all = (sum_coh + sum_inc) / total;

  VarianceDecomposition out;
  out.truncation_bound = grid.truncation_bound;
  out.p_c = mass_coh / total;
  out.b = sum_coh / mass_coh;
  out.a = mass_inc > 0.0 ? sum_inc / mass_inc : 0.0;

  double ss_all = 0.0;
  double ss_inc = 0.0;
  sweep([&](double mass, double bj, bool coherent) {
    ss_all += mass * (bj - mean_all) * (bj - mean_all);
    if (!coherent) {
      ss_inc += mass * (bj - out.a) * (bj - out.a);
    }
  });
  out.base_var = ss_all / total;
  out.cond_var_incoherent = mass_inc > 0.0 ? ss_inc / mass_inc : 0.0;
  const double p = out.p_c;
  out.reconciled_var =
      (out.base_var - (1.0 - p) * out.cond_var_incoherent - p * (1.0 - p) * (out.a - out.b) * (out.a - out.b)) / p;
  out.direct_var = enumerate_reconciled(h, base, tail_tol).bottom_moments(j).variance;
  return out;
}

/// Per-variable exact summaries of a reconciled table, hierarchy order
/// (upper first).
struct TableStats {
  Moments moments;
  double median = 0.0;
  std::vector<double> quantiles;
};

inline std::vector<TableStats> table_stats(const JointPmfTable& table, const std::vector<double>& levels) {
  std::vector<TableStats> out;
  const auto summarize = [&](const std::pair<std::vector<double>, std::vector<double>>& pmf) {
    TableStats s;
    s.moments = JointPmfTable::moments_of(pmf.first, pmf.second);
    s.median = pmf_quantile(pmf.first, pmf.second, 0.5);
    for (double level : levels) {
      s.quantiles.push_back(pmf_quantile(pmf.first, pmf.second, level));
    }
    return s;
  };
  out.push_back(summarize(table.upper_marginal()));
  for (Eigen::Index j = 0; j < table.m; ++j) {
    out.push_back(summarize(table.bottom_marginal(j)));
  }
  return out;
}

/// Columns: one per bottom label, then `probability`.
inline void write_table_csv(std::ostream& os, const Hierarchy& h, const JointPmfTable& table) {
  auto header = h.bottom_labels();
  header.emplace_back("probability");
  csv::write_row(os, header);
  std::vector<std::string> row(header.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (Eigen::Index j = 0; j < table.m; ++j) {
      row[static_cast<std::size_t>(j)] = std::to_string(table.value(r, j));
    }
    row.back() = csv::number(table.probs[r]);
    csv::write_row(os, row);
  }
}

}  // namespace hierreconc
