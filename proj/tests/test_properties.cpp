// Randomized invariants over generated instances. Each property runs a fixed
// number of cases from a fixed seed and reports the failing case index.
#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "hierreconc/discrete_analytic.hpp"
#include "hierreconc/gaussian_reconc.hpp"
#include "hierreconc/is_reconc.hpp"
#include "hierreconc/scoring.hpp"
#include "support.hpp"

using namespace hierreconc;
using testsupport::uniform_int;

namespace {

MultivariateGaussian random_base(Rng& rng, const Hierarchy& h) {
  return {testsupport::random_vector(rng, h.n(), 3.0), testsupport::random_psd(rng, h.n())};
}

HierForecast random_discrete(Rng& rng, const Hierarchy& h, int max_support) {
  std::vector<CountDistribution> bottoms;
  int reach = 0;
  for (Eigen::Index j = 0; j < h.m(); ++j) {
    const int size = uniform_int(rng, 1, max_support);
    bottoms.emplace_back(TabulatedPmf::on_range(testsupport::random_probs(rng, static_cast<std::size_t>(size))));
    reach += (size - 1) * h.aggregation()(0, j);
  }
  const int upper_size = uniform_int(rng, 1, reach + 2);
  return {std::vector<CountDistribution>{TabulatedPmf::on_range(testsupport::random_probs(rng, static_cast<std::size_t>(upper_size)))},
          std::move(bottoms), true};
}

}  // namespace

TEST(Property, GaussianVarianceNeverGrows) {
  Rng rng(101);
  for (int c = 0; c < 300; ++c) {
    const auto h = testsupport::random_hierarchy(rng, 6, 3);
    const auto base = random_base(rng, h);
    const auto joint = reconcile_gaussian(h, base).joint(h);
    for (Eigen::Index i = 0; i < h.n(); ++i) {
      ASSERT_LE(joint.cov()(i, i), base.cov()(i, i) + 1e-9) << "case " << c << " var " << i;
    }
    ASSERT_TRUE(h.is_coherent(joint.mean(), 1e-8 * (1.0 + joint.mean().cwiseAbs().maxCoeff()))) << "case " << c;
  }
}

TEST(Property, GaussianCovarianceIgnoresMeans) {
  Rng rng(102);
  for (int c = 0; c < 200; ++c) {
    const auto h = testsupport::random_hierarchy(rng, 6, 3);
    const auto base = random_base(rng, h);
    const MultivariateGaussian moved(base.mean() + testsupport::random_vector(rng, h.n(), 10.0), base.cov());
    const auto r1 = reconcile_gaussian(h, base);
    const auto r2 = reconcile_gaussian(h, moved);
    ASSERT_LE((r1.bottom_cov - r2.bottom_cov).cwiseAbs().maxCoeff(), 1e-10) << "case " << c;
    ASSERT_LE((r1.upper_cov - r2.upper_cov).cwiseAbs().maxCoeff(), 1e-10) << "case " << c;
  }
}

TEST(Property, ConvexWeightsReproduceConditioning) {
  Rng rng(103);
  for (int c = 0; c < 200; ++c) {
    const int m = uniform_int(rng, 1, 6);
    const auto h = single_level_hierarchy(testsupport::labels_for(1, m));
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m + 1, m + 1);
    cov(0, 0) = 0.1 + 5.0 * rng.uniform();
    cov.bottomRightCorner(m, m) = testsupport::random_psd(rng, m);
    const MultivariateGaussian base(testsupport::random_vector(rng, m + 1, 4.0), cov);
    const auto w = convex_weights_single_upper(h, base);
    ASSERT_EQ(w.w_base + w.w_bottom_up, 1.0) << "case " << c;
    ASSERT_NEAR(w.reconciled_upper_mean, reconcile_gaussian(h, base).upper_mean[0], 1e-10) << "case " << c;
    ASSERT_GE(w.w_base, 0.0);
    ASSERT_LE(w.w_base, 1.0);
  }
}

TEST(Property, EnumeratedTablesAreCoherentDistributions) {
  Rng rng(104);
  for (int c = 0; c < 200; ++c) {
    const auto h = testsupport::random_hierarchy(rng, 3, 1);
    const auto f = random_discrete(rng, h, 4);
    if (exact_pc(h, f).p_c == 0.0) continue;
    const auto t = enumerate_reconciled(h, f);
    double total = 0.0;
    for (std::size_t r = 0; r < t.size(); ++r) {
      total += t.probs[r];
      std::int64_t agg = 0;
      for (Eigen::Index j = 0; j < h.m(); ++j) agg += h.aggregation()(0, j) * t.value(r, j);
      ASSERT_EQ(agg, t.upper[r]) << "case " << c;
      ASSERT_GT(pmf(std::get<std::vector<CountDistribution>>(f.upper)[0], agg), 0.0) << "case " << c;
    }
    ASSERT_NEAR(total, 1.0, 1e-12) << "case " << c;
  }
}

TEST(Property, VarianceIdentityOnMixedFamilies) {
  Rng rng(105);
  int checked = 0;
  for (int c = 0; c < 150; ++c) {
    const int m = uniform_int(rng, 1, 3);
    const auto h = single_level_hierarchy(testsupport::labels_for(1, m));
    std::vector<CountDistribution> bottoms;
    for (int j = 0; j < m; ++j) bottoms.push_back(testsupport::random_count(rng, 4));
    const HierForecast f{std::vector<CountDistribution>{testsupport::random_count(rng, 6)}, std::move(bottoms), true};
    if (exact_pc(h, f).p_c <= 0.0) continue;
    const auto j = static_cast<Eigen::Index>(uniform_int(rng, 0, m - 1));
    const auto d = variance_decomposition(h, f, j);
    ASSERT_NEAR(d.reconciled_var, d.direct_var, 1e-10 * std::max(1.0, d.direct_var)) << "case " << c;
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(Property, ImportanceDrawsAreCoherent) {
  Rng rng(106);
  for (int c = 0; c < 20; ++c) {
    const auto h = testsupport::random_hierarchy(rng, 4, 1);
    const auto f = random_discrete(rng, h, 4);
    const auto s = try_reconcile_is(h, f, {2000, static_cast<std::uint64_t>(c), Resampling::kMultinomial});
    if (s.weight_sum_zero) continue;
    for (Eigen::Index i = 0; i < s.full.rows(); ++i) {
      ASSERT_TRUE(h.is_coherent(s.full.row(i).transpose(), 0.0)) << "case " << c;
    }
  }
}

TEST(Property, SkillScoreBounded) {
  Rng rng(107);
  for (int c = 0; c < 10000; ++c) {
    const double scale = std::pow(10.0, uniform_int(rng, -6, 6));
    const double a = rng.uniform() < 0.05 ? 0.0 : scale * rng.uniform();
    const double b = rng.uniform() < 0.05 ? 0.0 : scale * rng.uniform();
    const double s = skill_score(a, b);
    ASSERT_GE(s, -2.0);
    ASSERT_LE(s, 2.0);
    ASSERT_EQ(s, -skill_score(b, a));
  }
}

TEST(Property, IntervalScoreAtLeastWidth) {
  Rng rng(108);
  for (int c = 0; c < 2000; ++c) {
    const double l = 5.0 * rng.normal();
    const double u = l + 3.0 * rng.uniform();
    const double y = 5.0 * rng.normal();
    const double alpha = 0.01 + 0.9 * rng.uniform();
    const double s = interval_score(l, u, y, alpha);
    ASSERT_GE(s, u - l);
    ASSERT_EQ(s == u - l, l <= y && y <= u);
  }
}

TEST(Property, QuantilesMonotone) {
  Rng rng(109);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> v(static_cast<std::size_t>(uniform_int(rng, 1, 50)));
    for (auto& x : v) x = static_cast<double>(uniform_int(rng, 0, 5));
    double prev = -1.0;
    for (double p = 0.0; p <= 1.0; p += 0.01) {
      const double q = empirical_quantile(v, p);
      ASSERT_GE(q, prev);
      prev = q;
    }
    ASSERT_EQ(empirical_quantile(v, 1.0), *std::max_element(v.begin(), v.end()));
  }
}

TEST(Property, NegativeBinomialPmfSumsToOne) {
  Rng rng(110);
  for (int c = 0; c < 100; ++c) {
    const NegativeBinomial nb(0.05 + 20.0 * rng.uniform(), 3.0 * rng.uniform());
    const auto t = truncate_support(nb, 1e-12);
    double total = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      total += t.probs[i];
      mean += t.probs[i] * static_cast<double>(t.values[i]);
    }
    ASSERT_NEAR(total, 1.0, 1e-11) << "case " << c;
    ASSERT_NEAR(mean, nb.mu(), 1e-6 * (1.0 + nb.mu())) << "case " << c;
  }
}
