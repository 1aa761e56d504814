#include <cmath>

#include <gtest/gtest.h>

#include "hierreconc/scoring.hpp"
#include "support.hpp"

using namespace hierreconc;

namespace {

std::vector<double> range(int lo, int hi) {
  std::vector<double> out;
  for (int i = lo; i <= hi; ++i) out.push_back(i);
  return out;
}

}  // namespace

TEST(EnergyScore, PointMass) {
  Eigen::MatrixXd s(10, 3);
  s.rowwise() = Eigen::RowVector3d(1, 2, 3);
  const Eigen::Vector3d y(2, 0, 3);
  EXPECT_EQ(energy_score(s, y), 5.0);
  EXPECT_EQ(energy_score(s, y, 2.0, EnergyPairing::kAllPairs), 5.0);
  EXPECT_EQ(energy_score(s, Eigen::Vector3d(1, 2, 3)), 0.0);
  EXPECT_NEAR(energy_score(s, y, 1.0), std::sqrt(5.0), 1e-15);
}

TEST(EnergyScore, TwoDrawsHandEvaluated) {
  Eigen::MatrixXd s(2, 1);
  s << 0, 2;
  Eigen::VectorXd y(1);
  y << 1;
  EXPECT_EQ(energy_score(s, y), -1.0);
}

TEST(EnergyScore, AllPairsClosedFormMatchesLoop) {
  Rng rng(3);
  Eigen::MatrixXd s(40, 3);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) = testsupport::random_vector(rng, 3, 1.0).transpose();
  const Eigen::Vector3d y(0.1, -0.3, 0.7);
  double first = 0.0, second = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    first += (s.row(i).transpose() - y).squaredNorm();
    for (Eigen::Index j = 0; j < s.rows(); ++j) {
      if (i != j) second += (s.row(i) - s.row(j)).squaredNorm();
    }
  }
  const double n = static_cast<double>(s.rows());
  EXPECT_NEAR(energy_score(s, y, 2.0, EnergyPairing::kAllPairs), first / n - 0.5 * second / (n * (n - 1)), 1e-12);
}

TEST(EnergyScore, Errors) {
  EXPECT_THROW((void)energy_score(Eigen::MatrixXd(1, 1), Eigen::VectorXd::Zero(1)), Error);
  EXPECT_THROW((void)energy_score(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(1)), Error);
  try {
    (void)energy_score(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1));
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientSamples);
  }
}

TEST(IntervalScore, HandCases) {
  EXPECT_EQ(interval_score(0, 4, 2, 0.1), 4.0);
  EXPECT_EQ(interval_score(0, 4, 5, 0.1), 24.0);
  EXPECT_EQ(interval_score(0, 4, -1, 0.1), 24.0);
  EXPECT_EQ(interval_score(3, 3, 3, 0.1), 0.0);
  try {
    (void)interval_score(4, 0, 1, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvertedInterval);
  }
}

TEST(PointErrors, HandCases) {
  const auto e = point_errors({0, 0, 0, 3}, 0);
  EXPECT_EQ(e.mean, 0.75);
  EXPECT_EQ(e.median, 0.0);
  EXPECT_EQ(e.se, 0.5625);
  EXPECT_EQ(e.ae, 0.0);
  const auto d = point_errors({2, 2, 2}, 2);
  EXPECT_EQ(d.se, 0.0);
  EXPECT_EQ(d.ae, 0.0);
  EXPECT_EQ(point_errors({1, 2, 3, 4, 5}, 3).ae, 0.0);
  EXPECT_THROW((void)point_errors({}, 0), Error);
}

TEST(SkillScore, HandCases) {
  EXPECT_EQ(skill_score(3, 1), 1.0);
  EXPECT_EQ(skill_score(1, 3), -1.0);
  EXPECT_EQ(skill_score(0, 0), 0.0);
  EXPECT_EQ(skill_score(5, 0), 2.0);
  EXPECT_EQ(skill_score(0, 5), -2.0);
  try {
    (void)skill_score(-1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNegativeMetric);
  }
}

TEST(Intervals, FromSamples) {
  const auto zero = interval_from_samples(std::vector<double>(10, 0.0));
  EXPECT_EQ(zero.lower, 0.0);
  EXPECT_EQ(zero.width(), 0.0);
  const auto iv = interval_from_samples(range(1, 100), 0.9);
  EXPECT_EQ(iv.lower, 5.0);
  EXPECT_EQ(iv.upper, 95.0);
  EXPECT_THROW((void)interval_from_samples({}), Error);
}

TEST(Intervals, CoverageNearNominal) {
  Rng rng(12);
  std::vector<double> ref(100000);
  for (auto& x : ref) x = rng.normal();
  const auto iv = interval_from_samples(ref, 0.9);
  std::vector<Interval> ivs(20000, iv);
  std::vector<double> ys(20000);
  for (auto& y : ys) y = rng.normal();
  EXPECT_NEAR(coverage(ivs, ys), 0.9, 4.0 * std::sqrt(0.09 / 20000.0) + 0.005);
}

TEST(CoherentPoint, Examples) {
  const auto h = single_level_hierarchy(testsupport::labels_for(1, 5));
  Eigen::MatrixXd b(3, 5);
  b << 1, 0, 1, 0, 0,
       1, 0, 1, 0, 0,
       2, 1, 3, 0, 0;
  const auto y = coherent_point_forecast(h, b);
  EXPECT_EQ(y[0], 2.0);
  EXPECT_EQ(coherent_point_forecast(h, Eigen::MatrixXd::Zero(4, 5))[0], 0.0);
  EXPECT_THROW((void)coherent_point_forecast(h, Eigen::MatrixXd(0, 5)), Error);
}

TEST(ScoreStep, ReportShapes) {
  Eigen::MatrixXd base(4, 3), rec(4, 3);
  base << 2, 1, 1, 3, 1, 2, 4, 2, 2, 1, 0, 1;
  rec << 2, 1, 1, 2, 1, 1, 2, 1, 1, 2, 1, 1;
  const auto r = score_step(base, rec, Eigen::Vector3d(2, 1, 1), 0.1);
  EXPECT_EQ(r.es_reconc, 0.0);
  ASSERT_EQ(r.is_base.size(), 3U);
  EXPECT_EQ(r.is_reconc[0], 0.0);
  EXPECT_TRUE(r.covered_reconc[2]);
}
