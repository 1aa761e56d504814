#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "hierreconc/csv.hpp"
#include "hierreconc/io.hpp"
#include "hierreconc/pipeline.hpp"
#include "hierreconc/stats.hpp"
#include "support.hpp"

using namespace hierreconc;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = HIERRECONC_FIXTURES;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hierreconc_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(csv::split_line(line));
  return rows;
}

pipeline::RunConfig config(pipeline::Mode mode, const std::string& forecasts, const std::string& out) {
  pipeline::RunConfig cfg;
  cfg.mode = mode;
  cfg.hierarchy = kFixtures / "hierarchy_2.json";
  cfg.forecasts = kFixtures / forecasts;
  cfg.out = scratch(out);
  cfg.n_draws = 20000;
  cfg.seed = 5;
  cfg.workers = 2;
  return cfg;
}

}  // namespace

TEST(Quantiles, InverseEmpiricalCdf) {
  EXPECT_EQ(empirical_quantile({0, 0, 0, 1, 2}, 0.5), 0.0);
  EXPECT_EQ(empirical_quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_EQ(empirical_quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_EQ(empirical_quantile({4, 1, 3, 2}, 0.5), 2.0);
  EXPECT_EQ(empirical_quantiles({4, 1, 3, 2}, {0.25, 0.26}), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(pmf_quantile({0, 1, 2}, {0.5, 0.0, 0.5}, 0.5), 0.0);
  EXPECT_EQ(pmf_quantile({0, 1, 2}, {0.5, 0.0, 0.5}, 0.6), 2.0);
  EXPECT_NEAR(normal_quantile(0.95), 1.6448536269514722, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(normal_quantile(1e-10), -6.361340902404056, 1e-9);
}

TEST(Csv, NumbersAndQuoting) {
  EXPECT_EQ(csv::number(0.1), "0.1");
  EXPECT_EQ(csv::number(-0.0), "0");
  EXPECT_EQ(csv::number(std::nan("")), "NA");
  EXPECT_EQ(csv::number(3.0), "3");
  EXPECT_EQ(csv::quote("a,b"), "\"a,b\"");
  EXPECT_EQ(csv::split_line("x,\"a,\"\"b\"\"\",3"), (std::vector<std::string>{"x", "a,\"b\"", "3"}));
}

TEST(Io, ParsesHierarchyAndForecasts) {
  const auto h = io::parse_hierarchy(io::read_json(kFixtures / "hierarchy_2.json"));
  EXPECT_EQ(h.labels(), (std::vector<std::string>{"U", "B1", "B2"}));
  const auto steps = io::parse_forecasts(io::read_json(kFixtures / "poisson.json"), h);
  ASSERT_EQ(steps.size(), 3U);
  EXPECT_DOUBLE_EQ(steps[0].blocks->upper_mean()[0], 6.0);
  const auto g = io::parse_forecasts(io::read_json(kFixtures / "gaussian.json"), h);
  ASSERT_EQ(g.size(), 2U);
  EXPECT_TRUE(g[1].joint.has_value());
  EXPECT_DOUBLE_EQ(g[0].as_joint_gaussian(h).cov()(2, 2), 2.0);
}

TEST(Io, RejectsMalformedInput) {
  const auto h = testsupport::minimal_hierarchy();
  const auto bad_family = nlohmann::json::parse(R"({"upper":[{"family":"zeta","params":{}}],"bottom":[]})");
  EXPECT_THROW((void)io::parse_forecasts(bad_family, h), Error);
  const auto mixed = nlohmann::json::parse(
      R"({"upper":[{"family":"poisson","params":{"lambda":1}}],
          "bottom":[{"family":"poisson","params":{"lambda":1}},{"family":"gaussian","params":{"mean":0,"var":1}}]})");
  EXPECT_THROW((void)io::parse_forecasts(mixed, h), Error);
  std::istringstream missing("U,B1\n1,1\n");
  EXPECT_THROW((void)io::parse_observations(missing, h), Error);
  std::istringstream garbage("U,B1,B2\n1,x,1\n");
  try {
    (void)io::parse_observations(garbage, h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  std::istringstream reordered("B2,U,B1\n1,2,1\n");
  EXPECT_EQ(io::parse_observations(reordered, h)[0], Eigen::Vector3d(2, 1, 1));
}

TEST(ClassifyEffect, Regimes) {
  EXPECT_EQ(classify_effect(1.5, 1.3, 1.108), Effect::kStrengthening);
  EXPECT_EQ(classify_effect(6.0, 1.3, 2.53), Effect::kCompromise);
  EXPECT_EQ(classify_effect(6.0, 1.3, 7.0), Effect::kOther);
  EXPECT_EQ(classify_effect(6.0, 1.3, 1.3), Effect::kOther);
  EXPECT_EQ(classify_effect(2.0, 2.0, 2.0), Effect::kOther);
  EXPECT_EQ(to_string(Effect::kCompromise), "compromise");
}

TEST(Pipeline, EnumerateWritesReferenceNumbers) {
  auto cfg = config(pipeline::Mode::kEnumerate, "poisson.json", "enum");
  cfg.observations = kFixtures / "poisson_obs.csv";
  std::ostringstream err;
  ASSERT_EQ(pipeline::run(cfg, err), 0) << err.str();
  const auto rec = read_csv(cfg.out / "reconciled.csv");
  ASSERT_EQ(rec.size(), 10U);
  EXPECT_EQ(rec[0], pipeline::kReconciledHeader);
  EXPECT_NEAR(std::stod(rec[1][4]), 2.5286, 1e-4);
  const auto diag = read_csv(cfg.out / "diagnostics.csv");
  EXPECT_EQ(diag[2][11], "strengthening");
  EXPECT_EQ(diag[3][11], "compromise");
  EXPECT_TRUE(fs::exists(cfg.out / "joint_pmf.csv"));
  EXPECT_TRUE(fs::exists(cfg.out / "summary.csv"));
}

TEST(Pipeline, GaussianWritesWeights) {
  auto cfg = config(pipeline::Mode::kGaussian, "gaussian.json", "gauss");
  cfg.observations = kFixtures / "gaussian_obs.csv";
  std::ostringstream err;
  ASSERT_EQ(pipeline::run(cfg, err), 0) << err.str();
  const auto j = nlohmann::json::parse(slurp(cfg.out / "gaussian_reconciliation.json"));
  ASSERT_EQ(j.size(), 2U);
  EXPECT_NEAR(j[0]["weights"]["w_base"].get<double>(), 3.0 / 7.0, 1e-14);
  EXPECT_TRUE(j[1]["weights"].is_null());
  EXPECT_NEAR(j[0]["upper_mean"][0].get<double>(), 62.0 / 7.0, 1e-12);
}

TEST(Pipeline, FailedStepContinues) {
  const auto dir = scratch("failing_input");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "f.json");
    f << R"({"steps":[
      {"upper":[{"family":"tabulated","params":{"probs":[1],"support":[9]}}],
       "bottom":[{"family":"bernoulli","params":{"p":0.5}},{"family":"bernoulli","params":{"p":0.5}}]},
      {"upper":[{"family":"poisson","params":{"lambda":1.5}}],
       "bottom":[{"family":"poisson","params":{"lambda":0.5}},{"family":"poisson","params":{"lambda":0.8}}]}]})";
  }
  auto cfg = config(pipeline::Mode::kImportance, "poisson.json", "failing");
  cfg.forecasts = dir / "f.json";
  std::ostringstream err;
  EXPECT_EQ(pipeline::run(cfg, err), 1);
  EXPECT_EQ(err.str().rfind("error step=0 code=AllWeightsZero message=", 0), 0U) << err.str();
  const auto diag = read_csv(cfg.out / "diagnostics.csv");
  ASSERT_EQ(diag.size(), 3U);
  EXPECT_EQ(diag[1][1], "error");
  EXPECT_EQ(diag[2][1], "ok");
}

TEST(Pipeline, ConfigErrorsExitTwo) {
  std::ostringstream err;
  auto cfg = config(pipeline::Mode::kImportance, "poisson.json", "cfg");
  cfg.n_draws = 10;
  EXPECT_EQ(pipeline::run(cfg, err), 2);
  cfg = config(pipeline::Mode::kImportance, "does_not_exist.json", "cfg");
  EXPECT_EQ(pipeline::run(cfg, err), 2);
  cfg = config(pipeline::Mode::kImportance, "poisson.json", "cfg");
  cfg.observations = kFixtures / "gaussian_obs.csv";
  EXPECT_EQ(pipeline::run(cfg, err), 2);
  cfg.alpha = 1.5;
  EXPECT_EQ(pipeline::run(cfg, err), 2);
  EXPECT_FALSE(pipeline::parse_mode("bogus").has_value());
}

TEST(Pipeline, WorkerCountDoesNotChangeOutput) {
  auto a = config(pipeline::Mode::kImportance, "poisson.json", "w1");
  a.observations = kFixtures / "poisson_obs.csv";
  a.workers = 1;
  auto b = a;
  b.out = scratch("w3");
  b.workers = 3;
  std::ostringstream err;
  ASSERT_EQ(pipeline::run(a, err), 0);
  ASSERT_EQ(pipeline::run(b, err), 0);
  for (const char* f : {"reconciled.csv", "scores.csv", "diagnostics.csv", "summary.csv"}) {
    EXPECT_EQ(slurp(a.out / f), slurp(b.out / f)) << f;
  }
}
