#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hierreconc/csv.hpp"
#include "hierreconc/discrete_analytic.hpp"
#include "hierreconc/distributions.hpp"
#include "hierreconc/error.hpp"
#include "hierreconc/gaussian_reconc.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/io.hpp"
#include "hierreconc/is_reconc.hpp"
#include "hierreconc/random.hpp"
#include "hierreconc/scoredriven_sim.hpp"
#include "hierreconc/scoring.hpp"
#include "hierreconc/stats.hpp"

namespace hierreconc {

/// Where the reconciled upper mean lands relative to the base upper mean and
/// the bottom-up mean.
enum class Effect { kStrengthening, kCompromise, kOther };

constexpr std::string_view to_string(Effect e) {
  switch (e) {
    case Effect::kStrengthening: return "strengthening";
    case Effect::kCompromise: return "compromise";
    case Effect::kOther: return "other";
  }
  return "other";
}

/// strengthening: below both means by more than tol. compromise: strictly
/// inside the interval they span, shrunk by tol at each end.
inline Effect classify_effect(double base_upper_mean, double bottom_up_mean, double reconciled_upper_mean,
                              double tol = 1e-9) {
  const double lo = std::min(base_upper_mean, bottom_up_mean);
  const double hi = std::max(base_upper_mean, bottom_up_mean);
  if (reconciled_upper_mean < lo - tol) {
    return Effect::kStrengthening;
  }
  if (reconciled_upper_mean > lo + tol && reconciled_upper_mean < hi - tol) {
    return Effect::kCompromise;
  }
  return Effect::kOther;
}

namespace pipeline {

enum class Mode { kGaussian, kImportance, kEnumerate, kSimulateStudy };

inline std::optional<Mode> parse_mode(std::string_view name) {
  if (name == "gaussian") return Mode::kGaussian;
  if (name == "importance") return Mode::kImportance;
  if (name == "enumerate") return Mode::kEnumerate;
  if (name == "simulate-study") return Mode::kSimulateStudy;
  return std::nullopt;
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  Mode mode = Mode::kImportance;
  std::filesystem::path hierarchy;
  /// Base forecasts; simulation parameters in simulate-study mode.
  std::filesystem::path forecasts;
  std::filesystem::path observations;
  std::size_t n_draws = kDefaultDraws;
  std::uint64_t seed = 1;
  double tail_tol = kDefaultTailTol;
  /// Interval level alpha: intervals cover 1 - alpha.
  double alpha = 0.1;
  std::filesystem::path out;
  /// 0 picks the hardware concurrency.
  unsigned workers = 0;
  double effect_tol = 1e-9;

  void validate() const {
    const auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (forecasts.empty()) {
      fail(mode == Mode::kSimulateStudy ? "--forecasts must name the simulation parameter file"
                                        : "--forecasts is required");
    }
    if (mode != Mode::kSimulateStudy && hierarchy.empty()) {
      fail("--hierarchy is required in this mode");
    }
    if (out.empty()) {
      fail("--out is required");
    }
    if ((mode == Mode::kImportance || mode == Mode::kSimulateStudy) && n_draws < kMinDraws) {
      fail("--n-draws must be at least " + std::to_string(kMinDraws) + " for importance sampling");
    }
    if (n_draws < 2) {
      fail("--n-draws must be at least 2");
    }
    if (!(tail_tol > 0.0 && tail_tol < 1.0)) {
      fail("--tail-tol must lie in (0, 1)");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) {
      fail("--alpha must lie in (0, 1)");
    }
  }
};

/// Everything one step contributes to the output files.
struct StepOutput {
  bool ok = true;
  std::string error_code;
  std::string error_message;
  std::vector<std::vector<std::string>> reconciled_rows;
  std::vector<std::vector<std::string>> score_rows;
  std::vector<std::vector<std::string>> table_rows;
  std::vector<std::string> diagnostics_row;
  std::optional<ScoreReport> scores;
  std::optional<Effect> effect;
  nlohmann::json gaussian;
};

/// Simulation study input: two score-driven models over a single-level
/// hierarchy. The bottom model generates the data and the bottom forecasts;
/// the upper model runs on the aggregate.
struct StudyConfig {
  Eigen::Index horizon = 0;
  ScoreDrivenParams bottom;
  ScoreDrivenParams upper;
  std::vector<std::string> labels;
};

inline StudyConfig parse_study(const nlohmann::json& j) {
  StudyConfig s;
  const auto& h = io::detail::field(j, "horizon", "study");
  io::detail::require(h.is_number_integer() && h.get<long>() >= 1, "study.horizon: expected a positive integer");
  s.horizon = h.get<long>();
  s.bottom = io::parse_score_driven(io::detail::field(j, "bottom", "study"), "study.bottom");
  s.upper = io::parse_score_driven(io::detail::field(j, "upper", "study"), "study.upper");
  if (j.contains("labels_upper") || j.contains("labels_bottom")) {
    s.labels = io::detail::strings(io::detail::field(j, "labels_upper", "study"), "study.labels_upper");
    const auto b = io::detail::strings(io::detail::field(j, "labels_bottom", "study"), "study.labels_bottom");
    s.labels.insert(s.labels.end(), b.begin(), b.end());
  } else {
    s.labels.emplace_back("ALL");
    for (Eigen::Index i = 0; i < s.bottom.k(); ++i) {
      s.labels.push_back("B" + std::to_string(i + 1));
    }
  }
  io::detail::require(static_cast<Eigen::Index>(s.labels.size()) == s.bottom.k() + 1,
                      "study: labels must name one upper and every bottom series");
  return s;
}

namespace detail {

inline std::string num(double x) { return csv::number(x); }

inline std::string skill_cell(double base, double reconc) {
  if (!(base >= 0.0 && reconc >= 0.0)) {
    return "NA";
  }
  return num(skill_score(base, reconc));
}

struct BaseMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

inline BaseMoments base_moments(const Hierarchy& h, const HierForecast& f) {
  BaseMoments out{Eigen::VectorXd(h.n()), Eigen::VectorXd(h.n())};
  const auto fill = [&](const BlockForecast& block, Eigen::Index offset) {
    if (const auto* counts = std::get_if<std::vector<CountDistribution>>(&block)) {
      for (std::size_t i = 0; i < counts->size(); ++i) {
        const auto mv = mean_var((*counts)[i]);
        out.mean[offset + static_cast<Eigen::Index>(i)] = mv.mean;
        out.variance[offset + static_cast<Eigen::Index>(i)] = mv.variance;
      }
    } else {
      const auto& g = std::get<MultivariateGaussian>(block);
      out.mean.segment(offset, g.dim()) = g.mean();
      out.variance.segment(offset, g.dim()) = g.cov().diagonal();
    }
  };
  fill(f.upper, 0);
  fill(f.bottom, h.upper_count());
  return out;
}

/// N x n base draws: independent upper and bottom blocks.
inline Eigen::MatrixXd base_draws(const Hierarchy& h, const HierForecast& f, std::size_t n, std::uint64_t seed,
                                  const Eigen::MatrixXd* bottom_draws) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), h.n());
  if (const auto* counts = std::get_if<std::vector<CountDistribution>>(&f.upper)) {
    for (std::size_t k = 0; k < counts->size(); ++k) {
      Rng rng(derive_seed(seed, streams::kUpper + k));
      const CountSampler sampler((*counts)[k]);
      for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out(i, static_cast<Eigen::Index>(k)) = static_cast<double>(sampler(rng));
      }
    }
  } else {
    Rng rng(derive_seed(seed, streams::kUpper));
    out.leftCols(h.upper_count()) = sample(std::get<MultivariateGaussian>(f.upper), rng, n);
  }
  out.rightCols(h.m()) = bottom_draws != nullptr ? *bottom_draws : hierreconc::detail::draw_bottom(f.bottom, n, seed);
  return out;
}

inline void add_reconciled_rows(StepOutput& out, std::size_t step, const Hierarchy& h, const BaseMoments& base,
                                const std::vector<double>& mean, const std::vector<double>& var,
                                const std::vector<double>& median, const std::vector<double>& lower,
                                const std::vector<double>& upper) {
  for (Eigen::Index i = 0; i < h.n(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out.reconciled_rows.push_back({std::to_string(step), h.labels()[k], num(base.mean[i]), num(base.variance[i]),
                                   num(mean[k]), num(var[k]), num(median[k]), num(lower[k]), num(upper[k])});
  }
}

inline void add_score_rows(StepOutput& out, std::size_t step, const Hierarchy& h, const ScoreReport& r) {
  const auto s = std::to_string(step);
  out.score_rows.push_back({s, "joint", "ES", num(r.es_base), num(r.es_reconc), skill_cell(r.es_base, r.es_reconc)});
  for (Eigen::Index i = 0; i < h.n(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& label = h.labels()[k];
    out.score_rows.push_back({s, label, "IS", num(r.is_base[k]), num(r.is_reconc[k]), skill_cell(r.is_base[k], r.is_reconc[k])});
    out.score_rows.push_back({s, label, "SE", num(r.se_base[k]), num(r.se_reconc[k]), skill_cell(r.se_base[k], r.se_reconc[k])});
    out.score_rows.push_back({s, label, "AE", num(r.ae_base[k]), num(r.ae_reconc[k]), skill_cell(r.ae_base[k], r.ae_reconc[k])});
    const double wb = r.interval_base[k].width();
    const double wr = r.interval_reconc[k].width();
    out.score_rows.push_back({s, label, "WIDTH", num(wb), num(wr), skill_cell(wb, wr)});
    out.score_rows.push_back({s, label, "COVERED", r.covered_base[k] ? "1" : "0", r.covered_reconc[k] ? "1" : "0", "NA"});
  }
}

/// step,status,error_code,p_c,p_c_se,truncation_bound,ess,ess_warning,
/// base_upper_mean,bottom_up_mean,reconciled_upper_mean,effect
struct Diagnostics {
  double p_c = std::nan("");
  double p_c_se = std::nan("");
  double truncation_bound = std::nan("");
  double ess = std::nan("");
  std::optional<bool> ess_warning;
  double base_upper_mean = std::nan("");
  double bottom_up_mean = std::nan("");
  double reconciled_upper_mean = std::nan("");
};

inline void finish_diagnostics(StepOutput& out, std::size_t step, const Diagnostics& d, const Hierarchy& h,
                               double tol) {
  std::string effect = "NA";
  if (h.upper_count() == 1 && std::isfinite(d.reconciled_upper_mean)) {
    out.effect = classify_effect(d.base_upper_mean, d.bottom_up_mean, d.reconciled_upper_mean, tol);
    effect = std::string(to_string(*out.effect));
  }
  out.diagnostics_row = {std::to_string(step),
                         "ok",
                         "",
                         num(d.p_c),
                         num(d.p_c_se),
                         num(d.truncation_bound),
                         num(d.ess),
                         d.ess_warning ? (*d.ess_warning ? "1" : "0") : "NA",
                         num(d.base_upper_mean),
                         num(d.bottom_up_mean),
                         num(d.reconciled_upper_mean),
                         effect};
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline nlohmann::json to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline StepOutput run_gaussian_step(const Hierarchy& h, const io::StepForecast& forecast, const Eigen::VectorXd* obs,
                                    std::size_t step, std::uint64_t seed, const RunConfig& cfg) {
  StepOutput out;
  const MultivariateGaussian base = forecast.as_joint_gaussian(h);
  const auto rec = reconcile_gaussian(h, base);
  const MultivariateGaussian joint = rec.joint(h);

  const BaseMoments bm{base.mean(), base.cov().diagonal()};
  const double z = normal_quantile(1.0 - 0.5 * cfg.alpha);
  const auto mean = to_std(joint.mean());
  std::vector<double> var(mean.size());
  std::vector<double> lo(mean.size());
  std::vector<double> hi(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    var[i] = joint.cov()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    lo[i] = mean[i] - z * std::sqrt(var[i]);
    hi[i] = mean[i] + z * std::sqrt(var[i]);
  }
  add_reconciled_rows(out, step, h, bm, mean, var, mean, lo, hi);

  out.gaussian = {{"step", step},
                  {"bottom_mean", to_std(rec.bottom_mean)},
                  {"bottom_cov", to_json(rec.bottom_cov)},
                  {"upper_mean", to_std(rec.upper_mean)},
                  {"upper_cov", to_json(rec.upper_cov)},
                  {"incoherence", to_std(rec.incoherence)},
                  {"weights", nullptr}};
  Diagnostics d;
  if (h.upper_count() == 1) {
    d.base_upper_mean = base.mean()[0];
    d.bottom_up_mean = h.aggregation_real().row(0) * base.mean().tail(h.m());
    d.reconciled_upper_mean = rec.upper_mean[0];
    if (base.cov().topRightCorner(1, h.m()).cwiseAbs().maxCoeff() <= 1e-12) {
      const auto w = convex_weights_single_upper(h, base);
      out.gaussian["weights"] = {{"w_base", w.w_base}, {"w_bottom_up", w.w_bottom_up}, {"bottom_up_var", w.bottom_up_var}};
    }
  }
  if (obs != nullptr) {
    Rng base_rng(derive_seed(seed, streams::kUpper));
    Rng rec_rng(derive_seed(seed, streams::kResample));
    out.scores = score_step(sample(base, base_rng, cfg.n_draws), sample(joint, rec_rng, cfg.n_draws), *obs, cfg.alpha);
    add_score_rows(out, step, h, *out.scores);
  }
  finish_diagnostics(out, step, d, h, cfg.effect_tol);
  return out;
}

inline StepOutput run_importance_step(const Hierarchy& h, const HierForecast& f, const Eigen::VectorXd* obs,
                                      std::size_t step, std::uint64_t seed, const RunConfig& cfg) {
  StepOutput out;
  const auto samples = reconcile_is(h, f, {cfg.n_draws, seed, Resampling::kMultinomial});
  const auto stats = column_stats(samples.full, {0.5 * cfg.alpha, 1.0 - 0.5 * cfg.alpha});
  std::vector<double> mean, var, median, lo, hi;
  for (const auto& s : stats) {
    mean.push_back(s.mean);
    var.push_back(s.variance);
    median.push_back(s.median);
    lo.push_back(s.quantiles[0]);
    hi.push_back(s.quantiles[1]);
  }
  const auto bm = base_moments(h, f);
  add_reconciled_rows(out, step, h, bm, mean, var, median, lo, hi);

  Diagnostics d;
  if (is_discrete(f.upper)) {
    d.p_c = samples.mean_weight;
    d.p_c_se = samples.mean_weight_std_error;
  }
  d.ess = samples.ess;
  d.ess_warning = samples.ess_warning;
  d.base_upper_mean = bm.mean[0];
  d.bottom_up_mean = h.aggregation_real().row(0) * bm.mean.tail(h.m());
  d.reconciled_upper_mean = mean[0];
  if (obs != nullptr) {
    const auto base = base_draws(h, f, cfg.n_draws, seed, &samples.proposal);
    out.scores = score_step(base, samples.full, *obs, cfg.alpha);
    add_score_rows(out, step, h, *out.scores);
  }
  finish_diagnostics(out, step, d, h, cfg.effect_tol);
  return out;
}

inline StepOutput run_enumerate_step(const Hierarchy& h, const HierForecast& f, const Eigen::VectorXd* obs,
                                     std::size_t step, std::uint64_t seed, const RunConfig& cfg) {
  StepOutput out;
  const auto table = enumerate_reconciled(h, f, cfg.tail_tol);
  const auto stats = table_stats(table, {0.5 * cfg.alpha, 1.0 - 0.5 * cfg.alpha});
  std::vector<double> mean, var, median, lo, hi;
  for (const auto& s : stats) {
    mean.push_back(s.moments.mean);
    var.push_back(s.moments.variance);
    median.push_back(s.median);
    lo.push_back(s.quantiles[0]);
    hi.push_back(s.quantiles[1]);
  }
  const auto bm = base_moments(h, f);
  add_reconciled_rows(out, step, h, bm, mean, var, median, lo, hi);
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::vector<std::string> row{std::to_string(step)};
    for (Eigen::Index j = 0; j < table.m; ++j) {
      row.push_back(std::to_string(table.value(r, j)));
    }
    row.push_back(num(table.probs[r]));
    out.table_rows.push_back(std::move(row));
  }

  Diagnostics d;
  d.p_c = table.coherent_mass;
  d.p_c_se = 0.0;
  d.truncation_bound = table.truncation_bound;
  d.base_upper_mean = bm.mean[0];
  d.bottom_up_mean = h.aggregation_real().row(0) * bm.mean.tail(h.m());
  d.reconciled_upper_mean = mean[0];
  if (obs != nullptr) {
    Rng rng(derive_seed(seed, streams::kResample));
    const auto picks = hierreconc::detail::resample_indices(table.probs, cfg.n_draws, Resampling::kMultinomial, rng);
    Eigen::MatrixXd rec(static_cast<Eigen::Index>(cfg.n_draws), h.n());
    for (std::size_t i = 0; i < picks.size(); ++i) {
      Eigen::VectorXd b(h.m());
      for (Eigen::Index j = 0; j < h.m(); ++j) {
        b[j] = static_cast<double>(table.value(picks[i], j));
      }
      rec.row(static_cast<Eigen::Index>(i)) = h.complete(b).transpose();
    }
    out.scores = score_step(base_draws(h, f, cfg.n_draws, seed, nullptr), rec, *obs, cfg.alpha);
    add_score_rows(out, step, h, *out.scores);
  }
  finish_diagnostics(out, step, d, h, cfg.effect_tol);
  return out;
}

inline void write_rows(const std::filesystem::path& path, const std::vector<std::string>& header,
                       const std::vector<StepOutput>& outputs,
                       std::vector<std::vector<std::string>> StepOutput::*rows) {
  std::ofstream os(path, std::ios::binary);
  csv::write_row(os, header);
  for (const auto& o : outputs) {
    for (const auto& row : o.*rows) {
      csv::write_row(os, row);
    }
  }
}

/// Averages over scored steps: series,metric,base,reconc,skill,n.
inline void write_summary(const std::filesystem::path& path, const Hierarchy& h, const std::vector<StepOutput>& outputs) {
  struct Acc {
    double base = 0.0, reconc = 0.0, skill = 0.0;
    std::size_t n = 0, n_skill = 0;
    void add(double b, double r, bool with_skill) {
      base += b;
      reconc += r;
      ++n;
      if (with_skill && b >= 0.0 && r >= 0.0) {
        skill += skill_score(b, r);
        ++n_skill;
      }
    }
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  std::vector<std::pair<std::string, std::string>> order;
  const auto at = [&](const std::string& series, const std::string& metric) -> Acc& {
    const auto key = std::make_pair(series, metric);
    if (acc.find(key) == acc.end()) {
      order.push_back(key);
    }
    return acc[key];
  };
  std::size_t effects[3] = {0, 0, 0};
  std::size_t classified = 0;
  for (const auto& o : outputs) {
    if (o.effect) {
      ++effects[static_cast<int>(*o.effect)];
      ++classified;
    }
    if (!o.scores) {
      continue;
    }
    const auto& r = *o.scores;
    at("joint", "ES").add(r.es_base, r.es_reconc, true);
    for (Eigen::Index i = 0; i < h.n(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      const auto& label = h.labels()[k];
      at(label, "IS").add(r.is_base[k], r.is_reconc[k], true);
      at(label, "SE").add(r.se_base[k], r.se_reconc[k], true);
      at(label, "AE").add(r.ae_base[k], r.ae_reconc[k], true);
      const double wb = r.interval_base[k].width();
      const double wr = r.interval_reconc[k].width();
      at(label, "WIDTH").add(wb, wr, true);
      at(label, "COVERAGE").add(r.covered_base[k] ? 1.0 : 0.0, r.covered_reconc[k] ? 1.0 : 0.0, false);
      at(label, "WIDTH_NOT_WIDER").add(0.0, wr <= wb ? 1.0 : 0.0, false);
    }
  }
  std::ofstream os(path, std::ios::binary);
  csv::write_row(os, {"series", "metric", "base", "reconc", "skill", "n"});
  for (const auto& key : order) {
    const auto& a = acc.at(key);
    const bool ratio_only = key.second == "WIDTH_NOT_WIDER";
    const auto n = static_cast<double>(a.n);
    csv::write_row(os, {key.first, key.second, ratio_only ? "NA" : num(a.base / n), num(a.reconc / n),
                        a.n_skill > 0 ? num(a.skill / static_cast<double>(a.n_skill)) : "NA", std::to_string(a.n)});
  }
  if (classified > 0 && h.upper_count() == 1) {
    const auto& upper = h.labels().front();
    const Effect all[] = {Effect::kStrengthening, Effect::kCompromise, Effect::kOther};
    for (Effect e : all) {
      std::string metric = "EFFECT_";
      for (char c : to_string(e)) {
        metric += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
      csv::write_row(os, {upper, metric, "NA",
                          num(static_cast<double>(effects[static_cast<int>(e)]) / static_cast<double>(classified)),
                          "NA", std::to_string(classified)});
    }
  }
}

template <class Fn>
void run_parallel(std::size_t count, unsigned workers, Fn&& fn) {
  const unsigned threads =
      std::max(1U, std::min<unsigned>(workers == 0 ? std::thread::hardware_concurrency() : workers,
                                      static_cast<unsigned>(std::min<std::size_t>(count, 1024))));
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      fn(i);
    }
  };
  if (threads == 1) {
    work();
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back(work);
  }
}

}  // namespace detail

/// Column headers of the output files.
inline const std::vector<std::string> kReconciledHeader = {"step", "series", "base_mean", "base_variance", "mean",
                                                           "variance", "median", "lower", "upper"};
inline const std::vector<std::string> kScoresHeader = {"step", "series", "metric", "base", "reconc", "skill"};
inline const std::vector<std::string> kDiagnosticsHeader = {
    "step", "status", "error_code", "p_c", "p_c_se", "truncation_bound", "ess", "ess_warning",
    "base_upper_mean", "bottom_up_mean", "reconciled_upper_mean", "effect"};

/// Runs a batch. Returns 0 when every step succeeds, 1 when some step failed
/// (one `error step=... code=...` line per failure on `err`), 2 on
/// configuration or input errors.
inline int run(const RunConfig& cfg, std::ostream& err) {
  std::optional<Hierarchy> hierarchy;
  std::vector<io::StepForecast> forecasts;
  std::vector<Eigen::VectorXd> observations;
  std::optional<SimulatedPanel> panel;
  try {
    cfg.validate();
    if (cfg.mode == Mode::kSimulateStudy) {
      const auto study = parse_study(io::read_json(cfg.forecasts));
      hierarchy = cfg.hierarchy.empty() ? single_level_hierarchy(study.labels) : io::parse_hierarchy(io::read_json(cfg.hierarchy));
      if (hierarchy->upper_count() != 1 || hierarchy->m() != study.bottom.k()) {
        throw ConfigError("simulation study needs a single upper over the simulated bottom series");
      }
      panel = simulate_panel(study.bottom, study.horizon + 1, derive_seed(cfg.seed, 0xA11CE));
      const auto upper_path = aggregate_forecast(panel->counts, study.upper);
      for (Eigen::Index t = 0; t < study.horizon; ++t) {
        std::vector<CountDistribution> bottoms;
        for (Eigen::Index i = 0; i < study.bottom.k(); ++i) {
          bottoms.emplace_back(panel->forecast(t, i));
        }
        io::StepForecast step;
        step.blocks = HierForecast{std::vector<CountDistribution>{upper_path.forecast(t)}, std::move(bottoms), true};
        forecasts.push_back(std::move(step));
        Eigen::VectorXd b = panel->counts.row(t + 1).cast<double>().transpose();
        observations.push_back(hierarchy->complete(b));
      }
    } else {
      hierarchy = io::parse_hierarchy(io::read_json(cfg.hierarchy));
      forecasts = io::parse_forecasts(io::read_json(cfg.forecasts), *hierarchy);
      if (!cfg.observations.empty()) {
        observations = io::read_observations(cfg.observations, *hierarchy);
        if (observations.size() != forecasts.size()) {
          throw ConfigError("observations have " + std::to_string(observations.size()) + " rows for " +
                            std::to_string(forecasts.size()) + " forecast steps");
        }
      }
    }
    std::filesystem::create_directories(cfg.out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

  const Hierarchy& h = *hierarchy;
  std::vector<StepOutput> outputs(forecasts.size());
  detail::run_parallel(forecasts.size(), cfg.workers, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(cfg.seed, t);
    const Eigen::VectorXd* obs = observations.empty() ? nullptr : &observations[t];
    try {
      switch (cfg.mode) {
        case Mode::kGaussian:
          outputs[t] = detail::run_gaussian_step(h, forecasts[t], obs, t, seed, cfg);
          break;
        case Mode::kImportance:
        case Mode::kSimulateStudy:
          hierreconc::detail::require(forecasts[t].blocks.has_value(), ErrorCode::kInvalidParameter,
                                      "importance sampling needs per-variable forecasts");
          outputs[t] = detail::run_importance_step(h, *forecasts[t].blocks, obs, t, seed, cfg);
          break;
        case Mode::kEnumerate:
          hierreconc::detail::require(forecasts[t].blocks.has_value(), ErrorCode::kInvalidParameter,
                                      "enumeration needs per-variable forecasts");
          outputs[t] = detail::run_enumerate_step(h, *forecasts[t].blocks, obs, t, seed, cfg);
          break;
      }
    } catch (const Error& e) {
      outputs[t] = StepOutput{};
      outputs[t].ok = false;
      outputs[t].error_code = std::string(to_string(e.code()));
      outputs[t].error_message = e.what();
    } catch (const std::exception& e) {
      outputs[t] = StepOutput{};
      outputs[t].ok = false;
      outputs[t].error_code = "InternalError";
      outputs[t].error_message = e.what();
    }
    if (!outputs[t].ok) {
      outputs[t].diagnostics_row = {std::to_string(t), "error", outputs[t].error_code, "NA", "NA", "NA",
                                    "NA", "NA", "NA", "NA", "NA", "NA"};
    }
  });

  int status = 0;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    if (!outputs[t].ok) {
      err << "error step=" << t << " code=" << outputs[t].error_code << " message=\"" << outputs[t].error_message
          << "\"\n";
      status = 1;
    }
  }

  detail::write_rows(cfg.out / "reconciled.csv", kReconciledHeader, outputs, &StepOutput::reconciled_rows);
  detail::write_rows(cfg.out / "scores.csv", kScoresHeader, outputs, &StepOutput::score_rows);
  {
    std::ofstream os(cfg.out / "diagnostics.csv", std::ios::binary);
    csv::write_row(os, kDiagnosticsHeader);
    for (const auto& o : outputs) {
      csv::write_row(os, o.diagnostics_row);
    }
  }
  if (!observations.empty()) {
    detail::write_summary(cfg.out / "summary.csv", h, outputs);
  }
  if (cfg.mode == Mode::kEnumerate) {
    auto header = h.bottom_labels();
    header.insert(header.begin(), "step");
    header.emplace_back("probability");
    detail::write_rows(cfg.out / "joint_pmf.csv", header, outputs, &StepOutput::table_rows);
  }
  if (cfg.mode == Mode::kGaussian) {
    auto all = nlohmann::json::array();
    for (const auto& o : outputs) {
      if (o.ok) {
        all.push_back(o.gaussian);
      }
    }
    std::ofstream os(cfg.out / "gaussian_reconciliation.json", std::ios::binary);
    os << all.dump(2) << '\n';
  }
  if (panel) {
    std::ofstream os(cfg.out / "panel.csv", std::ios::binary);
    write_panel_csv(os, *panel, h.bottom_labels());
  }
  return status;
}

}  // namespace pipeline
}  // namespace hierreconc
