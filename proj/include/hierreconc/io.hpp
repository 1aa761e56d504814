#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hierreconc/csv.hpp"
#include "hierreconc/distributions.hpp"
#include "hierreconc/error.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/scoredriven_sim.hpp"

namespace hierreconc::io {

using nlohmann::json;

namespace detail {

inline void require(bool cond, const std::string& what) { hierreconc::detail::require(cond, ErrorCode::kParseError, what); }

inline const json& field(const json& obj, const char* key, const std::string& where) {
  require(obj.is_object() && obj.contains(key), where + ": missing field \"" + key + "\"");
  return obj.at(key);
}

inline double number(const json& v, const std::string& where) {
  require(v.is_number(), where + ": expected a number");
  return v.get<double>();
}

inline std::vector<double> numbers(const json& v, const std::string& where) {
  require(v.is_array(), where + ": expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    out.push_back(number(x, where));
  }
  return out;
}

inline Eigen::VectorXd vector(const json& v, const std::string& where) {
  const auto values = numbers(v, where);
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline Eigen::MatrixXd matrix(const json& v, const std::string& where) {
  require(v.is_array() && !v.empty(), where + ": expected a non-empty array of rows");
  const auto cols = v.front().size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto row = numbers(v[i], where);
    require(row.size() == cols, where + ": ragged matrix");
    for (std::size_t j = 0; j < cols; ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  return out;
}

inline std::vector<std::string> strings(const json& v, const std::string& where) {
  require(v.is_array(), where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& x : v) {
    require(x.is_string(), where + ": expected a string");
    out.push_back(x.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

/// {"labels_upper": [...], "labels_bottom": [...], "A": [[...], ...]}
inline Hierarchy parse_hierarchy(const json& j) {
  const std::string where = "hierarchy";
  auto labels = detail::strings(detail::field(j, "labels_upper", where), where + ".labels_upper");
  const auto bottom = detail::strings(detail::field(j, "labels_bottom", where), where + ".labels_bottom");
  const auto& rows = detail::field(j, "A", where);
  detail::require(rows.is_array(), where + ".A: expected an array of rows");
  Eigen::MatrixXi a(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    detail::require(rows[r].is_array() && static_cast<Eigen::Index>(rows[r].size()) == a.cols(), where + ".A: ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      detail::require(rows[r][c].is_number_integer(), where + ".A: entries must be integers");
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<int>();
    }
  }
  hierreconc::detail::require(static_cast<Eigen::Index>(labels.size()) == a.rows() &&
                                  static_cast<Eigen::Index>(bottom.size()) == a.cols(),
                              ErrorCode::kLabelCountMismatch, "label lists do not match the shape of A");
  labels.insert(labels.end(), bottom.begin(), bottom.end());
  return {std::move(a), std::move(labels)};
}

/// One variable: {"family": ..., "params": {...}}.
///   poisson   {"lambda"}
///   negbin    {"mu", "alpha"}          (Var = mu + alpha mu^2)
///   bernoulli {"p"}
///   tabulated {"probs", optional "support"}
///   gaussian  {"mean", "var"}
struct VariableForecast {
  std::optional<CountDistribution> count;
  double gaussian_mean = 0.0;
  double gaussian_var = 0.0;
};

inline VariableForecast parse_variable(const json& j, const std::string& where) {
  const auto& family_field = detail::field(j, "family", where);
  detail::require(family_field.is_string(), where + ".family: expected a string");
  const auto family = family_field.get<std::string>();
  const auto& p = detail::field(j, "params", where);
  const std::string pw = where + ".params";
  VariableForecast out;
  if (family == "poisson") {
    out.count = Poisson(detail::number(detail::field(p, "lambda", pw), pw + ".lambda"));
  } else if (family == "negbin") {
    out.count = NegativeBinomial(detail::number(detail::field(p, "mu", pw), pw + ".mu"),
                                 detail::number(detail::field(p, "alpha", pw), pw + ".alpha"));
  } else if (family == "bernoulli") {
    out.count = Bernoulli(detail::number(detail::field(p, "p", pw), pw + ".p"));
  } else if (family == "tabulated") {
    auto probs = detail::numbers(detail::field(p, "probs", pw), pw + ".probs");
    if (p.contains("support")) {
      std::vector<std::int64_t> support;
      for (const auto& v : p.at("support")) {
        detail::require(v.is_number_integer(), pw + ".support: entries must be integers");
        support.push_back(v.get<std::int64_t>());
      }
      out.count = TabulatedPmf(std::move(support), std::move(probs));
    } else {
      out.count = TabulatedPmf::on_range(std::move(probs));
    }
  } else if (family == "gaussian") {
    out.gaussian_mean = detail::number(detail::field(p, "mean", pw), pw + ".mean");
    out.gaussian_var = detail::number(detail::field(p, "var", pw), pw + ".var");
    detail::require(out.gaussian_var >= 0.0, pw + ".var: must be non-negative");
  } else {
    detail::require(false, where + ".family: unknown family \"" + family + "\"");
  }
  return out;
}

/// A list of per-variable descriptors: all count families, or all Gaussian
/// (assembled into an independent block).
inline BlockForecast parse_block(const json& j, const std::string& where) {
  detail::require(j.is_array() && !j.empty(), where + ": expected a non-empty array");
  std::vector<VariableForecast> vars;
  for (std::size_t i = 0; i < j.size(); ++i) {
    vars.push_back(parse_variable(j[i], where + "[" + std::to_string(i) + "]"));
  }
  const bool all_count = std::all_of(vars.begin(), vars.end(), [](const auto& v) { return v.count.has_value(); });
  const bool all_gauss = std::none_of(vars.begin(), vars.end(), [](const auto& v) { return v.count.has_value(); });
  detail::require(all_count || all_gauss, where + ": cannot mix Gaussian and count families in one block");
  if (all_count) {
    std::vector<CountDistribution> out;
    for (auto& v : vars) {
      out.push_back(std::move(*v.count));
    }
    return out;
  }
  Eigen::VectorXd mean(static_cast<Eigen::Index>(vars.size()));
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(mean.size(), mean.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    mean[static_cast<Eigen::Index>(i)] = vars[i].gaussian_mean;
    cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = vars[i].gaussian_var;
  }
  return MultivariateGaussian(std::move(mean), std::move(cov));
}

/// Base forecast of one step: either {"upper": [...], "bottom": [...],
/// "independent": true} or {"joint": {"mean": [...], "cov": [[...]]}} for a
/// Gaussian over the whole hierarchy (upper block first).
struct StepForecast {
  std::optional<HierForecast> blocks;
  std::optional<MultivariateGaussian> joint;

  /// Joint Gaussian view; blocks must both be Gaussian and independent.
  [[nodiscard]] MultivariateGaussian as_joint_gaussian(const Hierarchy& h) const {
    if (joint) {
      return *joint;
    }
    const auto* u = std::get_if<MultivariateGaussian>(&blocks->upper);
    const auto* b = std::get_if<MultivariateGaussian>(&blocks->bottom);
    hierreconc::detail::require(u != nullptr && b != nullptr, ErrorCode::kInvalidParameter,
                                "Gaussian reconciliation needs Gaussian base forecasts");
    hierreconc::detail::require(blocks->independent, ErrorCode::kDependentBlocks,
                                "dependent blocks need a \"joint\" Gaussian descriptor");
    const Eigen::Index k = h.upper_count();
    const Eigen::Index m = h.m();
    Eigen::VectorXd mean(k + m);
    mean << u->mean(), b->mean();
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k + m, k + m);
    cov.topLeftCorner(k, k) = u->cov();
    cov.bottomRightCorner(m, m) = b->cov();
    return {std::move(mean), std::move(cov)};
  }
};

inline StepForecast parse_step(const json& j, const Hierarchy& h, const std::string& where) {
  StepForecast out;
  if (j.contains("joint")) {
    const auto& g = j.at("joint");
    out.joint = MultivariateGaussian(detail::vector(detail::field(g, "mean", where + ".joint"), where + ".joint.mean"),
                                     detail::matrix(detail::field(g, "cov", where + ".joint"), where + ".joint.cov"));
    hierreconc::detail::require(out.joint->dim() == h.n(), ErrorCode::kDimensionMismatch,
                                where + ": joint Gaussian dimension does not match the hierarchy");
    return out;
  }
  HierForecast f{parse_block(detail::field(j, "upper", where), where + ".upper"),
                 parse_block(detail::field(j, "bottom", where), where + ".bottom"), true};
  if (j.contains("independent")) {
    detail::require(j.at("independent").is_boolean(), where + ".independent: expected a boolean");
    f.independent = j.at("independent").get<bool>();
  }
  f.validate(h);
  out.blocks = std::move(f);
  return out;
}

/// {"steps": [step, ...]} or a single step object.
inline std::vector<StepForecast> parse_forecasts(const json& j, const Hierarchy& h) {
  std::vector<StepForecast> out;
  if (j.contains("steps")) {
    const auto& steps = j.at("steps");
    detail::require(steps.is_array() && !steps.empty(), "forecasts.steps: expected a non-empty array");
    for (std::size_t t = 0; t < steps.size(); ++t) {
      out.push_back(parse_step(steps[t], h, "forecasts.steps[" + std::to_string(t) + "]"));
    }
  } else {
    out.push_back(parse_step(j, h, "forecasts"));
  }
  return out;
}

/// {"C": [...], "D": [[...]], "E": [[...]], "alpha": [...], "mu0": [...]}
inline ScoreDrivenParams parse_score_driven(const json& j, const std::string& where) {
  ScoreDrivenParams p;
  p.c = detail::vector(detail::field(j, "C", where), where + ".C");
  p.d = detail::matrix(detail::field(j, "D", where), where + ".D");
  p.e = detail::matrix(detail::field(j, "E", where), where + ".E");
  p.alpha = detail::vector(detail::field(j, "alpha", where), where + ".alpha");
  p.mu0 = detail::vector(detail::field(j, "mu0", where), where + ".mu0");
  p.validate();
  return p;
}

/// Observations CSV: a header naming hierarchy labels (any order, every
/// label present), then one row per step. Returns rows in hierarchy order.
inline std::vector<Eigen::VectorXd> parse_observations(std::istream& in, const Hierarchy& h) {
  std::string line;
  detail::require(static_cast<bool>(std::getline(in, line)), "observations: missing header");
  const auto header = csv::split_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) {
    column[header[c]] = c;
  }
  std::vector<std::size_t> order;
  for (const auto& label : h.labels()) {
    const auto it = column.find(label);
    detail::require(it != column.end(), "observations: no column for \"" + label + "\"");
    order.push_back(it->second);
  }
  std::vector<Eigen::VectorXd> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto fields = csv::split_line(line);
    detail::require(fields.size() == header.size(), "observations row " + std::to_string(row) + ": wrong field count");
    Eigen::VectorXd y(h.n());
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& text = fields[order[i]];
      std::size_t used = 0;
      try {
        y[static_cast<Eigen::Index>(i)] = std::stod(text, &used);
      } catch (const std::logic_error&) {
        used = 0;
      }
      detail::require(used > 0 && used == text.size(),
                      "observations row " + std::to_string(row) + ": bad number \"" + text + "\"");
    }
    out.push_back(std::move(y));
  }
  return out;
}

inline std::vector<Eigen::VectorXd> read_observations(const std::filesystem::path& path, const Hierarchy& h) {
  std::ifstream in(path);
  detail::require(in.good(), "cannot open " + path.string());
  return parse_observations(in, h);
}

}  // namespace hierreconc::io
