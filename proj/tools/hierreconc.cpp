#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hierreconc/pipeline.hpp"

int main(int argc, char** argv) {
  namespace hp = hierreconc::pipeline;
  CLI::App app{"Probabilistic forecast reconciliation by conditioning"};
  hp::RunConfig cfg;
  std::string mode = "importance";
  app.add_option("--mode", mode, "gaussian | importance | enumerate | simulate-study")->required();
  app.add_option("--hierarchy", cfg.hierarchy, "Hierarchy JSON");
  app.add_option("--forecasts", cfg.forecasts, "Base forecast JSON (simulation parameters in simulate-study)");
  app.add_option("--obs", cfg.observations, "Observation CSV, one row per step");
  app.add_option("--n-draws", cfg.n_draws, "Draws per step")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  app.add_option("--tail-tol", cfg.tail_tol, "Tail mass dropped per marginal when enumerating")->capture_default_str();
  app.add_option("--alpha", cfg.alpha, "Intervals cover 1 - alpha")->capture_default_str();
  app.add_option("--out", cfg.out, "Output directory")->required();
  app.add_option("--workers", cfg.workers, "Worker threads, 0 for all cores")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const auto parsed = hp::parse_mode(mode);
  if (!parsed) {
    std::cerr << "config error: unknown mode '" << mode << "'\n";
    return 2;
  }
  cfg.mode = *parsed;
  return hp::run(cfg, std::cerr);
}
