#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ddc/cli.hpp"
#include "ddc/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Estimation and fixed-parameter sensitivity for dynamic discrete choice models"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  long long seed = -1;
  int threads = 1;
  app.add_option("--config", config_path, "Run configuration (sectioned key = value file)");
  app.add_option("--out", out_dir, "Output directory (created if missing)");
  app.add_option("--seed", seed, "Override [data] seed");
  app.add_option("--threads", threads, "Worker threads for profile evaluations")
      ->check(CLI::PositiveNumber);

  const char* names[] = {"simulate", "estimate", "sensitivity", "bounds", "monotone", "breakdown"};
  const char* help[] = {
      "Simulate a panel and write panel.csv",
      "Nested fixed-point estimation; writes solution.json",
      "Local sensitivity to beta; writes sensitivity.json, table1.csv, figure_local.csv",
      "Bounds of targets over beta intervals; writes bounds.json, table2.csv",
      "Monotonicity certificates of CCP-implied utilities; writes verdict.csv, two_step.csv",
      "Breakdown frontier for a target threshold; writes frontier.json",
  };
  for (int k = 0; k < 6; ++k) app.add_subcommand(names[k], help[k]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ddc::cli::kUsage;
  }

  ddc::cli::RunConfig config;
  try {
    ddc::cli::Sections sections = ddc::cli::parse_sections(
        config_path.empty() ? ddc::cli::default_config_text() : ddc::cli::read_text(config_path));
    ddc::cli::apply_env_overrides(sections, ddc::cli::current_environment());
    if (seed >= 0) sections["data"]["seed"] = std::to_string(seed);
    config = ddc::cli::run_config_from_sections(sections);
    config.threads = threads;
  } catch (const ddc::IoError& e) {
    std::cerr << "ddcsens: " << e.what() << '\n';
    return ddc::cli::kIo;
  } catch (const ddc::Error& e) {
    std::cerr << "ddcsens: configuration error: " << e.what() << '\n';
    return ddc::cli::kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (cmd == "simulate") return ddc::cli::cmd_simulate(config, out_dir);
  if (cmd == "estimate") return ddc::cli::cmd_estimate(config, out_dir);
  if (cmd == "sensitivity") return ddc::cli::cmd_sensitivity(config, out_dir);
  if (cmd == "bounds") return ddc::cli::cmd_bounds(config, out_dir);
  if (cmd == "monotone") return ddc::cli::cmd_monotone(config, out_dir);
  return ddc::cli::cmd_breakdown(config, out_dir);
}
