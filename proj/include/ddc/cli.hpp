#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddc/global.hpp"
#include "ddc/zurcher.hpp"

namespace ddc::cli {

// Sectioned `key = value` text: [section] headers, '#' comments. Values are
// kept as trimmed strings; list values are comma separated.
using Sections = std::map<std::string, std::map<std::string, std::string>>;
Sections parse_sections(const std::string& text);

// Applies NAME=value pairs of the form <prefix><SECTION>_<KEY> (upper case)
// whose section is one of `known_sections`.
void apply_env_overrides(Sections& sections, const std::map<std::string, std::string>& env,
                         const std::string& prefix = "DDCSENS_");
std::map<std::string, std::string> current_environment();

// Canonical rendering (sorted sections and keys) and its FNV-1a 64-bit hash.
std::string canonical_text(const Sections& sections);
std::string fnv1a_hex(const std::string& text);

struct RunConfig {
  zurcher::ZurcherConfig model;

  // Data source: simulate (default) or a panel CSV.
  bool simulate = true;
  std::string data_path;
  int units = 100;
  int periods = 200;
  std::uint64_t seed = 20240607;
  bool estimate_phi = false;  // frequency estimate of phi1, phi2 from the data

  Vector init_theta = Vector::Zero(2);
  int multi_start = 0;
  std::string solution_path;  // optional stored estimate used as the start

  std::vector<double> deltas{1e-4, 1e-3, 1e-2};
  int cf_state = 0;  // 0 means the last state
  double cf_mc_factor = 0.9;
  std::vector<double> figure_betas;

  double bounds_lo = 0.7;
  std::vector<double> bounds_hi{0.8, 0.9};
  std::vector<std::string> bounds_targets;  // default rc, cf_ccp:<X>, welfare
  BoundsMethod bounds_method = BoundsMethod::Profile;
  double grid_step = 1e-3;
  int seed_points = 21;

  std::string ccp_method = "logit";  // logit | frequency | model
  int logit_degree = 2;
  int scan_points = 101;
  double scan_lo = 0.0;
  double scan_hi = 0.99;

  std::string breakdown_target = "rc";
  std::optional<double> tau_star;
  double breakdown_lo = 0.7;
  double breakdown_hi = 0.95;
  bool conclusion_above = true;
  bool assume_monotone = false;
  int breakdown_points = 101;

  int threads = 1;
  std::string canonical;  // canonical text after overrides
  std::string hash;

  int cf_state_resolved() const { return cf_state > 0 ? cf_state : model.num_states; }
  std::vector<std::string> targets_resolved() const;
};

RunConfig run_config_from_sections(const Sections& sections);
RunConfig load_run_config(const std::string& path, const std::map<std::string, std::string>& env);
std::string default_config_text();

// Command entry points. Each writes into `out_dir` (created if missing) and
// returns the process exit code.
enum ExitCode : int { kOk = 0, kAnalysisFailed = 1, kUsage = 2, kIo = 3 };

int cmd_simulate(const RunConfig& config, const std::string& out_dir);
int cmd_estimate(const RunConfig& config, const std::string& out_dir);
int cmd_sensitivity(const RunConfig& config, const std::string& out_dir);
int cmd_bounds(const RunConfig& config, const std::string& out_dir);
int cmd_monotone(const RunConfig& config, const std::string& out_dir);
int cmd_breakdown(const RunConfig& config, const std::string& out_dir);

// Tidy figure data `beta,series,value`.
struct FigurePoint {
  double beta = 0.0;
  std::string series;
  double value = 0.0;
};
std::string figure_csv(const std::vector<FigurePoint>& points);
std::vector<FigurePoint> parse_figure_csv(const std::string& text);

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  Vector theta;
  double beta = 0.0;
  double phi1 = 0.0;
  double phi2 = 0.0;
  int num_states = 0;
  std::vector<std::string> files;
};
std::string to_json(const Manifest& manifest);
Manifest manifest_from_json(const std::string& text);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace ddc::cli
