#include "ddc/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "ddc/errors.hpp"
#include "ddc/estimate.hpp"
#include "ddc/sensitivity.hpp"
#include "ddc/targets.hpp"

extern char** environ;

namespace ddc::cli {

namespace {

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"model", {"num_states", "phi1", "phi2", "mc", "rc", "beta"}},
      {"data", {"source", "path", "units", "periods", "seed", "estimate_phi"}},
      {"estimate", {"init_mc", "init_rc", "multi_start", "solution"}},
      {"sensitivity", {"deltas", "cf_state", "cf_mc_factor", "figure_betas"}},
      {"bounds", {"lo", "hi", "targets", "method", "grid_step", "seed_points"}},
      {"monotone", {"ccp", "degree", "grid_points", "scan_lo", "scan_hi"}},
      {"breakdown",
       {"target", "tau_star", "lo", "hi", "conclusion", "monotone", "grid_points"}},
  };
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::exception&) {
    throw ContractError("config: bad number for '" + key + "': " + value);
  }
}

long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ContractError("config: bad integer for '" + key + "': " + value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ContractError("config: bad boolean for '" + key + "': " + value);
}

std::vector<std::string> to_list(const std::string& value) {
  std::string v = trim(value);
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& s : to_list(value)) out.push_back(to_double(key, s));
  return out;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

struct Loaded {
  zurcher::ZurcherConfig model;
  PanelDataset data;
  Matrix counts;
};

Loaded load_data(const RunConfig& c) {
  Loaded l;
  l.model = c.model;
  if (c.simulate) {
    l.data = zurcher::simulate_panel(c.model, c.units, c.periods, c.seed);
  } else {
    l.data = read_panel_csv(c.data_path);
  }
  if (l.data.empty()) throw DomainError("data set is empty");
  l.data.validate(c.model.num_states, 2);
  if (c.estimate_phi) {
    const auto [p1, p2] = zurcher::estimate_mileage_probs(l.data, c.model.num_states);
    l.model.phi1 = p1;
    l.model.phi2 = p2;
    l.model.validate();
  }
  l.counts = l.data.counts(c.model.num_states, 2);
  return l;
}

NfxpOptions nfxp_options(const RunConfig& c) {
  NfxpOptions o;
  o.multi_start = c.multi_start;
  return o;
}

EstimationSolution baseline_fit(const RunConfig& c, const Loaded& l) {
  Vector init = c.init_theta;
  if (!c.solution_path.empty()) {
    const EstimationSolution stored = read_solution(c.solution_path);
    if (stored.theta_hat.size() != 2) throw IoError("stored solution has wrong theta length");
    if (stored.gamma.size() >= 1 && std::abs(stored.gamma(0) - l.model.beta) > 1e-12) {
      throw ContractError("stored solution was estimated at a different beta");
    }
    init = stored.theta_hat;
  }
  return nfxp_estimate(zurcher::make_model(l.model), l.counts, init, nfxp_options(c));
}

Manifest make_manifest(const std::string& command, const RunConfig& c, const Loaded* l,
                       const Vector& theta) {
  Manifest m;
  m.command = command;
  m.config_hash = c.hash;
  m.seed = c.seed;
  m.theta = theta;
  const zurcher::ZurcherConfig& model = l ? l->model : c.model;
  m.beta = model.beta;
  m.phi1 = model.phi1;
  m.phi2 = model.phi2;
  m.num_states = model.num_states;
  return m;
}

void write_manifest(const std::string& out_dir, Manifest m) {
  m.files.push_back("manifest.json");
  write_text(join(out_dir, "manifest.json"), to_json(m) + "\n");
}

template <typename Body>
int run_stage(const std::string& stage, Body&& body) {
  try {
    body();
    return kOk;
  } catch (const IoError& e) {
    std::cerr << "ddcsens " << stage << ": I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const ContractError& e) {
    std::cerr << "ddcsens " << stage << ": invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "ddcsens " << stage << ": stage failed: " << e.what() << '\n';
    return kAnalysisFailed;
  } catch (const std::exception& e) {
    std::cerr << "ddcsens " << stage << ": unexpected error: " << e.what() << '\n';
    return kAnalysisFailed;
  }
}

}  // namespace

Sections parse_sections(const std::string& text) {
  Sections s;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ContractError("config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema().count(section)) throw ContractError("config: unknown section [" + section + "]");
      s[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) throw ContractError("config: key outside of a section: " + line);
    const std::string key = trim(line.substr(0, eq));
    const auto& keys = schema().at(section);
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ContractError("config: unknown key '" + key + "' in [" + section + "]");
    }
    s[section][key] = unquote(trim(line.substr(eq + 1)));
  }
  return s;
}

void apply_env_overrides(Sections& sections, const std::map<std::string, std::string>& env,
                         const std::string& prefix) {
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = lower(name.substr(prefix.size()));
    for (const auto& [section, keys] : schema()) {
      if (rest.rfind(section + "_", 0) != 0) continue;
      const std::string key = rest.substr(section.size() + 1);
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw ContractError("environment override " + name + ": unknown key '" + key + "'");
      }
      sections[section][key] = trim(value);
    }
  }
}

std::map<std::string, std::string> current_environment() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv(*e);
    const auto eq = kv.find('=');
    if (eq != std::string::npos) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return env;
}

std::string canonical_text(const Sections& sections) {
  std::ostringstream out;
  for (const auto& [section, keys] : sections) {
    out << '[' << section << "]\n";
    for (const auto& [k, v] : keys) out << k << " = " << v << '\n';
  }
  return out.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> RunConfig::targets_resolved() const {
  if (!bounds_targets.empty()) return bounds_targets;
  return {"rc", "cf_ccp:" + std::to_string(cf_state_resolved()), "welfare"};
}

RunConfig run_config_from_sections(const Sections& sections) {
  RunConfig c;
  auto get = [&](const std::string& sec, const std::string& key) -> const std::string* {
    const auto it = sections.find(sec);
    if (it == sections.end()) return nullptr;
    const auto jt = it->second.find(key);
    return jt == it->second.end() ? nullptr : &jt->second;
  };

  if (auto v = get("model", "num_states")) c.model.num_states = static_cast<int>(to_int("num_states", *v));
  if (auto v = get("model", "phi1")) c.model.phi1 = to_double("phi1", *v);
  if (auto v = get("model", "phi2")) c.model.phi2 = to_double("phi2", *v);
  if (auto v = get("model", "mc")) c.model.mc = to_double("mc", *v);
  if (auto v = get("model", "rc")) c.model.rc = to_double("rc", *v);
  if (auto v = get("model", "beta")) c.model.beta = to_double("beta", *v);
  c.model.validate();

  const std::string* source = get("data", "source");
  const std::string* path = get("data", "path");
  const std::string src = source ? lower(*source) : (path ? "csv" : "simulate");
  if (src == "simulate") {
    if (path && !path->empty()) {
      throw ContractError("config: [data] names both simulate and a path; pick one source");
    }
    c.simulate = true;
  } else if (src == "csv") {
    if (!path || path->empty()) throw ContractError("config: [data] source = csv needs a path");
    c.simulate = false;
    c.data_path = *path;
  } else {
    throw ContractError("config: [data] source must be simulate or csv");
  }
  if (auto v = get("data", "units")) c.units = static_cast<int>(to_int("units", *v));
  if (auto v = get("data", "periods")) c.periods = static_cast<int>(to_int("periods", *v));
  if (auto v = get("data", "seed")) {
    const long long s = to_int("seed", *v);
    if (s < 0) throw ContractError("config: seed must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (auto v = get("data", "estimate_phi")) c.estimate_phi = to_bool("estimate_phi", *v);
  if (c.units <= 0 || c.periods <= 0) throw ContractError("config: units and periods must be positive");

  if (auto v = get("estimate", "init_mc")) c.init_theta(0) = to_double("init_mc", *v);
  if (auto v = get("estimate", "init_rc")) c.init_theta(1) = to_double("init_rc", *v);
  if (auto v = get("estimate", "multi_start")) c.multi_start = static_cast<int>(to_int("multi_start", *v));
  if (auto v = get("estimate", "solution")) c.solution_path = *v;

  if (auto v = get("sensitivity", "deltas")) c.deltas = to_double_list("deltas", *v);
  if (auto v = get("sensitivity", "cf_state")) c.cf_state = static_cast<int>(to_int("cf_state", *v));
  if (auto v = get("sensitivity", "cf_mc_factor")) c.cf_mc_factor = to_double("cf_mc_factor", *v);
  if (auto v = get("sensitivity", "figure_betas")) c.figure_betas = to_double_list("figure_betas", *v);
  if (c.cf_state < 0 || c.cf_state > c.model.num_states) {
    throw ContractError("config: cf_state outside 1..num_states");
  }

  if (auto v = get("bounds", "lo")) c.bounds_lo = to_double("lo", *v);
  if (auto v = get("bounds", "hi")) c.bounds_hi = to_double_list("hi", *v);
  if (auto v = get("bounds", "targets")) c.bounds_targets = to_list(*v);
  if (auto v = get("bounds", "method")) {
    const std::string m = lower(*v);
    if (m == "profile") {
      c.bounds_method = BoundsMethod::Profile;
    } else if (m == "grid-oracle" || m == "grid") {
      c.bounds_method = BoundsMethod::GridOracle;
    } else {
      throw ContractError("config: [bounds] method must be profile or grid-oracle");
    }
  }
  if (auto v = get("bounds", "grid_step")) c.grid_step = to_double("grid_step", *v);
  if (auto v = get("bounds", "seed_points")) c.seed_points = static_cast<int>(to_int("seed_points", *v));
  for (double hi : c.bounds_hi) {
    if (!(hi > c.bounds_lo && hi < 1.0)) throw ContractError("config: bounds need lo < hi < 1");
  }
  for (const auto& t : c.targets_resolved()) TargetSpec::parse(t);

  if (auto v = get("monotone", "ccp")) c.ccp_method = lower(*v);
  if (c.ccp_method != "logit" && c.ccp_method != "frequency" && c.ccp_method != "model") {
    throw ContractError("config: [monotone] ccp must be logit, frequency or model");
  }
  if (auto v = get("monotone", "degree")) c.logit_degree = static_cast<int>(to_int("degree", *v));
  if (auto v = get("monotone", "grid_points")) c.scan_points = static_cast<int>(to_int("grid_points", *v));
  if (auto v = get("monotone", "scan_lo")) c.scan_lo = to_double("scan_lo", *v);
  if (auto v = get("monotone", "scan_hi")) c.scan_hi = to_double("scan_hi", *v);

  if (auto v = get("breakdown", "target")) c.breakdown_target = *v;
  TargetSpec::parse(c.breakdown_target);
  if (auto v = get("breakdown", "tau_star")) c.tau_star = to_double("tau_star", *v);
  if (auto v = get("breakdown", "lo")) c.breakdown_lo = to_double("lo", *v);
  if (auto v = get("breakdown", "hi")) c.breakdown_hi = to_double("hi", *v);
  if (auto v = get("breakdown", "conclusion")) {
    const std::string d = lower(*v);
    if (d != "above" && d != "below") throw ContractError("config: conclusion must be above or below");
    c.conclusion_above = d == "above";
  }
  if (auto v = get("breakdown", "monotone")) c.assume_monotone = to_bool("monotone", *v);
  if (auto v = get("breakdown", "grid_points")) {
    c.breakdown_points = static_cast<int>(to_int("grid_points", *v));
  }

  c.canonical = canonical_text(sections);
  c.hash = fnv1a_hex(c.canonical);
  return c;
}

RunConfig load_run_config(const std::string& path, const std::map<std::string, std::string>& env) {
  Sections s = parse_sections(path.empty() ? default_config_text() : read_text(path));
  apply_env_overrides(s, env);
  return run_config_from_sections(s);
}

std::string default_config_text() {
  return R"(# Desk-scale bus-engine run.
[model]
num_states = 20
phi1 = 0.35
phi2 = 0.10
mc = 0.05
rc = 8.0
beta = 0.95

[data]
source = simulate
units = 100
periods = 200
seed = 20240607

[sensitivity]
deltas = 1e-4, 1e-3, 1e-2
cf_mc_factor = 0.9
figure_betas = 0.5, 0.6, 0.7, 0.8, 0.9, 0.95

[bounds]
lo = 0.7
hi = 0.8, 0.9
method = profile
)";
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const RunConfig& c, const std::string& out_dir) {
  return run_stage("simulate", [&] {
    ensure_dir(out_dir);
    const Loaded l = load_data(c);
    write_panel_csv(l.data, join(out_dir, "panel.csv"));
    Manifest m = make_manifest("simulate", c, &l, l.model.theta());
    m.files.push_back("panel.csv");
    write_manifest(out_dir, m);
  });
}

int cmd_estimate(const RunConfig& c, const std::string& out_dir) {
  return run_stage("estimate", [&] {
    ensure_dir(out_dir);
    const Loaded l = load_data(c);
    const EstimationSolution s = baseline_fit(c, l);
    write_solution(s, join(out_dir, "solution.json"));
    Manifest m = make_manifest("estimate", c, &l, s.theta_hat);
    m.files.push_back("solution.json");
    write_manifest(out_dir, m);
  });
}

int cmd_sensitivity(const RunConfig& c, const std::string& out_dir) {
  return run_stage("sensitivity", [&] {
    ensure_dir(out_dir);
    const Loaded l = load_data(c);
    const EstimationSolution base = baseline_fit(c, l);
    const ZurcherProfiler prof(l.model, l.counts, base.theta_hat,
                               zurcher::CounterfactualSpec::scale_maintenance(c.cf_mc_factor),
                               nfxp_options(c));
    const double beta = l.model.beta;
    const auto local = prof.local(beta);
    write_text(join(out_dir, "sensitivity.json"), to_json(local.report) + "\n");

    std::vector<TargetSpec> targets = {TargetSpec::parse("rc"), TargetSpec::parse("mc"),
                                       TargetSpec::parse("cf_ccp:" + std::to_string(c.cf_state_resolved())),
                                       TargetSpec::parse("welfare")};
    // One re-estimation per delta serves every target.
    std::vector<EstimationSolution> oracle_fits;
    for (double d : c.deltas) oracle_fits.push_back(prof.fit(beta - d));
    std::vector<ApproxErrorRow> rows;
    for (const auto& t : targets) {
      std::vector<double> truth;
      for (const auto& f : oracle_fits) truth.push_back(prof.value(t, f));
      rows.push_back(approximation_error_row(t.name(), beta, prof.value(t, local),
                                             prof.derivative(t, local), c.deltas, truth));
    }
    write_text(join(out_dir, "table1.csv"), approximation_table_csv(rows));

    std::vector<FigurePoint> fig;
    for (double b : c.figure_betas) {
      const auto lb = prof.local(b);
      for (const auto& t : targets) {
        const double v = prof.value(t, lb);
        const double d = prof.derivative(t, lb);
        fig.push_back({b, t.name(), v});
        fig.push_back({b, t.name() + "_derivative", d});
        if (std::abs(v) > 1e-300) fig.push_back({b, t.name() + "_elasticity", d * b / v});
      }
    }
    write_text(join(out_dir, "figure_local.csv"), figure_csv(fig));

    Manifest m = make_manifest("sensitivity", c, &l, base.theta_hat);
    m.files = {"sensitivity.json", "table1.csv", "figure_local.csv"};
    write_manifest(out_dir, m);
  });
}

int cmd_bounds(const RunConfig& c, const std::string& out_dir) {
  return run_stage("bounds", [&] {
    ensure_dir(out_dir);
    const Loaded l = load_data(c);
    const EstimationSolution base = baseline_fit(c, l);
    const ZurcherProfiler prof(l.model, l.counts, base.theta_hat,
                               zurcher::CounterfactualSpec::scale_maintenance(c.cf_mc_factor),
                               nfxp_options(c));
    BoundsOptions o;
    o.method = c.bounds_method;
    o.grid_step = c.grid_step;
    o.seed_points = c.seed_points;
    o.threads = c.threads;
    std::vector<BoundsResult> results;
    nlohmann::json all = nlohmann::json::array();
    for (const auto& name : c.targets_resolved()) {
      const TargetSpec t = TargetSpec::parse(name);
      for (double hi : c.bounds_hi) {
        results.push_back(bounds_estimate(t.name(), prof.target(t), c.bounds_lo, hi, o));
        all.push_back(nlohmann::json::parse(to_json(results.back())));
      }
    }
    write_text(join(out_dir, "bounds.json"), all.dump(2) + "\n");
    write_text(join(out_dir, "table2.csv"), bounds_csv(results));
    Manifest m = make_manifest("bounds", c, &l, base.theta_hat);
    m.files = {"bounds.json", "table2.csv"};
    write_manifest(out_dir, m);
  });
}

int cmd_monotone(const RunConfig& c, const std::string& out_dir) {
  return run_stage("monotone", [&] {
    ensure_dir(out_dir);
    const Loaded l = load_data(c);
    CcpMatrix p;
    if (c.ccp_method == "logit") {
      LogitOptions o;
      o.degree = c.logit_degree;
      p = ccp_logit_estimate(l.data, l.model.num_states, 2, o);
    } else if (c.ccp_method == "frequency") {
      p = ccp_frequency_estimate(l.data, l.model.num_states, 2);
    } else {
      const DdcModel m = zurcher::make_model(l.model);
      p = ccp_from_values(m, l.model.theta(), solve_value_function(m, l.model.theta()));
    }
    const auto [q0, q1] = zurcher::build_transitions(l.model);
    const MonotonicityVerdict renewal = renewal_monotonicity_check(p.col(zurcher::kReplace), q1);
    write_text(join(out_dir, "verdict.csv"), verdict_csv(renewal));
    std::vector<std::string> files = {"verdict.csv"};
    if (renewal.overall() == Direction::Indeterminate) {
      const auto grid = beta_grid(c.scan_lo, c.scan_hi, c.scan_points);
      write_text(join(out_dir, "verdict_scan.csv"), verdict_csv(sign_scan(p, {q0, q1}, grid)));
      files.push_back("verdict_scan.csv");
    }

    // Two-step estimates over the scan grid.
    const DdcModel model = zurcher::make_model(l.model);
    const auto spec = LinearUtilitySpec::identity_weight(zurcher_design(l.model.num_states));
    std::vector<FigurePoint> fig;
    for (double b : beta_grid(c.scan_lo, c.scan_hi, c.scan_points)) {
      const Matrix pi = ccp_to_utilities(p, model, b);
      const Vector th = min_distance_estimate(pi.col(zurcher::kKeep), spec);
      const Vector dpi = utility_beta_derivative(p.col(zurcher::kReplace), q0, q1, b);
      const Vector dth = theta_beta_derivative(spec, dpi);
      fig.push_back({b, "mc", th(0)});
      fig.push_back({b, "rc", th(1)});
      fig.push_back({b, "mc_derivative", dth(0)});
      fig.push_back({b, "rc_derivative", dth(1)});
    }
    write_text(join(out_dir, "two_step.csv"), figure_csv(fig));
    files.push_back("two_step.csv");

    Manifest m = make_manifest("monotone", c, &l, l.model.theta());
    m.files = files;
    write_manifest(out_dir, m);
  });
}

int cmd_breakdown(const RunConfig& c, const std::string& out_dir) {
  return run_stage("breakdown", [&] {
    if (!c.tau_star) throw ContractError("[breakdown] tau_star is required");
    ensure_dir(out_dir);
    const Loaded l = load_data(c);
    const EstimationSolution base = baseline_fit(c, l);
    const ZurcherProfiler prof(l.model, l.counts, base.theta_hat,
                               zurcher::CounterfactualSpec::scale_maintenance(c.cf_mc_factor),
                               nfxp_options(c));
    BreakdownOptions o;
    o.monotone_certified = c.assume_monotone;
    o.grid_points = c.breakdown_points;
    const TargetSpec t = TargetSpec::parse(c.breakdown_target);
    const BreakdownResult r = breakdown_frontier(prof.target(t), *c.tau_star, c.breakdown_lo,
                                                 c.breakdown_hi, c.conclusion_above, o);
    nlohmann::json j = nlohmann::json::parse(to_json(r));
    j["target"] = t.name();
    write_text(join(out_dir, "frontier.json"), j.dump(2) + "\n");
    if (!r.warning.empty()) std::cerr << "ddcsens breakdown: warning: " << r.warning << '\n';
    Manifest m = make_manifest("breakdown", c, &l, base.theta_hat);
    m.files = {"frontier.json"};
    write_manifest(out_dir, m);
  });
}

// ---------------------------------------------------------------------------
// Files

std::string figure_csv(const std::vector<FigurePoint>& points) {
  std::ostringstream out;
  out << "beta,series,value\n";
  for (const auto& p : points) out << fmt(p.beta) << ',' << p.series << ',' << fmt(p.value) << '\n';
  return out.str();
}

std::vector<FigurePoint> parse_figure_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "beta,series,value") {
    throw IoError("figure CSV: unexpected header");
  }
  std::vector<FigurePoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.rfind(',');
    if (a == std::string::npos || a == b) throw IoError("figure CSV: bad row");
    out.push_back({std::stod(line.substr(0, a)), line.substr(a + 1, b - a - 1),
                   std::stod(line.substr(b + 1))});
  }
  return out;
}

std::string to_json(const Manifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["theta"] = {{"mc", m.theta.size() > 0 ? m.theta(0) : 0.0},
                {"rc", m.theta.size() > 1 ? m.theta(1) : 0.0}};
  j["beta"] = m.beta;
  j["phi1"] = m.phi1;
  j["phi2"] = m.phi2;
  j["num_states"] = m.num_states;
  j["files"] = m.files;
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  Manifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.theta = Vector{{j.at("theta").at("mc").get<double>(), j.at("theta").at("rc").get<double>()}};
    m.beta = j.at("beta").get<double>();
    m.phi1 = j.at("phi1").get<double>();
    m.phi2 = j.at("phi2").get<double>();
    m.num_states = j.at("num_states").get<int>();
    m.files = j.at("files").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("manifest JSON: ") + e.what());
  }
  return m;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace ddc::cli
