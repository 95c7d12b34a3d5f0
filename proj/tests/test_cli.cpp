#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>

#include "ddc/cli.hpp"
#include "ddc/errors.hpp"
#include "ddc/estimate.hpp"
#include "ddc/global.hpp"
#include "ddc/sensitivity.hpp"

using namespace ddc;
using namespace ddc::cli;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(# small run
[model]
num_states = 10
phi1 = 0.35
phi2 = 0.10
mc = 0.05
rc = 5.0
beta = 0.9

[data]
source = simulate
units = 40
periods = 100
seed = 11

[sensitivity]
deltas = 1e-3, 1e-2
figure_betas = 0.8, 0.9

[bounds]
lo = 0.7
hi = 0.8, 0.9
targets = rc, welfare

[monotone]
ccp = logit
grid_points = 21

[breakdown]
target = rc
lo = 0.7
hi = 0.95
monotone = true
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ddcsens_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

fs::path small_config() {
  const fs::path p = scratch("config") / "small.toml";
  fs::create_directories(p.parent_path());
  write_text(p.string(), kSmall);
  return p;
}

int run(const std::string& args, const std::string& env = "") {
  const char* bin = std::getenv("DDCSENS_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "DDCSENS_BIN must point at the ddcsens binary");
  const std::string cmd = env + " " + bin + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string with_config(const fs::path& out) {
  return "--config " + small_config().string() + " --out " + out.string();
}

}  // namespace

TEST_CASE("config: sections, overrides and hash") {
  Sections s = parse_sections(kSmall);
  CHECK(s["model"]["num_states"] == "10");
  CHECK(s["bounds"]["hi"] == "0.8, 0.9");
  const std::string before = fnv1a_hex(canonical_text(s));
  apply_env_overrides(s, {{"DDCSENS_MODEL_BETA", "0.99"}, {"HOME", "/root"}});
  CHECK(s["model"]["beta"] == "0.99");
  CHECK(fnv1a_hex(canonical_text(s)) != before);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK_THROWS_AS(apply_env_overrides(s, {{"DDCSENS_MODEL_COLOUR", "blue"}}), ContractError);

  const RunConfig c = run_config_from_sections(s);
  CHECK(c.model.beta == 0.99);
  CHECK(c.bounds_hi == std::vector<double>{0.8, 0.9});
  CHECK(c.assume_monotone);
  CHECK(c.cf_state_resolved() == 10);
  CHECK_NOTHROW(run_config_from_sections(parse_sections(default_config_text())));
}

TEST_CASE("figure and manifest readers roundtrip") {
  const std::vector<FigurePoint> pts = {{0.5, "rc", 7.25}, {0.95, "cf_ccp:20_derivative", -1e-7}};
  const auto back = parse_figure_csv(figure_csv(pts));
  REQUIRE(back.size() == 2);
  CHECK(back[1].series == "cf_ccp:20_derivative");
  CHECK(back[1].value == -1e-7);
  CHECK_THROWS_AS(parse_figure_csv("x,y\n"), IoError);

  Manifest m;
  m.command = "estimate";
  m.config_hash = "abc";
  m.seed = 42;
  m.theta = Vector{{0.05, 8.0}};
  m.beta = 0.95;
  m.phi1 = 0.35;
  m.phi2 = 0.1;
  m.num_states = 20;
  m.files = {"solution.json"};
  const Manifest r = manifest_from_json(to_json(m));
  CHECK(r.seed == 42);
  CHECK(r.theta == m.theta);
  CHECK(r.files == m.files);
  CHECK(r.phi2 == 0.1);
}

TEST_CASE("simulate: reruns are byte-identical and the output directory is created") {
  const fs::path a = scratch("sim_a") / "nested" / "dir", b = scratch("sim_b");
  REQUIRE(run("simulate " + with_config(a)) == kOk);
  REQUIRE(run("simulate " + with_config(b)) == kOk);
  CHECK(read_text((a / "panel.csv").string()) == read_text((b / "panel.csv").string()));
  CHECK(read_text((a / "manifest.json").string()) == read_text((b / "manifest.json").string()));

  const Manifest m = manifest_from_json(read_text((a / "manifest.json").string()));
  CHECK(m.command == "simulate");
  CHECK(m.seed == 11);
  CHECK(m.beta == 0.9);
  CHECK(m.phi1 == 0.35);
  CHECK(m.num_states == 10);
  CHECK(m.theta == Vector{{0.05, 5.0}});
  CHECK(m.config_hash.size() == 16);
  CHECK(std::find(m.files.begin(), m.files.end(), "panel.csv") != m.files.end());

  const fs::path c = scratch("sim_c");
  REQUIRE(run("--seed 12 simulate " + with_config(c)) == kOk);
  CHECK(read_text((a / "panel.csv").string()) != read_text((c / "panel.csv").string()));
  CHECK(manifest_from_json(read_text((c / "manifest.json").string())).seed == 12);
}

TEST_CASE("estimate: solution is readable and reuses simulated data from CSV") {
  const fs::path sim = scratch("est_sim"), a = scratch("est_a"), b = scratch("est_b");
  REQUIRE(run("simulate " + with_config(sim)) == kOk);
  REQUIRE(run("estimate " + with_config(a)) == kOk);
  const EstimationSolution s = read_solution((a / "solution.json").string());
  CHECK(s.theta_hat.size() == 2);
  CHECK(s.gradient_norm <= 1e-6);
  const std::string env = "DDCSENS_DATA_SOURCE=csv DDCSENS_DATA_PATH=" + (sim / "panel.csv").string();
  REQUIRE(run("estimate " + with_config(b), env) == kOk);
  const EstimationSolution t = read_solution((b / "solution.json").string());
  CHECK((s.theta_hat - t.theta_hat).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("exit codes") {
  const fs::path out = scratch("exit");
  CHECK(run("estimate " + with_config(out), "DDCSENS_DATA_SOURCE=csv DDCSENS_DATA_PATH=/nonexistent/panel.csv") ==
        kIo);
  CHECK(run("estimate " + with_config(out), "DDCSENS_MODEL_COLOUR=blue") == kUsage);
  CHECK(run("estimate --config /nonexistent/run.toml --out " + out.string()) == kIo);
  CHECK(run("frobnicate") == kUsage);
  CHECK(run("") == kUsage);
  CHECK(run("breakdown " + with_config(out)) == kUsage);  // tau_star missing
}

TEST_CASE("sensitivity: every target is reported") {
  const fs::path out = scratch("sens");
  REQUIRE(run("sensitivity " + with_config(out)) == kOk);
  const SensitivityReport r = report_from_json(read_text((out / "sensitivity.json").string()));
  CHECK(r.dtheta_dgamma.rows() == 2);
  const auto rows = parse_approximation_table_csv(read_text((out / "table1.csv").string()));
  std::vector<std::string> names;
  for (const auto& row : rows) names.push_back(row.target);
  for (const char* t : {"rc", "mc", "cf_ccp:10", "welfare"}) {
    CHECK(std::find(names.begin(), names.end(), t) != names.end());
  }
  const auto fig = parse_figure_csv(read_text((out / "figure_local.csv").string()));
  CHECK(fig.size() == 2 * 4 * 3);
}

TEST_CASE("bounds: nested intervals give nested bounds") {
  const fs::path out = scratch("bounds");
  REQUIRE(run("--threads 2 bounds " + with_config(out)) == kOk);
  const auto rows = parse_bounds_csv(read_text((out / "table2.csv").string()));
  REQUIRE(rows.size() == 4);
  for (int k : {0, 2}) {
    CHECK(rows[k].target == rows[k + 1].target);
    CHECK(rows[k].gamma_hi == 0.8);
    CHECK(rows[k + 1].gamma_hi == 0.9);
    CHECK(rows[k + 1].lower <= rows[k].lower);
    CHECK(rows[k + 1].upper >= rows[k].upper);
  }
  const auto j = nlohmann::json::parse(read_text((out / "bounds.json").string()));
  CHECK(j.size() == 4);
}

TEST_CASE("monotone: verdict names its certificate") {
  const fs::path out = scratch("mono");
  REQUIRE(run("monotone " + with_config(out)) == kOk);
  const std::string csv = read_text((out / "verdict.csv").string());
  const MonotonicityVerdict v = parse_verdict_csv(csv);
  CHECK(v.certificate == Certificate::RenewalCorollary);
  CHECK(v.overall() == Direction::Nondecreasing);
  CHECK(csv.find("renewal-corollary") != std::string::npos);
  const auto fig = parse_figure_csv(read_text((out / "two_step.csv").string()));
  CHECK(fig.size() == 4 * 21);
}

TEST_CASE("breakdown: frontier inside the interval and degenerate thresholds") {
  const fs::path out = scratch("brk");
  const fs::path est = scratch("brk_est");
  REQUIRE(run("estimate " + with_config(est)) == kOk);
  const double rc = read_solution((est / "solution.json").string()).theta_hat(1);

  REQUIRE(run("breakdown " + with_config(out), "DDCSENS_BREAKDOWN_TAU_STAR=" + std::to_string(rc)) == kOk);
  auto j = nlohmann::json::parse(read_text((out / "frontier.json").string()));
  const BreakdownResult r = breakdown_from_json(j.dump());
  CHECK(j.at("target") == "rc");
  REQUIRE(r.verdict == BreakdownVerdict::Frontier);
  CHECK(*r.frontier > 0.7);
  CHECK(*r.frontier < 0.95);

  REQUIRE(run("breakdown " + with_config(out), "DDCSENS_BREAKDOWN_TAU_STAR=1e6") == kOk);
  CHECK(breakdown_from_json(read_text((out / "frontier.json").string())).verdict == BreakdownVerdict::NoneRobust);
  REQUIRE(run("breakdown " + with_config(out), "DDCSENS_BREAKDOWN_TAU_STAR=-1e6") == kOk);
  CHECK(breakdown_from_json(read_text((out / "frontier.json").string())).verdict == BreakdownVerdict::AllRobust);
}
