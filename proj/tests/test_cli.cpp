#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "byzsim/cli.hpp"

using byzsim::ExperimentConfig;
using byzsim::IniDoc;

namespace {

namespace fs = std::filesystem;

// Every test works inside its own scratch directory under the system temp
// root so reruns start clean and nothing leaks into the source tree.
fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("byzsim_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kBaseConfig =
    "[run]\n"
    "R = 10\nK = 4\nH = 2\nT = 10\nb = 1\neta = auto\n"
    "eps = 0.1\neps_prime = 0.25\nfull_batch = false\nx0 = 1.0\nseed = 1\n"
    "sampling = uniform_random\n"
    "[objective]\n"
    "kind = quadratic\nd = 3\nn_r = 4\nheterogeneity = 0.5\npoint_spread = 1.0\n"
    "mu = 0.5\nL = 2.0\n"
    "[attack]\nkind = none\n"
    "[rage]\nscore_multiplier = 4.0\n";

fs::path write_base_config(const fs::path& dir) {
  fs::path cfg = dir / "base.ini";
  byzsim::write_text_file(cfg.string(), kBaseConfig);
  return cfg;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

TEST_CASE("run writes a metrics table and a manifest that replays it") {
  const fs::path dir = fresh_dir("run_basic");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  const fs::path out = dir / "out";
  REQUIRE(byzsim::cmd_run(cfg.string(), {}, out.string(), log) == 0);
  CHECK(log.str().find("run complete") != std::string::npos);

  const std::string csv = byzsim::read_text_file((out / "metrics.csv").string());
  auto lines = split_lines(csv);
  REQUIRE(lines.size() == 12);  // header + t = 0..10
  CHECK(lines[0] == byzsim::kMetricsHeader);
  std::size_t syncs = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split_fields(lines[i]);
    REQUIRE(fields.size() == 7);
    CHECK(fields[0] == std::to_string(i - 1));
    CHECK(!fields[1].empty());  // quadratic suite knows its minimizer
    if (fields[6] == "1") ++syncs;
  }
  CHECK(syncs == 6);  // t = 0, 2, 4, 6, 8, 10 with H = 2

  // The manifest freezes the resolved configuration: eta = auto expands to
  // 1/(8 H L) = 1/32 here, and the [meta] block carries provenance.
  const std::string manifest = byzsim::read_text_file((out / "manifest.ini").string());
  CHECK(manifest.find("eta = 0.03125") != std::string::npos);
  CHECK(manifest.find("[meta]") != std::string::npos);
  CHECK(manifest.find("code_version = ") != std::string::npos);
  CHECK(manifest.find("csv_path = metrics.csv") != std::string::npos);

  // Re-running straight from the manifest reproduces the metrics bytes.
  ExperimentConfig replay = byzsim::config_from_ini(byzsim::parse_ini(manifest));
  byzsim::RunResult res = byzsim::run(replay);
  CHECK(byzsim::metrics_to_csv(res.rows) == csv);
}

TEST_CASE("identical runs produce byte-identical outputs") {
  const fs::path dir = fresh_dir("run_repeat");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  REQUIRE(byzsim::cmd_run(cfg.string(), {}, (dir / "a").string(), log) == 0);
  REQUIRE(byzsim::cmd_run(cfg.string(), {}, (dir / "b").string(), log) == 0);
  CHECK(byzsim::read_text_file((dir / "a" / "metrics.csv").string()) ==
        byzsim::read_text_file((dir / "b" / "metrics.csv").string()));
}

TEST_CASE("report corruption changes nothing before the first aggregation") {
  const fs::path dir = fresh_dir("run_attack");
  const fs::path cfg = write_base_config(dir);
  // Small full-participation setup so the corrupt client is always sampled.
  const std::vector<std::string> common = {"R=4", "K=4", "sampling=all", "eps=0.25"};
  std::vector<std::string> clean = common, attacked = common;
  attacked.push_back("attack.kind=sign_flip");

  std::ostringstream log;
  REQUIRE(byzsim::cmd_run(cfg.string(), clean, (dir / "clean").string(), log) == 0);
  REQUIRE(byzsim::cmd_run(cfg.string(), attacked, (dir / "attacked").string(), log) == 0);

  auto a = split_lines(byzsim::read_text_file((dir / "clean" / "metrics.csv").string()));
  auto b = split_lines(byzsim::read_text_file((dir / "attacked" / "metrics.csv").string()));
  REQUIRE(a.size() == b.size());
  // Corruption touches only transmitted reports, so the header, the initial
  // point, and the local-phase rows of round one (t < H = 2) are untouched.
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);
  CHECK(a[2] == b[2]);
  bool differs = false;
  for (std::size_t i = 3; i < a.size(); ++i) differs = differs || a[i] != b[i];
  CHECK(differs);
}

TEST_CASE("sweep writes per-value runs and a floor summary") {
  const fs::path dir = fresh_dir("sweep_basic");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  const fs::path out = dir / "sw";
  REQUIRE(byzsim::cmd_sweep(cfg.string(), "H", {"1", "2"}, out.string(), 1, log) == 0);

  for (const char* sub : {"H_1", "H_2"}) {
    CHECK(fs::exists(out / sub / "metrics.csv"));
    CHECK(fs::exists(out / sub / "manifest.ini"));
  }
  auto lines = split_lines(byzsim::read_text_file((out / "sweep_summary.csv").string()));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "value,floor,rho,r_squared");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split_fields(lines[i]);
    REQUIRE(fields.size() == 4);
    CHECK(fields[0] == (i == 1 ? "1" : "2"));
    const double floor = std::stod(fields[1]);
    const double rho = std::stod(fields[2]);
    CHECK(std::isfinite(floor));
    CHECK(floor >= 0.0);
    CHECK(rho > 0.0);
    CHECK(rho < 1.0);
  }

  // A single-value sweep over another axis still produces a complete table.
  const fs::path single = dir / "single";
  REQUIRE(byzsim::cmd_sweep(cfg.string(), "eps", {"0"}, single.string(), 1, log) == 0);
  auto slines = split_lines(byzsim::read_text_file((single / "sweep_summary.csv").string()));
  REQUIRE(slines.size() == 2);
  CHECK(slines[1].rfind("0,", 0) == 0);
}

TEST_CASE("sweep results do not depend on the worker count") {
  const fs::path dir = fresh_dir("sweep_jobs");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  REQUIRE(byzsim::cmd_sweep(cfg.string(), "K", {"1", "2", "4", "8"}, (dir / "j1").string(), 1,
                            log) == 0);
  REQUIRE(byzsim::cmd_sweep(cfg.string(), "K", {"1", "2", "4", "8"}, (dir / "j4").string(), 4,
                            log) == 0);
  for (const char* sub : {"K_1", "K_2", "K_4", "K_8"}) {
    CHECK(byzsim::read_text_file((dir / "j1" / sub / "metrics.csv").string()) ==
          byzsim::read_text_file((dir / "j4" / sub / "metrics.csv").string()));
  }
  CHECK(byzsim::read_text_file((dir / "j1" / "sweep_summary.csv").string()) ==
        byzsim::read_text_file((dir / "j4" / "sweep_summary.csv").string()));
}

TEST_CASE("configuration text round-trips exactly") {
  ExperimentConfig cfg;
  cfg.R = 12;
  cfg.K = 5;
  cfg.H = 4;
  cfg.T = 16;
  cfg.b = 3;
  cfg.eta = 0.0375;  // not exactly representable; exercises the %.17g path
  cfg.eps = 0.1;
  cfg.eps_prime = 0.2;
  cfg.full_batch = true;
  cfg.x0 = -2.5;
  cfg.seed = 99;
  cfg.sampling = byzsim::SamplingPolicy::round_robin;
  cfg.objective.kind = byzsim::ObjectiveKind::logistic;
  cfg.objective.d = 7;
  cfg.objective.n_r = 11;
  cfg.objective.heterogeneity = 0.3;
  cfg.objective.point_spread = 1.7;
  cfg.objective.lambda_reg = 0.01;
  cfg.objective.suite_seed = 42;
  cfg.attack.kind = byzsim::AttackKind::colluding_shift;
  cfg.attack.magnitude = 12345.678;
  cfg.score_multiplier = 3.5;

  const std::string s1 = byzsim::serialize_ini(byzsim::config_to_ini(cfg));
  ExperimentConfig back = byzsim::config_from_ini(byzsim::parse_ini(s1));
  const std::string s2 = byzsim::serialize_ini(byzsim::config_to_ini(back));
  CHECK(s1 == s2);

  // An automatic step size serializes as the word, not a number.
  cfg.eta = 0.0;
  CHECK(byzsim::serialize_ini(byzsim::config_to_ini(cfg)).find("eta = auto") !=
        std::string::npos);
}

TEST_CASE("unknown keys and malformed overrides are rejected") {
  CHECK_THROWS_AS(byzsim::config_from_ini(byzsim::parse_ini("[run]\nbogus = 1\n")),
                  std::invalid_argument);
  CHECK_THROWS_AS(byzsim::config_from_ini(byzsim::parse_ini("[nosuch]\nx = 1\n")),
                  std::invalid_argument);
  // The provenance block in a manifest is not configuration and is skipped.
  CHECK_NOTHROW(byzsim::config_from_ini(byzsim::parse_ini("[meta]\ncode_version = 9\n")));

  IniDoc doc;
  CHECK_THROWS_AS(byzsim::apply_override(doc, "noequals"), std::invalid_argument);
  CHECK_THROWS_AS(byzsim::apply_override(doc, "=5"), std::invalid_argument);
  byzsim::apply_override(doc, "K=7");
  CHECK(doc["run"]["K"] == "7");
  byzsim::apply_override(doc, "attack.scale=2");
  CHECK(doc["attack"]["scale"] == "2");
}

TEST_CASE("bad inputs surface as configuration errors") {
  const fs::path dir = fresh_dir("bad_inputs");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  CHECK(byzsim::cmd_run((dir / "missing.ini").string(), {}, (dir / "o1").string(), log) == 1);
  CHECK(byzsim::cmd_run(cfg.string(), {"eps=2"}, (dir / "o2").string(), log) == 1);
  CHECK(byzsim::cmd_run(cfg.string(), {"T=7"}, (dir / "o3").string(), log) == 1);  // T % H != 0
  CHECK(byzsim::cmd_sweep(cfg.string(), "nope", {"1"}, (dir / "o4").string(), 1, log) == 1);
  CHECK(byzsim::cmd_sweep(cfg.string(), "eps", {"0.1x"}, (dir / "o5").string(), 1, log) == 1);
  CHECK(byzsim::cmd_sweep(cfg.string(), "eps", {}, (dir / "o6").string(), 1, log) == 1);
  CHECK(byzsim::cmd_verify("weekly", 4.0, "", log) == 1);
  CHECK(log.str().find("config error") != std::string::npos);
}

TEST_CASE("a runaway step size is reported as divergence") {
  const fs::path dir = fresh_dir("diverge");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  const int rc = byzsim::cmd_run(
      cfg.string(), {"R=1", "K=1", "eps=0", "sampling=all", "eta=1000"}, (dir / "out").string(),
      log);
  CHECK(rc == 2);
  CHECK(log.str().find("diverged") != std::string::npos);
  CHECK(fs::exists(dir / "out" / "metrics.csv"));  // partial trace is still saved
}

TEST_CASE("the environment seed override takes precedence") {
  const fs::path dir = fresh_dir("env_seed");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  REQUIRE(byzsim::cmd_run(cfg.string(), {}, (dir / "base").string(), log) == 0);

  setenv("BYZSIM_SEED", "777", 1);
  const int rc = byzsim::cmd_run(cfg.string(), {}, (dir / "env").string(), log);
  unsetenv("BYZSIM_SEED");
  REQUIRE(rc == 0);

  const std::string manifest = byzsim::read_text_file((dir / "env" / "manifest.ini").string());
  CHECK(manifest.find("seed = 777") != std::string::npos);
  CHECK(byzsim::read_text_file((dir / "env" / "metrics.csv").string()) !=
        byzsim::read_text_file((dir / "base" / "metrics.csv").string()));

  setenv("BYZSIM_SEED", "not_a_number", 1);
  const int bad = byzsim::cmd_run(cfg.string(), {}, (dir / "bad").string(), log);
  unsetenv("BYZSIM_SEED");
  CHECK(bad == 1);
}

TEST_CASE("nonconvex runs leave the distance column empty") {
  const fs::path dir = fresh_dir("nonconvex_csv");
  const fs::path cfg = write_base_config(dir);
  std::ostringstream log;
  REQUIRE(byzsim::cmd_run(cfg.string(),
                          {"objective.kind=nonconvex", "objective.beta=0.5"},
                          (dir / "out").string(), log) == 0);
  auto lines = split_lines(byzsim::read_text_file((dir / "out" / "metrics.csv").string()));
  REQUIRE(lines.size() == 12);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = split_fields(lines[i]);
    REQUIRE(fields.size() == 7);
    CHECK(fields[1].empty());  // no known minimizer, no distance
    CHECK(std::isfinite(std::stod(fields[3])));
  }
}

TEST_CASE("verify catches a weakened filter threshold") {
  std::ostringstream ok;
  CHECK(byzsim::cmd_verify("fast", 4.0, "", ok) == 0);
  CHECK(ok.str().find("all checks passed") != std::string::npos);
  CHECK(ok.str().find("FAIL") == std::string::npos);

  // Driving the score threshold toward zero makes the filter reject honest
  // inputs, which the exactness check must flag.
  std::ostringstream bad;
  CHECK(byzsim::cmd_verify("fast", 0.001, "", bad) == 1);
  CHECK(bad.str().find("FAIL") != std::string::npos);
}

TEST_CASE("the full suite requires a calibration file") {
  const fs::path dir = fresh_dir("no_calibration");
  std::ostringstream log;
  CHECK(byzsim::cmd_verify("full", 4.0, (dir / "missing.txt").string(), log) == 3);
  CHECK(log.str().find("calibration unavailable") != std::string::npos);
}
