#pragma once
// Command implementations behind the command-line binary. Kept header-only
// and stream-parameterized so the test suite can drive the exact code paths
// the binary exposes. Exit codes: 0 success, 1 configuration error, 2 the
// experiment diverged, 3 calibration data required but unavailable.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "byzsim/config.hpp"
#include "byzsim/csv.hpp"
#include "byzsim/fedsim.hpp"
#include "byzsim/verify.hpp"

namespace byzsim {

namespace detail {

inline void print_checks(std::ostream& out, const std::vector<CheckOutcome>& checks) {
  std::size_t width = 0;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  for (const auto& c : checks) {
    out << (c.pass ? "PASS" : "FAIL") << "  " << c.name
        << std::string(width - c.name.size() + 2, ' ') << "measured=" << g17(c.measured)
        << "  bound=" << g17(c.bound) << "\n";
  }
}

inline std::string sanitize_axis(const std::string& axis) {
  std::string s = axis;
  for (char& ch : s)
    if (ch == '.') ch = '_';
  return s;
}

}  // namespace detail

// run: execute one experiment, write metrics.csv and manifest.ini to out_dir.
inline int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
                   const std::string& out_dir, std::ostream& out) {
  ExperimentConfig cfg;
  try {
    IniDoc doc = load_ini(config_path);
    for (const auto& o : overrides) apply_override(doc, o);
    cfg = config_from_ini(doc);
    apply_env_seed(cfg);
    cfg.validate();
  } catch (const std::exception& e) {
    out << "config error: " << e.what() << "\n";
    return 1;
  }
  try {
    RunResult res = run(cfg);
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = (std::filesystem::path(out_dir) / "metrics.csv").string();
    write_text_file(csv_path, metrics_to_csv(res.rows));
    ExperimentConfig resolved = cfg;
    resolved.eta = res.eta;  // auto step size expanded in the manifest
    write_text_file((std::filesystem::path(out_dir) / "manifest.ini").string(),
                    serialize_ini(manifest_ini(resolved, "metrics.csv")));
    if (res.diverged) {
      out << "diverged: parameter norm exceeded the guard at t=" << res.diverged_at << "\n";
      return 2;
    }
    const MetricsRow& last = res.rows.back();
    out << "run complete: T=" << cfg.T << " eta=" << detail::g17(res.eta)
        << " final_loss=" << detail::g17(last.loss)
        << " final_grad_norm_sq=" << detail::g17(last.grad_norm_sq) << "\n";
    out << "wrote " << csv_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 1;
  }
}

// sweep: rerun the base config across one axis, one subdirectory per value,
// then fit a geometric-plus-floor curve per run and summarize.
inline int cmd_sweep(const std::string& config_path, const std::string& axis,
                     const std::vector<std::string>& values, const std::string& out_dir,
                     std::size_t jobs, std::ostream& out) {
  static const std::vector<std::string> kAxes = {"eps", "H", "K", "b", "attack.magnitude"};
  if (std::find(kAxes.begin(), kAxes.end(), axis) == kAxes.end()) {
    out << "config error: unsupported sweep axis '" << axis << "'\n";
    return 1;
  }
  if (values.empty()) {
    out << "config error: sweep needs at least one value\n";
    return 1;
  }

  std::vector<ExperimentConfig> cfgs;
  try {
    IniDoc base = load_ini(config_path);
    for (const auto& v : values) {
      IniDoc doc = base;
      apply_override(doc, axis + "=" + v);
      ExperimentConfig cfg = config_from_ini(doc);
      apply_env_seed(cfg);
      cfg.validate();
      cfgs.push_back(cfg);
    }
  } catch (const std::exception& e) {
    out << "config error: " << e.what() << "\n";
    return 1;
  }

  struct Cell {
    bool diverged = false;
    bool fit_ok = false;
    FloorFit fit;
    std::string error;
  };
  std::vector<Cell> cells(values.size());
  std::filesystem::create_directories(out_dir);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= values.size()) return;
      Cell& cell = cells[i];
      try {
        RunResult res = run(cfgs[i]);
        const std::string sub = detail::sanitize_axis(axis) + "_" + values[i];
        const std::filesystem::path dir = std::filesystem::path(out_dir) / sub;
        std::filesystem::create_directories(dir);
        write_text_file((dir / "metrics.csv").string(), metrics_to_csv(res.rows));
        ExperimentConfig resolved = cfgs[i];
        resolved.eta = res.eta;
        write_text_file((dir / "manifest.ini").string(),
                        serialize_ini(manifest_ini(resolved, "metrics.csv")));
        cell.diverged = res.diverged;
        if (!res.diverged) {
          bool all_dist = true;
          for (const auto& r : res.rows) all_dist = all_dist && r.dist_sq.has_value();
          std::vector<double> series;
          for (const auto& r : res.rows)
            series.push_back(all_dist ? *r.dist_sq : r.grad_norm_sq);
          cell.fit = fit_floor(series, cfgs[i].H);
          cell.fit_ok = true;
        }
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  };
  const std::size_t n_jobs = std::max<std::size_t>(1, std::min(jobs, values.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j + 1 < n_jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::string summary = "value,floor,rho,r_squared\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Cell& c = cells[i];
    const double nan = std::nan("");
    summary += values[i];
    summary += ",";
    summary += detail::g17(c.fit_ok ? c.fit.floor : nan);
    summary += ",";
    summary += detail::g17(c.fit_ok ? c.fit.rho : nan);
    summary += ",";
    summary += detail::g17(c.fit_ok ? c.fit.r_squared : nan);
    summary += "\n";
  }
  const std::string summary_path =
      (std::filesystem::path(out_dir) / "sweep_summary.csv").string();
  write_text_file(summary_path, summary);

  int rc = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!cells[i].error.empty()) {
      out << "error at " << axis << "=" << values[i] << ": " << cells[i].error << "\n";
      rc = std::max(rc, 1);
    } else if (cells[i].diverged) {
      out << "diverged at " << axis << "=" << values[i] << "\n";
      rc = std::max(rc, 2);
    }
  }
  out << "wrote " << summary_path << "\n";
  return rc;
}

// verify: run the bundled check suites and report one line per check.
// score_multiplier deliberately reaches the filter's rejection threshold so a
// tampered value is caught by the exactness checks.
inline int cmd_verify(const std::string& suite, double score_multiplier,
                      const std::string& calibration_path, std::ostream& out) {
  if (suite != "fast" && suite != "full") {
    out << "config error: unknown suite '" << suite << "' (expected fast or full)\n";
    return 1;
  }
  Calibration cal;
  if (suite == "full") {
    try {
      cal = load_calibration(calibration_path);  // fail fast before the long checks
    } catch (const std::exception& e) {
      out << "calibration unavailable: " << e.what() << "\n";
      out << "run the calibrate command first\n";
      return 3;
    }
  }
  std::vector<CheckOutcome> checks;
  try {
    checks = fast_suite(score_multiplier);
    if (suite == "full") {
      auto extra = calibrated_suite(cal);
      checks.insert(checks.end(), extra.begin(), extra.end());
    }
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 1;
  }
  detail::print_checks(out, checks);
  std::size_t failed = 0;
  for (const auto& c : checks)
    if (!c.pass) ++failed;
  out << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed")
      << " (" << checks.size() << " total)\n";
  return failed == 0 ? 0 : 1;
}

// calibrate: measure the instance-family constants and freeze them to a file.
inline int cmd_calibrate(const std::string& out_path, std::ostream& out) {
  try {
    Calibration cal;

    double c_robust = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i)
      c_robust = std::max(c_robust, robust_ratio(make_robust_instance(i, 40, 20, 0.2)));
    double c_oracle = 0.0;
    for (std::uint64_t i = 0; i < 50; ++i)
      c_oracle = std::max(c_oracle, oracle_ratio(oracle_family_instance(i)));
    cal.c_rage = std::max({0.05, c_robust, c_oracle});

    double c_ups = 0.0;
    for (std::uint64_t seed : {501ull, 601ull}) {
      for (const auto& fo : eps_sweep_floors(seed, {0.0, 0.05, 0.1, 0.2}, 2, false))
        c_ups = std::max(c_ups, fo.required_c);
    }
    for (const auto& fo : h_sweep_floors(701, {1, 2, 4, 8}, 0.1, false))
      c_ups = std::max(c_ups, fo.required_c);
    for (std::size_t T : {200u, 800u, 3200u})
      c_ups = std::max(c_ups, nonconvex_case(T, 801).required_c);
    cal.c_upsilon = std::max(0.05, c_ups);

    double c_gd = 0.0;
    for (std::uint64_t seed : {502ull, 603ull}) {
      for (const auto& fo : eps_sweep_floors(seed, {0.0, 0.05, 0.1, 0.2}, 2, true))
        c_gd = std::max(c_gd, fo.required_c);
    }
    for (const auto& fo : h_sweep_floors(702, {1, 2, 4, 8}, 0.1, true))
      c_gd = std::max(c_gd, fo.required_c);
    cal.c_upsilon_gd = std::max(0.05, c_gd);

    save_calibration(out_path, cal);
    out << "c_rage = " << detail::g17(cal.c_rage) << "\n";
    out << "c_upsilon = " << detail::g17(cal.c_upsilon) << "\n";
    out << "c_upsilon_gd = " << detail::g17(cal.c_upsilon_gd) << "\n";
    out << "wrote " << out_path << "\n";
    return 0;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace byzsim
