#pragma once
// Flat INI experiment configuration: parse/serialize, dotted-key overrides,
// an environment seed override, and the resolved-run manifest. The manifest
// is itself a valid config (its [meta] section is ignored on load), so a
// finished run can be replayed from the file it wrote.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "byzsim/fedsim.hpp"

namespace byzsim {

inline constexpr const char* kCodeVersion = "1.0.0";

// Section -> key -> raw value. std::map keeps iteration deterministic.
using IniDoc = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& section, const std::string& key,
                           const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + section + "." + key + ": '" +
                                value + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& section, const std::string& key,
                               const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + section + "." + key + ": '" +
                                value + "'");
  }
}

inline bool parse_bool(const std::string& section, const std::string& key,
                       const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + section + "." + key + ": '" + value +
                              "'");
}

}  // namespace detail

inline std::string attack_kind_name(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::erasure_zero: return "erasure_zero";
    case AttackKind::sign_flip: return "sign_flip";
    case AttackKind::gaussian_blowup: return "gaussian_blowup";
    case AttackKind::colluding_shift: return "colluding_shift";
    case AttackKind::top_eigen_drift: return "top_eigen_drift";
  }
  throw std::logic_error("attack_kind_name: unhandled kind");
}

inline AttackKind attack_kind_from_name(const std::string& s) {
  if (s == "none") return AttackKind::none;
  if (s == "erasure_zero") return AttackKind::erasure_zero;
  if (s == "sign_flip") return AttackKind::sign_flip;
  if (s == "gaussian_blowup") return AttackKind::gaussian_blowup;
  if (s == "colluding_shift") return AttackKind::colluding_shift;
  if (s == "top_eigen_drift") return AttackKind::top_eigen_drift;
  throw std::invalid_argument("config: unknown attack kind '" + s + "'");
}

inline std::string objective_kind_name(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::strongly_convex_quadratic: return "quadratic";
    case ObjectiveKind::logistic: return "logistic";
    case ObjectiveKind::smooth_nonconvex: return "nonconvex";
  }
  throw std::logic_error("objective_kind_name: unhandled kind");
}

inline ObjectiveKind objective_kind_from_name(const std::string& s) {
  if (s == "quadratic") return ObjectiveKind::strongly_convex_quadratic;
  if (s == "logistic") return ObjectiveKind::logistic;
  if (s == "nonconvex") return ObjectiveKind::smooth_nonconvex;
  throw std::invalid_argument("config: unknown objective kind '" + s + "'");
}

inline std::string sampling_name(SamplingPolicy p) {
  switch (p) {
    case SamplingPolicy::uniform_random: return "uniform_random";
    case SamplingPolicy::round_robin: return "round_robin";
    case SamplingPolicy::all_clients: return "all";
  }
  throw std::logic_error("sampling_name: unhandled policy");
}

inline SamplingPolicy sampling_from_name(const std::string& s) {
  if (s == "uniform_random") return SamplingPolicy::uniform_random;
  if (s == "round_robin") return SamplingPolicy::round_robin;
  if (s == "all") return SamplingPolicy::all_clients;
  throw std::invalid_argument("config: unknown sampling policy '" + s + "'");
}

// Lines: optional [section] headers and key = value pairs; blank lines and
// lines starting with '#' or ';' are comments. Keys before any header land in
// an implicit [run] section; later duplicates win.
inline IniDoc parse_ini(const std::string& text) {
  IniDoc doc;
  std::string section = "run";
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw std::invalid_argument("config: malformed section header at line " +
                                    std::to_string(lineno));
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value at line " + std::to_string(lineno));
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key at line " + std::to_string(lineno));
    doc[section][key] = value;
  }
  return doc;
}

inline IniDoc load_ini(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ini(ss.str());
}

// "key=value" or "section.key=value"; a bare key targets [run].
inline void apply_override(IniDoc& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("config: override must look like key=value, got '" + assignment +
                                "'");
  std::string key = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  std::string section = "run";
  const std::size_t dot = key.find('.');
  if (dot != std::string::npos) {
    section = key.substr(0, dot);
    key = key.substr(dot + 1);
  }
  if (section.empty() || key.empty())
    throw std::invalid_argument("config: empty section or key in override '" + assignment + "'");
  doc[section][key] = value;
}

inline ExperimentConfig config_from_ini(const IniDoc& doc) {
  ExperimentConfig cfg;
  for (const auto& [section, kv] : doc) {
    if (section == "meta") continue;  // manifests carry provenance; not config
    for (const auto& [key, value] : kv) {
      if (section == "run") {
        if (key == "R") cfg.R = detail::parse_u64(section, key, value);
        else if (key == "K") cfg.K = detail::parse_u64(section, key, value);
        else if (key == "H") cfg.H = detail::parse_u64(section, key, value);
        else if (key == "T") cfg.T = detail::parse_u64(section, key, value);
        else if (key == "b") cfg.b = detail::parse_u64(section, key, value);
        else if (key == "eta") cfg.eta = (value == "auto") ? 0.0
                                                           : detail::parse_double(section, key, value);
        else if (key == "eps") cfg.eps = detail::parse_double(section, key, value);
        else if (key == "eps_prime") cfg.eps_prime = detail::parse_double(section, key, value);
        else if (key == "full_batch") cfg.full_batch = detail::parse_bool(section, key, value);
        else if (key == "x0") cfg.x0 = detail::parse_double(section, key, value);
        else if (key == "seed") cfg.seed = detail::parse_u64(section, key, value);
        else if (key == "sampling") cfg.sampling = sampling_from_name(value);
        else throw std::invalid_argument("config: unknown key run." + key);
      } else if (section == "objective") {
        if (key == "kind") cfg.objective.kind = objective_kind_from_name(value);
        else if (key == "d") cfg.objective.d = detail::parse_u64(section, key, value);
        else if (key == "n_r") cfg.objective.n_r = detail::parse_u64(section, key, value);
        else if (key == "heterogeneity")
          cfg.objective.heterogeneity = detail::parse_double(section, key, value);
        else if (key == "point_spread")
          cfg.objective.point_spread = detail::parse_double(section, key, value);
        else if (key == "mu") cfg.objective.mu = detail::parse_double(section, key, value);
        else if (key == "L") cfg.objective.L = detail::parse_double(section, key, value);
        else if (key == "beta") cfg.objective.beta = detail::parse_double(section, key, value);
        else if (key == "lambda_reg")
          cfg.objective.lambda_reg = detail::parse_double(section, key, value);
        else if (key == "center_scale")
          cfg.objective.center_scale = detail::parse_double(section, key, value);
        else if (key == "suite_seed")
          cfg.objective.suite_seed = detail::parse_u64(section, key, value);
        else throw std::invalid_argument("config: unknown key objective." + key);
      } else if (section == "attack") {
        if (key == "kind") cfg.attack.kind = attack_kind_from_name(value);
        else if (key == "scale") cfg.attack.scale = detail::parse_double(section, key, value);
        else if (key == "magnitude")
          cfg.attack.magnitude = detail::parse_double(section, key, value);
        else throw std::invalid_argument("config: unknown key attack." + key);
      } else if (section == "rage") {
        if (key == "score_multiplier")
          cfg.score_multiplier = detail::parse_double(section, key, value);
        else throw std::invalid_argument("config: unknown key rage." + key);
      } else {
        throw std::invalid_argument("config: unknown section [" + section + "]");
      }
    }
  }
  return cfg;
}

inline IniDoc config_to_ini(const ExperimentConfig& cfg) {
  IniDoc doc;
  auto& run = doc["run"];
  run["R"] = std::to_string(cfg.R);
  run["K"] = std::to_string(cfg.K);
  run["H"] = std::to_string(cfg.H);
  run["T"] = std::to_string(cfg.T);
  run["b"] = std::to_string(cfg.b);
  run["eta"] = cfg.eta == 0.0 ? "auto" : detail::format_double(cfg.eta);
  run["eps"] = detail::format_double(cfg.eps);
  run["eps_prime"] = detail::format_double(cfg.eps_prime);
  run["full_batch"] = cfg.full_batch ? "true" : "false";
  run["x0"] = detail::format_double(cfg.x0);
  run["seed"] = std::to_string(cfg.seed);
  run["sampling"] = sampling_name(cfg.sampling);
  auto& obj = doc["objective"];
  obj["kind"] = objective_kind_name(cfg.objective.kind);
  obj["d"] = std::to_string(cfg.objective.d);
  obj["n_r"] = std::to_string(cfg.objective.n_r);
  obj["heterogeneity"] = detail::format_double(cfg.objective.heterogeneity);
  obj["point_spread"] = detail::format_double(cfg.objective.point_spread);
  obj["mu"] = detail::format_double(cfg.objective.mu);
  obj["L"] = detail::format_double(cfg.objective.L);
  obj["beta"] = detail::format_double(cfg.objective.beta);
  obj["lambda_reg"] = detail::format_double(cfg.objective.lambda_reg);
  obj["center_scale"] = detail::format_double(cfg.objective.center_scale);
  obj["suite_seed"] = std::to_string(cfg.objective.suite_seed);
  auto& atk = doc["attack"];
  atk["kind"] = attack_kind_name(cfg.attack.kind);
  atk["scale"] = detail::format_double(cfg.attack.scale);
  atk["magnitude"] = detail::format_double(cfg.attack.magnitude);
  doc["rage"]["score_multiplier"] = detail::format_double(cfg.score_multiplier);
  return doc;
}

// Sections and keys in a fixed human-oriented order; anything unanticipated
// follows alphabetically, so serialization stays total and deterministic.
inline std::string serialize_ini(const IniDoc& doc) {
  static const std::vector<std::string> section_order = {"run", "objective", "attack", "rage",
                                                         "meta"};
  static const std::map<std::string, std::vector<std::string>> key_order = {
      {"run", {"R", "K", "H", "T", "b", "eta", "eps", "eps_prime", "full_batch", "x0", "seed",
               "sampling"}},
      {"objective", {"kind", "d", "n_r", "heterogeneity", "point_spread", "mu", "L", "beta",
                     "lambda_reg", "center_scale", "suite_seed"}},
      {"attack", {"kind", "scale", "magnitude"}},
      {"rage", {"score_multiplier"}},
      {"meta", {"code_version", "started_at", "csv_path"}}};

  std::ostringstream out;
  bool first = true;
  auto emit_section = [&](const std::string& name, const std::map<std::string, std::string>& kv) {
    if (!first) out << "\n";
    first = false;
    out << "[" << name << "]\n";
    std::map<std::string, std::string> rest = kv;
    auto it = key_order.find(name);
    if (it != key_order.end())
      for (const std::string& k : it->second) {
        auto kit = rest.find(k);
        if (kit == rest.end()) continue;
        out << k << " = " << kit->second << "\n";
        rest.erase(kit);
      }
    for (const auto& [k, v] : rest) out << k << " = " << v << "\n";
  };
  for (const std::string& name : section_order) {
    auto it = doc.find(name);
    if (it != doc.end()) emit_section(name, it->second);
  }
  for (const auto& [name, kv] : doc)
    if (std::find(section_order.begin(), section_order.end(), name) == section_order.end())
      emit_section(name, kv);
  return out.str();
}

// BYZSIM_SEED, when set, replaces the configured seed.
inline void apply_env_seed(ExperimentConfig& cfg) {
  const char* env = std::getenv("BYZSIM_SEED");
  if (env == nullptr || *env == '\0') return;
  cfg.seed = detail::parse_u64("env", "BYZSIM_SEED", env);
}

// Resolved-run manifest: the full configuration (auto values expanded by the
// caller) plus a [meta] section with provenance. started_at is wall-clock and
// intentionally not reproducible; the metrics file is the reproducible output.
inline IniDoc manifest_ini(const ExperimentConfig& cfg, const std::string& csv_path) {
  IniDoc doc = config_to_ini(cfg);
  auto& meta = doc["meta"];
  meta["code_version"] = kCodeVersion;
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  meta["started_at"] = buf;
  meta["csv_path"] = csv_path;
  return doc;
}

}  // namespace byzsim
