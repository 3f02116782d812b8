#pragma once
// Metrics CSV output. The column set and formatting are pinned: %.17g for
// doubles (value-preserving round trip), an empty field when the distance to
// the optimum is undefined, LF line endings. Byte-identical files for
// identical runs are part of the contract.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "byzsim/fedsim.hpp"

namespace byzsim {

inline constexpr const char* kMetricsHeader =
    "t,dist_sq,grad_norm_sq,loss,rage_removed,rage_rounds,sync_flag";

namespace detail {

inline std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << kMetricsHeader << "\n";
  for (const auto& r : rows) {
    out << r.t << ",";
    if (r.dist_sq.has_value()) out << detail::g17(*r.dist_sq);
    out << "," << detail::g17(r.grad_norm_sq) << "," << detail::g17(r.loss) << ","
        << r.rage_removed << "," << r.rage_rounds << "," << (r.sync_flag ? 1 : 0) << "\n";
  }
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace byzsim
