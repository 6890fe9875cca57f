#pragma once

// Plain-text reports. Doubles are written with %.17g so reading them back
// reproduces the exact bits.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "seeco/bench/metrics.hpp"
#include "seeco/pipeline.hpp"

namespace seeco::bench {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double read_double(const std::string& s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && p == s.data() + s.size(), ErrorCode::kFormatError, "not a number: '" + s + "'");
  return v;
}

/// One results.csv row.
struct ResultRow {
  std::size_t scene_id = 0;
  std::string mode;
  double miou = 0.0;
  double loss_pre = 0.0;   // mean over windows
  double loss_post = 0.0;  // mean over windows
  std::optional<double> seconds;

  friend bool operator==(const ResultRow& a, const ResultRow& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.scene_id == b.scene_id && a.mode == b.mode && same(a.miou, b.miou) && same(a.loss_pre, b.loss_pre) &&
           same(a.loss_post, b.loss_post) && a.seconds.has_value() == b.seconds.has_value() &&
           (!a.seconds || same(*a.seconds, *b.seconds));
  }
};

inline constexpr const char* kResultsHeader = "scene_id,mode,miou,loss_pre,loss_post,seconds";

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows)
    out += std::to_string(r.scene_id) + "," + r.mode + "," + format_double(r.miou) + "," + format_double(r.loss_pre) +
           "," + format_double(r.loss_post) + "," + (r.seconds ? format_double(*r.seconds) : "") + "\n";
  return out;
}

inline std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(std::getline(in, line) && line == kResultsHeader, ErrorCode::kFormatError, "bad results header");
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(f.size() == 6, ErrorCode::kFormatError, "results line " + std::to_string(line_no) + ": expected 6 fields");
    ResultRow r;
    r.scene_id = static_cast<std::size_t>(read_double(f[0]));
    r.mode = f[1];
    r.miou = read_double(f[2]);
    r.loss_pre = read_double(f[3]);
    r.loss_post = read_double(f[4]);
    if (!f[5].empty()) r.seconds = read_double(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Ordered `key = value` lines.
using Summary = std::vector<std::pair<std::string, std::string>>;

inline std::string summary_text(const Summary& s) {
  std::string out;
  for (const auto& [k, v] : s) out += k + " = " + v + "\n";
  return out;
}

inline Summary parse_summary(const std::string& text) {
  Summary s;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    require(eq != std::string::npos, ErrorCode::kFormatError, "summary line " + std::to_string(line_no));
    s.emplace_back(line.substr(0, eq), line.substr(eq + 3));
  }
  return s;
}

inline std::string summary_value(const Summary& s, const std::string& key) {
  for (const auto& [k, v] : s)
    if (k == key) return v;
  fail(ErrorCode::kFormatError, "summary has no key '" + key + "'");
}

/// Per-window losses and per-class IoU of one scene under one mode.
inline std::string scene_report_text(std::size_t scene_id, const std::string& mode, const IouReport& iou,
                                     const std::vector<pipeline::WindowReport>& windows) {
  std::ostringstream o;
  o << "[" << mode << "]\n";
  o << "scene_id = " << scene_id << "\n";
  o << "miou = " << format_double(iou.miou) << "\n";
  for (std::size_t j = 0; j < iou.per_class_iou.size(); ++j)
    o << "iou." << j << " = " << (iou.per_class_iou[j] ? format_double(*iou.per_class_iou[j]) : "absent") << "\n";
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& r = windows[w];
    o << "window." << w << " = " << r.at.row << "," << r.at.col << "," << format_double(r.loss_pre) << ","
      << format_double(r.loss_post) << (r.diverged ? ",diverged" : "") << "\n";
  }
  return o.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  f << text;
  f.close();
  require(!f.fail(), ErrorCode::kIoError, "write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

}  // namespace seeco::bench
