#pragma once

// EvalReport assembly: JSON metric blocks with per-fold and aggregate
// values, a shipped schema with a structural validator, and a log-scale ROC
// SVG emitter. Reports contain no wall-clock state; a report is a pure
// function of (inputs, flags, seed), so identical runs produce identical
// bytes.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mia/metrics.hpp"

namespace mia::report {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolkitVersion = "0.1.0";

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t fnv1a_bytes(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash missing file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_bytes(ss.str());
}

// Format an FPR target as a stable JSON key ("0.01", "0.001").
inline std::string fpr_key(double target) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", target);
  return buf;
}

struct MetricsBlock {
  double auc = 0.0;
  double bal_acc = std::numeric_limits<double>::quiet_NaN();
  double pauc = 0.0;
  double ks_tail = 0.0;
  std::map<std::string, double> tpr_at;
  std::size_t n_member = 0;
  std::size_t n_nonmember = 0;
};

inline MetricsBlock compute_metrics(const std::vector<double>& member_scores,
                                    const std::vector<double>& nonmember_scores,
                                    const std::vector<double>& fpr_targets,
                                    double pauc_fmax = 0.001) {
  MetricsBlock b;
  b.auc = metrics::auc(member_scores, nonmember_scores);
  b.pauc = metrics::pauc(member_scores, nonmember_scores, pauc_fmax);
  b.ks_tail = metrics::ks_tail(member_scores, nonmember_scores, pauc_fmax);
  for (double t : fpr_targets)
    b.tpr_at[fpr_key(t)] = metrics::tpr_at_fpr(member_scores, nonmember_scores, t);
  b.n_member = member_scores.size();
  b.n_nonmember = nonmember_scores.size();
  return b;
}

inline json metrics_to_json(const MetricsBlock& b) {
  json j = {{"auc", b.auc},
            {"pauc", b.pauc},
            {"ks_tail", b.ks_tail},
            {"tpr_at", b.tpr_at},
            {"n_member", b.n_member},
            {"n_nonmember", b.n_nonmember}};
  if (!std::isnan(b.bal_acc)) j["bal_acc"] = b.bal_acc;
  return j;
}

// ---------------------------------------------------------------------------
// Shipped report schema (structural): required keys and their JSON types.

inline const json& report_schema() {
  static const json schema = {
      {"$id", "eval-report.schema.json"},
      {"schema_version", kSchemaVersion},
      {"type", "object"},
      {"required", {"schema_version", "run_id", "kind", "config", "provenance"}},
      {"properties",
       {{"schema_version", {{"type", "integer"}}},
        {"run_id", {{"type", "string"}}},
        {"kind", {{"type", "string"}}},
        {"config", {{"type", "object"}}},
        {"provenance",
         {{"type", "object"},
          {"required", {"seed", "toolkit_version", "input_hashes"}}}},
        {"attack", {{"type", "object"}}},
        {"single_features", {{"type", "object"}}},
        {"baselines", {{"type", "object"}}},
        {"hardness", {{"type", "object"}}},
        {"defense", {{"type", "object"}}},
        {"transfer", {{"type", "object"}}},
        {"diagnostics", {{"type", "object"}}},
        {"per_sample", {{"type", "array"}}}}}};
  return schema;
}

// Structural validation against the shipped schema.
inline bool validate_report(const json& r, std::string* why = nullptr) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (!r.is_object()) return fail("report is not an object");
  const json& schema = report_schema();
  for (const auto& key : schema["required"]) {
    if (!r.contains(key.get<std::string>()))
      return fail("missing required key: " + key.get<std::string>());
  }
  if (!r["schema_version"].is_number_integer() ||
      r["schema_version"].get<int>() != kSchemaVersion)
    return fail("schema_version mismatch");
  for (const auto& [key, spec] : schema["properties"].items()) {
    if (!r.contains(key)) continue;
    const std::string type = spec["type"].get<std::string>();
    const json& v = r[key];
    const bool ok = (type == "object" && v.is_object()) ||
                    (type == "array" && v.is_array()) ||
                    (type == "string" && v.is_string()) ||
                    (type == "integer" && v.is_number_integer());
    if (!ok) return fail("key '" + key + "' is not of type " + type);
    if (spec.contains("required"))
      for (const auto& sub : spec["required"])
        if (!v.contains(sub.get<std::string>()))
          return fail("key '" + key + "' missing '" + sub.get<std::string>() + "'");
  }
  return true;
}

inline json make_report_shell(const std::string& kind, const json& config,
                              std::uint64_t seed,
                              const std::map<std::string, std::uint64_t>& input_hashes) {
  json hashes = json::object();
  std::uint64_t combined = seed;
  for (const auto& [name, h] : input_hashes) {
    hashes[name] = hex64(h);
    combined = combined * 0x100000001b3ULL ^ h;
  }
  combined = combined * 0x100000001b3ULL ^ fnv1a_bytes(config.dump() + kind);
  json r = {{"schema_version", kSchemaVersion},
            {"run_id", "run-" + hex64(combined)},
            {"kind", kind},
            {"config", config},
            {"provenance",
             {{"seed", seed},
              {"toolkit_version", kToolkitVersion},
              {"input_hashes", hashes},
              {"zlib_level", 6}}}};
  return r;
}

// ---------------------------------------------------------------------------
// Log-scale ROC SVG

struct RocSeries {
  std::string name;
  std::vector<metrics::RocPoint> points;
};

// SVG with a log10 FPR axis from 1/n_neg (or the given floor) to 1, a
// diagonal chance reference and one polyline per series. Output bytes are
// deterministic for identical input.
inline void emit_log_roc_svg(const std::vector<RocSeries>& series,
                             const std::string& path, double fpr_floor = 0.0) {
  if (series.empty()) throw std::invalid_argument("emit_log_roc_svg: no series");
  double floor = fpr_floor;
  if (floor <= 0.0) {
    floor = 1.0;
    for (const auto& s : series)
      for (const auto& p : s.points)
        if (p.fpr > 0.0) floor = std::min(floor, p.fpr);
    floor = std::min(floor, 0.5);
  }
  const double W = 640.0, H = 480.0, ML = 64.0, MR = 24.0, MT = 24.0, MB = 48.0;
  const double px = W - ML - MR, py = H - MT - MB;
  const double lmin = std::log10(floor);
  auto xmap = [&](double fpr) {
    const double f = std::max(fpr, floor);
    return ML + px * (std::log10(f) - lmin) / (0.0 - lmin);
  };
  auto ymap = [&](double tpr) { return MT + py * (1.0 - tpr); };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return std::string(buf);
  };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
      << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";

  // axes + decade grid
  svg << "<g stroke=\"#cccccc\" stroke-width=\"1\">\n";
  for (double d = std::ceil(lmin); d <= 0.0; d += 1.0) {
    const double x = xmap(std::pow(10.0, d));
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(MT) << "\" x2=\""
        << fmt(x) << "\" y2=\"" << fmt(MT + py) << "\"/>\n";
  }
  svg << "</g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333333\">\n";
  for (double d = std::ceil(lmin); d <= 0.0; d += 1.0) {
    const double x = xmap(std::pow(10.0, d));
    svg << "<text x=\"" << fmt(x - 12) << "\" y=\"" << fmt(MT + py + 18)
        << "\">1e" << static_cast<int>(d) << "</text>\n";
  }
  svg << "<text x=\"" << fmt(ML + px / 2 - 60) << "\" y=\"" << fmt(H - 10)
      << "\">false positive rate (log)</text>\n"
      << "<text x=\"14\" y=\"" << fmt(MT + py / 2)
      << "\" transform=\"rotate(-90 14 " << fmt(MT + py / 2)
      << ")\">true positive rate</text>\n</g>\n";

  // chance diagonal: tpr = fpr
  svg << "<polyline fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 3\" "
         "points=\"";
  for (double d = lmin; d <= 0.0 + 1e-12; d += (0.0 - lmin) / 64.0) {
    const double f = std::pow(10.0, d);
    svg << fmt(xmap(f)) << "," << fmt(ymap(f)) << " ";
  }
  svg << "\"/>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    svg << "<polyline fill=\"none\" stroke=\"" << palette[si % 8]
        << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : series[si].points)
      svg << fmt(xmap(p.fpr)) << "," << fmt(ymap(p.tpr)) << " ";
    svg << "\"/>\n";
    svg << "<text font-family=\"sans-serif\" font-size=\"12\" fill=\""
        << palette[si % 8] << "\" x=\"" << fmt(ML + 8) << "\" y=\""
        << fmt(MT + 16 + 16 * static_cast<double>(si)) << "\">" << series[si].name
        << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << svg.str();
}

}  // namespace mia::report
