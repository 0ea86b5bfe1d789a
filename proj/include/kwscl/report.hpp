#pragma once

// Run reports and their CSV / JSON encodings.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace kwscl::harness {

struct ReportRow {
  std::string algorithm;
  std::string scenario;                // "one+two", or "mean" across combinations
  int k_new = 0;
  std::optional<std::size_t> budget;   // nullopt: whole CL pool
  std::optional<std::uint64_t> seed;   // nullopt: mean across seeds
  double acc_old = 0.0;
  double acc_new = 0.0;
  double acc_all = 0.0;
  std::uint64_t backprop_flops = 0;
  std::size_t stream_length = 0;
  std::size_t n_old = 0;  // test samples per partition (0 on aggregate rows)
  std::size_t n_new = 0;

  bool operator==(const ReportRow&) const = default;
};

struct CurvePoint {
  std::string algorithm;
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  double acc_all = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct RunReport {
  std::string config_digest;
  std::string rng;
  std::string balance_rule;
  std::vector<ReportRow> rows;
  std::vector<ReportRow> baseline;  // expanded pre-trained head, no CL
  std::vector<CurvePoint> curves;   // periodic evaluation, when enabled

  bool operator==(const RunReport&) const = default;
};

enum class ReportFormat { csv, json };
ReportFormat parse_format(const std::string& name);

// Columns: algorithm,scenario,k_new,budget,seed,acc_old,acc_new,acc_all,backprop_flops
std::string report_csv(const RunReport& report);
nlohmann::json report_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);

// Writes <out_dir>/<stem>.csv or .json and returns the path. Throws DataError
// if the file cannot be written.
std::filesystem::path emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& out_dir,
                                  const std::string& stem = "report");
RunReport read_report(const std::filesystem::path& path);

}  // namespace kwscl::harness
