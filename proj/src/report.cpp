#include "kwscl/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "kwscl/errors.hpp"

namespace kwscl::harness {

using nlohmann::json;

namespace {

std::string budget_text(const std::optional<std::size_t>& b) { return b ? std::to_string(*b) : "all"; }
std::string seed_text(const std::optional<std::uint64_t>& s) { return s ? std::to_string(*s) : "mean"; }

json row_json(const ReportRow& r) {
  return json{{"algorithm", r.algorithm},
              {"scenario", r.scenario},
              {"k_new", r.k_new},
              {"budget", r.budget ? json(*r.budget) : json("all")},
              {"seed", r.seed ? json(*r.seed) : json("mean")},
              {"acc_old", r.acc_old},
              {"acc_new", r.acc_new},
              {"acc_all", r.acc_all},
              {"backprop_flops", r.backprop_flops},
              {"stream_length", r.stream_length},
              {"n_old", r.n_old},
              {"n_new", r.n_new}};
}

ReportRow row_from_json(const json& j) {
  ReportRow r;
  r.algorithm = j.at("algorithm").get<std::string>();
  r.scenario = j.at("scenario").get<std::string>();
  r.k_new = j.at("k_new").get<int>();
  if (j.at("budget").is_number()) r.budget = j.at("budget").get<std::size_t>();
  if (j.at("seed").is_number()) r.seed = j.at("seed").get<std::uint64_t>();
  r.acc_old = j.at("acc_old").get<double>();
  r.acc_new = j.at("acc_new").get<double>();
  r.acc_all = j.at("acc_all").get<double>();
  r.backprop_flops = j.at("backprop_flops").get<std::uint64_t>();
  r.stream_length = j.value("stream_length", std::size_t{0});
  r.n_old = j.value("n_old", std::size_t{0});
  r.n_new = j.value("n_new", std::size_t{0});
  return r;
}

}  // namespace

ReportFormat parse_format(const std::string& name) {
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw ConfigError("unknown report format '" + name + "' (expected csv or json)");
}

std::string report_csv(const RunReport& report) {
  std::ostringstream os;
  os << "algorithm,scenario,k_new,budget,seed,acc_old,acc_new,acc_all,backprop_flops\n";
  os << std::setprecision(6) << std::fixed;
  for (const auto& r : report.rows)
    os << r.algorithm << ',' << r.scenario << ',' << r.k_new << ',' << budget_text(r.budget) << ','
       << seed_text(r.seed) << ',' << r.acc_old << ',' << r.acc_new << ',' << r.acc_all << ',' << r.backprop_flops
       << '\n';
  return os.str();
}

json report_json(const RunReport& report) {
  json rows = json::array(), baseline = json::array(), curves = json::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  for (const auto& r : report.baseline) baseline.push_back(row_json(r));
  for (const auto& c : report.curves)
    curves.push_back(json{{"algorithm", c.algorithm},
                          {"scenario", c.scenario},
                          {"seed", c.seed},
                          {"samples", c.samples},
                          {"acc_all", c.acc_all}});
  return json{{"config_digest", report.config_digest},
              {"rng", report.rng},
              {"balance_rule", report.balance_rule},
              {"rows", rows},
              {"baseline", baseline},
              {"curves", curves}};
}

RunReport report_from_json(const json& j) {
  try {
    RunReport report;
    report.config_digest = j.at("config_digest").get<std::string>();
    report.rng = j.value("rng", std::string{});
    report.balance_rule = j.value("balance_rule", std::string{});
    for (const auto& r : j.at("rows")) report.rows.push_back(row_from_json(r));
    for (const auto& r : j.value("baseline", json::array())) report.baseline.push_back(row_from_json(r));
    for (const auto& c : j.value("curves", json::array()))
      report.curves.push_back({c.at("algorithm").get<std::string>(), c.at("scenario").get<std::string>(),
                               c.at("seed").get<std::uint64_t>(), c.at("samples").get<std::size_t>(),
                               c.at("acc_all").get<double>()});
    return report;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

std::filesystem::path emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& out_dir,
                                  const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const auto path = out_dir / (stem + (format == ReportFormat::csv ? ".csv" : ".json"));
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  if (format == ReportFormat::csv)
    out << report_csv(report);
  else
    out << report_json(report).dump(2) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
  return path;
}

RunReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace kwscl::harness
