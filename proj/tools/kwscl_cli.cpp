// kwscl: continual-learning experiments on a frozen binarized KWS extractor.
//
//   kwscl index  --config cfg.json
//   kwscl split  --config cfg.json --out runs/
//   kwscl pretrain-head --config cfg.json --out runs/
//   kwscl run    --config cfg.json --algorithms tinyol,cwr --new-classes 2 --out runs/
//   kwscl sweep  --config cfg.json --out runs/
//   kwscl flops  --format csv
//   kwscl report --input runs/report.json --format csv

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <sstream>

#include "kwscl/cl_algorithms.hpp"
#include "kwscl/dataset_streams.hpp"
#include "kwscl/errors.hpp"
#include "kwscl/flops_model.hpp"
#include "kwscl/harness.hpp"

namespace {

using namespace kwscl;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string algorithms;
  std::string new_classes;
  std::string budget;
  std::string feature_source;
  std::string out = "out";
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON run configuration");
  cmd->add_option("--seed", o.seed, "Stream seed (overrides config seeds)");
  cmd->add_option("--algorithms", o.algorithms, "Comma-separated algorithm names");
  cmd->add_option("--new-classes", o.new_classes, "k, or comma-separated numeric keywords");
  cmd->add_option("--budget", o.budget, "Stream length, or 'all'");
  cmd->add_option("--feature-source", o.feature_source, "bnn, cache or synthetic");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--format", o.format, "csv or json");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

harness::RunConfig resolve(const CommonOptions& o) {
  harness::RunConfig cfg = o.config.empty() ? harness::RunConfig{} : harness::load_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.algorithms.empty()) {
    cfg.algorithms.clear();
    for (const auto& a : split_list(o.algorithms)) cfg.algorithms.push_back(cl::parse_algorithm(a));
  }
  if (!o.new_classes.empty()) cfg.scenarios = harness::parse_new_classes(o.new_classes);
  if (!o.budget.empty()) {
    if (o.budget == "all") {
      cfg.budget.reset();
    } else {
      try {
        std::size_t used = 0;
        cfg.budget = std::stoull(o.budget, &used);
        if (used != o.budget.size()) throw std::invalid_argument(o.budget);
      } catch (const std::logic_error&) {
        throw ConfigError("--budget must be a nonnegative integer or 'all'");
      }
    }
  }
  if (!o.feature_source.empty()) cfg.feature_source = harness::parse_feature_source(o.feature_source);
  cfg.out_dir = o.out;
  return cfg;
}

int cmd_index(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto index = data::index_dataset(cfg.dataset_root, {.seed = cfg.data_seed});
  std::map<std::string, std::size_t> counts;
  for (const auto& e : index.entries) ++counts[e.mapped_class];
  std::cout << "root: " << index.root.string() << "\nentries: " << index.entries.size()
            << "\nbalance: " << index.balance_rule << '\n';
  for (const auto& cls : data::all_classes()) std::cout << "  " << cls << '\t' << counts[cls] << '\n';
  return 0;
}

int cmd_split(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto index = data::index_dataset(cfg.dataset_root, {.seed = cfg.data_seed});
  const auto splits = data::split_dataset(index, cfg.data_seed, cfg.pretrain_fraction, cfg.test_fraction);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / "splits.tsv";
  data::write_splits_manifest(path, index, splits);
  std::cout << "test " << splits.test.size() << ", pretrain " << splits.pretrain.size() << ", cl_pool "
            << splits.cl_pool.size() << " -> " << path.string() << '\n';
  return 0;
}

int cmd_pretrain_head(const CommonOptions& o) {
  auto cfg = resolve(o);
  cfg.head_path.clear();
  cfg.validate();
  const auto table = harness::load_features(cfg);
  const auto head = harness::pretrained_head(cfg, table);
  cl::ClConfig clc = cfg.cl;
  clc.initial_class_count = head.class_count();
  const auto state = cl::make_state(cl::Algorithm::tinyol, head, clc);
  const auto test = harness::test_partition(table, data::Scenario{{"one"}}, head.class_labels,
                                            harness::Partition::old_classes);
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = cfg.out_dir / "head.clhd";
  cl::save_checkpoint(state, path);
  std::cout << "head " << head.feature_dim() << "x" << head.class_count() << ", test accuracy "
            << harness::evaluate(state, test) << " -> " << path.string() << '\n';
  return 0;
}

int cmd_run(const CommonOptions& o, bool sweep) {
  const auto cfg = resolve(o);
  const auto format = harness::parse_format(o.format);
  const auto report = sweep ? harness::sensitivity_sweep(cfg) : harness::run_continual(cfg);
  const std::string stem = sweep ? "sweep" : "report";
  const auto json_path = harness::emit_report(report, harness::ReportFormat::json, cfg.out_dir, stem);
  const auto path = format == harness::ReportFormat::json ? json_path
                                                          : harness::emit_report(report, format, cfg.out_dir, stem);
  std::cout << report.rows.size() << " rows -> " << path.string() << '\n';
  return 0;
}

int cmd_flops(std::uint64_t initial, std::uint64_t batch, const std::string& format) {
  const auto table = flops::flop_table(initial, batch);
  if (format == "csv")
    std::cout << flops::table_csv(table);
  else if (format == "text")
    std::cout << flops::table_text(table);
  else
    throw ConfigError("flops --format must be csv or text");
  return 0;
}

int cmd_report(const std::string& input, const CommonOptions& o) {
  const auto report = harness::read_report(input);
  if (harness::parse_format(o.format) == harness::ReportFormat::csv)
    std::cout << harness::report_csv(report);
  else
    std::cout << harness::report_json(report).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning on the last layer of a binarized keyword-spotting network"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto* index = app.add_subcommand("index", "Index a Speech Commands directory and print class counts");
  auto* split = app.add_subcommand("split", "Write the test/pretrain/CL splits manifest");
  auto* pretrain = app.add_subcommand("pretrain-head", "Fit the classifier head on pretrain features");
  auto* run = app.add_subcommand("run", "Run CL algorithms over scenarios and emit a report");
  auto* sweep = app.add_subcommand("sweep", "Sample-budget sensitivity sweep on four new classes");
  for (auto* cmd : {index, split, pretrain, run, sweep}) add_common(cmd, opts);

  std::uint64_t initial = 12, batch = 32;
  std::string flops_format = "text";
  auto* flops_cmd = app.add_subcommand("flops", "Print the backpropagation FLOP table");
  flops_cmd->add_option("--initial-classes", initial, "M");
  flops_cmd->add_option("--batch-size", batch, "B");
  flops_cmd->add_option("--format", flops_format, "csv or text");

  std::string input;
  auto* report = app.add_subcommand("report", "Re-emit a JSON report as CSV or JSON");
  report->add_option("--input", input, "Report JSON")->required();
  report->add_option("--format", opts.format, "csv or json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*index) return cmd_index(opts);
    if (*split) return cmd_split(opts);
    if (*pretrain) return cmd_pretrain_head(opts);
    if (*run) return cmd_run(opts, false);
    if (*sweep) return cmd_run(opts, true);
    if (*flops_cmd) return cmd_flops(initial, batch, flops_format);
    if (*report) return cmd_report(input, opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
