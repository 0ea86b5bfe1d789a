#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "kwscl/errors.hpp"
#include "kwscl/flops_model.hpp"
#include "kwscl/harness.hpp"

namespace fs = std::filesystem;
using namespace kwscl;
using namespace kwscl::harness;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "kwscl_harness_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.synthetic.samples_per_class = 300;
  cfg.test_fraction = 0.1;
  cfg.workers = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const ReportRow& baseline_for(const RunReport& r, const std::string& scenario) {
  for (const auto& b : r.baseline)
    if (b.scenario == scenario) return b;
  throw std::runtime_error("no baseline for " + scenario);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(KWSCL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Evaluate, ConstantHeadOnSingleClassIsPerfect) {
  auto head = cl::ClHead::zeros(3, {"a", "b"});
  head.b(0) = 1.0;
  const auto state = cl::make_state(cl::Algorithm::tinyol, head, {.initial_class_count = 2});
  std::vector<std::vector<double>> feats(50, std::vector<double>{0.3, -1.0, 2.0});
  std::vector<LabeledFeature> samples;
  for (const auto& f : feats) samples.push_back({f, 0});
  EXPECT_DOUBLE_EQ(evaluate(state, samples), 1.0);
  for (auto& s : samples) s.label = 1;
  EXPECT_DOUBLE_EQ(evaluate(state, samples), 0.0);
}

TEST(Evaluate, RandomHeadOnRandomLabelsIsNearChance) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  auto head = cl::ClHead::zeros(4, {"a", "b"});
  for (Eigen::Index i = 0; i < head.W.size(); ++i) head.W.data()[i] = g(rng);
  const auto state = cl::make_state(cl::Algorithm::tinyol, head, {.initial_class_count = 2});
  const std::size_t n = 4000;
  std::vector<std::vector<double>> feats(n);
  std::vector<LabeledFeature> samples;
  for (auto& f : feats) {
    f = {g(rng), g(rng), g(rng), g(rng)};
    samples.push_back({f, static_cast<std::size_t>(rng() & 1U)});
  }
  const double sigma = std::sqrt(0.25 / static_cast<double>(n));
  EXPECT_NEAR(evaluate(state, samples), 0.5, 3 * sigma);
}

TEST(Evaluate, EmptySetThrowsAndStateIsUntouched) {
  const auto head = cl::ClHead::zeros(2, {"a", "b"});
  const auto state = cl::make_state(cl::Algorithm::cwr, head, {.initial_class_count = 1});
  const auto before = state;
  EXPECT_THROW(evaluate(state, {}), DataError);
  std::vector<double> f{1.0, 2.0};
  std::vector<LabeledFeature> one{{f, 1}};
  evaluate(state, one);
  EXPECT_TRUE(state == before);
}

TEST(TestPartition, OldNewAllAreConsistent) {
  const auto table = synthetic_features({.samples_per_class = 100}, 0, 0.4, 0.1);
  const data::Scenario sc{{"two", "three"}};
  std::vector<std::string> labels(data::known_classes().begin(), data::known_classes().end());
  labels.insert(labels.end(), {"two", "three"});
  const auto old_set = test_partition(table, sc, labels, Partition::old_classes);
  const auto new_set = test_partition(table, sc, labels, Partition::new_classes);
  const auto all_set = test_partition(table, sc, labels, Partition::all);
  EXPECT_EQ(old_set.size(), 12U * 10U);
  EXPECT_EQ(new_set.size(), 2U * 10U);
  EXPECT_EQ(all_set.size(), old_set.size() + new_set.size());
  for (const auto& s : old_set) EXPECT_LT(s.label, 12U);
  for (const auto& s : new_set) EXPECT_GE(s.label, 12U);
  EXPECT_THROW(test_partition(table, sc, {"yes"}, Partition::old_classes), DataError);
}

TEST(RunContinual, RowsSatisfyWeightedMeanIdentity) {
  auto cfg = small_config();
  cfg.scenarios = data::enumerate_scenarios(2);
  const auto report = run_continual(cfg);
  std::size_t per_run = 0;
  for (const auto& r : report.rows) {
    if (!r.seed || r.scenario == "mean") continue;
    ++per_run;
    const double n_old = static_cast<double>(r.n_old), n_new = static_cast<double>(r.n_new);
    EXPECT_NEAR(r.acc_all, (n_old * r.acc_old + n_new * r.acc_new) / (n_old + n_new), 1e-12);
  }
  EXPECT_EQ(per_run, 7U * 6U);
  // One scenario-mean row per algorithm.
  EXPECT_EQ(report.rows.size(), 7U * 7U);
  EXPECT_EQ(report.baseline.size(), 6U);
}

TEST(RunContinual, EmptyStreamReproducesBaseline) {
  auto cfg = small_config();
  cfg.budget = 0;
  cfg.scenarios = data::enumerate_scenarios(1);
  const auto report = run_continual(cfg);
  for (const auto& r : report.rows) {
    if (r.scenario == "mean") continue;
    const auto& b = baseline_for(report, r.scenario);
    EXPECT_EQ(r.stream_length, 0U);
    EXPECT_DOUBLE_EQ(r.acc_old, b.acc_old) << r.algorithm;
    EXPECT_DOUBLE_EQ(r.acc_new, b.acc_new) << r.algorithm;
    EXPECT_DOUBLE_EQ(r.acc_all, b.acc_all) << r.algorithm;
  }
  for (const auto& b : report.baseline) EXPECT_DOUBLE_EQ(b.acc_new, 0.0);
}

TEST(RunContinual, TinyolImprovesOverBaseline) {
  auto cfg = small_config();
  cfg.algorithms = {cl::Algorithm::tinyol};
  cfg.scenarios = parse_new_classes("one,four");
  const auto report = run_continual(cfg);
  ASSERT_EQ(report.rows.size(), 1U);
  EXPECT_GT(report.rows[0].acc_all, report.baseline[0].acc_all);
  EXPECT_GT(report.rows[0].acc_new, 0.5);
}

TEST(RunContinual, ByteIdenticalAcrossRunsAndWorkerCounts) {
  auto cfg = small_config();
  cfg.seeds = {1, 2};
  cfg.budget = 500;
  cfg.eval_every = 100;
  const auto dir = fresh_dir("determinism");
  cfg.workers = 1;
  const auto a = emit_report(run_continual(cfg), ReportFormat::json, dir / "a");
  cfg.workers = 4;
  const auto b = emit_report(run_continual(cfg), ReportFormat::json, dir / "b");
  const auto c = emit_report(run_continual(cfg), ReportFormat::csv, dir / "c");
  const auto d = emit_report(run_continual(cfg), ReportFormat::csv, dir / "d");
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_EQ(slurp(c), slurp(d));
}

TEST(RunContinual, SeedMeanRowsAverageRuns) {
  auto cfg = small_config();
  cfg.algorithms = {cl::Algorithm::lwf};
  cfg.seeds = {3, 4, 5};
  cfg.budget = 300;
  const auto report = run_continual(cfg);
  // 4 scenarios x 3 seeds, 3 scenario means, 5 seed means.
  ASSERT_EQ(report.rows.size(), 12U + 3U + 5U);
  for (const auto& m : report.rows) {
    if (m.seed) continue;
    double sum = 0.0;
    int n = 0;
    for (const auto& r : report.rows)
      if (r.seed && r.scenario == m.scenario && r.k_new == m.k_new) {
        sum += r.acc_all;
        ++n;
      }
    ASSERT_EQ(n, 3);
    EXPECT_NEAR(m.acc_all, sum / 3.0, 1e-12);
  }
}

TEST(RunContinual, FlopsColumnMatchesModel) {
  auto cfg = small_config();
  cfg.algorithms = {cl::Algorithm::tinyol_v2};
  cfg.scenarios = data::enumerate_scenarios(4);
  cfg.budget = 64;
  const auto report = run_continual(cfg);
  ASSERT_EQ(report.rows.size(), 1U);
  EXPECT_EQ(report.rows[0].backprop_flops, 456U);
}

TEST(RunContinual, CurvesAreRecorded) {
  auto cfg = small_config();
  cfg.algorithms = {cl::Algorithm::tinyol};
  cfg.scenarios = parse_new_classes("two");
  cfg.budget = 250;
  cfg.eval_every = 100;
  const auto report = run_continual(cfg);
  ASSERT_EQ(report.curves.size(), 2U);
  EXPECT_EQ(report.curves[0].samples, 100U);
  EXPECT_EQ(report.curves[1].samples, 200U);
}

TEST(RunContinual, OversizedBudgetThrowsDataError) {
  auto cfg = small_config();
  cfg.budget = 1000000;
  cfg.out_dir = fresh_dir("oversized");
  EXPECT_THROW(run_continual(cfg), DataError);
}

TEST(SensitivitySweep, NineBudgetsAndMoreDataHelps) {
  RunConfig cfg;
  cfg.seeds = {0, 1, 2, 3, 4};
  const auto report = sensitivity_sweep(cfg);
  std::map<std::string, std::map<std::size_t, double>> means;
  std::map<std::string, std::size_t> per_run;
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.scenario, "one+two+three+four");
    ASSERT_TRUE(r.budget.has_value());
    if (r.seed) {
      ++per_run[r.algorithm];
      EXPECT_EQ(r.stream_length, *r.budget);
    } else {
      means[r.algorithm][*r.budget] = r.acc_all;
    }
  }
  ASSERT_EQ(means.size(), 7U);
  for (const auto& [algo, by_budget] : means) {
    EXPECT_EQ(per_run[algo], 9U * 5U) << algo;
    ASSERT_EQ(by_budget.size(), 9U) << algo;
    EXPECT_GE(by_budget.at(16384), by_budget.at(64)) << algo;
  }
}

TEST(Report, EmptyReportCsvIsHeaderOnly) {
  EXPECT_EQ(report_csv(RunReport{}), "algorithm,scenario,k_new,budget,seed,acc_old,acc_new,acc_all,backprop_flops\n");
}

TEST(Report, JsonRoundTrip) {
  auto cfg = small_config();
  cfg.seeds = {0, 1};
  cfg.budget = 200;
  cfg.eval_every = 50;
  const auto report = run_continual(cfg);
  const auto back = report_from_json(nlohmann::json::parse(report_json(report).dump()));
  EXPECT_TRUE(back == report);
  const auto dir = fresh_dir("roundtrip");
  EXPECT_TRUE(read_report(emit_report(report, ReportFormat::json, dir)) == report);
  EXPECT_EQ(report.config_digest, cfg.digest());
  EXPECT_EQ(report.rng, "mt19937_64");
  EXPECT_THROW(report_from_json(nlohmann::json{{"rows", 1}}), DataError);
  EXPECT_THROW(parse_format("xml"), ConfigError);
}

TEST(Config, ParsesKeysAndKeepsDefaults) {
  const auto cfg = config_from_json(nlohmann::json::parse(R"({
    "cl": {"learning_rate": 0.01, "batch_size": 8, "cwr_reinit": "keep"},
    "algorithms": ["cwr", "lwf"],
    "new_classes": [["one"], ["two", "four"]],
    "budget": 128,
    "seeds": [4, 5],
    "split": {"test_fraction": 0.05},
    "synthetic": {"noise": 0.5}
  })"));
  EXPECT_DOUBLE_EQ(cfg.cl.learning_rate, 0.01);
  EXPECT_EQ(cfg.cl.batch_size, 8U);
  EXPECT_EQ(cfg.cl.cwr_reinit, cl::CwrReinit::keep);
  EXPECT_DOUBLE_EQ(cfg.cl.lwf_lambda, 1.0);
  ASSERT_EQ(cfg.algorithms.size(), 2U);
  EXPECT_EQ(cfg.algorithms[0], cl::Algorithm::cwr);
  ASSERT_EQ(cfg.scenarios.size(), 2U);
  EXPECT_EQ(cfg.scenarios[1].name(), "two+four");
  EXPECT_EQ(cfg.budget, 128U);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_DOUBLE_EQ(cfg.test_fraction, 0.05);
  EXPECT_DOUBLE_EQ(cfg.pretrain_fraction, 0.40);
  EXPECT_DOUBLE_EQ(cfg.synthetic.noise, 0.5);
  EXPECT_EQ(cfg.feature_source, FeatureSourceKind::synthetic);
  EXPECT_NO_THROW(cfg.validate());

  EXPECT_EQ(config_from_json(nlohmann::json::parse(R"({"new_classes": 3})")).scenarios.size(), 4U);
  EXPECT_EQ(config_from_json(nlohmann::json::parse(R"({"new_classes": "one,two"})")).scenarios.size(), 1U);
  EXPECT_FALSE(config_from_json(nlohmann::json::parse(R"({"budget": "all"})")).budget.has_value());
}

TEST(Config, RejectsBadValues) {
  const auto bad = [](const char* text) { return config_from_json(nlohmann::json::parse(text)); };
  EXPECT_THROW(bad(R"({"algorithms": ["sgd"]})"), ConfigError);
  EXPECT_THROW(bad(R"({"new_classes": 5})"), ConfigError);
  EXPECT_THROW(bad(R"({"new_classes": "one,yes"})"), ConfigError);
  EXPECT_THROW(bad(R"({"new_classes": "one,one"})"), ConfigError);
  EXPECT_THROW(bad(R"({"budget": -3})"), ConfigError);
  EXPECT_THROW(bad(R"({"budget": "some"})"), ConfigError);
  EXPECT_THROW(bad(R"({"cl": {"cwr_reinit": "random"}})"), ConfigError);
  EXPECT_THROW(bad(R"({"feature_source": "mfcc"})"), ConfigError);
  EXPECT_THROW(bad(R"({"seeds": "zero"})"), ConfigError);
  EXPECT_THROW(bad(R"({"cl": {"batch_size": 0}})").validate(), ConfigError);
  EXPECT_THROW(bad(R"({"seeds": []})").validate(), ConfigError);
  EXPECT_THROW(bad(R"({"feature_source": "bnn", "dataset_root": "/no/such/dir"})").validate(), ConfigError);
  EXPECT_THROW(bad(R"({"feature_source": "cache"})").validate(), ConfigError);
  EXPECT_THROW(load_config("/no/such/config.json"), ConfigError);
  const auto dir = fresh_dir("config");
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
}

TEST(Config, DigestIsStableAndSensitive) {
  const RunConfig a, b;
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(a.digest().size(), 64U);
  RunConfig c;
  c.cl.learning_rate = 0.051;
  EXPECT_NE(a.digest(), c.digest());
  EXPECT_EQ(config_from_json(a.to_json()).digest(), a.digest());
}

TEST(FeatureSource, NamesRoundTrip) {
  for (auto k : {FeatureSourceKind::bnn, FeatureSourceKind::cache, FeatureSourceKind::synthetic})
    EXPECT_EQ(parse_feature_source(to_string(k)), k);
  EXPECT_EQ(parse_feature_source("bnn_model"), FeatureSourceKind::bnn);
  EXPECT_EQ(parse_feature_source("cached_features"), FeatureSourceKind::cache);
}

TEST(FeatureCache, RoundTripAndCorruption) {
  const auto dir = fresh_dir("cache");
  const std::vector<bnn::FeatureVector> feats = {{1.0, -2.5, 3.25}, {0.0, 1e-300, -7.0}};
  save_feature_cache(dir / "f.bin", feats);
  EXPECT_EQ(load_feature_cache(dir / "f.bin"), feats);
  EXPECT_EQ(fs::file_size(dir / "f.bin"), 8U + 8U + 4U + 6U * 8U);
  fs::resize_file(dir / "f.bin", 30);
  EXPECT_THROW(load_feature_cache(dir / "f.bin"), DataError);
  std::ofstream(dir / "g.bin") << "FEATXXXX";
  EXPECT_THROW(load_feature_cache(dir / "g.bin"), DataError);
  EXPECT_THROW(save_feature_cache(dir / "h.bin", {{1.0}, {1.0, 2.0}}), DataError);
}

TEST(FeatureCache, CacheSourceReplaysSyntheticTable) {
  const auto dir = fresh_dir("cache_source");
  auto cfg = small_config();
  const auto table = load_features(cfg);
  data::write_splits_manifest(dir / "splits.tsv", table.index, table.splits);
  save_feature_cache(dir / "features.bin", table.features);
  cfg.algorithms = {cl::Algorithm::tinyol};
  cfg.budget = 300;
  const auto direct = run_continual(cfg);

  auto cached = cfg;
  cached.feature_source = FeatureSourceKind::cache;
  cached.manifest_path = dir / "splits.tsv";
  cached.feature_cache = dir / "features.bin";
  const auto replay = run_continual(cached);
  ASSERT_EQ(replay.rows.size(), direct.rows.size());
  for (std::size_t i = 0; i < replay.rows.size(); ++i) EXPECT_EQ(replay.rows[i], direct.rows[i]);
}

TEST(FitHead, SeparatesSyntheticClusters) {
  const auto table = synthetic_features({.samples_per_class = 200}, 0, 0.4, 0.1);
  std::vector<std::string> labels(data::known_classes().begin(), data::known_classes().end());
  const auto head = fit_head(table, table.splits.pretrain, labels, {});
  EXPECT_EQ(head.class_count(), 12U);
  const auto state = cl::make_state(cl::Algorithm::tinyol, head, {});
  const auto test = test_partition(table, data::Scenario{{"one"}}, labels, Partition::old_classes);
  EXPECT_GT(evaluate(state, test), 0.9);
  EXPECT_THROW(fit_head(table, {}, labels, {}), DataError);
}

TEST(FitHead, ToleranceStopsEarly) {
  const auto table = synthetic_features({.samples_per_class = 50}, 0, 0.4, 0.1);
  std::vector<std::string> labels(data::known_classes().begin(), data::known_classes().end());
  const auto untouched = fit_head(table, table.splits.pretrain, labels, {.iterations = 100, .tolerance = 1e9});
  EXPECT_TRUE(untouched == cl::ClHead::zeros(untouched.feature_dim(), labels));
  const auto capped = fit_head(table, table.splits.pretrain, labels, {.iterations = 100});
  const auto loose = fit_head(table, table.splits.pretrain, labels, {.iterations = 100, .tolerance = 1e-12});
  EXPECT_TRUE(capped == loose);
}

TEST(ParallelFor, RunsEveryJobOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), 8, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(100, 4,
                            [](std::size_t i) {
                              if (i == 37) throw NumericError("boom");
                            }),
               NumericError);
  parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(Cli, ExitCodes) {
  const auto dir = fresh_dir("cli");
  EXPECT_EQ(run_cli("flops"), 0);
  EXPECT_EQ(run_cli("flops --format csv"), 0);
  EXPECT_EQ(run_cli("no-such-verb"), 1);
  EXPECT_EQ(run_cli("run --algorithms sgd --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("report --input " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("index --config /no/such/config.json"), 1);
  {
    std::ofstream(dir / "cfg.json") << R"({"synthetic": {"samples_per_class": 200}, "split": {"test_fraction": 0.1}})";
  }
  EXPECT_EQ(run_cli("run --config " + (dir / "cfg.json").string() + " --algorithms tinyol --new-classes one --out " +
                    dir.string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "report.csv"));
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_EQ(run_cli("report --input " + (dir / "report.json").string()), 0);
}
