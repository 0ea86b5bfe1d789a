#pragma once

// End-to-end experiment orchestration: features, pre-trained head, CL runs
// over scenarios, evaluation and the sample-budget sweep.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kwscl/audio_frontend.hpp"
#include "kwscl/bnn_engine.hpp"
#include "kwscl/cl_algorithms.hpp"
#include "kwscl/dataset_streams.hpp"
#include "kwscl/report.hpp"
#include "kwscl/synthetic.hpp"

namespace kwscl::harness {

enum class FeatureSourceKind { bnn, cache, synthetic };
FeatureSourceKind parse_feature_source(const std::string& name);
std::string to_string(FeatureSourceKind k);

// Full-batch gradient descent on softmax cross-entropy.
struct FitOptions {
  std::size_t iterations = 400;
  double learning_rate = 0.5;
  double l2 = 1e-4;
  double tolerance = 0.0;  // stop once the largest gradient entry falls below this
};

inline constexpr std::array<std::size_t, 9> kSweepBudgets = {64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384};

struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path model_path;
  std::filesystem::path head_path;       // optional pre-trained head checkpoint
  std::filesystem::path manifest_path;   // optional splits manifest to replay
  std::filesystem::path feature_cache;   // FEAT0001 file (read for cache, written for bnn)
  std::filesystem::path out_dir;

  FeatureSourceKind feature_source = FeatureSourceKind::synthetic;
  FrontendConfig frontend;
  cl::ClConfig cl;
  std::vector<cl::Algorithm> algorithms{cl::kAllAlgorithms.begin(), cl::kAllAlgorithms.end()};
  std::vector<data::Scenario> scenarios = data::enumerate_scenarios(1);
  std::optional<std::size_t> budget;  // nullopt: whole CL pool
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t data_seed = 0;
  double pretrain_fraction = 0.40;
  double test_fraction = 0.03;
  synthetic::SyntheticConfig synthetic;
  FitOptions fit;
  std::size_t workers = 0;     // 0: hardware concurrency
  std::size_t eval_every = 0;  // 0: evaluate only after the stream

  // Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  // Hex SHA-256 of the canonical JSON form.
  std::string digest() const;
};

// Missing keys keep their defaults. Throws ConfigError on bad values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
// "2" -> all combinations of 2 new classes; "one,three" -> that one scenario.
std::vector<data::Scenario> parse_new_classes(const std::string& spec);

// Features for every index entry, aligned with index.entries.
struct FeatureTable {
  data::DatasetIndex index;
  data::Splits splits;
  std::vector<bnn::FeatureVector> features;
};

FeatureTable load_features(const RunConfig& cfg);
FeatureTable synthetic_features(const synthetic::SyntheticConfig& syn, std::uint64_t split_seed,
                                double pretrain_fraction, double test_fraction);

// FEAT0001: magic, count u64, dim u32, count*dim float64 in entry order.
void save_feature_cache(const std::filesystem::path& path, const std::vector<bnn::FeatureVector>& features);
std::vector<bnn::FeatureVector> load_feature_cache(const std::filesystem::path& path);

struct LabeledFeature {
  std::span<const double> features;
  std::size_t label = 0;  // column of the head being evaluated
};

// Fits a fresh head over `labels` on the given entries.
cl::ClHead fit_head(const FeatureTable& table, std::span<const std::size_t> entries,
                    const std::vector<std::string>& labels, const FitOptions& options);
// Loads cfg.head_path if set, otherwise fits on the pretrain split.
cl::ClHead pretrained_head(const RunConfig& cfg, const FeatureTable& table);

enum class Partition { old_classes, new_classes, all };

// Test samples of the partition, labelled by column of `head_labels`.
std::vector<LabeledFeature> test_partition(const FeatureTable& table, const data::Scenario& scenario,
                                           const std::vector<std::string>& head_labels, Partition partition);

// Fraction of correct predictions using the evaluation head. Never mutates
// the state. Throws DataError on an empty sample set.
double evaluate(const cl::ClAlgorithmState& state, std::span<const LabeledFeature> samples);

// Seed of the stream shared by every algorithm for (run seed, scenario).
std::uint64_t stream_seed(std::uint64_t seed, const data::Scenario& scenario);

RunReport run_continual(const RunConfig& cfg);
// One row per (algorithm, budget, seed) on the four-new-class scenario, for
// every budget in kSweepBudgets. Throws DataError if the CL pool is smaller
// than the largest budget.
RunReport sensitivity_sweep(const RunConfig& cfg);

// Runs fn(0..jobs-1) on up to `workers` threads; rethrows the first failure
// after all threads finish.
void parallel_for(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace kwscl::harness
