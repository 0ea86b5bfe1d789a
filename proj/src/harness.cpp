#include "kwscl/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "kwscl/binary_io.hpp"
#include "kwscl/errors.hpp"
#include "kwscl/flops_model.hpp"
#include "kwscl/rng.hpp"

namespace kwscl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kBuiltinToyModel = "builtin:toy";

std::string hex_sha256(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::uint64_t scenario_salt(const data::Scenario& s) {
  std::uint64_t mask = 0;
  for (const auto& c : s.new_classes)
    for (std::size_t i = 0; i < data::kNumericKeywords.size(); ++i)
      if (data::kNumericKeywords[i] == c) mask |= 1ULL << i;
  return mask;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

FeatureSourceKind parse_feature_source(const std::string& name) {
  if (name == "bnn" || name == "bnn_model") return FeatureSourceKind::bnn;
  if (name == "cache" || name == "cached_features") return FeatureSourceKind::cache;
  if (name == "synthetic") return FeatureSourceKind::synthetic;
  throw ConfigError("unknown feature source '" + name + "' (expected bnn, cache or synthetic)");
}

std::string to_string(FeatureSourceKind k) {
  switch (k) {
    case FeatureSourceKind::bnn:
      return "bnn";
    case FeatureSourceKind::cache:
      return "cache";
    case FeatureSourceKind::synthetic:
      return "synthetic";
  }
  return "?";
}

std::vector<data::Scenario> parse_new_classes(const std::string& spec) {
  if (!spec.empty() && std::all_of(spec.begin(), spec.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return data::enumerate_scenarios(std::stoi(spec));
  data::Scenario s;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const auto item = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (item.empty()) throw ConfigError("empty class name in --new-classes '" + spec + "'");
    if (!data::is_numeric_class(item)) throw ConfigError("'" + item + "' is not one of one,two,three,four");
    s.new_classes.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (std::set<std::string>(s.new_classes.begin(), s.new_classes.end()).size() != s.new_classes.size())
    throw ConfigError("duplicate class in --new-classes '" + spec + "'");
  return {s};
}

void RunConfig::validate() const {
  cl.validate();
  frontend.validate();
  if (algorithms.empty()) throw ConfigError("at least one algorithm must be selected");
  if (scenarios.empty()) throw ConfigError("no scenarios selected");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  for (const auto& s : scenarios) {
    if (s.new_classes.empty() || s.new_classes.size() > data::kNumericKeywords.size())
      throw ConfigError("scenario must add 1..4 classes");
    for (const auto& c : s.new_classes)
      if (!data::is_numeric_class(c)) throw ConfigError("scenario class '" + c + "' is not a numeric keyword");
  }
  const auto must_exist = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " is required for this feature source");
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " does not exist: " + p.string());
  };
  switch (feature_source) {
    case FeatureSourceKind::bnn:
      if (manifest_path.empty()) must_exist(dataset_root, "dataset_root");
      if (model_path != kBuiltinToyModel) must_exist(model_path, "model");
      break;
    case FeatureSourceKind::cache:
      must_exist(manifest_path, "manifest");
      must_exist(feature_cache, "feature_cache");
      break;
    case FeatureSourceKind::synthetic:
      break;
  }
  if (!manifest_path.empty()) must_exist(manifest_path, "manifest");
  if (!head_path.empty()) must_exist(head_path, "head");
}

json RunConfig::to_json() const {
  json algos = json::array();
  for (auto a : algorithms) algos.push_back(std::string(cl::to_string(a)));
  json scen = json::array();
  for (const auto& s : scenarios) scen.push_back(s.new_classes);
  return json{
      {"dataset_root", dataset_root.string()},
      {"model", model_path.string()},
      {"head", head_path.string()},
      {"manifest", manifest_path.string()},
      {"feature_cache", feature_cache.string()},
      {"feature_source", to_string(feature_source)},
      {"frontend",
       {{"window_ms", frontend.window_ms},
        {"hop_ms", frontend.hop_ms},
        {"n_mels", frontend.n_mels},
        {"fmin_hz", frontend.fmin_hz},
        {"fmax_hz", frontend.fmax_hz},
        {"fft_size", frontend.fft_size},
        {"log_floor", frontend.log_floor}}},
      {"cl",
       {{"learning_rate", cl.learning_rate},
        {"batch_size", cl.batch_size},
        {"lwf_lambda", cl.lwf_lambda},
        {"cwr_reinit", cl.cwr_reinit == cl::CwrReinit::zeros ? "zeros" : "keep"}}},
      {"algorithms", algos},
      {"new_classes", scen},
      {"budget", budget ? json(*budget) : json("all")},
      {"seeds", seeds},
      {"data_seed", data_seed},
      {"split", {{"pretrain_fraction", pretrain_fraction}, {"test_fraction", test_fraction}}},
      {"synthetic",
       {{"samples_per_class", synthetic.samples_per_class},
        {"latent_dim", synthetic.latent_dim},
        {"feature_dim", synthetic.feature_dim},
        {"center_scale", synthetic.center_scale},
        {"noise", synthetic.noise},
        {"seed", synthetic.seed}}},
      {"fit", {{"iterations", fit.iterations}, {"learning_rate", fit.learning_rate}, {"l2", fit.l2}, {"tolerance", fit.tolerance}}},
      {"eval_every", eval_every},
  };
}

std::string RunConfig::digest() const { return hex_sha256(to_json().dump()); }

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  try {
    std::string s;
    if (j.contains("dataset_root")) cfg.dataset_root = j.at("dataset_root").get<std::string>();
    if (j.contains("model")) cfg.model_path = j.at("model").get<std::string>();
    if (j.contains("head")) cfg.head_path = j.at("head").get<std::string>();
    if (j.contains("manifest")) cfg.manifest_path = j.at("manifest").get<std::string>();
    if (j.contains("feature_cache")) cfg.feature_cache = j.at("feature_cache").get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("feature_source")) cfg.feature_source = parse_feature_source(j.at("feature_source"));
    if (j.contains("frontend")) {
      const auto& f = j.at("frontend");
      read_opt(f, "window_ms", cfg.frontend.window_ms);
      read_opt(f, "hop_ms", cfg.frontend.hop_ms);
      read_opt(f, "n_mels", cfg.frontend.n_mels);
      read_opt(f, "fmin_hz", cfg.frontend.fmin_hz);
      read_opt(f, "fmax_hz", cfg.frontend.fmax_hz);
      read_opt(f, "fft_size", cfg.frontend.fft_size);
      read_opt(f, "log_floor", cfg.frontend.log_floor);
    }
    if (j.contains("cl")) {
      const auto& c = j.at("cl");
      read_opt(c, "learning_rate", cfg.cl.learning_rate);
      read_opt(c, "batch_size", cfg.cl.batch_size);
      read_opt(c, "lwf_lambda", cfg.cl.lwf_lambda);
      if (c.contains("cwr_reinit")) {
        const auto r = c.at("cwr_reinit").get<std::string>();
        if (r == "zeros")
          cfg.cl.cwr_reinit = cl::CwrReinit::zeros;
        else if (r == "keep")
          cfg.cl.cwr_reinit = cl::CwrReinit::keep;
        else
          throw ConfigError("cwr_reinit must be zeros or keep");
      }
    }
    if (j.contains("algorithms")) {
      cfg.algorithms.clear();
      for (const auto& a : j.at("algorithms")) cfg.algorithms.push_back(cl::parse_algorithm(a.get<std::string>()));
    }
    if (j.contains("new_classes")) {
      const auto& n = j.at("new_classes");
      if (n.is_number_integer()) {
        cfg.scenarios = data::enumerate_scenarios(n.get<int>());
      } else if (n.is_string()) {
        cfg.scenarios = parse_new_classes(n.get<std::string>());
      } else if (n.is_array() && !n.empty() && n.front().is_array()) {
        cfg.scenarios.clear();
        for (const auto& s : n) cfg.scenarios.push_back({s.get<std::vector<std::string>>()});
      } else if (n.is_array()) {
        cfg.scenarios = {data::Scenario{n.get<std::vector<std::string>>()}};
      } else {
        throw ConfigError("new_classes must be k, a class list, or a list of class lists");
      }
    }
    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      if (b.is_string() && b.get<std::string>() == "all")
        cfg.budget.reset();
      else if (b.is_number_unsigned())
        cfg.budget = b.get<std::size_t>();
      else
        throw ConfigError("budget must be a nonnegative integer or \"all\"");
    }
    read_opt(j, "seeds", cfg.seeds);
    read_opt(j, "data_seed", cfg.data_seed);
    if (j.contains("split")) {
      read_opt(j.at("split"), "pretrain_fraction", cfg.pretrain_fraction);
      read_opt(j.at("split"), "test_fraction", cfg.test_fraction);
    }
    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      read_opt(s, "samples_per_class", cfg.synthetic.samples_per_class);
      read_opt(s, "latent_dim", cfg.synthetic.latent_dim);
      read_opt(s, "feature_dim", cfg.synthetic.feature_dim);
      read_opt(s, "center_scale", cfg.synthetic.center_scale);
      read_opt(s, "noise", cfg.synthetic.noise);
      read_opt(s, "seed", cfg.synthetic.seed);
    }
    if (j.contains("fit")) {
      read_opt(j.at("fit"), "iterations", cfg.fit.iterations);
      read_opt(j.at("fit"), "learning_rate", cfg.fit.learning_rate);
      read_opt(j.at("fit"), "l2", cfg.fit.l2);
      read_opt(j.at("fit"), "tolerance", cfg.fit.tolerance);
    }
    read_opt(j, "workers", cfg.workers);
    read_opt(j, "eval_every", cfg.eval_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void parallel_for(std::size_t jobs, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(jobs, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const auto work = [&] {
    while (true) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) return;
      try {
        fn(job);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(jobs);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
}

void save_feature_cache(const fs::path& path, const std::vector<bnn::FeatureVector>& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  io::write_magic(out, "FEAT0001");
  io::write<std::uint64_t>(out, features.size());
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
  for (const auto& f : features) {
    if (f.size() != dim) throw DataError("feature vectors differ in length");
    for (double v : f) io::write<double>(out, v);
  }
}

std::vector<bnn::FeatureVector> load_feature_cache(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::expect_magic(in, "FEAT0001");
  const auto count = io::read<std::uint64_t>(in, "feature count");
  const auto dim = io::read<std::uint32_t>(in, "feature dim");
  std::vector<bnn::FeatureVector> features(count, bnn::FeatureVector(dim));
  for (auto& f : features)
    for (double& v : f) v = io::read<double>(in, "features");
  return features;
}

FeatureTable synthetic_features(const synthetic::SyntheticConfig& syn, std::uint64_t split_seed,
                                double pretrain_fraction, double test_fraction) {
  const synthetic::SyntheticSource source(syn);
  FeatureTable table;
  table.index = source.make_index();
  table.splits = data::split_dataset(table.index, split_seed, pretrain_fraction, test_fraction);
  table.features.reserve(table.index.entries.size());
  for (std::size_t i = 0; i < table.index.entries.size(); ++i)
    table.features.push_back(source.features(i, table.index.entries[i].mapped_class));
  return table;
}

namespace {

FeatureTable bnn_features(const RunConfig& cfg) {
  FeatureTable table;
  if (!cfg.manifest_path.empty()) {
    std::tie(table.index, table.splits) = data::read_splits_manifest(cfg.manifest_path, cfg.dataset_root);
  } else {
    table.index = data::index_dataset(cfg.dataset_root, {.seed = cfg.data_seed});
    table.splits = data::split_dataset(table.index, cfg.data_seed, cfg.pretrain_fraction, cfg.test_fraction);
  }
  const bnn::BnnModel model =
      cfg.model_path == kBuiltinToyModel ? bnn::make_default_model(cfg.data_seed) : bnn::load_model(cfg.model_path);
  const LogMelFrontend frontend(cfg.frontend);

  std::map<std::string, std::vector<std::int16_t>> noise;
  for (const auto& e : table.index.entries)
    if (e.crop_offset && !noise.contains(e.path)) noise[e.path] = load_wav_samples(table.index.root / e.path);

  table.features.resize(table.index.entries.size());
  parallel_for(table.index.entries.size(), cfg.workers, [&](std::size_t i) {
    const auto& e = table.index.entries[i];
    const PcmClip clip =
        e.crop_offset ? crop_clip(noise.at(e.path), *e.crop_offset) : load_wav(table.index.root / e.path);
    table.features[i] = bnn::forward_features(model, frontend.compute(clip.samples));
  });
  if (!cfg.feature_cache.empty()) save_feature_cache(cfg.feature_cache, table.features);
  return table;
}

}  // namespace

FeatureTable load_features(const RunConfig& cfg) {
  switch (cfg.feature_source) {
    case FeatureSourceKind::synthetic:
      return synthetic_features(cfg.synthetic, cfg.data_seed, cfg.pretrain_fraction, cfg.test_fraction);
    case FeatureSourceKind::bnn:
      return bnn_features(cfg);
    case FeatureSourceKind::cache: {
      FeatureTable table;
      std::tie(table.index, table.splits) = data::read_splits_manifest(cfg.manifest_path, cfg.dataset_root);
      table.features = load_feature_cache(cfg.feature_cache);
      if (table.features.size() != table.index.entries.size())
        throw DataError("feature cache holds " + std::to_string(table.features.size()) + " vectors but manifest has " +
                        std::to_string(table.index.entries.size()) + " entries");
      return table;
    }
  }
  throw ConfigError("invalid feature source");
}

cl::ClHead fit_head(const FeatureTable& table, std::span<const std::size_t> entries,
                    const std::vector<std::string>& labels, const FitOptions& options) {
  std::map<std::string, Eigen::Index> column;
  for (std::size_t j = 0; j < labels.size(); ++j) column[labels[j]] = static_cast<Eigen::Index>(j);
  std::vector<std::size_t> used;
  for (auto id : entries)
    if (column.contains(table.index.entries.at(id).mapped_class)) used.push_back(id);
  if (used.empty()) throw DataError("no samples to fit the head on");

  const auto n = static_cast<Eigen::Index>(used.size());
  const auto m = static_cast<Eigen::Index>(table.features.at(used.front()).size());
  const auto k = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd X(n, m);
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto id = used[static_cast<std::size_t>(i)];
    const auto& f = table.features.at(id);
    if (static_cast<Eigen::Index>(f.size()) != m) throw DataError("feature vectors differ in length");
    X.row(i) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), m);
    Y(i, column.at(table.index.entries[id].mapped_class)) = 1.0;
  }

  cl::ClHead head = cl::ClHead::zeros(static_cast<std::size_t>(m), labels);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    Eigen::MatrixXd Z = (X * head.W).rowwise() + head.b.transpose();
    Z.colwise() -= Z.rowwise().maxCoeff();
    Eigen::MatrixXd P = Z.array().exp();
    P.array().colwise() /= P.rowwise().sum().array();
    const Eigen::MatrixXd G = P - Y;
    const Eigen::MatrixXd dW = X.transpose() * G * inv_n + options.l2 * head.W;
    const Eigen::VectorXd db = G.colwise().sum().transpose() * inv_n;
    if (options.tolerance > 0.0 && std::max(dW.cwiseAbs().maxCoeff(), db.cwiseAbs().maxCoeff()) < options.tolerance)
      break;
    head.W -= options.learning_rate * dW;
    head.b -= options.learning_rate * db;
  }
  head.validate();
  return head;
}

cl::ClHead pretrained_head(const RunConfig& cfg, const FeatureTable& table) {
  if (!cfg.head_path.empty()) {
    cl::ClHead head = cl::load_checkpoint(cfg.head_path).head;
    if (!table.features.empty() && head.feature_dim() != table.features.front().size())
      throw ConfigError("head expects " + std::to_string(head.feature_dim()) + " features, extractor produces " +
                        std::to_string(table.features.front().size()));
    return head;
  }
  return fit_head(table, table.splits.pretrain, data::known_classes(), cfg.fit);
}

std::vector<LabeledFeature> test_partition(const FeatureTable& table, const data::Scenario& scenario,
                                           const std::vector<std::string>& head_labels, Partition partition) {
  std::map<std::string, std::size_t> column;
  for (std::size_t j = 0; j < head_labels.size(); ++j) column[head_labels[j]] = j;
  const std::set<std::string> fresh(scenario.new_classes.begin(), scenario.new_classes.end());

  std::vector<LabeledFeature> out;
  for (auto id : table.splits.test) {
    const auto& cls = table.index.entries.at(id).mapped_class;
    const bool is_new = fresh.contains(cls);
    const bool is_old = !is_new && !data::is_numeric_class(cls);
    const bool take = partition == Partition::all ? (is_new || is_old)
                                                   : (partition == Partition::new_classes ? is_new : is_old);
    if (!take) continue;
    const auto it = column.find(cls);
    if (it == column.end()) throw DataError("head has no column for class '" + cls + "'");
    out.push_back({table.features.at(id), it->second});
  }
  return out;
}

std::uint64_t stream_seed(std::uint64_t seed, const data::Scenario& scenario) {
  return derive_seed(seed, scenario_salt(scenario));
}

double evaluate(const cl::ClAlgorithmState& state, std::span<const LabeledFeature> samples) {
  if (samples.empty()) throw DataError("cannot evaluate on an empty partition");
  std::size_t correct = 0;
  for (const auto& s : samples)
    if (cl::predict(state, s.features, cl::PredictionHead::evaluation) == s.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

namespace {

struct RunKey {
  std::size_t algorithm;
  std::size_t scenario;
  std::size_t budget;
  std::size_t seed;
};

struct RunOutput {
  bool done = false;
  ReportRow row;
  std::vector<CurvePoint> curve;
};

ReportRow mean_row(const std::vector<const ReportRow*>& rows) {
  ReportRow out = *rows.front();
  out.acc_old = out.acc_new = out.acc_all = 0.0;
  out.stream_length = out.n_old = out.n_new = 0;
  for (const auto* r : rows) {
    out.acc_old += r->acc_old;
    out.acc_new += r->acc_new;
    out.acc_all += r->acc_all;
  }
  const double n = static_cast<double>(rows.size());
  out.acc_old /= n;
  out.acc_new /= n;
  out.acc_all /= n;
  return out;
}

// Appends per-run rows, then scenario means per k (when a k has several
// combinations) and seed means (when there are several seeds).
void assemble(std::vector<ReportRow>& out, const std::vector<ReportRow>& runs, std::size_t seed_count) {
  std::vector<ReportRow> with_scenario_means = runs;
  std::map<std::tuple<int, std::string, std::uint64_t>, std::vector<const ReportRow*>> by_k;
  std::map<std::tuple<int, std::string, std::uint64_t>, std::set<std::string>> names;
  for (const auto& r : runs) {
    const auto key = std::make_tuple(r.k_new, r.budget ? std::to_string(*r.budget) : "all", *r.seed);
    by_k[key].push_back(&r);
    names[key].insert(r.scenario);
  }
  std::vector<ReportRow> scenario_means;
  for (const auto& [key, rows] : by_k) {
    if (names[key].size() < 2) continue;
    ReportRow m = mean_row(rows);
    m.scenario = "mean";
    scenario_means.push_back(m);
  }
  with_scenario_means.insert(with_scenario_means.end(), scenario_means.begin(), scenario_means.end());

  std::vector<ReportRow> seed_means;
  if (seed_count > 1) {
    std::map<std::tuple<int, std::string, std::string>, std::vector<const ReportRow*>> by_seed;
    std::vector<std::tuple<int, std::string, std::string>> order;
    for (const auto& r : with_scenario_means) {
      const auto key = std::make_tuple(r.k_new, r.scenario, r.budget ? std::to_string(*r.budget) : "all");
      if (!by_seed.contains(key)) order.push_back(key);
      by_seed[key].push_back(&r);
    }
    for (const auto& key : order) {
      ReportRow m = mean_row(by_seed[key]);
      m.seed.reset();
      seed_means.push_back(m);
    }
  }
  out.insert(out.end(), with_scenario_means.begin(), with_scenario_means.end());
  out.insert(out.end(), seed_means.begin(), seed_means.end());
}

RunReport run_grid(const RunConfig& cfg, const std::vector<data::Scenario>& scenarios,
                   const std::vector<std::optional<std::size_t>>& budgets) {
  cfg.validate();
  const FeatureTable table = load_features(cfg);
  const cl::ClHead pretrained = pretrained_head(cfg, table);
  cl::ClConfig clc = cfg.cl;
  clc.initial_class_count = pretrained.class_count();

  RunReport report;
  report.config_digest = cfg.digest();
  report.rng = kRngAlgorithm;
  report.balance_rule = table.index.balance_rule;

  struct ScenarioData {
    cl::ClHead head;
    std::map<std::string, std::size_t> column;
    std::vector<LabeledFeature> old_set, new_set, all_set;
  };
  std::vector<ScenarioData> prepared;
  for (const auto& s : scenarios) {
    ScenarioData d;
    d.head = cl::expand_head(pretrained, s.new_classes);
    for (std::size_t j = 0; j < d.head.class_labels.size(); ++j) d.column[d.head.class_labels[j]] = j;
    d.old_set = test_partition(table, s, d.head.class_labels, Partition::old_classes);
    d.new_set = test_partition(table, s, d.head.class_labels, Partition::new_classes);
    d.all_set = test_partition(table, s, d.head.class_labels, Partition::all);
    prepared.push_back(std::move(d));
  }

  const auto base_row = [&](std::string algorithm, std::size_t si, const std::optional<std::size_t>& budget,
                            std::optional<std::uint64_t> seed) {
    ReportRow r;
    r.algorithm = std::move(algorithm);
    r.scenario = scenarios[si].name();
    r.k_new = static_cast<int>(scenarios[si].new_classes.size());
    r.budget = budget;
    r.seed = seed;
    r.n_old = prepared[si].old_set.size();
    r.n_new = prepared[si].new_set.size();
    return r;
  };

  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    const auto state = cl::make_state(cl::Algorithm::tinyol, prepared[si].head, clc);
    ReportRow r = base_row("baseline", si, std::nullopt, std::nullopt);
    r.acc_old = evaluate(state, prepared[si].old_set);
    r.acc_new = evaluate(state, prepared[si].new_set);
    r.acc_all = evaluate(state, prepared[si].all_set);
    report.baseline.push_back(r);
  }

  // Streams are shared by all algorithms for a given (scenario, budget, seed).
  std::vector<data::Stream> streams(scenarios.size() * budgets.size() * cfg.seeds.size());
  const auto stream_slot = [&](std::size_t si, std::size_t bi, std::size_t ki) {
    return (si * budgets.size() + bi) * cfg.seeds.size() + ki;
  };
  for (std::size_t si = 0; si < scenarios.size(); ++si)
    for (std::size_t bi = 0; bi < budgets.size(); ++bi)
      for (std::size_t ki = 0; ki < cfg.seeds.size(); ++ki)
        streams[stream_slot(si, bi, ki)] =
            data::build_stream(table.index, table.splits, scenarios[si], budgets[bi],
                               stream_seed(cfg.seeds[ki], scenarios[si]));

  std::vector<RunKey> keys;
  for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai)
    for (std::size_t si = 0; si < scenarios.size(); ++si)
      for (std::size_t bi = 0; bi < budgets.size(); ++bi)
        for (std::size_t ki = 0; ki < cfg.seeds.size(); ++ki) keys.push_back({ai, si, bi, ki});

  std::vector<RunOutput> outputs(keys.size());
  const auto run_one = [&](std::size_t job) {
    const auto& key = keys[job];
    const auto algorithm = cfg.algorithms[key.algorithm];
    const auto& prep = prepared[key.scenario];
    const auto& stream = streams[stream_slot(key.scenario, key.budget, key.seed)];
    RunOutput out;
    out.row = base_row(std::string(cl::to_string(algorithm)), key.scenario, budgets[key.budget], cfg.seeds[key.seed]);

    cl::ClAlgorithmState state = cl::make_state(algorithm, prep.head, clc);
    for (std::size_t i = 0; i < stream.events.size(); ++i) {
      const auto& ev = stream.events[i];
      cl::cl_step(state, table.features[ev.entry], prep.column.at(ev.label), clc);
      if (cfg.eval_every > 0 && (i + 1) % cfg.eval_every == 0)
        out.curve.push_back({out.row.algorithm, out.row.scenario, cfg.seeds[key.seed], i + 1,
                             evaluate(state, prep.all_set)});
    }
    cl::finish_stream(state, clc);

    out.row.acc_old = evaluate(state, prep.old_set);
    out.row.acc_new = evaluate(state, prep.new_set);
    out.row.acc_all = evaluate(state, prep.all_set);
    out.row.stream_length = stream.events.size();
    out.row.backprop_flops = flops::backprop_flops({algorithm, clc.initial_class_count,
                                                    clc.initial_class_count + scenarios[key.scenario].new_classes.size(),
                                                    clc.batch_size});
    out.done = true;
    outputs[job] = std::move(out);
  };

  try {
    parallel_for(keys.size(), cfg.workers, run_one);
  } catch (...) {
    if (!cfg.out_dir.empty()) {
      RunReport partial = report;
      for (const auto& o : outputs)
        if (o.done) partial.rows.push_back(o.row);
      emit_report(partial, ReportFormat::json, cfg.out_dir, "report.partial");
    }
    throw;
  }

  for (std::size_t ai = 0; ai < cfg.algorithms.size(); ++ai) {
    std::vector<ReportRow> runs;
    for (std::size_t job = 0; job < keys.size(); ++job) {
      if (keys[job].algorithm != ai) continue;
      runs.push_back(outputs[job].row);
      report.curves.insert(report.curves.end(), outputs[job].curve.begin(), outputs[job].curve.end());
    }
    assemble(report.rows, runs, cfg.seeds.size());
  }
  return report;
}

}  // namespace

RunReport run_continual(const RunConfig& cfg) { return run_grid(cfg, cfg.scenarios, {cfg.budget}); }

RunReport sensitivity_sweep(const RunConfig& cfg) {
  const data::Scenario worst = data::enumerate_scenarios(4).front();
  std::vector<std::optional<std::size_t>> budgets(kSweepBudgets.begin(), kSweepBudgets.end());
  return run_grid(cfg, {worst}, budgets);
}

}  // namespace kwscl::harness
