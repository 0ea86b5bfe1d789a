#include "kwscl/dataset_streams.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "kwscl/audio_frontend.hpp"
#include "kwscl/errors.hpp"
#include "kwscl/rng.hpp"

namespace kwscl::data {

namespace fs = std::filesystem;

const std::vector<std::string>& known_classes() {
  static const std::vector<std::string> classes = [] {
    std::vector<std::string> v(kCommandKeywords.begin(), kCommandKeywords.end());
    v.emplace_back(kSilence);
    v.emplace_back(kUnknown);
    return v;
  }();
  return classes;
}

const std::vector<std::string>& all_classes() {
  static const std::vector<std::string> classes = [] {
    std::vector<std::string> v = known_classes();
    v.insert(v.end(), kNumericKeywords.begin(), kNumericKeywords.end());
    return v;
  }();
  return classes;
}

bool is_numeric_class(std::string_view cls) {
  return std::find(kNumericKeywords.begin(), kNumericKeywords.end(), cls) != kNumericKeywords.end();
}

std::optional<std::string> map_keyword(std::string_view keyword) {
  const auto in = [&](const auto& list) { return std::find(list.begin(), list.end(), keyword) != list.end(); };
  if (in(kCommandKeywords) || in(kNumericKeywords)) return std::string(keyword);
  if (in(kUnknownKeywords)) return std::string(kUnknown);
  return std::nullopt;
}

std::string Entry::key() const { return crop_offset ? path + "#" + std::to_string(*crop_offset) : path; }

namespace {

std::vector<std::string> sorted_wavs(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

// Largest-remainder apportionment of `total` across `sizes`, capped by size.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total) {
  const std::size_t sum = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  std::vector<std::size_t> out(sizes.size(), 0);
  if (sum == 0 || total == 0) return out;
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::uint64_t prod = std::uint64_t{sizes[i]} * total;
    out[i] = static_cast<std::size_t>(prod / sum);
    remainders.emplace_back(static_cast<std::size_t>(prod % sum), i);
    assigned += out[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
    const auto i = remainders[k].second;
    if (out[i] < sizes[i]) {
      ++out[i];
      ++assigned;
    }
  }
  return out;
}

std::size_t class_order(const std::string& cls) {
  const auto& all = all_classes();
  const auto it = std::find(all.begin(), all.end(), cls);
  return static_cast<std::size_t>(it - all.begin());
}

}  // namespace

DatasetIndex index_dataset(const fs::path& root, const IndexOptions& options) {
  if (!fs::is_directory(root)) throw DataError("dataset root is not a directory: " + root.string());

  std::vector<std::string> folders;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) folders.push_back(e.path().filename().string());
  std::sort(folders.begin(), folders.end());

  DatasetIndex index;
  index.root = root;
  std::vector<Entry> unknown;
  std::map<std::string, std::size_t> command_counts;
  bool recognized = false;
  for (const auto& folder : folders) {
    const auto mapped = map_keyword(folder);
    if (!mapped) continue;
    recognized = true;
    for (const auto& name : sorted_wavs(root / folder)) {
      Entry entry{folder + "/" + name, folder, *mapped, std::nullopt};
      if (*mapped == kUnknown) {
        unknown.push_back(std::move(entry));
      } else {
        ++command_counts[*mapped];
        index.entries.push_back(std::move(entry));
      }
    }
  }
  if (!recognized) throw DataError("no recognized keyword folders under " + root.string());

  // Balance target: mean per-class count over the command classes (numeric
  // keywords as a fallback when no command folder exists).
  std::size_t total = 0, classes = 0;
  for (const auto& [cls, n] : command_counts)
    if (!is_numeric_class(cls)) total += n, ++classes;
  if (classes == 0)
    for (const auto& [cls, n] : command_counts) total += n, ++classes;
  const std::size_t target = classes == 0 ? unknown.size() : (total + classes / 2) / classes;

  Rng rng(options.seed);
  if (options.balance_unknown && unknown.size() > target) {
    rng.shuffle(std::span<Entry>(unknown));
    unknown.resize(target);
    std::sort(unknown.begin(), unknown.end(), [](const Entry& a, const Entry& b) { return a.path < b.path; });
  }
  index.entries.insert(index.entries.end(), unknown.begin(), unknown.end());

  const fs::path noise_dir = root / std::string(kNoiseFolder);
  std::size_t silence = 0;
  if (options.synthesize_silence && fs::is_directory(noise_dir)) {
    std::vector<std::pair<std::string, std::size_t>> noise;  // name, samples
    for (const auto& name : sorted_wavs(noise_dir)) {
      const auto n = load_wav_samples(noise_dir / name).size();
      if (n >= kClipSamples) noise.emplace_back(name, n);
    }
    if (!noise.empty()) {
      for (std::size_t i = 0; i < target; ++i) {
        const auto& [name, n] = noise[rng.below(noise.size())];
        const std::size_t offset = rng.below(n - kClipSamples + 1);
        index.entries.push_back({std::string(kNoiseFolder) + "/" + name, std::string(kNoiseFolder),
                                 std::string(kSilence), offset});
      }
      silence = target;
    }
  }

  std::ostringstream rule;
  rule << "unknown capped and silence synthesized at the mean command-class count (" << target
       << "); unknown=" << unknown.size()
       << " silence=" << silence << " seed=" << options.seed << " rng=" << kRngAlgorithm;
  index.balance_rule = rule.str();
  return index;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::test:
      return "test";
    case Split::pretrain:
      return "pretrain";
    case Split::cl_pool:
      return "cl";
  }
  return "?";
}

Splits split_dataset(const DatasetIndex& index, std::uint64_t seed, double pretrain_fraction, double test_fraction) {
  if (!(pretrain_fraction > 0.0 && pretrain_fraction < 1.0) || !(test_fraction > 0.0 && test_fraction < 1.0) ||
      !(pretrain_fraction + test_fraction < 1.0))
    throw ConfigError("split fractions must lie in (0, 1) and sum to less than 1");

  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < index.entries.size(); ++i) by_class[index.entries[i].mapped_class].push_back(i);
  std::vector<std::string> classes;
  for (const auto& [cls, members] : by_class) classes.push_back(cls);
  std::sort(classes.begin(), classes.end(),
            [](const std::string& a, const std::string& b) { return class_order(a) < class_order(b); });

  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto& members = by_class[classes[c]];
    Rng rng(derive_seed(seed, class_order(classes[c])));
    rng.shuffle(std::span<std::size_t>(members));
  }

  const std::size_t n = index.entries.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  const auto n_pretrain = static_cast<std::size_t>(std::llround(pretrain_fraction * static_cast<double>(n)));

  std::vector<std::size_t> sizes;
  for (const auto& cls : classes) sizes.push_back(by_class[cls].size());
  const auto test_counts = apportion(sizes, n_test);

  std::vector<std::size_t> remaining(classes.size(), 0);
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (!is_numeric_class(classes[c])) remaining[c] = sizes[c] - test_counts[c];
  const std::size_t available = std::accumulate(remaining.begin(), remaining.end(), std::size_t{0});
  if (n_pretrain > available)
    throw ConfigError("pretrain_fraction needs " + std::to_string(n_pretrain) + " samples but only " +
                      std::to_string(available) + " non-numeric samples remain");
  const auto pretrain_counts = apportion(remaining, n_pretrain);

  Splits s;
  s.seed = seed;
  s.pretrain_fraction = pretrain_fraction;
  s.test_fraction = test_fraction;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& members = by_class[classes[c]];
    const std::size_t t = test_counts[c];
    const std::size_t p = pretrain_counts[c];
    if (t == 0) throw ConfigError("test_fraction leaves class '" + classes[c] + "' without test samples");
    if (!is_numeric_class(classes[c]) && p == 0)
      throw ConfigError("pretrain_fraction leaves class '" + classes[c] + "' without pretrain samples");
    if (t + p >= members.size())
      throw ConfigError("fractions leave class '" + classes[c] + "' without CL samples");
    s.test.insert(s.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(t));
    s.pretrain.insert(s.pretrain.end(), members.begin() + static_cast<std::ptrdiff_t>(t),
                      members.begin() + static_cast<std::ptrdiff_t>(t + p));
    s.cl_pool.insert(s.cl_pool.end(), members.begin() + static_cast<std::ptrdiff_t>(t + p), members.end());
  }
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.pretrain.begin(), s.pretrain.end());
  std::sort(s.cl_pool.begin(), s.cl_pool.end());
  return s;
}

void write_splits_manifest(const fs::path& path, const DatasetIndex& index, const Splits& splits) {
  std::vector<const char*> label(index.entries.size(), nullptr);
  const auto mark = [&](const std::vector<std::size_t>& ids, Split s) {
    for (auto i : ids) label[i] = to_string(s).data();
  };
  mark(splits.test, Split::test);
  mark(splits.pretrain, Split::pretrain);
  mark(splits.cl_pool, Split::cl_pool);

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "# kwscl splits v1\n";
  out << "# seed=" << splits.seed << "\n";
  out << "# pretrain_fraction=" << splits.pretrain_fraction << "\n";
  out << "# test_fraction=" << splits.test_fraction << "\n";
  out << "# rng=" << kRngAlgorithm << "\n";
  if (!index.balance_rule.empty()) out << "# balance=" << index.balance_rule << "\n";
  for (std::size_t i = 0; i < index.entries.size(); ++i) {
    if (label[i] == nullptr) continue;
    out << index.entries[i].key() << '\t' << index.entries[i].mapped_class << '\t' << label[i] << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

std::pair<DatasetIndex, Splits> read_splits_manifest(const fs::path& path, const fs::path& root) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  DatasetIndex index;
  index.root = root;
  Splits splits;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const auto key = line.substr(2, eq - 2);
      const auto value = line.substr(eq + 1);
      if (key == "seed") splits.seed = std::stoull(value);
      if (key == "pretrain_fraction") splits.pretrain_fraction = std::stod(value);
      if (key == "test_fraction") splits.test_fraction = std::stod(value);
      if (key == "balance") index.balance_rule = value;
      continue;
    }
    std::istringstream fields(line);
    std::string key, cls, split;
    if (!std::getline(fields, key, '\t') || !std::getline(fields, cls, '\t') || !std::getline(fields, split))
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected path<TAB>class<TAB>split");
    Entry e;
    const auto hash = key.find('#');
    e.path = key.substr(0, hash);
    if (hash != std::string::npos) e.crop_offset = std::stoull(key.substr(hash + 1));
    e.raw_keyword = e.path.substr(0, e.path.find('/'));
    e.mapped_class = cls;
    const std::size_t id = index.entries.size();
    index.entries.push_back(std::move(e));
    if (split == "test")
      splits.test.push_back(id);
    else if (split == "pretrain")
      splits.pretrain.push_back(id);
    else if (split == "cl")
      splits.cl_pool.push_back(id);
    else
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown split '" + split + "'");
  }
  return {std::move(index), std::move(splits)};
}

std::string Scenario::name() const {
  std::string out;
  for (const auto& c : new_classes) out += (out.empty() ? "" : "+") + c;
  return out;
}

std::vector<Scenario> enumerate_scenarios(int k) {
  if (k < 1 || k > static_cast<int>(kNumericKeywords.size()))
    throw ConfigError("number of new classes must be in 1..4, got " + std::to_string(k));
  std::vector<Scenario> out;
  const unsigned n = kNumericKeywords.size();
  // Walk index combinations in lexicographic order.
  std::vector<unsigned> pick(static_cast<std::size_t>(k));
  std::iota(pick.begin(), pick.end(), 0U);
  while (true) {
    Scenario s;
    for (auto i : pick) s.new_classes.emplace_back(kNumericKeywords[i]);
    out.push_back(std::move(s));
    int i = k - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == n - static_cast<unsigned>(k) + static_cast<unsigned>(i)) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (auto j = static_cast<std::size_t>(i) + 1; j < pick.size(); ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

Stream build_stream(const DatasetIndex& index, const Splits& splits, const Scenario& scenario,
                    std::optional<std::size_t> budget, std::uint64_t seed) {
  std::set<std::string> wanted(known_classes().begin(), known_classes().end());
  for (const auto& c : scenario.new_classes) {
    if (!is_numeric_class(c)) throw ConfigError("scenario class '" + c + "' is not a numeric keyword");
    wanted.insert(c);
  }

  Stream stream;
  stream.seed = seed;
  std::map<std::string, std::size_t> available;
  for (auto id : splits.cl_pool) {
    const auto& cls = index.entries.at(id).mapped_class;
    if (!wanted.contains(cls)) continue;
    ++available[cls];
    stream.events.push_back({id, cls});
  }
  for (const auto& cls : wanted)
    if (!available.contains(cls)) throw DataError("CL pool has no samples of class '" + cls + "'");
  if (budget && *budget > stream.events.size())
    throw DataError("budget " + std::to_string(*budget) + " exceeds the " + std::to_string(stream.events.size()) +
                    " available CL samples");

  Rng rng(seed);
  rng.shuffle(std::span<StreamEvent>(stream.events));
  if (budget) stream.events.resize(*budget);
  return stream;
}

}  // namespace kwscl::data
