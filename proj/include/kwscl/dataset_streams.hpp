#pragma once

// Speech Commands indexing, the pretrain/CL/test split, class-incremental
// scenarios and shuffled CL streams.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kwscl::data {

inline constexpr std::array<std::string_view, 10> kCommandKeywords = {"yes", "no",  "up",  "down", "left",
                                                                      "right", "on", "off", "stop", "go"};
inline constexpr std::array<std::string_view, 4> kNumericKeywords = {"one", "two", "three", "four"};
inline constexpr std::array<std::string_view, 21> kUnknownKeywords = {
    "zero", "five", "six",    "seven", "eight", "nine",     "bed",    "bird",  "cat",   "dog",   "happy",
    "house", "marvin", "sheila", "tree",  "wow",   "backward", "forward", "follow", "learn", "visual"};
inline constexpr std::string_view kSilence = "silence";
inline constexpr std::string_view kUnknown = "unknown";
inline constexpr std::string_view kNoiseFolder = "_background_noise_";

// The 12 pre-training classes in head order: commands, silence, unknown.
const std::vector<std::string>& known_classes();
// known_classes() followed by the numeric keywords.
const std::vector<std::string>& all_classes();
bool is_numeric_class(std::string_view cls);
// Mapped class for a GSC keyword folder, or nullopt if unrecognized.
std::optional<std::string> map_keyword(std::string_view keyword);

struct Entry {
  std::string path;  // relative to the dataset root
  std::string raw_keyword;
  std::string mapped_class;
  std::optional<std::size_t> crop_offset;  // silence crops into a noise file

  // Stable identifier: path, plus "#offset" for crops.
  std::string key() const;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<Entry> entries;
  // How silence/unknown counts were chosen; recorded in run metadata.
  std::string balance_rule;
};

struct IndexOptions {
  std::uint64_t seed = 0;
  bool balance_unknown = true;
  bool synthesize_silence = true;
};

// Throws DataError if root is missing or holds no recognized keyword folder.
DatasetIndex index_dataset(const std::filesystem::path& root, const IndexOptions& options = {});

enum class Split : std::uint8_t { test, pretrain, cl_pool };
std::string_view to_string(Split s);

struct Splits {
  std::vector<std::size_t> test;      // indices into DatasetIndex::entries
  std::vector<std::size_t> pretrain;  // known classes only
  std::vector<std::size_t> cl_pool;
  std::uint64_t seed = 0;
  double pretrain_fraction = 0.40;
  double test_fraction = 0.03;
};

// Stratified by mapped class. |test| = round(test_fraction * n); pretrain is
// round(pretrain_fraction * n) drawn from the non-numeric remainder; the rest
// forms cl_pool. Throws ConfigError on invalid fractions or when a class
// would end up empty in a split it belongs to.
Splits split_dataset(const DatasetIndex& index, std::uint64_t seed, double pretrain_fraction = 0.40,
                     double test_fraction = 0.03);

void write_splits_manifest(const std::filesystem::path& path, const DatasetIndex& index, const Splits& splits);
// Reconstructs both the index (entries in file order) and the splits.
std::pair<DatasetIndex, Splits> read_splits_manifest(const std::filesystem::path& path,
                                                     const std::filesystem::path& root);

struct Scenario {
  std::vector<std::string> new_classes;

  std::string name() const;  // e.g. "one+three"
  bool operator==(const Scenario&) const = default;
};

// All C(4, k) subsets of the numeric keywords in lexicographic order.
std::vector<Scenario> enumerate_scenarios(int k);

struct StreamEvent {
  std::size_t entry = 0;  // index into DatasetIndex::entries
  std::string label;
  bool operator==(const StreamEvent&) const = default;
};

struct Stream {
  std::vector<StreamEvent> events;
  std::uint64_t seed = 0;
};

// Samples cl_pool restricted to known + new classes, shuffled uniformly; with
// a budget, only the first `budget` of the shuffle are kept. Throws DataError
// if a required class has no pool samples or the budget exceeds the pool.
Stream build_stream(const DatasetIndex& index, const Splits& splits, const Scenario& scenario,
                    std::optional<std::size_t> budget, std::uint64_t seed);

}  // namespace kwscl::data
