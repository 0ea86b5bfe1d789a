#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "kwscl/audio_frontend.hpp"
#include "kwscl/dataset_streams.hpp"
#include "kwscl/errors.hpp"

namespace fs = std::filesystem;
using namespace kwscl;
using namespace kwscl::data;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "kwscl_dataset_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void add_clips(const fs::path& root, const std::string& folder, int count, std::size_t samples = 1600) {
  fs::create_directories(root / folder);
  for (int i = 0; i < count; ++i)
    save_wav(root / folder / ("clip_" + std::to_string(i) + ".wav"), std::vector<std::int16_t>(samples, 1));
}

// In-memory index with the given per-class counts, keys "<class>/<i>.wav".
DatasetIndex synthetic_index(const std::map<std::string, std::size_t>& counts) {
  DatasetIndex idx;
  for (const auto& cls : all_classes()) {
    const auto it = counts.find(cls);
    if (it == counts.end()) continue;
    for (std::size_t i = 0; i < it->second; ++i)
      idx.entries.push_back({cls + "/" + std::to_string(i) + ".wav", cls, cls, std::nullopt});
  }
  return idx;
}

DatasetIndex uniform_index(std::size_t total) {
  std::map<std::string, std::size_t> counts;
  const auto& classes = all_classes();
  for (std::size_t c = 0; c < classes.size(); ++c)
    counts[classes[c]] = total / classes.size() + (c < total % classes.size() ? 1 : 0);
  return synthetic_index(counts);
}

void expect_partition(const DatasetIndex& idx, const Splits& s) {
  std::vector<int> owner(idx.entries.size(), 0);
  for (auto i : s.test) ++owner[i];
  for (auto i : s.pretrain) ++owner[i];
  for (auto i : s.cl_pool) ++owner[i];
  for (std::size_t i = 0; i < owner.size(); ++i) ASSERT_EQ(owner[i], 1) << "entry " << i;
  std::set<std::size_t> t(s.test.begin(), s.test.end()), p(s.pretrain.begin(), s.pretrain.end()),
      c(s.cl_pool.begin(), s.cl_pool.end());
  std::vector<std::size_t> inter;
  std::set_intersection(t.begin(), t.end(), p.begin(), p.end(), std::back_inserter(inter));
  std::set_intersection(t.begin(), t.end(), c.begin(), c.end(), std::back_inserter(inter));
  std::set_intersection(p.begin(), p.end(), c.begin(), c.end(), std::back_inserter(inter));
  EXPECT_TRUE(inter.empty());
  for (auto i : s.pretrain) EXPECT_FALSE(is_numeric_class(idx.entries[i].mapped_class));
}

}  // namespace

TEST(ClassMap, SixteenClassesInHeadOrder) {
  EXPECT_EQ(known_classes().size(), 12U);
  EXPECT_EQ(all_classes().size(), 16U);
  EXPECT_EQ(known_classes()[10], "silence");
  EXPECT_EQ(known_classes()[11], "unknown");
  EXPECT_EQ(all_classes()[12], "one");
  EXPECT_EQ(all_classes()[15], "four");
  EXPECT_EQ(kUnknownKeywords.size(), 21U);
}

TEST(ClassMap, KeywordMapping) {
  EXPECT_EQ(map_keyword("yes"), "yes");
  EXPECT_EQ(map_keyword("three"), "three");
  EXPECT_EQ(map_keyword("marvin"), "unknown");
  EXPECT_EQ(map_keyword("visual"), "unknown");
  EXPECT_EQ(map_keyword("_background_noise_"), std::nullopt);
  EXPECT_EQ(map_keyword("not_a_word"), std::nullopt);
  for (auto kw : kUnknownKeywords) EXPECT_EQ(map_keyword(kw), "unknown");
}

TEST(IndexDataset, SingleKeywordFolder) {
  const auto root = fresh_dir("yes_only");
  add_clips(root, "yes", 3);
  const auto idx = index_dataset(root);
  ASSERT_EQ(idx.entries.size(), 3U);
  for (const auto& e : idx.entries) {
    EXPECT_EQ(e.mapped_class, "yes");
    EXPECT_EQ(e.raw_keyword, "yes");
  }
}

TEST(IndexDataset, UnknownKeywordsMapToUnknown) {
  const auto root = fresh_dir("marvin");
  add_clips(root, "marvin", 2);
  const auto idx = index_dataset(root, {.balance_unknown = false});
  ASSERT_EQ(idx.entries.size(), 2U);
  EXPECT_EQ(idx.entries[0].mapped_class, "unknown");
  EXPECT_EQ(idx.entries[0].raw_keyword, "marvin");
}

TEST(IndexDataset, BalancesUnknownAndSynthesizesSilence) {
  const auto root = fresh_dir("balanced");
  add_clips(root, "yes", 4);
  add_clips(root, "no", 6);
  add_clips(root, "one", 9);
  add_clips(root, "bed", 10);
  add_clips(root, "dog", 10);
  add_clips(root, "stray_folder", 3);
  fs::create_directories(root / "_background_noise_");
  save_wav(root / "_background_noise_" / "white.wav", std::vector<std::int16_t>(40000, 3));
  save_wav(root / "_background_noise_" / "short.wav", std::vector<std::int16_t>(100, 3));

  const auto idx = index_dataset(root, {.seed = 5});
  std::map<std::string, std::size_t> counts;
  for (const auto& e : idx.entries) ++counts[e.mapped_class];
  // mean command-class count = (4 + 6) / 2 = 5
  EXPECT_EQ(counts["yes"], 4U);
  EXPECT_EQ(counts["no"], 6U);
  EXPECT_EQ(counts["one"], 9U);
  EXPECT_EQ(counts["unknown"], 5U);
  EXPECT_EQ(counts["silence"], 5U);
  EXPECT_EQ(counts.size(), 5U);
  for (const auto& e : idx.entries) {
    if (e.mapped_class != "silence") continue;
    ASSERT_TRUE(e.crop_offset.has_value());
    EXPECT_EQ(e.path, "_background_noise_/white.wav");
    EXPECT_LE(*e.crop_offset, 40000U - kClipSamples);
    EXPECT_NE(e.key().find('#'), std::string::npos);
  }
  EXPECT_NE(idx.balance_rule.find("mt19937_64"), std::string::npos);

  const auto again = index_dataset(root, {.seed = 5});
  ASSERT_EQ(again.entries.size(), idx.entries.size());
  for (std::size_t i = 0; i < idx.entries.size(); ++i) EXPECT_EQ(again.entries[i].key(), idx.entries[i].key());
}

TEST(IndexDataset, Errors) {
  EXPECT_THROW(index_dataset(fs::temp_directory_path() / "kwscl_no_such_dir"), DataError);
  const auto root = fresh_dir("unrecognized");
  add_clips(root, "stray_folder", 2);
  EXPECT_THROW(index_dataset(root), DataError);
}

TEST(SplitDataset, ThreePercentTestSetOnFullSizedIndex) {
  const auto idx = uniform_index(61487);
  ASSERT_EQ(idx.entries.size(), 61487U);
  const auto s = split_dataset(idx, 1);
  EXPECT_EQ(s.test.size(), 1845U);
  EXPECT_EQ(s.pretrain.size(), static_cast<std::size_t>(std::llround(0.40 * 61487)));
  EXPECT_EQ(s.test.size() + s.pretrain.size() + s.cl_pool.size(), 61487U);
  expect_partition(idx, s);
}

TEST(SplitDataset, SetAlgebraOnSmallIndex) {
  const auto idx = uniform_index(200 * 16 / 16 * 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_dataset(idx, seed, 0.4, 0.1);
    expect_partition(idx, s);
    std::set<std::string> cl_classes, test_classes;
    for (auto i : s.cl_pool) cl_classes.insert(idx.entries[i].mapped_class);
    for (auto i : s.test) test_classes.insert(idx.entries[i].mapped_class);
    EXPECT_EQ(cl_classes.size(), 16U);
    EXPECT_EQ(test_classes.size(), 16U);
  }
}

TEST(SplitDataset, StratifiedAcrossClasses) {
  const auto idx = uniform_index(1600);
  const auto s = split_dataset(idx, 3, 0.4, 0.1);
  std::map<std::string, std::size_t> t;
  for (auto i : s.test) ++t[idx.entries[i].mapped_class];
  for (const auto& [cls, n] : t) EXPECT_EQ(n, 10U) << cls;
}

TEST(SplitDataset, DeterministicPerSeed) {
  const auto idx = uniform_index(800);
  const auto a = split_dataset(idx, 9), b = split_dataset(idx, 9), c = split_dataset(idx, 10);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.pretrain, b.pretrain);
  EXPECT_EQ(a.cl_pool, b.cl_pool);
  EXPECT_NE(a.test, c.test);
}

TEST(SplitDataset, Errors) {
  const auto idx = uniform_index(800);
  EXPECT_THROW(split_dataset(idx, 0, 0.0, 0.03), ConfigError);
  EXPECT_THROW(split_dataset(idx, 0, 0.6, 0.5), ConfigError);
  EXPECT_THROW(split_dataset(idx, 0, 0.4, 1.0), ConfigError);
  // 800 * 0.001 rounds to 1 test sample, so 15 classes get none.
  EXPECT_THROW(split_dataset(idx, 0, 0.4, 0.001), ConfigError);
}

TEST(SplitsManifest, RoundTrip) {
  const auto root = fresh_dir("manifest");
  auto idx = uniform_index(480);
  idx.entries.push_back({"_background_noise_/pink.wav", "_background_noise_", "silence", 1234});
  idx.balance_rule = "test rule";
  const auto s = split_dataset(idx, 4, 0.4, 0.1);
  const auto path = root / "splits.tsv";
  write_splits_manifest(path, idx, s);
  const auto [idx2, s2] = read_splits_manifest(path, root);
  ASSERT_EQ(idx2.entries.size(), idx.entries.size());
  EXPECT_EQ(s2.seed, 4U);
  EXPECT_DOUBLE_EQ(s2.pretrain_fraction, 0.4);
  EXPECT_DOUBLE_EQ(s2.test_fraction, 0.1);
  EXPECT_EQ(idx2.balance_rule, "test rule");
  for (std::size_t i = 0; i < idx.entries.size(); ++i) {
    EXPECT_EQ(idx2.entries[i].key(), idx.entries[i].key());
    EXPECT_EQ(idx2.entries[i].mapped_class, idx.entries[i].mapped_class);
  }
  EXPECT_EQ(s2.test, s.test);
  EXPECT_EQ(s2.pretrain, s.pretrain);
  EXPECT_EQ(s2.cl_pool, s.cl_pool);

  std::ofstream(root / "bad.tsv") << "yes/0.wav\tyes\tvalidation\n";
  EXPECT_THROW(read_splits_manifest(root / "bad.tsv", root), DataError);
  EXPECT_THROW(read_splits_manifest(root / "missing.tsv", root), DataError);
}

TEST(Scenarios, CountsPerK) {
  EXPECT_EQ(enumerate_scenarios(1).size(), 4U);
  EXPECT_EQ(enumerate_scenarios(2).size(), 6U);
  EXPECT_EQ(enumerate_scenarios(4).size(), 1U);
  EXPECT_THROW(enumerate_scenarios(0), ConfigError);
  EXPECT_THROW(enumerate_scenarios(5), ConfigError);
}

// Three of {one, two, three, four} gives C(4,3) = 4 subsets, not 3.
TEST(Scenarios, ThreeNewClassesGiveFourCombinationsNotThree) {
  const auto s = enumerate_scenarios(3);
  EXPECT_EQ(s.size(), 4U);
  EXPECT_NE(s.size(), 3U);
}

TEST(Scenarios, LexicographicSubsets) {
  std::vector<std::string> names;
  for (const auto& s : enumerate_scenarios(2)) names.push_back(s.name());
  const std::vector<std::string> expected = {"one+two", "one+three", "one+four", "two+three", "two+four",
                                             "three+four"};
  EXPECT_EQ(names, expected);
  EXPECT_EQ(enumerate_scenarios(4)[0].name(), "one+two+three+four");

  // Exhaustive oracle: every nonempty subset appears exactly once across k.
  std::set<std::string> all;
  for (int k = 1; k <= 4; ++k)
    for (const auto& s : enumerate_scenarios(k)) EXPECT_TRUE(all.insert(s.name()).second);
  EXPECT_EQ(all.size(), 15U);
}

TEST(BuildStream, BudgetLengthAndClosure) {
  const auto idx = uniform_index(16 * 100);
  const auto s = split_dataset(idx, 1);
  const Scenario sc{{"two", "four"}};
  const auto stream = build_stream(idx, s, sc, 64, 7);
  EXPECT_EQ(stream.events.size(), 64U);
  std::set<std::string> allowed(known_classes().begin(), known_classes().end());
  allowed.insert({"two", "four"});
  for (const auto& e : stream.events) {
    EXPECT_TRUE(allowed.contains(e.label));
    EXPECT_EQ(idx.entries[e.entry].mapped_class, e.label);
  }
}

TEST(BuildStream, DeterministicAndSeedSensitive) {
  const auto idx = uniform_index(16 * 100);
  const auto s = split_dataset(idx, 1);
  const Scenario sc{{"one"}};
  EXPECT_EQ(build_stream(idx, s, sc, std::nullopt, 3).events, build_stream(idx, s, sc, std::nullopt, 3).events);
  EXPECT_NE(build_stream(idx, s, sc, std::nullopt, 3).events, build_stream(idx, s, sc, std::nullopt, 4).events);
}

TEST(BuildStream, UnbudgetedHistogramMatchesPool) {
  const auto idx = uniform_index(16 * 50);
  const auto s = split_dataset(idx, 2);
  const Scenario sc{{"one", "three"}};
  std::map<std::string, std::size_t> expected, got;
  for (auto i : s.cl_pool) {
    const auto& cls = idx.entries[i].mapped_class;
    if (!is_numeric_class(cls) || cls == "one" || cls == "three") ++expected[cls];
  }
  for (const auto& e : build_stream(idx, s, sc, std::nullopt, 11).events) ++got[e.label];
  EXPECT_EQ(got, expected);
}

TEST(BuildStream, Errors) {
  const auto idx = uniform_index(16 * 20);
  const auto s = split_dataset(idx, 1, 0.4, 0.1);
  EXPECT_THROW(build_stream(idx, s, Scenario{{"one"}}, 100000, 1), DataError);
  EXPECT_THROW(build_stream(idx, s, Scenario{{"yes"}}, std::nullopt, 1), ConfigError);
  std::map<std::string, std::size_t> counts;
  for (const auto& c : known_classes()) counts[c] = 20;
  const auto no_numeric = synthetic_index(counts);
  const auto s2 = split_dataset(no_numeric, 1, 0.4, 0.1);
  EXPECT_THROW(build_stream(no_numeric, s2, Scenario{{"one"}}, std::nullopt, 1), DataError);
}
