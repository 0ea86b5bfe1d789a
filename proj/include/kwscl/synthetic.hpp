#pragma once

// Dataset-free feature source: seeded Gaussian class clusters in a latent
// space, mapped through a fixed random projection standing in for the frozen
// extractor.

#include <cstdint>
#include <vector>

#include "kwscl/bnn_engine.hpp"
#include "kwscl/dataset_streams.hpp"

namespace kwscl::synthetic {

struct SyntheticConfig {
  std::size_t samples_per_class = 2500;
  std::size_t latent_dim = 12;
  std::size_t feature_dim = 12;
  double center_scale = 2.0;  // std-dev of the class centers
  double noise = 0.8;          // within-class std-dev
  std::uint64_t seed = 0;
};

class SyntheticSource {
 public:
  explicit SyntheticSource(const SyntheticConfig& cfg);

  const SyntheticConfig& config() const { return cfg_; }
  // All 16 classes, samples_per_class entries each, keyed "synthetic/<class>/<i>".
  data::DatasetIndex make_index() const;
  // Deterministic in (seed, entry id, class).
  bnn::FeatureVector features(std::size_t entry_id, const std::string& cls) const;

 private:
  SyntheticConfig cfg_;
  std::vector<std::vector<double>> centers_;  // per class in all_classes() order
  std::vector<double> projection_;            // feature_dim x latent_dim
};

}  // namespace kwscl::synthetic
