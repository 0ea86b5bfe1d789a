#include "kwscl/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "kwscl/errors.hpp"
#include "kwscl/rng.hpp"

namespace kwscl::synthetic {

SyntheticSource::SyntheticSource(const SyntheticConfig& cfg) : cfg_(cfg) {
  if (cfg_.latent_dim == 0 || cfg_.feature_dim == 0 || cfg_.samples_per_class == 0)
    throw ConfigError("synthetic dimensions and sample count must be positive");
  Rng rng(derive_seed(cfg_.seed, 0xC1A55));
  for (std::size_t c = 0; c < data::all_classes().size(); ++c) {
    std::vector<double> center(cfg_.latent_dim);
    for (double& v : center) v = cfg_.center_scale * rng.normal();
    centers_.push_back(std::move(center));
  }
  projection_.resize(cfg_.feature_dim * cfg_.latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.latent_dim));
  for (double& v : projection_) v = scale * rng.normal();
}

data::DatasetIndex SyntheticSource::make_index() const {
  data::DatasetIndex index;
  index.root = "synthetic";
  for (const auto& cls : data::all_classes())
    for (std::size_t i = 0; i < cfg_.samples_per_class; ++i)
      index.entries.push_back({"synthetic/" + cls + "/" + std::to_string(i), cls, cls, std::nullopt});
  index.balance_rule = "synthetic: " + std::to_string(cfg_.samples_per_class) + " samples per class";
  return index;
}

bnn::FeatureVector SyntheticSource::features(std::size_t entry_id, const std::string& cls) const {
  const auto& all = data::all_classes();
  const auto it = std::find(all.begin(), all.end(), cls);
  if (it == all.end()) throw DataError("unknown synthetic class '" + cls + "'");
  const auto& center = centers_[static_cast<std::size_t>(it - all.begin())];

  Rng rng(derive_seed(cfg_.seed, entry_id + 1));
  std::vector<double> latent(cfg_.latent_dim);
  for (std::size_t d = 0; d < cfg_.latent_dim; ++d) latent[d] = center[d] + cfg_.noise * rng.normal();

  bnn::FeatureVector out(cfg_.feature_dim, 0.0);
  for (std::size_t r = 0; r < cfg_.feature_dim; ++r)
    for (std::size_t d = 0; d < cfg_.latent_dim; ++d) out[r] += projection_[r * cfg_.latent_dim + d] * latent[d];
  return out;
}

}  // namespace kwscl::synthetic
