#pragma once

// Inference for the frozen binarized feature extractor.
//
// Tensors are HWC row-major. Binarized layers use XNOR-popcount arithmetic on
// sign bits (bit 1 <-> +1, bit 0 <-> -1, sign(0) = +1).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kwscl/audio_frontend.hpp"

namespace kwscl::bnn {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
  Tensor(Shape s, std::vector<double> v);

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return values[(y * shape.width + x) * shape.channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return values[(y * shape.width + x) * shape.channels + c];
  }
};

// Sign bits packed per spatial position: each (y, x) owns words_per_pixel()
// 64-bit words holding its channels LSB-first. Unused high bits of the last
// word of every pixel are zero.
class BitTensor {
 public:
  BitTensor() = default;
  explicit BitTensor(Shape s);

  const Shape& shape() const { return shape_; }
  std::size_t words_per_pixel() const { return words_per_pixel_; }
  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> mutable_words() { return words_; }

  std::span<const std::uint64_t> pixel(std::size_t y, std::size_t x) const {
    return {words_.data() + (y * shape_.width + x) * words_per_pixel_, words_per_pixel_};
  }

  bool bit(std::size_t y, std::size_t x, std::size_t c) const;
  void set(std::size_t y, std::size_t x, std::size_t c, bool positive);
  // Mask of meaningful bits in word `w` of a pixel.
  std::uint64_t word_mask(std::size_t w) const;
  bool padding_bits_zero() const;

  // +1/-1 per element.
  Tensor unpack() const;

  bool operator==(const BitTensor&) const = default;

 private:
  Shape shape_;
  std::size_t words_per_pixel_ = 0;
  std::vector<std::uint64_t> words_;
};

BitTensor binarize(const Tensor& x);

enum class LayerKind : std::uint8_t {
  conv_fp = 0,
  conv_bin = 1,
  batch_norm = 2,
  relu = 3,
  global_avg_pool = 4,
};

enum class Precision : std::uint8_t { full = 0, binary = 1 };

struct ConvGeometry {
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  Shape output_shape(const Shape& in) const;
};

// Full-precision filters, layout [c_out][kernel_h][kernel_w][c_in].
struct ConvFpLayer {
  ConvGeometry geom;
  std::vector<double> weights;
};

// One packed (kernel_h, kernel_w, c_in) filter per output channel.
struct ConvBinLayer {
  ConvGeometry geom;
  std::vector<BitTensor> filters;
};

struct BatchNormLayer {
  std::vector<double> gamma, beta, mean, variance;
  double epsilon = 1e-3;

  std::size_t channels() const { return gamma.size(); }
};

struct ReluLayer {
  std::size_t channels = 0;
};

struct GlobalAvgPoolLayer {
  std::size_t channels = 0;
};

using Layer = std::variant<ConvFpLayer, ConvBinLayer, BatchNormLayer, ReluLayer, GlobalAvgPoolLayer>;

LayerKind kind_of(const Layer& layer);
std::size_t input_channels(const Layer& layer);
std::size_t output_channels(const Layer& layer);

using FeatureVector = std::vector<double>;

// Immutable after construction; forward passes are const and thread-safe.
class BnnModel {
 public:
  // Throws DataError if the layer list is malformed (see validate()).
  BnnModel(std::vector<Layer> layers, std::size_t feature_dim);

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t input_channels() const;

 private:
  void validate() const;

  std::vector<Layer> layers_;
  std::size_t feature_dim_;
};

Tensor conv2d_fp(const Tensor& x, const ConvFpLayer& layer);
// Integer-valued output: sum over in-bounds taps of the +/-1 products.
// Out-of-bounds (zero padded) taps contribute nothing, matching conv2d_fp on
// the unpacked tensors.
Tensor conv2d_bin(const BitTensor& x, const ConvBinLayer& layer);
Tensor batch_norm_apply(const Tensor& x, const BatchNormLayer& bn);
Tensor relu(const Tensor& x);
FeatureVector global_avg_pool(const Tensor& x);

// Per-channel threshold form of sign(batch_norm(x)): +1 iff x >= threshold[c],
// or x <= threshold[c] when flip[c] (gamma < 0). With gamma == 0 the sign is
// constant and flip[c] holds it. Lets a binarized layer skip the normalization
// arithmetic.
struct SignThresholds {
  std::vector<double> threshold;
  std::vector<bool> flip;
  std::vector<bool> constant;
};
SignThresholds fold_sign_thresholds(const BatchNormLayer& bn);
BitTensor binarize_with_thresholds(const Tensor& x, const SignThresholds& t);

Tensor spectrogram_tensor(const LogMelSpectrogram& spec);

FeatureVector forward_features(const BnnModel& model, const Tensor& input);
FeatureVector forward_features(const BnnModel& model, const LogMelSpectrogram& spec);

// BNNKWS01 weights file.
inline constexpr std::uint32_t kWeightsVersion = 1;
void save_model(const BnnModel& model, const std::filesystem::path& path);
BnnModel load_model(const std::filesystem::path& path);

// Documented default toy extractor for a 98x64 log-mel input, with seeded
// random weights and feature_dim outputs:
//   conv_fp 3x3/2 1->16, BN, ReLU, BN (sign centering),
//   conv_bin 3x3/1 16->32, BN, ReLU, BN (sign centering),
//   conv_bin 3x3/2 32->32, BN, ReLU,
//   conv_fp 1x1 32->feature_dim, BN, ReLU, global average pool.
BnnModel make_default_model(std::uint64_t seed, std::size_t feature_dim = 12);

}  // namespace kwscl::bnn
