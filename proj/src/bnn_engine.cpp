#include "kwscl/bnn_engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include "kwscl/binary_io.hpp"
#include "kwscl/errors.hpp"
#include "kwscl/rng.hpp"

namespace kwscl::bnn {

namespace {

constexpr std::size_t kWordBits = 64;

std::size_t words_for(std::size_t channels) { return (channels + kWordBits - 1) / kWordBits; }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(s), values(std::move(v)) {
  if (values.size() != shape.size())
    throw DataError("tensor value count " + std::to_string(values.size()) + " does not match shape " +
                    to_string(shape));
}

BitTensor::BitTensor(Shape s)
    : shape_(s), words_per_pixel_(words_for(s.channels)), words_(s.height * s.width * words_per_pixel_, 0) {}

bool BitTensor::bit(std::size_t y, std::size_t x, std::size_t c) const {
  const auto word = words_[(y * shape_.width + x) * words_per_pixel_ + c / kWordBits];
  return ((word >> (c % kWordBits)) & 1U) != 0;
}

void BitTensor::set(std::size_t y, std::size_t x, std::size_t c, bool positive) {
  auto& word = words_[(y * shape_.width + x) * words_per_pixel_ + c / kWordBits];
  const std::uint64_t mask = std::uint64_t{1} << (c % kWordBits);
  word = positive ? (word | mask) : (word & ~mask);
}

std::uint64_t BitTensor::word_mask(std::size_t w) const {
  const std::size_t used = std::min(kWordBits, shape_.channels - w * kWordBits);
  return used == kWordBits ? ~std::uint64_t{0} : ((std::uint64_t{1} << used) - 1);
}

bool BitTensor::padding_bits_zero() const {
  if (words_per_pixel_ == 0) return true;
  const std::uint64_t tail = ~word_mask(words_per_pixel_ - 1);
  for (std::size_t p = 0; p < shape_.height * shape_.width; ++p)
    if ((words_[(p + 1) * words_per_pixel_ - 1] & tail) != 0) return false;
  return true;
}

Tensor BitTensor::unpack() const {
  Tensor t(shape_);
  for (std::size_t y = 0; y < shape_.height; ++y)
    for (std::size_t x = 0; x < shape_.width; ++x)
      for (std::size_t c = 0; c < shape_.channels; ++c) t.at(y, x, c) = bit(y, x, c) ? 1.0 : -1.0;
  return t;
}

BitTensor binarize(const Tensor& x) {
  BitTensor bits(x.shape);
  for (std::size_t y = 0; y < x.shape.height; ++y)
    for (std::size_t xx = 0; xx < x.shape.width; ++xx)
      for (std::size_t c = 0; c < x.shape.channels; ++c)
        if (x.at(y, xx, c) >= 0.0) bits.set(y, xx, c, true);
  return bits;
}

LayerKind kind_of(const Layer& layer) {
  return std::visit(overloaded{[](const ConvFpLayer&) { return LayerKind::conv_fp; },
                               [](const ConvBinLayer&) { return LayerKind::conv_bin; },
                               [](const BatchNormLayer&) { return LayerKind::batch_norm; },
                               [](const ReluLayer&) { return LayerKind::relu; },
                               [](const GlobalAvgPoolLayer&) { return LayerKind::global_avg_pool; }},
                    layer);
}

std::size_t input_channels(const Layer& layer) {
  return std::visit(overloaded{[](const ConvFpLayer& l) { return l.geom.c_in; },
                               [](const ConvBinLayer& l) { return l.geom.c_in; },
                               [](const BatchNormLayer& l) { return l.channels(); },
                               [](const ReluLayer& l) { return l.channels; },
                               [](const GlobalAvgPoolLayer& l) { return l.channels; }},
                    layer);
}

std::size_t output_channels(const Layer& layer) {
  return std::visit(overloaded{[](const ConvFpLayer& l) { return l.geom.c_out; },
                               [](const ConvBinLayer& l) { return l.geom.c_out; },
                               [](const BatchNormLayer& l) { return l.channels(); },
                               [](const ReluLayer& l) { return l.channels; },
                               [](const GlobalAvgPoolLayer& l) { return l.channels; }},
                    layer);
}

Shape ConvGeometry::output_shape(const Shape& in) const {
  if (in.channels != c_in)
    throw DataError("conv expects " + std::to_string(c_in) + " input channels, got " + to_string(in));
  if (in.height + 2 * pad < kernel_h || in.width + 2 * pad < kernel_w)
    throw DataError("conv kernel larger than padded input " + to_string(in));
  return {(in.height + 2 * pad - kernel_h) / stride + 1, (in.width + 2 * pad - kernel_w) / stride + 1, c_out};
}

namespace {

void validate_geometry(const ConvGeometry& g, std::size_t index) {
  if (g.kernel_h == 0 || g.kernel_w == 0 || g.c_in == 0 || g.c_out == 0 || g.stride == 0)
    throw DataError("layer " + std::to_string(index) + ": degenerate convolution geometry");
}

}  // namespace

BnnModel::BnnModel(std::vector<Layer> layers, std::size_t feature_dim)
    : layers_(std::move(layers)), feature_dim_(feature_dim) {
  validate();
}

std::size_t BnnModel::input_channels() const { return bnn::input_channels(layers_.front()); }

void BnnModel::validate() const {
  if (layers_.empty()) throw DataError("model has no layers");
  if (kind_of(layers_.back()) != LayerKind::global_avg_pool)
    throw DataError("final layer must be global_avg_pool");
  if (output_channels(layers_.back()) != feature_dim_)
    throw DataError("pooled channel count " + std::to_string(output_channels(layers_.back())) +
                    " does not match feature_dim " + std::to_string(feature_dim_));

  std::vector<LayerKind> conv_kinds;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    if (i > 0 && output_channels(layers_[i - 1]) != bnn::input_channels(layer))
      throw DataError("layer " + std::to_string(i) + ": expects " + std::to_string(bnn::input_channels(layer)) +
                      " channels but previous layer produces " + std::to_string(output_channels(layers_[i - 1])));
    if (bnn::input_channels(layer) == 0) throw DataError("layer " + std::to_string(i) + ": zero channels");
    const auto kind = kind_of(layer);
    if (kind == LayerKind::global_avg_pool && i + 1 != layers_.size())
      throw DataError("global_avg_pool must be the final layer");
    if (kind == LayerKind::conv_fp || kind == LayerKind::conv_bin) conv_kinds.push_back(kind);

    std::visit(overloaded{
                   [&](const ConvFpLayer& l) {
                     validate_geometry(l.geom, i);
                     if (l.weights.size() != l.geom.c_out * l.geom.kernel_h * l.geom.kernel_w * l.geom.c_in)
                       throw DataError("layer " + std::to_string(i) + ": conv_fp weight count mismatch");
                   },
                   [&](const ConvBinLayer& l) {
                     validate_geometry(l.geom, i);
                     if (l.filters.size() != l.geom.c_out)
                       throw DataError("layer " + std::to_string(i) + ": conv_bin filter count mismatch");
                     const Shape expected{l.geom.kernel_h, l.geom.kernel_w, l.geom.c_in};
                     for (const auto& f : l.filters) {
                       if (f.shape() != expected)
                         throw DataError("layer " + std::to_string(i) + ": conv_bin filter shape mismatch");
                       if (!f.padding_bits_zero())
                         throw DataError("layer " + std::to_string(i) + ": nonzero padding bits");
                     }
                   },
                   [&](const BatchNormLayer& l) {
                     const auto c = l.gamma.size();
                     if (l.beta.size() != c || l.mean.size() != c || l.variance.size() != c)
                       throw DataError("layer " + std::to_string(i) + ": batch_norm parameter length mismatch");
                     for (double v : l.variance)
                       if (!(v >= 0.0)) throw DataError("layer " + std::to_string(i) + ": negative variance");
                     if (!(l.epsilon >= 0.0)) throw DataError("layer " + std::to_string(i) + ": negative epsilon");
                   },
                   [](const ReluLayer&) {},
                   [](const GlobalAvgPoolLayer&) {},
               },
               layer);
  }
  if (!conv_kinds.empty() &&
      (conv_kinds.front() != LayerKind::conv_fp || conv_kinds.back() != LayerKind::conv_fp))
    throw DataError("first and last convolutions must be full precision");
}

Tensor conv2d_fp(const Tensor& x, const ConvFpLayer& layer) {
  const auto& g = layer.geom;
  const Shape out_shape = g.output_shape(x.shape);
  Tensor out(out_shape);
  const auto ih = static_cast<std::ptrdiff_t>(x.shape.height);
  const auto iw = static_cast<std::ptrdiff_t>(x.shape.width);
  for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
    for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
      for (std::size_t co = 0; co < g.c_out; ++co) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= ih) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= iw) continue;
            const double* in = &x.values[(static_cast<std::size_t>(iy) * x.shape.width + static_cast<std::size_t>(ix)) *
                                         g.c_in];
            const double* w = &layer.weights[((co * g.kernel_h + ky) * g.kernel_w + kx) * g.c_in];
            for (std::size_t ci = 0; ci < g.c_in; ++ci) acc += in[ci] * w[ci];
          }
        }
        out.at(oy, ox, co) = acc;
      }
    }
  }
  return out;
}

Tensor conv2d_bin(const BitTensor& x, const ConvBinLayer& layer) {
  const auto& g = layer.geom;
  const Shape out_shape = g.output_shape(x.shape());
  Tensor out(out_shape);
  const std::size_t wpp = x.words_per_pixel();
  const auto ih = static_cast<std::ptrdiff_t>(x.shape().height);
  const auto iw = static_cast<std::ptrdiff_t>(x.shape().width);
  for (std::size_t oy = 0; oy < out_shape.height; ++oy) {
    for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
      for (std::size_t co = 0; co < g.c_out; ++co) {
        const BitTensor& filter = layer.filters[co];
        std::int64_t field = 0;
        std::int64_t mismatches = 0;
        for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= ih) continue;
          for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= iw) continue;
            const auto in = x.pixel(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
            const auto w = filter.pixel(ky, kx);
            for (std::size_t k = 0; k < wpp; ++k) mismatches += std::popcount(in[k] ^ w[k]);
            field += static_cast<std::int64_t>(g.c_in);
          }
        }
        // matches - mismatches == 2 * popcount(xnor) - field
        out.at(oy, ox, co) = static_cast<double>(field - 2 * mismatches);
      }
    }
  }
  return out;
}

Tensor batch_norm_apply(const Tensor& x, const BatchNormLayer& bn) {
  if (bn.channels() != x.shape.channels)
    throw DataError("batch_norm expects " + std::to_string(bn.channels()) + " channels, got " + to_string(x.shape));
  Tensor out(x.shape);
  const std::size_t c = x.shape.channels;
  std::vector<double> scale(c), shift(c);
  for (std::size_t i = 0; i < c; ++i) {
    if (!(bn.variance[i] >= 0.0)) throw DataError("batch_norm variance must be nonnegative");
    scale[i] = bn.gamma[i] / std::sqrt(bn.variance[i] + bn.epsilon);
  }
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    const std::size_t ch = i % c;
    out.values[i] = (x.values[i] - bn.mean[ch]) * scale[ch] + bn.beta[ch];
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape);
  std::transform(x.values.begin(), x.values.end(), out.values.begin(), [](double v) { return std::max(0.0, v); });
  return out;
}

FeatureVector global_avg_pool(const Tensor& x) {
  FeatureVector out(x.shape.channels, 0.0);
  const std::size_t positions = x.shape.height * x.shape.width;
  if (positions == 0) return out;
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t c = 0; c < x.shape.channels; ++c) out[c] += x.values[p * x.shape.channels + c];
  for (double& v : out) v /= static_cast<double>(positions);
  return out;
}

SignThresholds fold_sign_thresholds(const BatchNormLayer& bn) {
  SignThresholds t;
  for (std::size_t c = 0; c < bn.channels(); ++c) {
    const double s = std::sqrt(bn.variance[c] + bn.epsilon);
    if (bn.gamma[c] == 0.0) {
      t.threshold.push_back(0.0);
      t.constant.push_back(true);
      t.flip.push_back(bn.beta[c] >= 0.0);
    } else {
      t.threshold.push_back(bn.mean[c] - bn.beta[c] * s / bn.gamma[c]);
      t.constant.push_back(false);
      t.flip.push_back(bn.gamma[c] < 0.0);
    }
  }
  return t;
}

BitTensor binarize_with_thresholds(const Tensor& x, const SignThresholds& t) {
  if (t.threshold.size() != x.shape.channels) throw DataError("threshold count does not match channels");
  BitTensor bits(x.shape);
  for (std::size_t y = 0; y < x.shape.height; ++y)
    for (std::size_t xx = 0; xx < x.shape.width; ++xx)
      for (std::size_t c = 0; c < x.shape.channels; ++c) {
        const double v = x.at(y, xx, c);
        bool positive;
        if (t.constant[c])
          positive = t.flip[c];
        else
          positive = t.flip[c] ? v <= t.threshold[c] : v >= t.threshold[c];
        if (positive) bits.set(y, xx, c, true);
      }
  return bits;
}

Tensor spectrogram_tensor(const LogMelSpectrogram& spec) {
  return Tensor({spec.frames, spec.bands, 1}, spec.values);
}

FeatureVector forward_features(const BnnModel& model, const Tensor& input) {
  Tensor x = input;
  for (std::size_t i = 0; i + 1 < model.layers().size(); ++i) {
    const Layer& layer = model.layers()[i];
    try {
      x = std::visit(overloaded{[&](const ConvFpLayer& l) { return conv2d_fp(x, l); },
                                [&](const ConvBinLayer& l) { return conv2d_bin(binarize(x), l); },
                                [&](const BatchNormLayer& l) { return batch_norm_apply(x, l); },
                                [&](const ReluLayer& l) {
                                  if (l.channels != x.shape.channels) throw DataError("relu channel mismatch");
                                  return relu(x);
                                },
                                [&](const GlobalAvgPoolLayer&) -> Tensor { throw DataError("unexpected pool"); }},
                     layer);
    } catch (const DataError& e) {
      throw DataError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  if (x.shape.channels != model.feature_dim()) throw DataError("pool input channel mismatch");
  return global_avg_pool(x);
}

FeatureVector forward_features(const BnnModel& model, const LogMelSpectrogram& spec) {
  return forward_features(model, spectrogram_tensor(spec));
}

namespace {

void write_header(std::ostream& out, LayerKind kind, Precision precision, const ConvGeometry& g) {
  io::write<std::uint8_t>(out, static_cast<std::uint8_t>(kind));
  io::write<std::uint8_t>(out, static_cast<std::uint8_t>(precision));
  io::write<std::uint16_t>(out, static_cast<std::uint16_t>(g.kernel_h));
  io::write<std::uint16_t>(out, static_cast<std::uint16_t>(g.kernel_w));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(g.c_in));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(g.c_out));
  io::write<std::uint8_t>(out, static_cast<std::uint8_t>(g.stride));
  io::write<std::uint8_t>(out, static_cast<std::uint8_t>(g.pad));
}

ConvGeometry channel_only(std::size_t channels) { return {0, 0, channels, channels, 0, 0}; }

void write_floats(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) io::write<float>(out, static_cast<float>(x));
}

std::vector<double> read_floats(std::istream& in, std::size_t n, const char* what) {
  std::vector<double> v(n);
  for (double& x : v) {
    x = io::read<float>(in, what);
    if (!std::isfinite(x)) throw DataError(std::string("non-finite value in ") + what);
  }
  return v;
}

}  // namespace

void save_model(const BnnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  io::write_magic(out, "BNNKWS01");
  io::write<std::uint32_t>(out, kWeightsVersion);
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.layers().size()));
  io::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.feature_dim()));
  for (const Layer& layer : model.layers()) {
    std::visit(overloaded{[&](const ConvFpLayer& l) {
                            write_header(out, LayerKind::conv_fp, Precision::full, l.geom);
                            write_floats(out, l.weights);
                          },
                          [&](const ConvBinLayer& l) {
                            write_header(out, LayerKind::conv_bin, Precision::binary, l.geom);
                            for (const auto& f : l.filters)
                              for (std::uint64_t w : f.words()) io::write<std::uint64_t>(out, w);
                          },
                          [&](const BatchNormLayer& l) {
                            write_header(out, LayerKind::batch_norm, Precision::full, channel_only(l.channels()));
                            write_floats(out, l.gamma);
                            write_floats(out, l.beta);
                            write_floats(out, l.mean);
                            write_floats(out, l.variance);
                            io::write<float>(out, static_cast<float>(l.epsilon));
                          },
                          [&](const ReluLayer& l) {
                            write_header(out, LayerKind::relu, Precision::full, channel_only(l.channels));
                          },
                          [&](const GlobalAvgPoolLayer& l) {
                            write_header(out, LayerKind::global_avg_pool, Precision::full, channel_only(l.channels));
                          }},
               layer);
  }
  if (!out) throw DataError("write failed for " + path.string());
}

BnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  io::expect_magic(in, "BNNKWS01");
  const auto version = io::read<std::uint32_t>(in, "version");
  if (version != kWeightsVersion)
    throw DataError("unsupported weights version " + std::to_string(version));
  const auto layer_count = io::read<std::uint32_t>(in, "layer count");
  const auto feature_dim = io::read<std::uint32_t>(in, "feature dim");

  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    const auto kind = io::read<std::uint8_t>(in, "layer kind");
    const auto precision = io::read<std::uint8_t>(in, "precision");
    ConvGeometry g;
    g.kernel_h = io::read<std::uint16_t>(in, "kernel h");
    g.kernel_w = io::read<std::uint16_t>(in, "kernel w");
    g.c_in = io::read<std::uint32_t>(in, "c_in");
    g.c_out = io::read<std::uint32_t>(in, "c_out");
    g.stride = io::read<std::uint8_t>(in, "stride");
    g.pad = io::read<std::uint8_t>(in, "pad");
    const auto bad = [&](const std::string& why) { return DataError("layer " + std::to_string(i) + ": " + why); };

    const bool is_conv = kind == static_cast<std::uint8_t>(LayerKind::conv_fp) ||
                         kind == static_cast<std::uint8_t>(LayerKind::conv_bin);
    if (!is_conv && g.c_in != g.c_out) throw bad("channel-wise layer with c_in != c_out");
    if (is_conv) validate_geometry(g, i);

    switch (kind) {
      case static_cast<std::uint8_t>(LayerKind::conv_fp): {
        if (precision != static_cast<std::uint8_t>(Precision::full)) throw bad("conv_fp must be full precision");
        ConvFpLayer l{g, read_floats(in, g.c_out * g.kernel_h * g.kernel_w * g.c_in, "conv_fp weights")};
        layers.emplace_back(std::move(l));
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::conv_bin): {
        if (precision != static_cast<std::uint8_t>(Precision::binary)) throw bad("conv_bin must be binary precision");
        ConvBinLayer l{g, {}};
        for (std::size_t co = 0; co < g.c_out; ++co) {
          BitTensor f({g.kernel_h, g.kernel_w, g.c_in});
          for (auto& w : f.mutable_words()) w = io::read<std::uint64_t>(in, "conv_bin weights");
          l.filters.push_back(std::move(f));
        }
        layers.emplace_back(std::move(l));
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::batch_norm): {
        BatchNormLayer l;
        l.gamma = read_floats(in, g.c_in, "batch_norm gamma");
        l.beta = read_floats(in, g.c_in, "batch_norm beta");
        l.mean = read_floats(in, g.c_in, "batch_norm mean");
        l.variance = read_floats(in, g.c_in, "batch_norm variance");
        l.epsilon = io::read<float>(in, "batch_norm epsilon");
        layers.emplace_back(std::move(l));
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::relu):
        layers.emplace_back(ReluLayer{g.c_in});
        break;
      case static_cast<std::uint8_t>(LayerKind::global_avg_pool):
        layers.emplace_back(GlobalAvgPoolLayer{g.c_in});
        break;
      default:
        throw bad("unknown layer kind " + std::to_string(kind));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after final layer");
  return BnnModel(std::move(layers), feature_dim);
}

namespace {

ConvFpLayer random_conv_fp(Rng& rng, ConvGeometry g) {
  ConvFpLayer l{g, std::vector<double>(g.c_out * g.kernel_h * g.kernel_w * g.c_in)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(g.kernel_h * g.kernel_w * g.c_in));
  // float-representable so save/load is exact
  for (double& w : l.weights) w = static_cast<float>(rng.normal() * scale);
  return l;
}

ConvBinLayer random_conv_bin(Rng& rng, ConvGeometry g) {
  ConvBinLayer l{g, {}};
  for (std::size_t co = 0; co < g.c_out; ++co) {
    BitTensor f({g.kernel_h, g.kernel_w, g.c_in});
    for (std::size_t y = 0; y < g.kernel_h; ++y)
      for (std::size_t x = 0; x < g.kernel_w; ++x)
        for (std::size_t c = 0; c < g.c_in; ++c) f.set(y, x, c, (rng.next_u64() & 1U) != 0);
    l.filters.push_back(std::move(f));
  }
  return l;
}

BatchNormLayer random_bn(Rng& rng, std::size_t channels, double mean_lo, double mean_hi) {
  BatchNormLayer bn;
  for (std::size_t c = 0; c < channels; ++c) {
    bn.gamma.push_back(static_cast<float>(0.5 + rng.uniform()));
    bn.beta.push_back(static_cast<float>(0.2 * (rng.uniform() - 0.5)));
    bn.mean.push_back(static_cast<float>(mean_lo + (mean_hi - mean_lo) * rng.uniform()));
    bn.variance.push_back(static_cast<float>(0.5 + rng.uniform()));
  }
  bn.epsilon = static_cast<float>(1e-3);
  return bn;
}

}  // namespace

BnnModel make_default_model(std::uint64_t seed, std::size_t feature_dim) {
  Rng rng(seed);
  std::vector<Layer> layers;
  layers.emplace_back(random_conv_fp(rng, {3, 3, 1, 16, 2, 1}));
  layers.emplace_back(random_bn(rng, 16, -0.5, 0.5));
  layers.emplace_back(ReluLayer{16});
  layers.emplace_back(random_bn(rng, 16, 0.2, 0.8));
  layers.emplace_back(random_conv_bin(rng, {3, 3, 16, 32, 1, 1}));
  layers.emplace_back(random_bn(rng, 32, -2.0, 2.0));
  layers.emplace_back(ReluLayer{32});
  layers.emplace_back(random_bn(rng, 32, 0.5, 2.0));
  layers.emplace_back(random_conv_bin(rng, {3, 3, 32, 32, 2, 1}));
  layers.emplace_back(random_bn(rng, 32, -2.0, 2.0));
  layers.emplace_back(ReluLayer{32});
  layers.emplace_back(random_conv_fp(rng, {1, 1, 32, feature_dim, 1, 0}));
  layers.emplace_back(random_bn(rng, feature_dim, -0.5, 0.5));
  layers.emplace_back(ReluLayer{feature_dim});
  layers.emplace_back(GlobalAvgPoolLayer{feature_dim});
  return BnnModel(std::move(layers), feature_dim);
}

}  // namespace kwscl::bnn
