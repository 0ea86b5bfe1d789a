#include "kwscl/flops_model.hpp"

#include <iomanip>
#include <sstream>
#include <variant>

#include "kwscl/errors.hpp"

namespace kwscl::flops {

namespace {

// whole + numerator/denominator, rounded to nearest with ties toward zero.
std::uint64_t with_fraction(std::uint64_t whole, std::uint64_t numerator, std::uint64_t denominator) {
  const std::uint64_t q = numerator / denominator;
  const std::uint64_t r = numerator % denominator;
  return whole + q + (2 * r > denominator ? 1 : 0);
}

}  // namespace

std::uint64_t backprop_flops(const FlopQuery& q) {
  const std::uint64_t M = q.initial_classes;
  const std::uint64_t N = q.total_classes;
  const std::uint64_t B = q.batch_size;
  if (M < 1) throw ConfigError("M must be >= 1");
  if (N < M) throw ConfigError("N must be >= M");
  if (B == 0) throw ConfigError("batch_size must be >= 1");

  switch (q.method) {
    case cl::Algorithm::tinyol:
      return 2 * M * N + M + 3 * N;
    case cl::Algorithm::tinyol_batches:
      return with_fraction(2 * N + 2 * M * N, 3 * M * N + 3 * N + 4, B);
    case cl::Algorithm::tinyol_v2:
      return 2 * M * N + 2 * M + 3 * N;
    case cl::Algorithm::tinyol_v2_batches:
      return with_fraction(2 * M * N + M + 2 * N, M * M + M + 4 + 3 * M * N + 3 * N, B);
    case cl::Algorithm::lwf:
      return 3 * M * N + M + 7 * N + 1;
    case cl::Algorithm::lwf_batches:
      return with_fraction(3 * M * N + M + 7 * N + 1, M * N + N, B);
    case cl::Algorithm::cwr:
      return with_fraction(2 * M * N + 3 * N + M, 5 * M * N + 10 * N, B);
  }
  throw ConfigError("invalid method tag");
}

std::uint64_t forward_flops(const bnn::BnnModel& model, std::size_t input_height, std::size_t input_width) {
  bnn::Shape shape{input_height, input_width, model.input_channels()};
  std::uint64_t total = 0;
  for (const auto& layer : model.layers()) {
    if (const auto* conv = std::get_if<bnn::ConvFpLayer>(&layer)) {
      const auto out = conv->geom.output_shape(shape);
      total += 2ULL * conv->geom.kernel_h * conv->geom.kernel_w * conv->geom.c_in * conv->geom.c_out * out.height *
               out.width;
      shape = out;
    } else if (const auto* bin = std::get_if<bnn::ConvBinLayer>(&layer)) {
      const auto out = bin->geom.output_shape(shape);
      total += 2ULL * bin->geom.kernel_h * bin->geom.kernel_w * bin->geom.c_in * bin->geom.c_out * out.height *
               out.width;
      shape = out;
    } else if (std::holds_alternative<bnn::BatchNormLayer>(layer)) {
      total += 2ULL * shape.size();
    } else if (std::holds_alternative<bnn::ReluLayer>(layer)) {
      total += shape.size();
    } else {
      total += shape.size() + shape.channels;
    }
  }
  return total;
}

FlopTable flop_table(std::uint64_t initial_classes, std::uint64_t batch_size) {
  FlopTable t;
  t.initial_classes = initial_classes;
  t.batch_size = batch_size;
  for (std::size_t r = 0; r < cl::kAllAlgorithms.size(); ++r)
    for (std::uint64_t k = 1; k <= 4; ++k)
      t.cells[r][k - 1] = backprop_flops({cl::kAllAlgorithms[r], initial_classes, initial_classes + k, batch_size});
  return t;
}

std::string table_csv(const FlopTable& t) {
  std::ostringstream os;
  os << "method,new_1,new_2,new_3,new_4\n";
  for (std::size_t r = 0; r < t.cells.size(); ++r) {
    os << cl::to_string(cl::kAllAlgorithms[r]);
    for (auto v : t.cells[r]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

std::string table_text(const FlopTable& t) {
  std::ostringstream os;
  os << "Backprop FLOPs per sample (M=" << t.initial_classes << ", batch_size=" << t.batch_size << ")\n";
  os << std::left << std::setw(20) << "method";
  for (int k = 1; k <= 4; ++k) os << std::right << std::setw(8) << ("+" + std::to_string(k));
  os << '\n';
  for (std::size_t r = 0; r < t.cells.size(); ++r) {
    os << std::left << std::setw(20) << cl::to_string(cl::kAllAlgorithms[r]);
    for (auto v : t.cells[r]) os << std::right << std::setw(8) << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace kwscl::flops
