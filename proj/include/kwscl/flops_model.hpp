#pragma once

// FLOP accounting for the per-sample backpropagation step of each CL rule
// and for extractor forward passes. Multiply and add count separately.

#include <array>
#include <cstdint>
#include <string>

#include "kwscl/bnn_engine.hpp"
#include "kwscl/cl_algorithms.hpp"

namespace kwscl::flops {

struct FlopQuery {
  cl::Algorithm method = cl::Algorithm::tinyol;
  std::uint64_t initial_classes = 12;  // M: classes the extractor was pre-trained on
  std::uint64_t total_classes = 13;    // N: classes after expansion
  std::uint64_t batch_size = 32;
};

// Closed-form per-method cost. Fractional batch terms are rounded to the
// nearest integer, halves toward zero. Throws ConfigError if M < 1, N < M or
// batch_size == 0.
std::uint64_t backprop_flops(const FlopQuery& q);

// Conv: 2*kh*kw*c_in*c_out*out_h*out_w; BN 2 per element; ReLU 1 per element;
// pool 1 per element + 1 per channel. Binarized convs use the same nominal rate.
std::uint64_t forward_flops(const bnn::BnnModel& model, std::size_t input_height, std::size_t input_width);

struct FlopTable {
  std::uint64_t initial_classes = 0;
  std::uint64_t batch_size = 0;
  // rows follow cl::kAllAlgorithms; columns are 1..4 new classes
  std::array<std::array<std::uint64_t, 4>, 7> cells{};
};

FlopTable flop_table(std::uint64_t initial_classes, std::uint64_t batch_size);

std::string table_csv(const FlopTable& t);
std::string table_text(const FlopTable& t);

}  // namespace kwscl::flops
