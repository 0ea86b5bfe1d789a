#include <gtest/gtest.h>

#include "kwscl/errors.hpp"
#include "kwscl/flops_model.hpp"

using namespace kwscl;
using namespace kwscl::flops;
using cl::Algorithm;

namespace {

// Reference values of the backpropagation FLOP table (M=12, B=32), rows in
// kAllAlgorithms order, columns 1..4 new classes.
constexpr std::array<std::array<std::uint64_t, 4>, 7> kReference = {{
    {363, 390, 417, 445},
    {354, 381, 408, 436},
    {375, 402, 429, 456},
    {371, 398, 425, 452},
    {572, 615, 658, 701},
    {577, 620, 664, 707},
    {391, 421, 449, 479},
}};

std::uint64_t q(Algorithm a, std::uint64_t n, std::uint64_t b = 32) { return backprop_flops({a, 12, n, b}); }

}  // namespace

TEST(BackpropFlops, ReferenceExamples) {
  EXPECT_EQ(q(Algorithm::tinyol, 13), 363U);
  EXPECT_EQ(q(Algorithm::tinyol_v2, 16), 456U);
  EXPECT_EQ(q(Algorithm::lwf, 14), 615U);
  EXPECT_EQ(q(Algorithm::cwr, 16), 479U);
}

TEST(BackpropFlops, BatchOfOneHandEvaluation) {
  // 2*13 + 2*12*13 + (3*12*13 + 3*13 + 4)
  EXPECT_EQ(q(Algorithm::tinyol_batches, 13, 1), 849U);
}

TEST(BackpropFlops, RoundingNearestTiesTowardZero) {
  EXPECT_EQ(q(Algorithm::tinyol_batches, 13), 354U);     // 353.97
  EXPECT_EQ(q(Algorithm::tinyol_batches, 16), 436U);     // 435.625
  EXPECT_EQ(q(Algorithm::tinyol_v2_batches, 16), 452U);  // 452.5
  EXPECT_EQ(q(Algorithm::lwf_batches, 16), 707U);        // 707.5
  EXPECT_EQ(q(Algorithm::cwr, 13), 391U);                // 391.4
}

// Reference cell is 445; 2*12*16 + 12 + 3*16 = 444.
TEST(BackpropFlops, TinyolFourNewClassesReferenceCellDiffers) {
  EXPECT_EQ(q(Algorithm::tinyol, 16), 444U);
  EXPECT_NE(q(Algorithm::tinyol, 16), kReference[0][3]);
}

// 3*168 + 12 + 98 + 1 + 182/32 = 620.6875, which rounds to 621; reference 620.
TEST(BackpropFlops, LwfBatchesTwoNewClassesReferenceCellDiffers) {
  EXPECT_EQ(q(Algorithm::lwf_batches, 14), 621U);
  EXPECT_EQ(kReference[5][1], 620U);
}

// 2*180 + 45 + 12 + 1050/32 = 449.8125, which rounds to 450; reference 449.
TEST(BackpropFlops, CwrThreeNewClassesReferenceCellDiffers) {
  EXPECT_EQ(q(Algorithm::cwr, 15), 450U);
  EXPECT_EQ(kReference[6][2], 449U);
}

TEST(BackpropFlops, RejectsInvalidQueries) {
  EXPECT_THROW(backprop_flops({Algorithm::tinyol, 0, 1, 32}), ConfigError);
  EXPECT_THROW(backprop_flops({Algorithm::tinyol, 12, 11, 32}), ConfigError);
  EXPECT_THROW(backprop_flops({Algorithm::cwr, 12, 13, 0}), ConfigError);
  EXPECT_THROW(backprop_flops({static_cast<Algorithm>(9), 12, 13, 32}), ConfigError);
}

TEST(FlopTable, MatchesReferenceTableExceptKnownCells) {
  const auto t = flop_table(12, 32);
  int matches = 0;
  std::vector<std::pair<std::size_t, std::size_t>> differing;
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      if (t.cells[r][c] == kReference[r][c])
        ++matches;
      else
        differing.emplace_back(r, c);
    }
  EXPECT_EQ(matches, 25);
  const std::vector<std::pair<std::size_t, std::size_t>> expected = {{0, 3}, {5, 1}, {6, 2}};
  EXPECT_EQ(differing, expected);
  for (const auto& [r, c] : differing) {
    const auto diff = static_cast<long>(t.cells[r][c]) - static_cast<long>(kReference[r][c]);
    EXPECT_EQ(std::abs(diff), 1);
  }
}

TEST(FlopTable, MonotoneInNewClasses) {
  for (std::uint64_t b : {1U, 8U, 32U, 100U}) {
    const auto t = flop_table(12, b);
    for (const auto& row : t.cells)
      for (std::size_t c = 1; c < 4; ++c) EXPECT_LE(row[c - 1], row[c]);
  }
}

TEST(FlopTable, LwfMinusTinyolIsSymbolicDifference) {
  for (std::uint64_t m : {1U, 5U, 12U, 30U}) {
    const auto t = flop_table(m, 32);
    for (std::uint64_t k = 1; k <= 4; ++k) {
      const std::uint64_t n = m + k;
      EXPECT_EQ(t.cells[4][k - 1] - t.cells[0][k - 1], m * n + 4 * n + 1);
    }
  }
}

TEST(FlopTable, CsvAndTextRendering) {
  const auto t = flop_table(12, 32);
  const auto csv = table_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,new_1,new_2,new_3,new_4");
  EXPECT_NE(csv.find("tinyol_v2,375,402,429,456\n"), std::string::npos);
  EXPECT_NE(csv.find("cwr,391,421,450,479\n"), std::string::npos);
  const auto text = table_text(t);
  EXPECT_NE(text.find("lwf_batches"), std::string::npos);
  EXPECT_NE(text.find("707"), std::string::npos);
}

TEST(ForwardFlops, SingleUnitConv) {
  const bnn::BnnModel m({bnn::ConvFpLayer{{1, 1, 1, 1, 1, 0}, {1.0}}, bnn::GlobalAvgPoolLayer{1}}, 1);
  // conv 2*16, pool 16 + 1
  EXPECT_EQ(forward_flops(m, 4, 4), 32U + 17U);
}

TEST(ForwardFlops, ToyModelHandCount) {
  using namespace bnn;
  const ConvGeometry g1{3, 3, 1, 4, 2, 1}, g2{3, 3, 4, 4, 1, 1}, g3{1, 1, 4, 2, 1, 0};
  ConvBinLayer bin{g2, std::vector<BitTensor>(4, BitTensor({3, 3, 4}))};
  const BnnModel m({ConvFpLayer{g1, std::vector<double>(36, 0.1)}, BatchNormLayer{{1, 1, 1, 1}, {0, 0, 0, 0},
                                                                                 {0, 0, 0, 0}, {1, 1, 1, 1}, 1e-3},
                    ReluLayer{4}, bin, ConvFpLayer{g3, std::vector<double>(8, 0.1)}, GlobalAvgPoolLayer{2}},
                   2);
  // Input 10x8: conv1 -> 5x4x4, conv2 -> 5x4x4, conv3 -> 5x4x2.
  const std::uint64_t conv1 = 2 * 9 * 1 * 4 * 20;
  const std::uint64_t bn = 2 * 80;
  const std::uint64_t relu = 80;
  const std::uint64_t conv2 = 2 * 9 * 4 * 4 * 20;
  const std::uint64_t conv3 = 2 * 1 * 4 * 2 * 20;
  const std::uint64_t pool = 40 + 2;
  EXPECT_EQ(forward_flops(m, 10, 8), conv1 + bn + relu + conv2 + conv3 + pool);
}

TEST(ForwardFlops, DefaultModelIsPositiveAndScalesWithInput) {
  const auto m = bnn::make_default_model(0);
  const auto small = forward_flops(m, 49, 32);
  const auto full = forward_flops(m, 98, 64);
  EXPECT_GT(small, 0U);
  EXPECT_GT(full, 3 * small);
}
