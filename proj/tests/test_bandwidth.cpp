#include <gtest/gtest.h>

#include "mpfl/bandwidth.hpp"
#include "mpfl/rng.hpp"

using namespace mpfl;

TEST(PublishedArithmetic, Vgg16DenseAndMask) {
  EXPECT_EQ(sum_of_products(vgg16_published_dense_expression()), 1182720u);
  EXPECT_EQ(sum_of_products(vgg16_published_mask_expression()), 16512u);
  const double ratio = 16512.0 / 1182720.0;
  EXPECT_NEAR(100.0 * (1.0 - ratio), 98.6, 0.05);
}

TEST(PublishedArithmetic, ProductOracle) {
  // Recompute every term by hand.
  const std::uint64_t dense = 2ull * 3 * 3 * 64 * 64 + 2ull * 3 * 3 * 128 * 64 + 3ull * 3 * 256 * 64 +
                              6ull * 3 * 3 * 512 + 3ull * 4096 * 64;
  EXPECT_EQ(sum_of_products(vgg16_published_dense_expression()), dense);
  EXPECT_EQ(ProductTerm{}.value(), 1u);
}

TEST(DenseBits, EmptyAndSingleLayer) {
  EXPECT_EQ(dense_bits(std::vector<BitTerm>{}, 64), 0u);
  EXPECT_EQ(mask_bits(std::vector<BitTerm>{}), 0u);
  EXPECT_EQ(dense_bits(std::vector<BitTerm>{{64, 9}}, 32), 18432u);
  EXPECT_EQ(mask_bits(std::vector<BitTerm>{{64, 9}}), 64u);
}

TEST(DenseBits, Vgg16SketchUniformForm) {
  const auto layers = vgg16_sketch_layers();
  ASSERT_EQ(layers.size(), 16u);
  EXPECT_EQ(mask_bits(layers), 16512u);
  std::uint64_t expected = 0;
  for (const auto& l : layers) expected += l.groups * l.weights_per_group * 64;
  EXPECT_EQ(dense_bits(layers, 64), expected);
}

TEST(DenseBits, MaskBoundHoldsForRandomLayouts) {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<BitTerm> terms;
    const auto n = rng.below(8);
    for (std::uint64_t i = 0; i < n; ++i) terms.push_back({rng.below(5000), 1 + rng.below(5000)});
    for (int b : {32, 64}) EXPECT_LE(mask_bits(terms), dense_bits(terms, b) / static_cast<std::uint64_t>(b));
  }
}

TEST(DenseBits, DenseArchTerms) {
  const auto arch = ArchSpec::from_dims({64, 64, 32, 10});
  const auto terms = bit_terms(arch);
  ASSERT_EQ(terms.size(), 3u);
  EXPECT_EQ(terms[0].groups, 64u);
  EXPECT_EQ(terms[0].weights_per_group, 65u);
  EXPECT_EQ(mask_bits(terms), 106u);
  EXPECT_EQ(dense_bits(terms, 64), arch.parameter_count() * 64);
}

TEST(Ledger, QueriesAreSumsOfEntries) {
  BandwidthLedger l;
  l.record(0, 1, Direction::up, 100);
  l.record(1, 1, Direction::up, 300);
  l.record(0, 1, Direction::down, 50);
  l.record(0, 2, Direction::up, 7);
  l.record(0, 1, Direction::up, 1);
  EXPECT_EQ(l.total(), 458u);
  EXPECT_EQ(l.total(Direction::up), 408u);
  EXPECT_EQ(l.total(Direction::down), 50u);
  EXPECT_EQ(l.node_total(0, Direction::up), 108u);
  EXPECT_EQ(l.round_total(1, Direction::up), 401u);
  EXPECT_EQ(l.round_max_node(1, Direction::up), 300u);
  EXPECT_EQ(l.entry(0, 1, Direction::up), 101u);
  EXPECT_EQ(l.entry(5, 9, Direction::down), 0u);
  std::uint64_t sum = 0;
  for (const auto& [k, v] : l.entries()) sum += v;
  EXPECT_EQ(sum, l.total());
}
