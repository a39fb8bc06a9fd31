#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mpfl/arch.hpp"

namespace mpfl {

/// One layer for bit accounting: `groups` filters/neurons of `weights_per_group` scalars.
struct BitTerm {
  std::uint64_t groups = 0;
  std::uint64_t weights_per_group = 0;
};

/// Σ groups·weights_per_group·b: full-precision weight traffic.
std::uint64_t dense_bits(std::span<const BitTerm> arch, int precision_bits);

/// Σ groups: one mask bit per group. A group's bias rides on its bit.
std::uint64_t mask_bits(std::span<const BitTerm> arch);

/// Terms of a dense network, one per dense layer.
std::vector<BitTerm> bit_terms(const ArchSpec& arch);

/// A literal product of factors, for reproducing published arithmetic verbatim.
struct ProductTerm {
  std::vector<std::uint64_t> factors;
  std::uint64_t value() const;
};

std::uint64_t sum_of_products(std::span<const ProductTerm> terms);

/// VGG16 sketch: 2×64, 2×128, 3×256, 6×512 filters of 3×3 and 3 fully connected
/// layers of 4096. Sixteen entries, one per layer.
std::vector<BitTerm> vgg16_sketch_layers();

/// The float64 dense-traffic expression for the VGG16 sketch exactly as
/// published: 2*3*3*64*64 + 2*3*3*128*64 + 3*3*256*64 + 6*3*3*512 + 3*4096*64.
/// Its terms are not uniform: the 256 term drops the layer count and the 512
/// term drops the precision factor. Evaluates to 1,182,720.
std::vector<ProductTerm> vgg16_published_dense_expression();

/// 2*64 + 2*128 + 3*256 + 6*512 + 3*4096 = 16,512.
std::vector<ProductTerm> vgg16_published_mask_expression();

enum class Direction { up, down };

inline const char* to_string(Direction d) { return d == Direction::up ? "up" : "down"; }

/// Exact transmitted bits, keyed by (node, round, direction). Totals are sums of
/// recorded entries; nothing is estimated.
class BandwidthLedger {
 public:
  struct Key {
    int node;
    std::uint32_t round;
    Direction dir;
    auto operator<=>(const Key&) const = default;
  };

  void record(int node, std::uint32_t round, Direction dir, std::uint64_t bits);

  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t total(Direction dir) const;
  std::uint64_t node_total(int node, Direction dir) const;
  std::uint64_t round_total(std::uint32_t round, Direction dir) const;
  /// Largest single-node volume in one round and direction.
  std::uint64_t round_max_node(std::uint32_t round, Direction dir) const;
  std::uint64_t entry(int node, std::uint32_t round, Direction dir) const;

  const std::map<Key, std::uint64_t>& entries() const noexcept { return entries_; }

 private:
  std::map<Key, std::uint64_t> entries_;
  std::uint64_t total_ = 0;
};

}  // namespace mpfl
