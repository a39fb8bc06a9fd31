#include "mpfl/bandwidth.hpp"

#include <algorithm>
#include <numeric>

namespace mpfl {

std::uint64_t dense_bits(std::span<const BitTerm> arch, int precision_bits) {
  if (precision_bits != 32 && precision_bits != 64) throw ConfigError("precision must be 32 or 64 bits");
  std::uint64_t bits = 0;
  for (const auto& t : arch) bits += t.groups * t.weights_per_group * static_cast<std::uint64_t>(precision_bits);
  return bits;
}

std::uint64_t mask_bits(std::span<const BitTerm> arch) {
  std::uint64_t bits = 0;
  for (const auto& t : arch) bits += t.groups;
  return bits;
}

std::vector<BitTerm> bit_terms(const ArchSpec& arch) {
  std::vector<BitTerm> out;
  for (const auto& l : arch.dense_layers()) out.push_back({l.groups, l.group_size});
  return out;
}

std::uint64_t ProductTerm::value() const {
  return std::accumulate(factors.begin(), factors.end(), std::uint64_t{1}, std::multiplies<>());
}

std::uint64_t sum_of_products(std::span<const ProductTerm> terms) {
  std::uint64_t s = 0;
  for (const auto& t : terms) s += t.value();
  return s;
}

std::vector<BitTerm> vgg16_sketch_layers() {
  std::vector<BitTerm> layers;
  auto add = [&](int count, std::uint64_t groups, std::uint64_t weights) {
    for (int i = 0; i < count; ++i) layers.push_back({groups, weights});
  };
  add(2, 64, 9);
  add(2, 128, 9);
  add(3, 256, 9);
  add(6, 512, 9);
  add(3, 4096, 1);
  return layers;
}

std::vector<ProductTerm> vgg16_published_dense_expression() {
  return {{{2, 3, 3, 64, 64}}, {{2, 3, 3, 128, 64}}, {{3, 3, 256, 64}}, {{6, 3, 3, 512}}, {{3, 4096, 64}}};
}

std::vector<ProductTerm> vgg16_published_mask_expression() {
  return {{{2, 64}}, {{2, 128}}, {{3, 256}}, {{6, 512}}, {{3, 4096}}};
}

void BandwidthLedger::record(int node, std::uint32_t round, Direction dir, std::uint64_t bits) {
  entries_[{node, round, dir}] += bits;
  total_ += bits;
}

std::uint64_t BandwidthLedger::total(Direction dir) const {
  std::uint64_t s = 0;
  for (const auto& [k, v] : entries_)
    if (k.dir == dir) s += v;
  return s;
}

std::uint64_t BandwidthLedger::node_total(int node, Direction dir) const {
  std::uint64_t s = 0;
  for (const auto& [k, v] : entries_)
    if (k.node == node && k.dir == dir) s += v;
  return s;
}

std::uint64_t BandwidthLedger::round_total(std::uint32_t round, Direction dir) const {
  std::uint64_t s = 0;
  for (const auto& [k, v] : entries_)
    if (k.round == round && k.dir == dir) s += v;
  return s;
}

std::uint64_t BandwidthLedger::round_max_node(std::uint32_t round, Direction dir) const {
  std::uint64_t best = 0;
  for (const auto& [k, v] : entries_)
    if (k.round == round && k.dir == dir) best = std::max(best, v);
  return best;
}

std::uint64_t BandwidthLedger::entry(int node, std::uint32_t round, Direction dir) const {
  const auto it = entries_.find({node, round, dir});
  return it == entries_.end() ? 0 : it->second;
}

}  // namespace mpfl
