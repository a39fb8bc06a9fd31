#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "mpfl/arch.hpp"

namespace mpfl {

using LayerMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Binary keep(1)/prune(0) mask with one bit per weight group, per dense layer.
/// Non-prunable layers still carry bits; they are never cleared by masking ops.
class PruneMask {
 public:
  PruneMask() = default;

  static PruneMask all_ones(const ArchSpec& arch) { return filled(arch, true); }
  static PruneMask all_zeros(const ArchSpec& arch) { return filled(arch, false); }

  static PruneMask from_layers(std::vector<LayerMask> layers, std::vector<bool> prunable) {
    if (layers.size() != prunable.size()) throw ConfigError("mask: prunable flags do not match layer count");
    PruneMask m;
    m.layers_ = std::move(layers);
    m.prunable_ = std::move(prunable);
    return m;
  }

  std::size_t layer_count() const noexcept { return layers_.size(); }
  const LayerMask& layer(std::size_t m) const { return layers_.at(m); }
  LayerMask& layer(std::size_t m) { return layers_.at(m); }
  bool prunable(std::size_t m) const { return prunable_.at(m); }
  const std::vector<bool>& prunable_flags() const noexcept { return prunable_; }

  /// ||c(m)||_0
  std::size_t keep_count(std::size_t m) const { return static_cast<std::size_t>(layers_.at(m).count()); }

  std::size_t keep_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.count());
    return n;
  }

  std::size_t bit_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.size());
    return n;
  }

  /// Fraction of prunable groups that are pruned.
  double sparsity() const {
    std::size_t total = 0, pruned = 0;
    for (std::size_t m = 0; m < layers_.size(); ++m) {
      if (!prunable_[m]) continue;
      total += static_cast<std::size_t>(layers_[m].size());
      pruned += static_cast<std::size_t>(layers_[m].size() - layers_[m].count());
    }
    return total == 0 ? 0.0 : static_cast<double>(pruned) / static_cast<double>(total);
  }

  bool same_layout(const PruneMask& o) const {
    if (layers_.size() != o.layers_.size() || prunable_ != o.prunable_) return false;
    for (std::size_t m = 0; m < layers_.size(); ++m)
      if (layers_[m].size() != o.layers_[m].size()) return false;
    return true;
  }

  bool matches(const ArchSpec& arch) const { return same_layout(all_ones(arch)); }

  /// Bitwise this <= other.
  bool subset_of(const PruneMask& o) const {
    if (!same_layout(o)) return false;
    for (std::size_t m = 0; m < layers_.size(); ++m)
      if ((layers_[m] && !o.layers_[m]).any()) return false;
    return true;
  }

  bool operator==(const PruneMask& o) const {
    if (!same_layout(o)) return false;
    for (std::size_t m = 0; m < layers_.size(); ++m)
      if ((layers_[m] != o.layers_[m]).any()) return false;
    return true;
  }

 private:
  static PruneMask filled(const ArchSpec& arch, bool value) {
    PruneMask m;
    for (const auto& l : arch.dense_layers()) {
      m.layers_.push_back(LayerMask::Constant(static_cast<Eigen::Index>(l.groups), value));
      m.prunable_.push_back(l.prunable);
    }
    return m;
  }

  std::vector<LayerMask> layers_;
  std::vector<bool> prunable_;
};

/// Per-layer group scores s(m); all entries are p-norms, hence non-negative.
struct ScoreVector {
  std::vector<Eigen::VectorXd> layers;

  /// Model-wide concatenation s = [s(1); ...; s(M)].
  Eigen::VectorXd concatenated() const {
    Eigen::Index n = 0;
    for (const auto& s : layers) n += s.size();
    Eigen::VectorXd out(n);
    Eigen::Index at = 0;
    for (const auto& s : layers) {
      out.segment(at, s.size()) = s;
      at += s.size();
    }
    return out;
  }
};

/// Averaged mask: per-group keep-vote counts over `nodes` masks.
struct VoteHistogram {
  std::vector<Eigen::ArrayXi> votes;
  std::vector<bool> prunable;
  int nodes = 0;

  Eigen::ArrayXd fraction(std::size_t m) const { return votes.at(m).cast<double>() / static_cast<double>(nodes); }
};

}  // namespace mpfl
