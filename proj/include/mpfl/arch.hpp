#pragma once

#include <cstddef>
#include <vector>

#include "mpfl/errors.hpp"

namespace mpfl {

enum class LayerKind { dense, activation };

/// One layer of a feed-forward network. Dense layers own `groups` prunable
/// weight groups (one per output neuron), each holding `group_size` scalars:
/// the neuron's incoming weights plus its bias.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::size_t groups = 0;
  std::size_t group_size = 0;
  bool prunable = true;

  static LayerSpec dense(std::size_t in, std::size_t out, bool prunable = true) {
    return {LayerKind::dense, in, out, out, in + 1, prunable};
  }
  static LayerSpec relu(std::size_t dim) { return {LayerKind::activation, dim, dim, 0, 0, false}; }

  bool operator==(const LayerSpec&) const = default;
};

/// Network layout: dense layers separated by ReLU activations, softmax head.
class ArchSpec {
 public:
  ArchSpec() = default;
  explicit ArchSpec(std::vector<LayerSpec> layers) : layers_(std::move(layers)) { validate(); }

  /// dims = {input, hidden..., classes}. The output layer is prunable only if asked.
  static ArchSpec from_dims(const std::vector<std::size_t>& dims, bool prune_output = false) {
    if (dims.size() < 2) throw ConfigError("arch: need at least input and output dims");
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const bool last = i + 2 == dims.size();
      layers.push_back(LayerSpec::dense(dims[i], dims[i + 1], !last || prune_output));
      if (!last) layers.push_back(LayerSpec::relu(dims[i + 1]));
    }
    return ArchSpec(std::move(layers));
  }

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

  /// Dense layers only, in order; these are the layers that carry mask bits.
  std::vector<LayerSpec> dense_layers() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_)
      if (l.kind == LayerKind::dense) out.push_back(l);
    return out;
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }

  /// Total scalar parameter count d.
  std::size_t parameter_count() const {
    std::size_t d = 0;
    for (const auto& l : layers_) d += l.groups * l.group_size;
    return d;
  }

  /// Total number of mask bits, sum of L(m).
  std::size_t group_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.groups;
    return n;
  }

  bool operator==(const ArchSpec&) const = default;

 private:
  void validate() const {
    if (layers_.empty()) throw ConfigError("arch: no layers");
    if (layers_.front().kind != LayerKind::dense) throw ConfigError("arch: first layer must be dense");
    if (layers_.back().kind != LayerKind::dense) throw ConfigError("arch: last layer must be dense");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.in_dim == 0 || l.out_dim == 0) throw ConfigError("arch: zero-width layer");
      if (l.kind == LayerKind::dense) {
        if (l.groups != l.out_dim || l.group_size != l.in_dim + 1)
          throw ConfigError("arch: dense layer groups must equal out_dim with group_size in_dim+1");
      } else if (l.in_dim != l.out_dim || l.groups != 0) {
        throw ConfigError("arch: activation layers are shape-preserving and hold no weights");
      }
      if (i > 0 && layers_[i - 1].out_dim != l.in_dim) throw ConfigError("arch: adjacent layer dims do not chain");
    }
  }

  std::vector<LayerSpec> layers_;
};

}  // namespace mpfl
