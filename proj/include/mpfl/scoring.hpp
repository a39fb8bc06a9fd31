#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>

#include "mpfl/mask.hpp"
#include "mpfl/model.hpp"

namespace mpfl {

enum class NormOrder { l1 = 1, l2 = 2 };

/// p-norm of every weight group (incoming weights and bias), per dense layer.
template <typename Scalar>
ScoreVector weight_scores(const ModelParams<Scalar>& model, NormOrder p = NormOrder::l2) {
  ScoreVector s;
  for (const auto& layer : model.layers()) {
    const Eigen::ArrayXXd w = layer.weight.template cast<double>().array().abs();
    const Eigen::ArrayXd b = layer.bias.template cast<double>().array().abs();
    if (p == NormOrder::l1)
      s.layers.emplace_back((w.rowwise().sum() + b).matrix());
    else
      s.layers.emplace_back((w.square().rowwise().sum() + b.square()).sqrt().matrix());
  }
  return s;
}

/// Same norms taken over a gradient of the model.
template <typename Scalar>
ScoreVector gradient_scores(const Gradients<Scalar>& grads, NormOrder p = NormOrder::l2) {
  return weight_scores(grads, p);
}

template <typename Scalar>
ScoreVector gradient_scores(const Gradients<Scalar>& grads, const ArchSpec& arch, NormOrder p = NormOrder::l2) {
  if (!(grads.arch() == arch)) throw ConfigError("scores: gradient shape does not match architecture");
  return weight_scores(grads, p);
}

struct LayerThreshold {
  double value = 0.0;          // th(m)
  std::size_t prune_count = 0; // groups that fall at or below the cut
  bool all_frozen = false;     // nothing left to rank; value is 0
};

/// Nearest-rank `sparsity` quantile of the scores whose `frozen` bit is false.
/// prune_count = ceil(sparsity * live), and the threshold is the score of the
/// prune_count-th smallest live group (the smallest live score when 0).
LayerThreshold layer_threshold(const Eigen::VectorXd& scores, double sparsity, const LayerMask& frozen);

/// Number of groups pruned out of `live` at `sparsity`, before the min_keep floor.
std::size_t nearest_rank_count(double sparsity, std::size_t live);

struct MaskOptions {
  std::size_t min_keep = 1;
};

/// Per-layer threshold masking on top of `prev`: a group survives iff it is
/// kept in `prev` and ranks above the cut. Among equal scores at the cut the
/// lower index is pruned first. Layers never drop below min_keep survivors
/// and non-prunable layers are copied from `prev`.
PruneMask compute_mask(const ScoreVector& scores, double sparsity, const PruneMask& prev, const MaskOptions& opt = {});

}  // namespace mpfl
