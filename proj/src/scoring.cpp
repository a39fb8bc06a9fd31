#include "mpfl/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mpfl {

namespace {

// Live indices sorted ascending by (score, index): the front is pruned first.
std::vector<Eigen::Index> ranked_live(const Eigen::VectorXd& scores, const LayerMask& frozen) {
  std::vector<Eigen::Index> live;
  for (Eigen::Index l = 0; l < scores.size(); ++l)
    if (!frozen(l)) live.push_back(l);
  std::stable_sort(live.begin(), live.end(), [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });
  return live;
}

void check_sparsity(double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0)) throw ConfigError("sparsity must lie in [0, 1)");
}

}  // namespace

std::size_t nearest_rank_count(double sparsity, std::size_t live) {
  check_sparsity(sparsity);
  // 1e-9 absorbs representation error such as 0.1 * 10 landing just above 1.
  const double r = std::ceil(sparsity * static_cast<double>(live) - 1e-9);
  return std::min(live, static_cast<std::size_t>(std::max(0.0, r)));
}

LayerThreshold layer_threshold(const Eigen::VectorXd& scores, double sparsity, const LayerMask& frozen) {
  if (frozen.size() != scores.size()) throw ConfigError("threshold: frozen bits do not match scores");
  const auto live = ranked_live(scores, frozen);
  LayerThreshold th;
  if (live.empty()) {
    th.all_frozen = true;
    nearest_rank_count(sparsity, 0);
    return th;
  }
  th.prune_count = nearest_rank_count(sparsity, live.size());
  th.value = scores(live[th.prune_count == 0 ? 0 : th.prune_count - 1]);
  return th;
}

PruneMask compute_mask(const ScoreVector& scores, double sparsity, const PruneMask& prev, const MaskOptions& opt) {
  check_sparsity(sparsity);
  if (scores.layers.size() != prev.layer_count()) throw ConfigError("mask: score layers do not match mask layout");
  PruneMask out = prev;
  for (std::size_t m = 0; m < prev.layer_count(); ++m) {
    const auto& s = scores.layers[m];
    if (s.size() != prev.layer(m).size()) throw ConfigError("mask: score length does not match layer groups");
    if (!prev.prunable(m) || sparsity == 0.0) continue;
    const LayerMask frozen = !prev.layer(m);
    const auto live = ranked_live(s, frozen);
    const std::size_t keep_floor = std::min(opt.min_keep, live.size());
    const std::size_t prune = std::min(nearest_rank_count(sparsity, live.size()), live.size() - keep_floor);
    for (std::size_t i = 0; i < prune; ++i) out.layer(m)(live[i]) = false;
  }
  return out;
}

}  // namespace mpfl
