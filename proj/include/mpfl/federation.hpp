#pragma once

// Mask voting at the parameter server, FedAvg, and the per-node training state
// used by the pruning and final-FL phases.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mpfl/data.hpp"
#include "mpfl/mask.hpp"
#include "mpfl/model.hpp"
#include "mpfl/scoring.hpp"

namespace mpfl {

/// Element-wise mean of equally-shaped masks, stored as vote counts.
VoteHistogram average_mask(std::span<const PruneMask> masks);

/// Per layer, keep the K(m) prev-kept groups with the most votes; equal vote
/// counts keep the lower index. Non-prunable layers are copied from prev.
PruneMask consensus_topk(const VoteHistogram& hist, const std::vector<std::size_t>& keep_budget,
                         const PruneMask& prev, std::size_t min_keep = 1);

/// Keep a prev-kept group iff its vote fraction reaches `agreement`. If a layer
/// ends below min_keep, its highest-voted prev-kept groups are restored.
PruneMask consensus_histogram(const VoteHistogram& hist, double agreement, const PruneMask& prev,
                              std::size_t min_keep = 1);

/// Coordinate-wise mean.
template <typename Scalar>
ModelParams<Scalar> fedavg(std::span<const ModelParams<Scalar>> models) {
  if (models.empty()) throw ConfigError("fedavg: no models");
  ModelParams<Scalar> sum = models.front();
  for (std::size_t i = 1; i < models.size(); ++i) sum += models[i];
  sum *= Scalar(1) / static_cast<Scalar>(models.size());
  return sum;
}

template <typename Scalar>
ModelParams<Scalar> fedavg(const std::vector<ModelParams<Scalar>>& models) {
  return fedavg(std::span<const ModelParams<Scalar>>(models));
}

enum class ConsensusStrategy { topk, histogram };

struct ConsensusParams {
  ConsensusStrategy strategy = ConsensusStrategy::topk;
  double agreement = 0.9;
  std::size_t min_keep = 1;
};

/// Keep budget K(m) for a round that prunes `increment` of each layer's survivors.
/// Equals the keep count a node produces from `prev` with compute_mask.
std::vector<std::size_t> round_budget(const PruneMask& prev, double increment, std::size_t min_keep);

/// average_mask, then the selected consensus, then the K(m) cap; never regrows `prev`.
PruneMask ps_round(std::span<const PruneMask> masks, const ConsensusParams& params,
                   const std::vector<std::size_t>& keep_budget, const PruneMask& prev);

enum class Phase { pruning, final_fl };

struct RoundState {
  std::uint32_t round = 0;
  PruneMask global;
  Phase phase = Phase::pruning;
  std::vector<PruneMask> last_seen;       // per node, last uploaded mask
  std::vector<std::size_t> keep_budget;   // K(m) of the most recent pruning round
};

/// PS-side reducer over one round's masks. Runs the schedule's increments in
/// order and flips to the final-FL phase exactly once, after the last one.
class ParameterServer {
 public:
  ParameterServer(const ArchSpec& arch, std::size_t nodes, ConsensusParams params, std::vector<double> schedule);

  const RoundState& state() const noexcept { return state_; }
  const ConsensusParams& params() const noexcept { return params_; }
  double next_increment() const;

  /// Consumes all N node masks for the current round and returns the new global mask.
  const PruneMask& reduce_masks(std::span<const PruneMask> masks);

 private:
  ConsensusParams params_;
  std::vector<double> schedule_;
  std::size_t nodes_;
  RoundState state_;
};

enum class ScoreMode { weight, gradient };

struct NodeOptions {
  TrainOptions train;
  ScoreMode scoring = ScoreMode::weight;
  NormOrder norm = NormOrder::l2;
  MaskOptions mask;
};

/// One edge device: private shard, local weights, own RNG stream.
class Node {
 public:
  /// The RNG stream defaults to the node id; pass `stream` to share one across nodes.
  Node(Shard shard, Model initial, NodeOptions options, std::uint64_t seed, std::optional<std::uint64_t> stream = {});

  int id() const noexcept { return shard_.node; }
  const Shard& shard() const noexcept { return shard_; }
  const Model& weights() const noexcept { return weights_; }
  void set_weights(Model w) { weights_ = std::move(w); }
  bool flagged() const noexcept { return flagged_; }
  const NodeOptions& options() const noexcept { return options_; }

  /// Masked local training; on divergence the weights are rolled back and the node is flagged.
  TrainReport train(const PruneMask& mask);

  /// Train under `global_mask`, score, and threshold the survivors by `increment`.
  PruneMask prune_round(const PruneMask& global_mask, double increment);

 private:
  ScoreVector scores(const PruneMask& mask) const;

  Shard shard_;
  Model weights_;
  NodeOptions options_;
  Rng rng_;
  bool flagged_ = false;
};

/// Free-function form of Node::prune_round.
inline PruneMask node_round(Node& node, const PruneMask& global_mask, double increment) {
  return node.prune_round(global_mask, increment);
}

/// Standard FL on the masked model: each round every node trains locally and
/// the results are averaged and redistributed. rounds == 0 just averages the
/// current local models. The result satisfies the mask.
Model final_fl_phase(std::span<Node> nodes, const PruneMask& global_mask, int rounds);

}  // namespace mpfl
