#pragma once

// Comparison algorithms: server-side pruning of FedAvg'd weights (pruning-FL)
// and centralized train-prune-rewind on pooled data (LTH).

#include <cstdint>
#include <span>
#include <vector>

#include "mpfl/bandwidth.hpp"
#include "mpfl/data.hpp"
#include "mpfl/federation.hpp"
#include "mpfl/transport.hpp"

namespace mpfl {

struct PruningFlServer {
  Model global;
  PruneMask mask;
  NormOrder norm = NormOrder::l2;
  MaskOptions mask_options;
};

/// Nodes (already holding ps.global) train under ps.mask and upload full
/// weights; the PS averages, scores the average, prunes `increment` of each
/// layer's survivors and broadcasts the new mask (when it prunes) followed
/// by the pruned weights. increment == 0 is a plain FedAvg round.
std::pair<Model, PruneMask> pruning_fl_round(std::span<Node> nodes, PruningFlServer& ps, double increment,
                                             std::uint32_t round, Messenger& net);

/// Bits to ship `samples` raw samples of `features` values plus one label each.
std::uint64_t raw_upload_bits(std::uint64_t samples, std::uint64_t features, int feature_bits, int label_bits);

/// Charges every node's one-shot raw-data upload to round 0 of the ledger.
void charge_raw_upload(BandwidthLedger& ledger, std::span<const std::uint64_t> samples_per_node,
                       std::uint64_t features, int feature_bits, int label_bits);

struct LthOptions {
  std::vector<double> increments;
  TrainOptions train;
  int final_rounds = 0;
  NormOrder norm = NormOrder::l2;
  MaskOptions mask;
  int feature_bits = 32;
  int label_bits = 8;
};

struct LthStage {
  std::uint32_t round = 0;
  Model model;
  PruneMask mask;
};

struct LthResult {
  Model model;
  PruneMask mask;
  std::vector<LthStage> stages;  // round 0 = dense training, then one per increment, then retraining rounds
};

/// Centralized magnitude pruning with rewind to the initial weights after
/// every pruning step. Communication is only the raw-data upload.
LthResult lth_central(const Dataset& train, std::span<const Shard> shards, const Model& initial, const LthOptions& opt,
                      BandwidthLedger& ledger, Rng& rng);

}  // namespace mpfl
