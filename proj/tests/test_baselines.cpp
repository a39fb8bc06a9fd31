#include <gtest/gtest.h>

#include "mpfl/baselines.hpp"

using namespace mpfl;

namespace {

std::vector<Shard> blob_shards(std::size_t nodes, std::size_t samples, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.samples = samples;
  spec.features = 8;
  spec.classes = 4;
  spec.separation = 1.5;
  spec.seed = seed;
  return partition_iid(load(spec), nodes, seed);
}

const ArchSpec kArch = ArchSpec::from_dims({8, 24, 12, 4});

Model initial(std::uint64_t seed) {
  Rng rng(seed);
  return Model::initialized(kArch, rng);
}

std::vector<Node> make_nodes(const std::vector<Shard>& shards, const Model& w0, std::optional<std::uint64_t> stream = {}) {
  std::vector<Node> nodes;
  for (const auto& s : shards) nodes.emplace_back(s, w0, NodeOptions{}, 5, stream);
  return nodes;
}

Messenger messenger(std::size_t n, BandwidthLedger& ledger) {
  return Messenger(make_loopback_transport(n), CodecOptions{kArch, 64, false, true}, ledger);
}

}  // namespace

TEST(RawUpload, ArithmeticOracle) {
  EXPECT_EQ(raw_upload_bits(1000, 64, 32, 8), 1000u * 64 * 32 + 1000u * 8);
  EXPECT_EQ(raw_upload_bits(0, 64, 32, 8), 0u);
  BandwidthLedger ledger;
  const std::vector<std::uint64_t> sizes{10, 20};
  charge_raw_upload(ledger, sizes, 4, 32, 8);
  EXPECT_EQ(ledger.entry(0, 0, Direction::up), 10u * (4 * 32 + 8));
  EXPECT_EQ(ledger.entry(1, 0, Direction::up), 20u * (4 * 32 + 8));
  EXPECT_EQ(ledger.total(Direction::down), 0u);
}

TEST(Lth, NoPruningRoundsIsPlainCentralTraining) {
  const auto shards = blob_shards(3, 300, 1);
  Dataset pooled;
  pooled.features.resize(0, 8);
  Eigen::MatrixXd x(300, 8);
  std::vector<int> y;
  Eigen::Index row = 0;
  for (const auto& s : shards) {
    x.middleRows(row, s.features.rows()) = s.features;
    row += s.features.rows();
    y.insert(y.end(), s.labels.begin(), s.labels.end());
  }
  pooled.features = x;
  pooled.labels = y;

  LthOptions opt;
  opt.train = TrainOptions{0.05, 2, 16};
  BandwidthLedger ledger;
  Rng a(9), b(9);
  const auto out = lth_central(pooled, shards, initial(2), opt, ledger, a);
  Model ref = initial(2);
  train_masked(ref, PruneMask::all_ones(kArch), x, std::span<const int>(y), opt.train, b);
  EXPECT_EQ(out.model, ref);
  EXPECT_EQ(out.mask, PruneMask::all_ones(kArch));
  EXPECT_EQ(out.stages.size(), 1u);
  EXPECT_EQ(ledger.total(), raw_upload_bits(300, 8, 32, 8));
}

TEST(Lth, RewindsAndCompounds) {
  const auto shards = blob_shards(2, 200, 3);
  Dataset pooled;
  pooled.features = Eigen::MatrixXd::Zero(200, 8);
  LthOptions opt;
  opt.increments = {0.5, 0.5};
  BandwidthLedger ledger;
  Rng rng(1);
  const auto out = lth_central(pooled, shards, initial(3), opt, ledger, rng);
  ASSERT_EQ(out.stages.size(), 3u);
  EXPECT_EQ(out.mask.keep_count(0), 6u);
  EXPECT_EQ(out.mask.keep_count(1), 3u);
  EXPECT_TRUE(out.stages[2].mask.subset_of(out.stages[1].mask));
  EXPECT_EQ(apply_mask(out.model, out.mask), out.model);
}

TEST(PruningFl, ZeroIncrementIsFedAvg) {
  const auto shards = blob_shards(4, 400, 4);
  const Model w0 = initial(4);
  auto nodes = make_nodes(shards, w0);
  auto ref_nodes = make_nodes(shards, w0);
  BandwidthLedger ledger;
  auto net = messenger(4, ledger);
  PruningFlServer ps{w0, PruneMask::all_ones(kArch)};
  const auto [model, mask] = pruning_fl_round(nodes, ps, 0.0, 1, net);
  EXPECT_EQ(mask, PruneMask::all_ones(kArch));
  EXPECT_EQ(model, final_fl_phase(ref_nodes, PruneMask::all_ones(kArch), 1));
  // Weights only: N uploads and N broadcasts of the dense model.
  EXPECT_EQ(ledger.total(), 8u * kArch.parameter_count() * 64);
}

TEST(PruningFl, SingleNodeMatchesMpfl) {
  const auto shards = blob_shards(1, 200, 5);
  const Model w0 = initial(5);
  auto pf_nodes = make_nodes(shards, w0);
  auto mp_nodes = make_nodes(shards, w0);
  BandwidthLedger ledger;
  auto net = messenger(1, ledger);
  PruningFlServer ps{w0, PruneMask::all_ones(kArch)};
  ParameterServer server(kArch, 1, {}, {0.2, 0.2, 0.2});
  for (std::uint32_t r = 1; r <= 3; ++r) {
    const auto [model, pf_mask] = pruning_fl_round(pf_nodes, ps, 0.2, r, net);
    const std::vector<PruneMask> masks{node_round(mp_nodes[0], server.state().global, 0.2)};
    const PruneMask& mp_mask = server.reduce_masks(masks);
    EXPECT_EQ(pf_mask, mp_mask) << "round " << r;
    // MPFL keeps the node's weights local; rewind them to the server's copy so
    // both runs score the same model next round.
    mp_nodes[0].set_weights(model);
  }
}

TEST(PruningFl, UnanimousSymmetricInstanceMatchesMpfl) {
  const auto shard = blob_shards(1, 150, 6)[0];
  std::vector<Shard> shards(3, shard);
  for (int n = 0; n < 3; ++n) shards[static_cast<std::size_t>(n)].node = n;
  const Model w0 = initial(6);
  auto pf_nodes = make_nodes(shards, w0, 0);
  auto mp_nodes = make_nodes(shards, w0, 0);
  BandwidthLedger ledger;
  auto net = messenger(3, ledger);
  PruningFlServer ps{w0, PruneMask::all_ones(kArch)};
  const auto [model, pf_mask] = pruning_fl_round(pf_nodes, ps, 0.3, 1, net);
  std::vector<PruneMask> masks;
  for (auto& n : mp_nodes) masks.push_back(node_round(n, PruneMask::all_ones(kArch), 0.3));
  EXPECT_EQ(masks[0], masks[1]);
  EXPECT_EQ(masks[1], masks[2]);
  ParameterServer server(kArch, 3, {}, {0.3});
  EXPECT_EQ(server.reduce_masks(masks), pf_mask);
}

TEST(PruningFl, MaskBroadcastPrecedesWeights) {
  const auto shards = blob_shards(2, 100, 7);
  const Model w0 = initial(7);
  auto nodes = make_nodes(shards, w0);
  BandwidthLedger ledger;
  auto net = messenger(2, ledger);
  PruningFlServer ps{w0, PruneMask::all_ones(kArch)};
  const auto [model, mask] = pruning_fl_round(nodes, ps, 0.25, 1, net);
  EXPECT_EQ(mask.keep_count(0), 18u);
  EXPECT_EQ(apply_mask(model, mask), model);
  for (const auto& n : nodes) EXPECT_EQ(n.weights(), model);
  // Down: the mask, then the weights compacted under it.
  std::uint64_t kept = 0;
  const auto dense = kArch.dense_layers();
  for (std::size_t m = 0; m < dense.size(); ++m) kept += mask.keep_count(m) * dense[m].group_size;
  EXPECT_EQ(ledger.entry(0, 1, Direction::down), encode_mask(mask).size() * 8 + kept * 64);
}
