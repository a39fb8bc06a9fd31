#include "mpfl/baselines.hpp"

#include <variant>

namespace mpfl {

namespace {

template <typename T>
T expect(DecodedMessage&& d, const char* what) {
  if (auto* m = std::get_if<T>(&d.message)) return std::move(*m);
  throw TransportError(std::string("unexpected message, wanted ") + what);
}

}  // namespace

std::pair<Model, PruneMask> pruning_fl_round(std::span<Node> nodes, PruningFlServer& ps, double increment,
                                             std::uint32_t round, Messenger& net) {
  for (auto& node : nodes) {
    node.train(ps.mask);
    net.to_ps(node.id(), round, WeightUpload{node.id(), apply_mask(node.weights(), ps.mask)});
  }
  std::vector<Model> uploads;
  for (auto& node : nodes) uploads.push_back(expect<WeightUpload>(net.recv_at_ps(node.id()), "WeightUpload").weights);

  Model avg = apply_mask(fedavg(uploads), ps.mask);
  if (increment > 0.0) {
    ps.mask = compute_mask(weight_scores(avg, ps.norm), increment, ps.mask, ps.mask_options);
    avg = apply_mask(std::move(avg), ps.mask);
  }
  ps.global = avg;

  for (auto& node : nodes) {
    if (increment > 0.0) net.to_node(node.id(), round, GlobalMask{ps.mask});
    net.to_node(node.id(), round, GlobalWeights{ps.global});
  }
  for (auto& node : nodes) {
    if (increment > 0.0) expect<GlobalMask>(net.recv_at_node(node.id()), "GlobalMask");
    node.set_weights(expect<GlobalWeights>(net.recv_at_node(node.id()), "GlobalWeights").weights);
  }
  return {ps.global, ps.mask};
}

std::uint64_t raw_upload_bits(std::uint64_t samples, std::uint64_t features, int feature_bits, int label_bits) {
  if (feature_bits <= 0 || label_bits < 0) throw ConfigError("upload: bit widths must be positive");
  return samples * (features * static_cast<std::uint64_t>(feature_bits) + static_cast<std::uint64_t>(label_bits));
}

void charge_raw_upload(BandwidthLedger& ledger, std::span<const std::uint64_t> samples_per_node,
                       std::uint64_t features, int feature_bits, int label_bits) {
  for (std::size_t n = 0; n < samples_per_node.size(); ++n)
    ledger.record(static_cast<int>(n), 0, Direction::up,
                  raw_upload_bits(samples_per_node[n], features, feature_bits, label_bits));
}

LthResult lth_central(const Dataset& train, std::span<const Shard> shards, const Model& initial, const LthOptions& opt,
                      BandwidthLedger& ledger, Rng& rng) {
  std::vector<std::uint64_t> sizes;
  for (const auto& s : shards) sizes.push_back(s.labels.size());
  charge_raw_upload(ledger, sizes, static_cast<std::uint64_t>(train.features.cols()), opt.feature_bits, opt.label_bits);

  // Pool exactly what the nodes uploaded, contamination included.
  Eigen::MatrixXd x(train.features.rows(), train.features.cols());
  std::vector<int> y;
  Eigen::Index row = 0;
  for (const auto& s : shards) {
    x.middleRows(row, s.features.rows()) = s.features;
    row += s.features.rows();
    y.insert(y.end(), s.labels.begin(), s.labels.end());
  }
  x.conservativeResize(row, Eigen::NoChange);

  LthResult out;
  std::uint32_t round = 0;
  PruneMask mask = PruneMask::all_ones(initial.arch());
  Model model = initial;
  train_masked(model, mask, x, std::span<const int>(y), opt.train, rng);
  out.stages.push_back({round++, model, mask});

  for (double inc : opt.increments) {
    mask = compute_mask(weight_scores(model, opt.norm), inc, mask, opt.mask);
    model = apply_mask(initial, mask);
    train_masked(model, mask, x, std::span<const int>(y), opt.train, rng);
    out.stages.push_back({round++, model, mask});
  }
  for (int r = 0; r < opt.final_rounds; ++r) {
    train_masked(model, mask, x, std::span<const int>(y), opt.train, rng);
    out.stages.push_back({round++, model, mask});
  }
  out.model = std::move(model);
  out.mask = std::move(mask);
  return out;
}

}  // namespace mpfl
