#include "mpfl/federation.hpp"

#include <algorithm>
#include <numeric>

namespace mpfl {

namespace {

// Prev-kept indices of layer m ordered by votes descending, index ascending.
std::vector<Eigen::Index> ranked_by_votes(const VoteHistogram& hist, const PruneMask& prev, std::size_t m) {
  std::vector<Eigen::Index> idx;
  const auto& votes = hist.votes[m];
  for (Eigen::Index l = 0; l < votes.size(); ++l)
    if (prev.layer(m)(l)) idx.push_back(l);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return votes(a) > votes(b); });
  return idx;
}

void check_layout(const VoteHistogram& hist, const PruneMask& prev) {
  if (hist.votes.size() != prev.layer_count() || hist.nodes < 1)
    throw ConfigError("consensus: histogram does not match mask layout");
  for (std::size_t m = 0; m < prev.layer_count(); ++m)
    if (hist.votes[m].size() != prev.layer(m).size()) throw ConfigError("consensus: histogram does not match mask layout");
}

}  // namespace

VoteHistogram average_mask(std::span<const PruneMask> masks) {
  if (masks.empty()) throw ConfigError("average_mask: no masks");
  VoteHistogram h;
  h.nodes = static_cast<int>(masks.size());
  h.prunable = masks.front().prunable_flags();
  for (std::size_t m = 0; m < masks.front().layer_count(); ++m)
    h.votes.push_back(Eigen::ArrayXi::Zero(masks.front().layer(m).size()));
  for (const auto& mask : masks) {
    if (!mask.same_layout(masks.front())) throw ConfigError("average_mask: masks have different layouts");
    for (std::size_t m = 0; m < mask.layer_count(); ++m) h.votes[m] += mask.layer(m).cast<int>();
  }
  return h;
}

PruneMask consensus_topk(const VoteHistogram& hist, const std::vector<std::size_t>& keep_budget, const PruneMask& prev,
                         std::size_t min_keep) {
  check_layout(hist, prev);
  if (keep_budget.size() != prev.layer_count()) throw ConfigError("consensus_topk: one budget per layer required");
  PruneMask out = prev;
  for (std::size_t m = 0; m < prev.layer_count(); ++m) {
    if (!prev.prunable(m)) continue;
    const std::size_t k = keep_budget[m];
    if (k > static_cast<std::size_t>(prev.layer(m).size())) throw ConfigError("consensus_topk: K(m) exceeds L(m)");
    if (k == 0 && min_keep > 0) throw ConstraintError("consensus_topk: K(m) = 0 conflicts with min_keep");
    const auto ranked = ranked_by_votes(hist, prev, m);
    out.layer(m).setConstant(false);
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.layer(m)(ranked[i]) = true;
  }
  return out;
}

PruneMask consensus_histogram(const VoteHistogram& hist, double agreement, const PruneMask& prev, std::size_t min_keep) {
  check_layout(hist, prev);
  if (!(agreement > 0.0 && agreement <= 1.0)) throw ConfigError("consensus_histogram: agreement must lie in (0, 1]");
  PruneMask out = prev;
  // Integer comparison on vote counts; the slack only absorbs agreement*N rounding.
  const double needed = agreement * hist.nodes - 1e-9;
  for (std::size_t m = 0; m < prev.layer_count(); ++m) {
    if (!prev.prunable(m)) continue;
    auto& bits = out.layer(m);
    bits = prev.layer(m) && (hist.votes[m].cast<double>() >= needed);
    const std::size_t floor = std::min<std::size_t>(min_keep, prev.keep_count(m));
    if (static_cast<std::size_t>(bits.count()) < floor) {
      for (auto l : ranked_by_votes(hist, prev, m)) {
        if (static_cast<std::size_t>(bits.count()) >= floor) break;
        bits(l) = true;
      }
    }
  }
  return out;
}

std::vector<std::size_t> round_budget(const PruneMask& prev, double increment, std::size_t min_keep) {
  std::vector<std::size_t> k;
  for (std::size_t m = 0; m < prev.layer_count(); ++m) {
    const std::size_t live = prev.keep_count(m);
    if (!prev.prunable(m)) {
      k.push_back(live);
      continue;
    }
    const std::size_t floor = std::min(min_keep, live);
    k.push_back(live - std::min(nearest_rank_count(increment, live), live - floor));
  }
  return k;
}

PruneMask ps_round(std::span<const PruneMask> masks, const ConsensusParams& params,
                   const std::vector<std::size_t>& keep_budget, const PruneMask& prev) {
  const auto hist = average_mask(masks);
  PruneMask out = params.strategy == ConsensusStrategy::topk
                      ? consensus_topk(hist, keep_budget, prev, params.min_keep)
                      : consensus_histogram(hist, params.agreement, prev, params.min_keep);
  // The histogram rule has no budget of its own; trim any layer over K(m) by votes.
  bool over = false;
  for (std::size_t m = 0; m < out.layer_count(); ++m) over = over || out.keep_count(m) > keep_budget.at(m);
  if (over) out = consensus_topk(hist, keep_budget, out, params.min_keep);
  return out;
}

ParameterServer::ParameterServer(const ArchSpec& arch, std::size_t nodes, ConsensusParams params,
                                 std::vector<double> schedule)
    : params_(params), schedule_(std::move(schedule)), nodes_(nodes) {
  if (nodes == 0) throw ConfigError("parameter server: need at least one node");
  state_.global = PruneMask::all_ones(arch);
  state_.last_seen.assign(nodes, state_.global);
  if (schedule_.empty()) state_.phase = Phase::final_fl;
}

double ParameterServer::next_increment() const {
  return state_.round < schedule_.size() ? schedule_[state_.round] : 0.0;
}

const PruneMask& ParameterServer::reduce_masks(std::span<const PruneMask> masks) {
  if (state_.phase != Phase::pruning) throw ConfigError("parameter server: pruning phase is over");
  if (masks.size() != nodes_) throw ConfigError("parameter server: expected one mask per node");
  state_.keep_budget = round_budget(state_.global, next_increment(), params_.min_keep);
  state_.global = ps_round(masks, params_, state_.keep_budget, state_.global);
  std::copy(masks.begin(), masks.end(), state_.last_seen.begin());
  ++state_.round;
  if (state_.round == schedule_.size()) state_.phase = Phase::final_fl;
  return state_.global;
}

Node::Node(Shard shard, Model initial, NodeOptions options, std::uint64_t seed, std::optional<std::uint64_t> stream)
    : shard_(std::move(shard)), weights_(std::move(initial)), options_(options),
      rng_(Rng::derive(seed, stream.value_or(static_cast<std::uint64_t>(shard_.node)))) {}

TrainReport Node::train(const PruneMask& mask) {
  Model before = weights_;
  auto report = train_masked(weights_, mask, shard_.features, std::span<const int>(shard_.labels), options_.train, rng_);
  if (report.diverged) {
    weights_ = apply_mask(std::move(before), mask);
    flagged_ = true;
  }
  return report;
}

ScoreVector Node::scores(const PruneMask& mask) const {
  if (options_.scoring == ScoreMode::weight) return weight_scores(weights_, options_.norm);
  Batch<double> all{shard_.features, shard_.labels};
  return gradient_scores(masked_backward(weights_, mask, all), options_.norm);
}

PruneMask Node::prune_round(const PruneMask& global_mask, double increment) {
  const auto report = train(global_mask);
  if (report.diverged) return global_mask;
  return compute_mask(scores(global_mask), increment, global_mask, options_.mask);
}

Model final_fl_phase(std::span<Node> nodes, const PruneMask& global_mask, int rounds) {
  if (nodes.empty()) throw ConfigError("final_fl_phase: no nodes");
  std::vector<Model> local;
  auto gather = [&] {
    local.clear();
    for (const auto& n : nodes) local.push_back(apply_mask(n.weights(), global_mask));
    return fedavg(local);
  };
  if (rounds <= 0) return gather();
  Model global;
  for (int r = 0; r < rounds; ++r) {
    for (auto& n : nodes) n.train(global_mask);
    global = gather();
    for (auto& n : nodes) n.set_weights(global);
  }
  return global;
}

}  // namespace mpfl
