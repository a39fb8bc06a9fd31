#pragma once

// Randomized property harnesses shared by the unit tests and the acceptance run.

#include <algorithm>
#include <vector>

#include "mpfl/federation.hpp"
#include "mpfl/scoring.hpp"

namespace props {

using namespace mpfl;

struct TriangleResult {
  std::size_t instances = 0;
  std::size_t violations = 0;
  double worst_excess = 0.0;  // max of score(mean) - mean(scores)
};

/// Random groups from N <= 10 nodes, group size <= 64: the score of the averaged
/// group never exceeds the average of the per-node scores.
inline TriangleResult triangle(std::size_t instances, std::uint64_t seed, NormOrder p, double tol = 1e-12) {
  Rng rng(seed);
  TriangleResult r;
  for (std::size_t t = 0; t < instances; ++t) {
    const auto n = 1 + rng.below(10);
    const auto inputs = 1 + rng.below(63);  // group size = inputs + bias <= 64
    const auto groups = 1 + rng.below(4);
    const ArchSpec arch = ArchSpec::from_dims({inputs, groups}, true);
    std::vector<Model> models;
    const double scale = std::pow(10.0, rng.uniform(-3, 3));
    for (std::uint64_t i = 0; i < n; ++i) {
      Model m(arch);
      for (Eigen::Index k = 0; k < m.layer(0).weight.size(); ++k) m.layer(0).weight.data()[k] = scale * rng.normal();
      for (Eigen::Index k = 0; k < m.layer(0).bias.size(); ++k) m.layer(0).bias(k) = scale * rng.normal();
      models.push_back(std::move(m));
    }
    const Eigen::VectorXd of_mean = weight_scores(fedavg(models), p).concatenated();
    Eigen::VectorXd mean_of = Eigen::VectorXd::Zero(of_mean.size());
    for (const auto& m : models) mean_of += weight_scores(m, p).concatenated();
    mean_of /= static_cast<double>(n);
    const double excess = (of_mean - mean_of).maxCoeff();
    r.worst_excess = std::max(r.worst_excess, excess);
    if (excess > tol) ++r.violations;
    ++r.instances;
  }
  return r;
}

/// Two nodes, one hidden layer of two neurons fed by a single input. Hidden
/// groups (weight, bias): node A (1, 0), (0, 0.5); node B (-0.9, 0), (0, 1.0).
/// At sparsity 0.5 the mask of the averaged model keeps neuron 1, while top-K
/// voting over the two node masks keeps neuron 0.
struct Witness {
  PruneMask mask_of_average;
  PruneMask average_of_masks;
};

inline std::vector<Model> witness_models() {
  const ArchSpec arch = ArchSpec::from_dims({1, 2, 2});
  Model a(arch), b(arch);
  a.layer(0).weight << 1.0, 0.0;
  a.layer(0).bias << 0.0, 0.5;
  b.layer(0).weight << -0.9, 0.0;
  b.layer(0).bias << 0.0, 1.0;
  for (auto* m : {&a, &b}) {
    m->layer(1).weight << 1.0, -1.0, -1.0, 1.0;
  }
  return {a, b};
}

inline Witness witness() {
  const auto models = witness_models();
  const ArchSpec& arch = models[0].arch();
  const PruneMask all = PruneMask::all_ones(arch);
  Witness w;
  w.mask_of_average = compute_mask(weight_scores(fedavg(models)), 0.5, all);
  std::vector<PruneMask> masks;
  for (const auto& m : models) masks.push_back(compute_mask(weight_scores(m), 0.5, all));
  const ConsensusParams topk{ConsensusStrategy::topk, 0.9, 1};
  w.average_of_masks = ps_round(masks, topk, round_budget(all, 0.5, 1), all);
  return w;
}

struct AdversaryResult {
  std::size_t trials = 0;
  std::size_t mismatches = 0;
};

/// N = 10: nine honest nodes share one mask, the tenth sends random bits.
/// Histogram consensus at `agreement` must return the honest mask.
inline AdversaryResult adversary(std::size_t trials, std::uint64_t seed, double agreement = 0.9) {
  Rng rng(seed);
  AdversaryResult r;
  const ConsensusParams params{ConsensusStrategy::histogram, agreement, 1};
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<std::size_t> dims{1 + rng.below(8)};
    const auto depth = 1 + rng.below(3);
    for (std::uint64_t i = 0; i < depth; ++i) dims.push_back(1 + rng.below(40));
    dims.push_back(2 + rng.below(5));
    const ArchSpec arch = ArchSpec::from_dims(dims);

    // Previous global mask: a random earlier pruning state.
    auto random_scores = [&] {
      ScoreVector s;
      for (const auto& l : arch.dense_layers()) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(l.groups));
        for (auto& x : v) x = rng.uniform();
        s.layers.push_back(v);
      }
      return s;
    };
    const PruneMask prev = compute_mask(random_scores(), rng.uniform(0.0, 0.6), PruneMask::all_ones(arch));
    const double inc = rng.uniform(0.0, 0.5);
    const PruneMask honest = compute_mask(random_scores(), inc, prev);

    PruneMask evil = PruneMask::all_zeros(arch);
    for (std::size_t m = 0; m < evil.layer_count(); ++m)
      for (Eigen::Index l = 0; l < evil.layer(m).size(); ++l) evil.layer(m)(l) = rng.below(2) == 1;

    std::vector<PruneMask> masks(9, honest);
    masks.insert(masks.begin() + static_cast<std::ptrdiff_t>(rng.below(10)), evil);
    const PruneMask out = ps_round(masks, params, round_budget(prev, inc, 1), prev);
    if (!(out == honest)) ++r.mismatches;
    ++r.trials;
  }
  return r;
}

}  // namespace props
