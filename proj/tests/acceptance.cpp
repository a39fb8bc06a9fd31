// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance --only 7   one criterion

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "mpfl/baselines.hpp"
#include "mpfl/bandwidth.hpp"
#include "mpfl/experiment.hpp"
#include "mpfl/fuzz.hpp"
#include "properties.hpp"

using namespace mpfl;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig preset(const std::string& name) {
  return load_config(std::filesystem::path(MPFL_SOURCE_DIR) / "configs" / (name + ".json"));
}

std::string csv(const RunResult& r) {
  std::ostringstream out;
  write_csv(out, r.rows);
  return out.str();
}

Verdict bandwidth_arithmetic() {
  const auto dense = sum_of_products(vgg16_published_dense_expression());
  const auto mask = sum_of_products(vgg16_published_mask_expression());
  const double savings = 100.0 * (1.0 - static_cast<double>(mask) / static_cast<double>(dense));
  const bool ok = dense == 1182720 && mask == 16512 && std::abs(savings - 98.6) <= 0.05;
  return {ok, fmt("dense %llu bits, mask %llu bits, savings %.2f%%", static_cast<unsigned long long>(dense),
                  static_cast<unsigned long long>(mask), savings)};
}

Verdict lth_upload() {
  // 60K images of 32x32x3 at one byte per channel, plus a one-byte label,
  // spread over 10 nodes like the desk runs.
  BandwidthLedger ledger;
  const std::vector<std::uint64_t> per_node(10, 6000);
  charge_raw_upload(ledger, per_node, 32 * 32 * 3, 8, 8);
  const double mb = static_cast<double>(ledger.total()) / 8.0 / 1e6;
  const double expected = 17.6;
  const bool ok = std::abs(mb - expected) <= 0.01 * expected;
  return {ok, fmt("ledger %.2f MB (%llu bits), expected %.1f MB +/- 1%%", mb,
                  static_cast<unsigned long long>(ledger.total()), expected)};
}

Verdict triangle() {
  std::size_t violations = 0;
  double worst = -INFINITY;
  for (auto p : {NormOrder::l1, NormOrder::l2}) {
    const auto r = props::triangle(1000, 2024 + static_cast<int>(p), p);
    violations += r.violations;
    worst = std::max(worst, r.worst_excess);
  }
  return {violations == 0, fmt("2000 instances (p=1,2), %zu violations, worst excess %.3g", violations, worst)};
}

Verdict witness() {
  const auto w = props::witness();
  LayerMask expect_avg(2), expect_votes(2);
  expect_avg << false, true;
  expect_votes << true, false;
  const bool bits_ok = (w.mask_of_average.layer(0) == expect_avg).all() &&
                       (w.average_of_masks.layer(0) == expect_votes).all();
  const bool ok = bits_ok && !(w.mask_of_average == w.average_of_masks);
  return {ok, fmt("mask-of-average hidden=(%d,%d), average-of-masks hidden=(%d,%d)",
                  int(w.mask_of_average.layer(0)(0)), int(w.mask_of_average.layer(0)(1)),
                  int(w.average_of_masks.layer(0)(0)), int(w.average_of_masks.layer(0)(1)))};
}

Verdict gradients() {
  const auto r = gradcheck::run(100, 5);
  return {r.max_rel_error < 1e-4, fmt("100 nets, %zu coordinates, max relative error %.3g", r.coordinates,
                                      r.max_rel_error)};
}

Verdict codec() {
  const auto r = fuzz_codec(10000, 1);
  return {r.ok() && r.cases == 10000,
          fmt("%zu cases, %zu round-trip failures, %zu corrupt frames (%zu rejected, %zu accepted), %zu crashes",
              r.cases, r.roundtrip_failures, r.corrupt_frames, r.corrupt_rejected, r.corrupt_accepted,
              r.unexpected_errors)};
}

Verdict consensus_constraints() {
  std::size_t checks = 0, violations = 0;
  for (auto strategy : {ConsensusStrategy::topk, ConsensusStrategy::histogram}) {
    auto cfg = preset("mpfl_topk");
    cfg.consensus.strategy = strategy;
    const auto env = make_environment(cfg);
    std::vector<Node> nodes;
    for (const auto& s : env.shards) nodes.emplace_back(s, env.initial, env.node_options, cfg.seed);
    ParameterServer ps(env.arch, cfg.nodes, cfg.consensus, cfg.increments);
    PruneMask prev = ps.state().global;
    while (ps.state().phase == Phase::pruning) {
      const double inc = ps.next_increment();
      std::vector<PruneMask> masks;
      for (auto& n : nodes) masks.push_back(node_round(n, prev, inc));
      const PruneMask next = ps.reduce_masks(masks);
      for (std::size_t m = 0; m < next.layer_count(); ++m) {
        ++checks;
        if (next.keep_count(m) > ps.state().keep_budget[m]) ++violations;
      }
      ++checks;
      if (!next.subset_of(prev)) ++violations;
      prev = next;
    }
  }
  return {violations == 0 && checks > 0,
          fmt("10 nodes, 5 rounds, topk and histogram: %zu checks, %zu violations", checks, violations)};
}

Verdict robustness() {
  const auto r = props::adversary(1000, 77);
  return {r.mismatches == 0, fmt("%zu adversarial trials, %zu outputs differ from the honest mask", r.trials,
                                 r.mismatches)};
}

Verdict desk_experiment() {
  const auto mp = run(preset("mpfl_topk"));
  const auto fa = run(preset("fedavg"));
  const auto mpc = run(preset("mpfl_contaminated"));
  const auto pfc = run(preset("pruning_fl_contaminated"));
  const auto pf = run(preset("pruning_fl"));

  // (a) pruned MPFL against the unpruned FedAvg model.
  const double a_gap = fa.rows.back().accuracy - mp.rows.back().accuracy;
  const bool a_ok = a_gap <= 0.03;

  // (b) contaminated runs at every shared sparsity level >= 40%.
  const auto smp = summarize(mpc.rows), spf = summarize(pfc.rows);
  bool b_ok = true;
  std::size_t levels = 0;
  std::string b_detail;
  for (const auto& x : smp) {
    if (x.sparsity < 0.40) continue;
    for (const auto& y : spf)
      if (std::abs(x.sparsity - y.sparsity) < 1e-9) {
        ++levels;
        b_ok = b_ok && x.accuracy >= y.accuracy;
        b_detail += fmt(" s=%.3f mpfl %.4f pfl %.4f;", x.sparsity, x.accuracy, y.accuracy);
      }
  }
  b_ok = b_ok && levels > 0;

  // (c) MPFL mask traffic against pruning-FL weight traffic.
  std::uint64_t mask_bits_total = 0, weight_bits_total = 0;
  for (const auto& r : mp.rows)
    if (r.phase == "pruning") mask_bits_total += r.bits_up + r.bits_down;
  for (const auto& r : pf.rows)
    if (r.phase == "pruning") weight_bits_total += r.bits_up + r.bits_down;
  const double ratio = static_cast<double>(mask_bits_total) / static_cast<double>(weight_bits_total);
  const bool c_ok = ratio < 0.01;

  const std::string detail =
      fmt("(a) %s mpfl %.4f fedavg %.4f gap %.4f; ", a_ok ? "ok" : "FAIL", mp.rows.back().accuracy,
          fa.rows.back().accuracy, a_gap) +
      "(b) " + (b_ok ? "ok" : "FAIL") + b_detail +
      fmt(" (c) %s mask %llu bits vs weights %llu bits = %.4f%%", c_ok ? "ok" : "FAIL",
          static_cast<unsigned long long>(mask_bits_total), static_cast<unsigned long long>(weight_bits_total),
          100.0 * ratio);
  return {a_ok && b_ok && c_ok, detail};
}

Verdict determinism() {
  std::size_t identical = 0;
  const std::vector<std::string> names{"mpfl_topk", "mpfl_histogram_contaminated", "pruning_fl", "lth"};
  for (const auto& n : names) {
    const auto cfg = preset(n);
    identical += csv(run(cfg)) == csv(run(cfg));
  }
  return {identical == names.size(), fmt("%zu of %zu configs byte-identical across two runs", identical, names.size())};
}

struct Criterion {
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "run a single criterion");
  CLI11_PARSE(app, argc, argv);

  const std::map<int, Criterion> criteria{
      {1, {"bandwidth arithmetic", 1.0, bandwidth_arithmetic}},
      {2, {"LTH upload accounting", 1.0, lth_upload}},
      {3, {"triangle inequality", 0.0, triangle}},
      {4, {"non-linearity witness", 0.0, witness}},
      {5, {"gradient check", 30.0, gradients}},
      {6, {"codec fuzz", 0.0, codec}},
      {7, {"consensus constraints", 0.0, consensus_constraints}},
      {8, {"adversarial robustness", 0.0, robustness}},
      {9, {"desk-scale experiment", 300.0, desk_experiment}},
      {10, {"determinism", 0.0, determinism}},
  };
  if (only != 0 && !criteria.count(only)) {
    std::fprintf(stderr, "no criterion %d\n", only);
    return 2;
  }

  int failed = 0;
  for (const auto& [id, c] : criteria) {
    if (only != 0 && id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      v.pass = false;
      v.detail += fmt("; over the %.0f s budget", c.budget_s);
    }
    std::printf("%s %d %s: %s [%.2f s]\n", v.pass ? "PASS" : "FAIL", id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
