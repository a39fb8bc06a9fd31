#pragma once

// End-to-end runs of MPFL and the comparison algorithms, producing one metrics
// row per round.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mpfl/bandwidth.hpp"
#include "mpfl/config.hpp"
#include "mpfl/data.hpp"
#include "mpfl/federation.hpp"

namespace mpfl {

struct MetricsRow {
  std::string run;
  std::string algorithm;
  std::size_t num_nodes = 0;
  std::uint32_t round = 0;
  std::string phase;  // "init", "pruning", "final" or "central"
  double sparsity = 0.0;
  double accuracy = 0.0;
  std::uint64_t bits_up = 0;
  std::uint64_t bits_down = 0;
  std::uint64_t bits_up_max_node = 0;
  std::uint64_t bits_down_max_node = 0;
  std::uint64_t cumulative_bits = 0;
};

/// "run,algorithm,num_nodes,round,phase,sparsity,accuracy,bits_up,bits_down,
///  bits_up_max_node,bits_down_max_node,cumulative_bits"
const std::string& metrics_header();
std::string to_csv_line(const MetricsRow& row);
void write_csv(std::ostream& out, std::span<const MetricsRow> rows);

/// Everything a run derives from its config before the first round.
struct Environment {
  ArchSpec arch;
  Dataset train;
  Dataset test;
  std::vector<Shard> shards;
  Model initial;
  NodeOptions node_options;
};

Environment make_environment(const ExperimentConfig& cfg);

struct RunResult {
  std::vector<MetricsRow> rows;
  Model model;
  PruneMask mask;
  BandwidthLedger ledger;
  std::vector<int> flagged_nodes;
};

/// Runs cfg.algorithm. Round 0 is the initial weight broadcast (or the raw
/// upload for LTH). Failures inside a round are rethrown as RunError.
RunResult run(const ExperimentConfig& cfg);

RunResult run_mpfl(const ExperimentConfig& cfg, const Environment& env);
RunResult run_pruning_fl(const ExperimentConfig& cfg, const Environment& env);
RunResult run_fedavg(const ExperimentConfig& cfg, const Environment& env);
RunResult run_lth(const ExperimentConfig& cfg, const Environment& env);

/// Accuracy of the last row at each distinct sparsity level of one run.
struct SummaryRow {
  std::string run;
  std::string algorithm;
  std::size_t num_nodes = 0;
  double sparsity = 0.0;
  double accuracy = 0.0;
  std::uint64_t bits_at_level = 0;  // cumulative bits when the level's last row was written
  std::uint64_t total_bits = 0;     // whole run
};

std::vector<SummaryRow> summarize(std::span<const MetricsRow> rows);
const std::string& summary_header();
void write_summary(std::ostream& out, std::span<const SummaryRow> rows);

struct CompareResult {
  std::vector<MetricsRow> rows;
  std::vector<SummaryRow> summary;
  std::vector<std::string> failures;  // "<run>: <error>", one per failed config
};

/// Runs every config in order. A failing config is reported and skipped.
CompareResult compare(std::span<const ExperimentConfig> configs);

/// One copy of `base` per node count, named "<name>-n<N>".
std::vector<ExperimentConfig> sweep_nodes(const ExperimentConfig& base, std::span<const std::size_t> counts);

}  // namespace mpfl
