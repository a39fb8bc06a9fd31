#pragma once

// Experiment configuration. On disk it is a JSON document, dialect version 1:
//
// {
//   "version": 1,
//   "name": "mpfl-blobs",
//   "algorithm": "mpfl" | "pruning-fl" | "lth" | "fedavg",
//   "seed": 42,
//   "nodes": 10,
//   "arch": { "dims": [64, 64, 32, 10], "prune_output": false },
//   "data": { "source": "synthetic", "samples": 2000, "features": 64, "classes": 10,
//             "separation": 1.0, "seed": 7, "test_fraction": 0.2 },
//           | { "source": "csv", "path": "data/digits.csv", "test_fraction": 0.2 }
//           | { "source": "idx", "images": "...", "labels": "...", "test_fraction": 0.2 },
//   "scoring": { "mode": "weight" | "gradient", "p": 2 },
//   "schedule": { "increments": [0.1, 0.1, 0.1, 0.1, 0.1], "target": 0.5 },
//   "consensus": { "strategy": "topk" | "histogram", "agreement": 0.9, "min_keep": 1 },
//   "training": { "lr": 0.05, "epochs": 1, "batch_size": 16, "final_rounds": 10 },
//   "contamination": [ { "node": 0, "kind": "noise", "sigma": 1.0 },
//                      { "node": 1, "kind": "labels", "permutation": [] } ],
//   "transport": { "kind": "loopback" | "tcp", "host": "127.0.0.1", "port": 0,
//                  "delta_masks": false, "compact_weights": true, "count_headers": false },
//   "precision_bits": 32,
//   "upload": { "feature_bits": 32, "label_bits": 8 }
// }
//
// Every key is optional; missing keys take the defaults above. Unknown keys are errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpfl/arch.hpp"
#include "mpfl/data.hpp"
#include "mpfl/federation.hpp"

namespace mpfl {

enum class Algorithm { mpfl, pruning_fl, lth, fedavg };
enum class TransportKind { loopback, tcp };

const char* to_string(Algorithm a);

struct ContaminationSpec {
  int node = 0;
  Contamination kind = Contamination::noisy;
  double sigma = 1.0;
  std::vector<int> permutation;  // empty: seeded random derangement

  bool operator==(const ContaminationSpec&) const = default;
};

struct ExperimentConfig {
  static constexpr int kVersion = 1;

  std::string name = "experiment";
  Algorithm algorithm = Algorithm::mpfl;
  std::uint64_t seed = 42;
  std::size_t nodes = 10;

  std::vector<std::size_t> dims{64, 64, 32, 10};
  bool prune_output = false;

  DataSource data = SyntheticSpec{};
  double test_fraction = 0.2;

  ScoreMode scoring = ScoreMode::weight;
  NormOrder norm = NormOrder::l2;

  std::vector<double> increments{0.1, 0.1, 0.1, 0.1, 0.1};
  double target = 0.5;

  ConsensusParams consensus;

  double lr = 0.05;
  int epochs = 1;
  std::size_t batch_size = 16;
  int final_rounds = 10;

  std::vector<ContaminationSpec> contamination;

  TransportKind transport = TransportKind::loopback;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  bool delta_masks = false;
  bool compact_weights = true;
  bool count_headers = false;

  int precision_bits = 32;
  int upload_feature_bits = 32;
  int upload_label_bits = 8;

  ArchSpec arch() const { return ArchSpec::from_dims(dims, prune_output); }

  bool operator==(const ExperimentConfig&) const;
};

/// Throws ConfigError naming the offending field path, e.g. "schedule.increments[2]".
void validate(const ExperimentConfig& cfg);

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace mpfl
