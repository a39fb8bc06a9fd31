#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "mpfl/rng.hpp"

namespace mpfl {

struct Dataset {
  Eigen::MatrixXd features;  // samples x in_dim
  std::vector<int> labels;
  int num_classes = 0;
  std::string provenance;  // "synthetic" or "file:<path>"

  std::size_t size() const noexcept { return labels.size(); }
};

enum class Contamination { clean, noisy, shuffled_labels };

/// A node's slice of the training set. Rows are copied out of the parent so
/// contamination can rewrite them without touching other shards.
struct Shard {
  int node = 0;
  std::vector<std::size_t> indices;
  Contamination tag = Contamination::clean;
  Eigen::MatrixXd features;
  std::vector<int> labels;
};

/// Isotropic Gaussian blobs: class centers ~ N(0, separation^2 I), samples ~ N(center, I).
struct SyntheticSpec {
  std::size_t samples = 2000;
  std::size_t features = 64;
  int classes = 10;
  double separation = 1.0;
  std::uint64_t seed = 7;

  bool operator==(const SyntheticSpec&) const = default;
};

/// CSV with a header row; the column named "label" holds integer class ids.
struct CsvSource {
  std::filesystem::path path;
  bool operator==(const CsvSource&) const = default;
};

/// IDX files: unsigned-byte tensors, first dim = samples.
struct IdxSource {
  std::filesystem::path images;
  std::filesystem::path labels;
  bool operator==(const IdxSource&) const = default;
};

using DataSource = std::variant<SyntheticSpec, CsvSource, IdxSource>;

/// Loads and standardizes every feature to zero mean and unit variance.
Dataset load(const DataSource& source);

Dataset make_blobs(const SyntheticSpec& spec);
Dataset read_csv(const std::filesystem::path& path);
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Per-feature standardization in place; constant features become 0.
void standardize(Dataset& ds);

/// Seeded split into (train, test); test gets round(fraction * size) samples.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed);

/// Seeded shuffle, then round-robin assignment to `nodes` shards.
std::vector<Shard> partition_iid(const Dataset& ds, std::size_t nodes, std::uint64_t seed);

/// Adds N(0, sigma^2) to every feature; labels untouched.
Shard contaminate_noise(Shard shard, double sigma, std::uint64_t seed);

/// Relabels y -> permutation[y]; features untouched.
Shard contaminate_labels(Shard shard, const std::vector<int>& permutation);

/// Uniformly random permutation of 0..classes-1 with no fixed points (classes >= 2).
std::vector<int> random_derangement(int classes, Rng& rng);

/// FNV-1a over the raw feature doubles and labels.
std::uint64_t checksum(const Dataset& ds);

}  // namespace mpfl
