#include "mpfl/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mpfl/errors.hpp"

namespace mpfl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.provenance = ds.provenance;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), ds.features.cols());
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = ds.features.row(static_cast<Eigen::Index>(idx[i]));
    out.labels[i] = ds.labels[idx[i]];
  }
  return out;
}

std::uint32_t read_be32(std::istream& in, std::size_t offset) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw ParseError("idx: truncated header", offset);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

// Returns dims and the raw unsigned-byte payload.
std::pair<std::vector<std::size_t>, std::vector<unsigned char>> read_idx_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("idx: cannot open " + path.string(), 0);
  const std::uint32_t magic = read_be32(in, 0);
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08)
    throw ParseError("idx: unsupported magic (only unsigned byte tensors)", 0);
  const std::size_t ndims = magic & 0xff;
  if (ndims == 0) throw ParseError("idx: zero dimensions", 3);
  std::vector<std::size_t> dims;
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    dims.push_back(read_be32(in, 4 + 4 * i));
    total *= dims.back();
  }
  std::vector<unsigned char> payload(total);
  const std::size_t header = 4 + 4 * ndims;
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total)))
    throw ParseError("idx: truncated payload", header + static_cast<std::size_t>(in.gcount()));
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("idx: trailing bytes", header + total);
  return {dims, payload};
}

}  // namespace

Dataset make_blobs(const SyntheticSpec& spec) {
  if (spec.samples == 0) throw ConfigError("synthetic: samples must be > 0");
  if (spec.features == 0 || spec.classes < 1) throw ConfigError("synthetic: need features > 0 and classes >= 1");
  Rng rng(spec.seed);
  const auto dim = static_cast<Eigen::Index>(spec.features);
  Eigen::MatrixXd centers(spec.classes, dim);
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    for (Eigen::Index j = 0; j < dim; ++j) centers(c, j) = spec.separation * rng.normal();
  Dataset ds;
  ds.num_classes = spec.classes;
  ds.provenance = "synthetic";
  ds.features.resize(static_cast<Eigen::Index>(spec.samples), dim);
  ds.labels.resize(spec.samples);
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    ds.labels[i] = y;
    for (Eigen::Index j = 0; j < dim; ++j) ds.features(static_cast<Eigen::Index>(i), j) = centers(y, j) + rng.normal();
  }
  return ds;
}

Dataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("csv: cannot open " + path.string(), 0);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("csv: missing header", 1);
  const auto header = split_csv_line(line);
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) throw ParseError("csv: no 'label' column", 1);
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) throw ParseError("csv: wrong number of cells", line_no);
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v;
      if (!parse_double(cells[c], v)) throw ParseError("csv: non-numeric cell '" + cells[c] + "'", line_no);
      if (c == label_col) {
        if (v < 0 || v != std::floor(v)) throw ParseError("csv: label must be a non-negative integer", line_no);
        labels.push_back(static_cast<int>(v));
      } else {
        row.push_back(v);
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("csv: no data rows", line_no);

  Dataset ds;
  ds.provenance = "file:" + path.string();
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  auto [idims, ibytes] = read_idx_file(images);
  auto [ldims, lbytes] = read_idx_file(labels);
  if (ldims.size() != 1 || ldims[0] != idims[0]) throw ParseError("idx: label count does not match image count", 4);
  const std::size_t n = idims[0];
  if (n == 0) throw ParseError("idx: no samples", 4);
  const std::size_t dim = ibytes.size() / n;
  Dataset ds;
  ds.provenance = "file:" + images.string();
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ibytes[i * dim + j];
  ds.labels.assign(lbytes.begin(), lbytes.end());
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

void standardize(Dataset& ds) {
  const auto n = static_cast<double>(ds.features.rows());
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    auto col = ds.features.col(j);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (sd > 0.0)
      col /= sd;
    else
      col.setZero();
  }
}

Dataset load(const DataSource& source) {
  Dataset ds = std::visit(
      [](const auto& s) -> Dataset {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SyntheticSpec>)
          return make_blobs(s);
        else if constexpr (std::is_same_v<T, CsvSource>)
          return read_csv(s.path);
        else
          return read_idx(s.images, s.labels);
      },
      source);
  standardize(ds);
  return ds;
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(idx));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {subset(ds, train), subset(ds, test)};
}

std::vector<Shard> partition_iid(const Dataset& ds, std::size_t nodes, std::uint64_t seed) {
  if (nodes == 0) throw ConfigError("partition: need at least one node");
  if (nodes > ds.size()) throw ConfigError("partition: more nodes than samples");
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(idx));
  std::vector<Shard> shards(nodes);
  for (std::size_t i = 0; i < idx.size(); ++i) shards[i % nodes].indices.push_back(idx[i]);
  for (std::size_t n = 0; n < nodes; ++n) {
    auto& s = shards[n];
    s.node = static_cast<int>(n);
    const auto rows = subset(ds, s.indices);
    s.features = rows.features;
    s.labels = rows.labels;
  }
  return shards;
}

Shard contaminate_noise(Shard shard, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (sigma == 0.0) return shard;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < shard.features.rows(); ++i)
    for (Eigen::Index j = 0; j < shard.features.cols(); ++j) shard.features(i, j) += sigma * rng.normal();
  shard.tag = Contamination::noisy;
  return shard;
}

Shard contaminate_labels(Shard shard, const std::vector<int>& permutation) {
  std::vector<int> seen(permutation.size(), 0);
  for (int p : permutation) {
    if (p < 0 || static_cast<std::size_t>(p) >= permutation.size() || seen[static_cast<std::size_t>(p)]++)
      throw ConfigError("label permutation is not a permutation of 0..classes-1");
  }
  for (int& y : shard.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= permutation.size())
      throw ConfigError("label permutation length does not cover the shard's classes");
    y = permutation[static_cast<std::size_t>(y)];
  }
  bool identity = true;
  for (std::size_t i = 0; i < permutation.size(); ++i) identity = identity && permutation[i] == static_cast<int>(i);
  if (!identity) shard.tag = Contamination::shuffled_labels;
  return shard;
}

std::vector<int> random_derangement(int classes, Rng& rng) {
  if (classes < 2) throw ConfigError("derangement needs at least two classes");
  std::vector<int> p(static_cast<std::size_t>(classes));
  for (;;) {
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(std::span(p));
    bool fixed = false;
    for (std::size_t i = 0; i < p.size(); ++i) fixed = fixed || p[i] == static_cast<int>(i);
    if (!fixed) return p;
  }
}

std::uint64_t checksum(const Dataset& ds) {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) mix(std::bit_cast<std::uint64_t>(ds.features(i, j)));
  for (int y : ds.labels) mix(static_cast<std::uint64_t>(y));
  return h;
}

}  // namespace mpfl
