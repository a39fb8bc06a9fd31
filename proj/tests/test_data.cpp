#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mpfl/data.hpp"
#include "mpfl/errors.hpp"

using namespace mpfl;

namespace {

// Recorded from the first run of the generator; guards against silent drift
// in the sampler, the standardization or the checksum itself.
constexpr std::uint64_t kBlobsGolden = 1122576021077930548ull;

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

Dataset blobs(std::size_t samples, int classes, std::uint64_t seed) {
  SyntheticSpec s;
  s.samples = samples;
  s.features = 16;
  s.classes = classes;
  s.seed = seed;
  return load(s);
}

Shard one_shard(std::vector<int> labels) {
  Shard s;
  s.features = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(labels.size()), 2);
  s.labels = std::move(labels);
  return s;
}

}  // namespace

TEST(Load, BlobsChecksumIsStable) {
  SyntheticSpec spec;
  spec.samples = 1000;
  spec.features = 64;
  spec.classes = 2;
  spec.seed = 7;
  const Dataset ds = load(spec);
  EXPECT_EQ(ds.size(), 1000u);
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.provenance, "synthetic");
  EXPECT_EQ(checksum(ds), kBlobsGolden);
  EXPECT_EQ(checksum(load(spec)), checksum(ds));
  spec.seed = 8;
  EXPECT_NE(checksum(load(spec)), checksum(ds));
}

TEST(Load, StandardizedFeatures) {
  const Dataset ds = blobs(500, 4, 1);
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
    const auto col = ds.features.col(j);
    EXPECT_NEAR(col.mean(), 0.0, 1e-12);
    EXPECT_NEAR((col.array() - col.mean()).square().mean(), 1.0, 1e-9);
  }
  EXPECT_TRUE(ds.features.allFinite());
  for (int y : ds.labels) EXPECT_TRUE(y >= 0 && y < 4);
}

TEST(Load, ZeroSamplesIsError) {
  SyntheticSpec spec;
  spec.samples = 0;
  EXPECT_THROW(load(spec), ConfigError);
}

TEST(Csv, ReadsHeaderAndLabelColumn) {
  const auto p = temp_file("mpfl_ok.csv", "a,label,b\n1,0,2\n3,1,4\n5,1,6\n");
  const Dataset ds = read_csv(p);
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.num_classes, 2);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(ds.features(1, 0), 3.0);
  EXPECT_EQ(ds.features(2, 1), 6.0);
  std::filesystem::remove(p);
}

TEST(Csv, NonNumericCellReportsLine) {
  const auto p = temp_file("mpfl_bad.csv", "x,label\n1,0\n2,1\nabc,0\n");
  try {
    read_csv(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  std::filesystem::remove(p);
  const auto q = temp_file("mpfl_nolabel.csv", "x,y\n1,0\n");
  EXPECT_THROW(read_csv(q), ParseError);
  std::filesystem::remove(q);
}

TEST(Csv, ShippedDigits) {
  const Dataset ds = load(CsvSource{std::filesystem::path(MPFL_SOURCE_DIR) / "data" / "digits.csv"});
  EXPECT_EQ(ds.features.cols(), 64);
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_GT(ds.size(), 1000u);
}

TEST(Idx, ReadsUnsignedByteTensors) {
  std::string images{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2};
  images += std::string{1, 2, 3, 4, 5, 6, 7, 8};
  const std::string labels{0, 0, 8, 1, 0, 0, 0, 2, 1, 0};
  const auto pi = temp_file("mpfl_images.idx", images);
  const auto pl = temp_file("mpfl_labels.idx", labels);
  const Dataset ds = read_idx(pi, pl);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.features.cols(), 4);
  EXPECT_EQ(ds.features(1, 3), 8.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));

  const auto bad = temp_file("mpfl_images_bad.idx", images.substr(0, images.size() - 1));
  try {
    read_idx(bad, pl);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 23u);
  }
  for (const auto& p : {pi, pl, bad}) std::filesystem::remove(p);
}

TEST(Partition, SingleNodeIsWholeSet) {
  const Dataset ds = blobs(137, 3, 2);
  const auto shards = partition_iid(ds, 1, 5);
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(std::set<std::size_t>(shards[0].indices.begin(), shards[0].indices.end()).size(), 137u);
}

TEST(Partition, DisjointCoverAndEqualSizes) {
  const Dataset ds = blobs(1000, 10, 3);
  const auto shards = partition_iid(ds, 10, 6);
  std::set<std::size_t> seen;
  for (const auto& s : shards) {
    EXPECT_EQ(s.indices.size(), 100u);
    EXPECT_EQ(s.labels.size(), 100u);
    for (std::size_t i = 0; i < s.indices.size(); ++i) {
      EXPECT_TRUE(seen.insert(s.indices[i]).second);
      EXPECT_EQ(s.labels[i], ds.labels[s.indices[i]]);
      EXPECT_EQ(s.features.row(static_cast<Eigen::Index>(i)), ds.features.row(static_cast<Eigen::Index>(s.indices[i])));
    }
  }
  EXPECT_EQ(seen.size(), 1000u);
  const auto uneven = partition_iid(blobs(103, 2, 4), 10, 1);
  for (const auto& s : uneven) EXPECT_TRUE(s.indices.size() == 10 || s.indices.size() == 11);
  EXPECT_THROW(partition_iid(blobs(5, 2, 1), 6, 1), ConfigError);
  EXPECT_THROW(partition_iid(blobs(5, 2, 1), 0, 1), ConfigError);
}

TEST(Partition, ClassProportionsWithinFivePoints) {
  const Dataset ds = blobs(5000, 10, 9);
  std::vector<double> global(10, 0.0);
  for (int y : ds.labels) global[static_cast<std::size_t>(y)] += 1.0 / 5000.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (const auto& s : partition_iid(ds, 10, seed)) {
      std::vector<double> local(10, 0.0);
      for (int y : s.labels) local[static_cast<std::size_t>(y)] += 1.0 / static_cast<double>(s.labels.size());
      for (std::size_t c = 0; c < 10; ++c) EXPECT_NEAR(local[c], global[c], 0.05);
    }
}

TEST(Noise, ZeroSigmaIsIdentity) {
  const auto shards = partition_iid(blobs(200, 3, 5), 2, 1);
  const Shard out = contaminate_noise(shards[0], 0.0, 3);
  EXPECT_EQ(out.features, shards[0].features);
  EXPECT_EQ(out.labels, shards[0].labels);
}

TEST(Noise, UnitSigmaDoublesVariance) {
  const Dataset ds = blobs(4000, 4, 6);
  const Shard s = partition_iid(ds, 1, 1)[0];
  const Shard out = contaminate_noise(s, 1.0, 11);
  EXPECT_EQ(out.tag, Contamination::noisy);
  EXPECT_EQ(out.labels, s.labels);
  for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
    const auto col = out.features.col(j).array();
    const double var = (col - col.mean()).square().sum() / static_cast<double>(col.size() - 1);
    EXPECT_NEAR(var, 2.0, 0.2);
  }
  EXPECT_EQ(contaminate_noise(s, 1.0, 11).features, out.features);
  EXPECT_THROW(contaminate_noise(s, -1.0, 1), ConfigError);
}

TEST(Labels, IdentitySwapAndInvolution) {
  const Shard s = one_shard({1, 3, 1});
  EXPECT_EQ(contaminate_labels(s, {0, 1, 2, 3}).labels, s.labels);
  const std::vector<int> swap{0, 3, 2, 1};
  const Shard once = contaminate_labels(s, swap);
  EXPECT_EQ(once.labels, (std::vector<int>{3, 1, 3}));
  EXPECT_EQ(once.tag, Contamination::shuffled_labels);
  EXPECT_EQ(once.features, s.features);
  EXPECT_EQ(contaminate_labels(once, swap).labels, s.labels);
}

TEST(Labels, BadPermutationThrows) {
  const Shard s = one_shard({1, 3, 1});
  EXPECT_THROW(contaminate_labels(s, {0, 1}), ConfigError);
  EXPECT_THROW(contaminate_labels(s, {0, 0, 1, 2}), ConfigError);
}

TEST(Labels, RandomDerangementHasNoFixedPoints) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const int k = 2 + static_cast<int>(rng.below(12));
    const auto p = random_derangement(k, rng);
    std::set<int> values(p.begin(), p.end());
    EXPECT_EQ(values.size(), static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) EXPECT_NE(p[static_cast<std::size_t>(i)], i);
  }
}

TEST(Contamination, OtherShardsUntouched) {
  const auto shards = partition_iid(blobs(300, 3, 7), 3, 2);
  auto copy = shards;
  copy[0] = contaminate_noise(copy[0], 1.0, 1);
  copy[1] = contaminate_labels(copy[1], {1, 2, 0});
  EXPECT_NE(copy[0].features, shards[0].features);
  EXPECT_EQ(copy[2].features, shards[2].features);
  EXPECT_EQ(copy[2].labels, shards[2].labels);
  EXPECT_EQ(copy[0].labels, shards[0].labels);
  EXPECT_EQ(copy[1].features, shards[1].features);
}

TEST(Split, DeterministicAndSized) {
  const Dataset ds = blobs(1000, 5, 8);
  const auto [train, test] = split_train_test(ds, 0.2, 3);
  EXPECT_EQ(test.size(), 200u);
  EXPECT_EQ(train.size(), 800u);
  EXPECT_EQ(checksum(split_train_test(ds, 0.2, 3).first), checksum(train));
}
