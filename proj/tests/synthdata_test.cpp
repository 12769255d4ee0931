#include <cstdio>
#include <filesystem>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include "mmp/synthdata.hpp"

namespace mmp {
namespace {

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig c;
  c.feature_lengths = {6, 5};
  c.latent = 4;
  c.view_rank = 0;
  c.classes = 3;
  c.n_train = 20;
  c.n_val = 6;
  c.n_test = 4;
  c.seed = seed;
  return c;
}

double chi_square_p(const std::vector<std::size_t>& counts) {
  double n = 0.0;
  for (auto c : counts) n += static_cast<double>(c);
  const double expected = n / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

TEST(Generate, SameSeedIsBitwiseIdentical) {
  SynthConfig c;
  c.noise = 0.0;
  c.seed = 11;
  const Dataset a = generate(c), b = generate(c);
  EXPECT_TRUE(a == b);
  c.seed = 12;
  EXPECT_FALSE(a == generate(c));
}

TEST(Generate, ShapesSplitsAndRanges) {
  const Dataset ds = generate(small_config());
  EXPECT_EQ(ds.size(), 30u);
  EXPECT_EQ(ds.indices(Split::kTrain).size(), 20u);
  EXPECT_EQ(ds.indices(Split::kVal).size(), 6u);
  EXPECT_EQ(ds.indices(Split::kTest).size(), 4u);
  EXPECT_EQ(ds.split(19), Split::kTrain);
  EXPECT_EQ(ds.split(20), Split::kVal);
  EXPECT_EQ(ds.split(26), Split::kTest);
  ASSERT_EQ(ds.features.size(), 2u);
  EXPECT_EQ(ds.features[0].size(), 30u * 6);
  EXPECT_EQ(ds.features[1].size(), 30u * 5);
  for (auto y : ds.labels) EXPECT_LT(y, 3u);
  const std::vector<std::size_t> idx{0, 29};
  EXPECT_EQ(ds.batch(1, idx).shape(), (Shape{2, 5}));
  EXPECT_EQ(ds.batch(1, idx)(1, 4), static_cast<double>(ds.row(1, 29)[4]));
}

TEST(Generate, ClassHistogramIsUniform) {
  SynthConfig c;
  c.n_train = 10000;
  c.n_val = c.n_test = 0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    c.seed = seed;
    const Dataset ds = generate(c);
    std::vector<std::size_t> counts(4, 0);
    for (auto y : ds.labels) ++counts[y];
    EXPECT_GT(chi_square_p(counts), 0.001) << "seed " << seed;
  }
}

TEST(Generate, LabelsDependOnlyOnLatent) {
  SynthConfig c = small_config();
  c.noise = 0.0;
  const Dataset a = generate(c);
  for (double sigma : {0.05, 0.5, 3.0}) {
    c.noise = sigma;
    const Dataset b = generate(c);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(a.features, b.features);
  }
}

TEST(Generate, FingerprintTracksConfigAndSeed) {
  SynthConfig c = small_config();
  const Dataset a = generate(c);
  EXPECT_EQ(a.config_hash, sha256(c.canonical()));
  c.noise = 0.06;
  EXPECT_NE(generate(c).config_hash, a.config_hash);
  c = small_config(4);
  const Dataset b = generate(c);
  EXPECT_EQ(b.config_hash, a.config_hash);
  EXPECT_NE(b.fingerprint(), a.fingerprint());
}

TEST(Generate, RejectsInvalidConfigs) {
  SynthConfig c = small_config();
  c.n_train = 1;
  c.n_val = c.n_test = 0;
  EXPECT_THROW(generate(c), ValidationError);
  c = small_config();
  c.feature_lengths = {4, 0};
  EXPECT_THROW(generate(c), ValidationError);
  c = small_config();
  c.noise = -1.0;
  EXPECT_THROW(generate(c), ValidationError);
  c = small_config();
  c.view_rank = 5;
  EXPECT_THROW(generate(c), ValidationError);
  c.feature_lengths.clear();
  EXPECT_THROW(generate(c), ValidationError);
}

TEST(Hashing, KnownVectors) {
  EXPECT_EQ(hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const std::string check = "123456789";
  // CRC-64/XZ check value.
  EXPECT_EQ(crc64(std::span(reinterpret_cast<const std::uint8_t*>(check.data()), check.size())), 0x995DC9BBDF1939FAULL);
}

TEST(DatasetFile, RoundTripIsBitwise) {
  const Dataset ds = generate(small_config());
  const auto bytes = serialize(ds);
  const Dataset back = deserialize_dataset(bytes);
  EXPECT_TRUE(back == ds);
  EXPECT_EQ(back.fingerprint(), ds.fingerprint());
  EXPECT_EQ(serialize(back), bytes);

  const auto path = (std::filesystem::temp_directory_path() / "mmp_synth_roundtrip.mmpd").string();
  save(ds, path);
  EXPECT_TRUE(load_dataset(path) == ds);
  std::filesystem::remove(path);
}

TEST(DatasetFile, HeaderLayout) {
  const Dataset ds = generate(small_config());
  const auto bytes = serialize(ds);
  const std::size_t header = 4 + 2 + 4 + 4 + 2 * 4 + 8 + 8 + 32 + 8 + 8;
  EXPECT_EQ(bytes.size(), header + 30 * (4 + 4 * (6 + 5)) + 8);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MMPD");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 2);  // M, little-endian
  EXPECT_EQ(bytes[10], 3);  // C
}

TEST(DatasetFile, CorruptionIsRejected) {
  const auto good = serialize(generate(small_config()));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  try {
    deserialize_dataset(bad_magic);
    FAIL() << "bad magic accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_dataset(bad_version), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{40}, good.size() - 1}) {
    EXPECT_THROW(deserialize_dataset(std::span(good).first(cut)), FormatError) << cut;
  }
  // A payload edit that keeps the structure valid is caught by the checksum.
  auto edited = good;
  edited[good.size() - 20] ^= 0x01;
  try {
    deserialize_dataset(edited);
    FAIL() << "payload edit accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), good.size() - 8);
  }
  EXPECT_THROW(load_dataset("/nonexistent/dir/data.mmpd"), Error);
}

TEST(Qualification, ProbesOnDefaultWorld) {
  SynthConfig c;
  c.seed = 0;
  const Dataset ds = generate(c);
  const auto q = qualify(ds);
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_GE(q.probe_accuracy[m], 1.0 / 4 + 0.10) << "modality " << m;
    for (std::size_t b = 0; b < 3; ++b) {
      if (b == m) continue;
      EXPECT_LT(q.cross_mse[m][b], q.feature_variance[b]) << m << "->" << b;
    }
  }
}

TEST(Qualification, MutualPredictabilityAcrossNoiseLevels) {
  SynthConfig c;
  c.n_train = 800;
  c.n_val = 0;
  c.n_test = 300;
  for (double sigma : {0.0, 0.05, 0.1}) {
    c.noise = sigma;
    const auto q = qualify(generate(c), 50);
    for (std::size_t a = 0; a < 3; ++a) {
      for (std::size_t b = 0; b < 3; ++b) {
        if (a == b) continue;
        EXPECT_LT(q.cross_mse[a][b], q.feature_variance[b]) << sigma << " " << a << "->" << b;
      }
    }
  }
}

}  // namespace
}  // namespace mmp
