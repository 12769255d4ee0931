/*
 * Copyright 2026 The MMP Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Synthetic multimodal classification data.
//
// A latent z ~ N(0, I_k) is drawn per sample. The label is the argmax of a
// fixed random class matrix applied to z; modality m observes
// tanh(gain·A_m z + b_m) + σ·ε. Every modality is thus a noisy nonlinear view
// of the same latent, which makes modalities predictive of each other.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <Eigen/Dense>
#include <boost/crc.hpp>

#include "mmp/binary_io.hpp"
#include "mmp/errors.hpp"
#include "mmp/random.hpp"
#include "mmp/tensor.hpp"

namespace mmp {

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(std::string_view text) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw Error("SHA-256 computation failed");
  }
  return out;
}

inline std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  for (auto b : bytes) {
    s += kDigits[b >> 4];
    s += kDigits[b & 15];
  }
  return s;
}

/// CRC-64/XZ.
inline std::uint64_t crc64(std::span<const std::uint8_t> bytes) {
  boost::crc_optimal<64, 0x42F0E1EBA9EA3693ULL, ~0ULL, ~0ULL, true, true> crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

struct SynthConfig {
  std::vector<std::size_t> feature_lengths{64, 64, 64};
  std::size_t latent = 16;
  std::size_t classes = 4;
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  double noise = 0.05;
  /// Scale of the latent-to-feature maps; larger values saturate tanh harder.
  double map_gain = 1.0;
  /// Rank of each A_m; 0 means full rank k. With rank < k a modality sees a
  /// random subspace of the latent and no single modality determines it.
  std::size_t view_rank = 6;
  std::uint64_t seed = 0;

  std::size_t total() const noexcept { return n_train + n_val + n_test; }

  void validate() const {
    if (feature_lengths.empty()) throw ValidationError("synthetic data needs at least one modality");
    for (auto len : feature_lengths)
      if (len == 0) throw ValidationError("feature lengths must be positive");
    if (latent == 0 || classes == 0) throw ValidationError("latent width and class count must be positive");
    if (total() < classes) throw ValidationError("sample count must be at least the class count");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise scale must be finite and >= 0");
    if (!(map_gain > 0.0) || !std::isfinite(map_gain)) throw ValidationError("map gain must be positive");
    if (view_rank > latent) throw ValidationError("view rank cannot exceed the latent width");
  }

  /// Text that fully determines the generator output (minus the seed, which
  /// is stored separately in the fingerprint).
  std::string canonical() const {
    std::ostringstream os;
    os << std::setprecision(17) << "mmp-synth-v1;lengths=";
    for (std::size_t i = 0; i < feature_lengths.size(); ++i) os << (i ? "," : "") << feature_lengths[i];
    os << ";latent=" << latent << ";classes=" << classes << ";n_train=" << n_train << ";n_val=" << n_val
       << ";n_test=" << n_test << ";noise=" << noise << ";map_gain=" << map_gain
       << ";view_rank=" << view_rank;
    return os.str();
  }
};

/// Immutable labelled samples. Features are float32, stored per modality as
/// a row-major [n×feature_length] block. Samples are ordered train, val, test.
struct Dataset {
  std::vector<std::size_t> feature_lengths;
  std::size_t classes = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::uint64_t seed = 0;
  Digest config_hash{};
  std::vector<std::uint32_t> labels;
  std::vector<std::vector<float>> features;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t num_modalities() const noexcept { return feature_lengths.size(); }
  std::size_t n_test() const noexcept { return size() - n_train - n_val; }

  Split split(std::size_t i) const noexcept {
    return i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
  }

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (split(i) == s) out.push_back(i);
    return out;
  }

  std::span<const float> row(std::size_t modality, std::size_t i) const {
    const std::size_t len = feature_lengths[modality];
    return std::span<const float>(features[modality]).subspan(i * len, len);
  }

  /// [b×feature_length] block for the given sample indices.
  Tensor batch(std::size_t modality, std::span<const std::size_t> idx) const {
    const std::size_t len = feature_lengths.at(modality);
    Tensor t(Shape{idx.size(), len});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = row(modality, idx[r]);
      for (std::size_t j = 0; j < len; ++j) t[r * len + j] = static_cast<double>(src[j]);
    }
    return t;
  }

  std::map<std::size_t, Tensor> batch_inputs(std::span<const std::size_t> idx) const {
    std::map<std::size_t, Tensor> out;
    for (std::size_t m = 0; m < num_modalities(); ++m) out.emplace(m, batch(m, idx));
    return out;
  }

  std::vector<int> batch_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    for (auto i : idx) out.push_back(static_cast<int>(labels[i]));
    return out;
  }

  std::string fingerprint() const { return hex(config_hash) + ":" + std::to_string(seed); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline Tensor normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  Tensor t(Shape{rows, cols});
  for (auto& v : t.data()) v = d(rng);
  return t;
}

/// A = B·Q with Q an r×k matrix of orthonormal rows (a random subspace of
/// the latent) and B ~ N(0, gain²/r), so every pre-activation has variance
/// gain². For r = k this is distributed as a dense Gaussian map.
inline Tensor draw_map(Rng& rng, std::size_t rows, std::size_t latent, std::size_t rank, double gain) {
  Tensor q = normal_matrix(rng, rank, latent, 1.0);
  for (std::size_t r = 0; r < rank; ++r) {
    for (std::size_t p = 0; p < r; ++p) {
      double dot = 0.0;
      for (std::size_t j = 0; j < latent; ++j) dot += q(r, j) * q(p, j);
      for (std::size_t j = 0; j < latent; ++j) q(r, j) -= dot * q(p, j);
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < latent; ++j) norm += q(r, j) * q(r, j);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < latent; ++j) q(r, j) /= norm;
  }
  const Tensor b = normal_matrix(rng, rows, rank, gain / std::sqrt(static_cast<double>(rank)));
  Tensor a(Shape{rows, latent});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t r = 0; r < rank; ++r)
      for (std::size_t j = 0; j < latent; ++j) a(i, j) += b(i, r) * q(r, j);
  return a;
}

inline std::size_t argmax_class(const Tensor& class_matrix, std::span<const double> z) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < class_matrix.rows(); ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) s += class_matrix(c, k) * z[k];
    if (s > best_score) {  // strict: ties keep the lowest index
      best_score = s;
      best = c;
    }
  }
  return best;
}

/// Draws the class matrix. With C ≤ k the rows are orthonormalized, which
/// makes the C class scores iid N(0,1) and the classes exactly balanced.
/// Otherwise rows are normalized and the draw is repeated until every class
/// receives at least half its uniform share on a probe sample.
inline Tensor draw_class_matrix(std::uint64_t seed, std::size_t classes, std::size_t latent) {
  Rng rng = make_rng(seed, "class-matrix");
  Rng probe_rng = make_rng(seed, "class-matrix-probe");
  constexpr std::size_t kProbe = 4096;
  Tensor probe = normal_matrix(probe_rng, kProbe, latent, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Tensor w = normal_matrix(rng, classes, latent, 1.0);
    bool degenerate = false;
    for (std::size_t c = 0; c < classes; ++c) {
      if (classes <= latent) {
        for (std::size_t p = 0; p < c; ++p) {
          double dot = 0.0;
          for (std::size_t j = 0; j < latent; ++j) dot += w(c, j) * w(p, j);
          for (std::size_t j = 0; j < latent; ++j) w(c, j) -= dot * w(p, j);
        }
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < latent; ++j) norm += w(c, j) * w(c, j);
      norm = std::sqrt(norm);
      if (norm < 1e-6) {
        degenerate = true;
        break;
      }
      for (std::size_t j = 0; j < latent; ++j) w(c, j) /= norm;
    }
    if (degenerate) continue;
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < kProbe; ++i) {
      ++counts[argmax_class(w, std::span<const double>(probe.data()).subspan(i * latent, latent))];
    }
    const double floor = 0.5 * static_cast<double>(kProbe) / static_cast<double>(classes);
    if (std::all_of(counts.begin(), counts.end(), [&](std::size_t c) { return static_cast<double>(c) >= floor; })) {
      return w;
    }
  }
  throw Error("could not draw a balanced class matrix");
}

}  // namespace detail

inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.total(), k = cfg.latent, m = cfg.feature_lengths.size();
  Dataset ds;
  ds.feature_lengths = cfg.feature_lengths;
  ds.classes = cfg.classes;
  ds.n_train = cfg.n_train;
  ds.n_val = cfg.n_val;
  ds.seed = cfg.seed;
  ds.config_hash = sha256(cfg.canonical());

  const Tensor class_matrix = detail::draw_class_matrix(cfg.seed, cfg.classes, k);
  std::vector<Tensor> maps, offsets;
  for (std::size_t i = 0; i < m; ++i) {
    Rng rng = make_rng(cfg.seed, "modality-map-" + std::to_string(i));
    maps.push_back(detail::draw_map(rng, cfg.feature_lengths[i], k, cfg.view_rank ? cfg.view_rank : k, cfg.map_gain));
    offsets.push_back(detail::normal_matrix(rng, 1, cfg.feature_lengths[i], 0.25));
  }

  // Separate streams: the latent (and so the label) never depends on σ.
  Rng latent_rng = make_rng(cfg.seed, "latent");
  Rng noise_rng = make_rng(cfg.seed, "noise");
  std::normal_distribution<double> std_normal(0.0, 1.0);
  ds.labels.resize(n);
  ds.features.resize(m);
  for (std::size_t i = 0; i < m; ++i) ds.features[i].resize(n * cfg.feature_lengths[i]);
  std::vector<double> z(k);
  for (std::size_t s = 0; s < n; ++s) {
    for (auto& v : z) v = std_normal(latent_rng);
    ds.labels[s] = static_cast<std::uint32_t>(detail::argmax_class(class_matrix, z));
    for (std::size_t i = 0; i < m; ++i) {
      const Tensor& a = maps[i];
      const std::size_t len = cfg.feature_lengths[i];
      for (std::size_t f = 0; f < len; ++f) {
        double u = offsets[i][f];
        for (std::size_t j = 0; j < k; ++j) u += a(f, j) * z[j];
        const double eps = std_normal(noise_rng);
        ds.features[i][s * len + f] = static_cast<float>(std::tanh(u) + cfg.noise * eps);
      }
    }
  }
  return ds;
}

inline constexpr char kDatasetMagic[4] = {'M', 'M', 'P', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

/// Dataset file: magic "MMPD", u16 version; header M u32, C u32, feature
/// length u32 per modality, n u64, seed u64, config hash (32 bytes),
/// n_train u64, n_val u64; body per sample: label u32 then each modality's
/// features as f32; trailer: CRC-64/XZ of everything before it. All
/// little-endian.
inline std::vector<std::uint8_t> serialize(const Dataset& ds) {
  io::ByteWriter w;
  w.put_string(std::string_view(kDatasetMagic, 4));
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.num_modalities()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.classes));
  for (auto len : ds.feature_lengths) w.put<std::uint32_t>(static_cast<std::uint32_t>(len));
  w.put<std::uint64_t>(ds.size());
  w.put<std::uint64_t>(ds.seed);
  w.put_bytes(ds.config_hash);
  w.put<std::uint64_t>(ds.n_train);
  w.put<std::uint64_t>(ds.n_val);
  for (std::size_t s = 0; s < ds.size(); ++s) {
    w.put<std::uint32_t>(ds.labels[s]);
    for (std::size_t m = 0; m < ds.num_modalities(); ++m)
      for (float v : ds.row(m, s)) w.put<float>(v);
  }
  w.put<std::uint64_t>(crc64(w.bytes()));
  return std::move(w.bytes());
}

inline Dataset deserialize_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("file too short for a dataset", bytes.size());
  io::ByteReader r(bytes);
  if (r.get_string(4, "magic") != std::string_view(kDatasetMagic, 4)) throw FormatError("bad dataset magic", 0);
  const std::size_t version_at = r.offset();
  if (auto v = r.get<std::uint16_t>("version"); v != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(v), version_at);
  }
  Dataset ds;
  const auto m = r.get<std::uint32_t>("modality count");
  ds.classes = r.get<std::uint32_t>("class count");
  if (m == 0 || m > 64) throw FormatError("implausible modality count " + std::to_string(m), 6);
  std::size_t row_bytes = 4;
  for (std::uint32_t i = 0; i < m; ++i) {
    ds.feature_lengths.push_back(r.get<std::uint32_t>("feature length"));
    row_bytes += 4 * ds.feature_lengths.back();
  }
  const auto n = r.get<std::uint64_t>("sample count");
  ds.seed = r.get<std::uint64_t>("seed");
  auto hash = r.get_bytes(32, "config hash");
  std::copy(hash.begin(), hash.end(), ds.config_hash.begin());
  const std::size_t splits_at = r.offset();
  ds.n_train = r.get<std::uint64_t>("train count");
  ds.n_val = r.get<std::uint64_t>("validation count");
  if (ds.n_train + ds.n_val > n) throw FormatError("split counts exceed sample count", splits_at);
  if (r.remaining() != n * row_bytes + 8) {
    throw FormatError("payload size does not match header (" + std::to_string(r.remaining()) + " bytes left, expected " +
                          std::to_string(n * row_bytes + 8) + ")",
                      r.offset());
  }
  const std::size_t body_end = r.offset() + n * row_bytes;
  const std::uint64_t expected_crc = crc64(bytes.first(body_end));
  ds.labels.resize(n);
  ds.features.resize(m);
  for (std::uint32_t i = 0; i < m; ++i) ds.features[i].resize(n * ds.feature_lengths[i]);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t label_at = r.offset();
    ds.labels[s] = r.get<std::uint32_t>("label");
    if (ds.labels[s] >= ds.classes) throw FormatError("label out of range", label_at);
    for (std::uint32_t i = 0; i < m; ++i) {
      const std::size_t len = ds.feature_lengths[i];
      for (std::size_t f = 0; f < len; ++f) ds.features[i][s * len + f] = r.get<float>("feature");
    }
  }
  const std::size_t crc_at = r.offset();
  if (r.get<std::uint64_t>("checksum") != expected_crc) throw FormatError("dataset checksum mismatch", crc_at);
  return ds;
}

inline void save(const Dataset& ds, const std::string& path) { io::write_file(path, serialize(ds)); }
inline Dataset load_dataset(const std::string& path) { return deserialize_dataset(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Qualification probes. These are plain least-squares / logistic fits that
// sit outside the model code and check the generated world is learnable.

struct QualificationReport {
  /// Held-out accuracy of a logistic probe per modality.
  std::vector<double> probe_accuracy;
  /// Held-out accuracy of a logistic probe on all modalities concatenated.
  double joint_probe_accuracy = 0.0;
  /// cross_mse[a][b]: ridge regression from modality a to b, test MSE.
  std::vector<std::vector<double>> cross_mse;
  /// Mean per-feature variance of each modality on the test split.
  std::vector<double> feature_variance;
  std::vector<std::size_t> class_histogram;
};

namespace detail {

inline Eigen::MatrixXd design(const Dataset& ds, const std::vector<std::size_t>& modalities,
                              const std::vector<std::size_t>& idx) {
  std::size_t width = 0;
  for (auto m : modalities) width += ds.feature_lengths[m];
  Eigen::MatrixXd x(idx.size(), width + 1);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::size_t c = 0;
    for (auto m : modalities)
      for (float v : ds.row(m, idx[r])) x(r, c++) = v;
    x(r, width) = 1.0;
  }
  return x;
}

/// Multinomial logistic regression by full-batch gradient descent with a
/// small L2 penalty; returns held-out accuracy.
inline double logistic_probe(const Eigen::MatrixXd& xtr, const std::vector<std::uint32_t>& ytr,
                             const Eigen::MatrixXd& xte, const std::vector<std::uint32_t>& yte, std::size_t classes,
                             int iterations = 400, double lr = 0.5, double l2 = 1e-4) {
  const auto n = xtr.rows(), d = xtr.cols();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(classes));
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(classes));
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, ytr[i]) = 1.0;
  // Adam on the convex objective converges far faster than plain GD here.
  Eigen::MatrixXd mom = Eigen::MatrixXd::Zero(d, w.cols()), vel = mom;
  for (int it = 1; it <= iterations; ++it) {
    Eigen::MatrixXd z = xtr * w;
    z.colwise() -= z.rowwise().maxCoeff();
    Eigen::MatrixXd p = z.array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    Eigen::MatrixXd g = xtr.transpose() * (p - onehot) / static_cast<double>(n) + l2 * w;
    mom = 0.9 * mom + 0.1 * g;
    vel = 0.999 * vel + 0.001 * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(0.9, it), c2 = 1.0 - std::pow(0.999, it);
    w.array() -= lr * 0.1 * (mom.array() / c1) / ((vel.array() / c2).sqrt() + 1e-8);
  }
  Eigen::MatrixXd scores = xte * w;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best;
    scores.row(i).maxCoeff(&best);
    correct += static_cast<std::uint32_t>(best) == yte[i];
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

}  // namespace detail

inline QualificationReport qualify(const Dataset& ds, int probe_iterations = 400) {
  QualificationReport q;
  const auto train = ds.indices(Split::kTrain);
  auto test = ds.indices(Split::kTest);
  if (test.empty()) test = ds.indices(Split::kVal);
  if (train.empty() || test.empty()) throw ValidationError("qualification needs train and held-out samples");
  std::vector<std::uint32_t> ytr, yte;
  for (auto i : train) ytr.push_back(ds.labels[i]);
  for (auto i : test) yte.push_back(ds.labels[i]);
  q.class_histogram.assign(ds.classes, 0);
  for (auto y : ds.labels) ++q.class_histogram[y];

  const std::size_t m = ds.num_modalities();
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t a = 0; a < m; ++a) {
    q.probe_accuracy.push_back(detail::logistic_probe(detail::design(ds, {a}, train), ytr, detail::design(ds, {a}, test),
                                                      yte, ds.classes, probe_iterations));
  }
  q.joint_probe_accuracy = detail::logistic_probe(detail::design(ds, all, train), ytr, detail::design(ds, all, test), yte,
                                                  ds.classes, probe_iterations);

  q.cross_mse.assign(m, std::vector<double>(m, 0.0));
  for (std::size_t b = 0; b < m; ++b) {
    const auto len = static_cast<Eigen::Index>(ds.feature_lengths[b]);
    Eigen::MatrixXd ytrain = detail::design(ds, {b}, train).leftCols(len);
    Eigen::MatrixXd ytest = detail::design(ds, {b}, test).leftCols(len);
    const Eigen::RowVectorXd mean = ytest.colwise().mean();
    q.feature_variance.push_back((ytest.rowwise() - mean).squaredNorm() / static_cast<double>(ytest.size()));
    for (std::size_t a = 0; a < m; ++a) {
      if (a == b) continue;
      const Eigen::MatrixXd xtr = detail::design(ds, {a}, train);
      const Eigen::MatrixXd xte = detail::design(ds, {a}, test);
      Eigen::MatrixXd gram = xtr.transpose() * xtr;
      gram.diagonal().array() += 1e-3;
      const Eigen::MatrixXd coef = gram.ldlt().solve(xtr.transpose() * ytrain);
      q.cross_mse[a][b] = (xte * coef - ytest).squaredNorm() / static_cast<double>(ytest.size());
    }
  }
  return q;
}

}  // namespace mmp
