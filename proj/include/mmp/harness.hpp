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

// Training loop, scenario evaluation and the four-rung ablation.

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "mmp/losses.hpp"
#include "mmp/masking.hpp"
#include "mmp/model.hpp"
#include "mmp/synthdata.hpp"

namespace mmp {

// ---------------------------------------------------------------------------
// Optimizer

enum class LrSchedule { kConstant, kPoly };

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  LrSchedule schedule = LrSchedule::kConstant;
  double poly_power = 0.9;
  /// Horizon of the polynomial schedule.
  std::size_t total_steps = 0;
};

/// Adam with decoupled weight decay. Frozen parameters are neither decayed
/// nor updated.
class AdamW {
 public:
  AdamW(const ParameterStore& store, AdamWConfig cfg) : cfg_(cfg) {
    for (const auto& e : store) {
      m_.emplace_back(e.value.shape());
      v_.emplace_back(e.value.shape());
    }
  }

  double current_lr() const noexcept {
    if (cfg_.schedule == LrSchedule::kConstant || cfg_.total_steps == 0) return cfg_.lr;
    const double frac = std::min(1.0, static_cast<double>(step_) / static_cast<double>(cfg_.total_steps));
    return cfg_.lr * std::pow(1.0 - frac, cfg_.poly_power);
  }

  std::size_t steps() const noexcept { return step_; }

  void step(ParameterStore& store) {
    if (store.size() != m_.size()) throw ContractError("optimizer was built for a different parameter store");
    const double lr = current_lr();
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < store.size(); ++p) {
      auto& e = store.entry(p);
      if (!e.trainable) continue;
      auto w = e.value.data();
      auto g = e.grad.data();
      auto m = m_[p].data();
      auto v = v_[p].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        w[i] -= lr * cfg_.weight_decay * w[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_, v_;
};

// ---------------------------------------------------------------------------
// Training

enum class AblationTag { kDropout, kLp, kLpAlign, kCaAlign };

inline constexpr AblationTag kAllTags[] = {AblationTag::kDropout, AblationTag::kLp, AblationTag::kLpAlign,
                                           AblationTag::kCaAlign};

inline std::string_view to_string(AblationTag t) {
  switch (t) {
    case AblationTag::kDropout: return "dropout";
    case AblationTag::kLp: return "lp";
    case AblationTag::kLpAlign: return "lp_align";
    case AblationTag::kCaAlign: return "ca_align";
  }
  return "?";
}

inline AblationTag parse_tag(std::string_view s) {
  for (auto t : kAllTags)
    if (to_string(t) == s) return t;
  throw ValidationError("unknown ablation tag '" + std::string(s) + "'");
}

inline SubstitutionMode mode_for(AblationTag t) {
  switch (t) {
    case AblationTag::kDropout: return SubstitutionMode::kZeroFill;
    case AblationTag::kLp:
    case AblationTag::kLpAlign: return SubstitutionMode::kLinearProjection;
    case AblationTag::kCaAlign: return SubstitutionMode::kMmp;
  }
  return SubstitutionMode::kZeroFill;
}

inline bool alignment_for(AblationTag t) { return t == AblationTag::kLpAlign || t == AblationTag::kCaAlign; }

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 64;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double eps = 1e-8;
  LrSchedule schedule = LrSchedule::kConstant;
  double poly_power = 0.9;
  /// Probability of an unmasked iteration; 1 trains without masking.
  double p_none = 0.2;
  AblationTag tag = AblationTag::kCaAlign;
  std::uint64_t seed = 0;
  /// Leading epochs trained as plain modality dropout before the tag's mode.
  std::size_t warmup_dropout_epochs = 0;
  /// Parameters whose names start with any of these are not updated.
  std::vector<std::string> freeze;

  SubstitutionMode mode() const { return mode_for(tag); }
  bool alignment() const { return alignment_for(tag); }

  void validate() const {
    if (batch == 0) throw ValidationError("batch size must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
    if (!(eps > 0.0)) throw ValidationError("optimizer epsilon must be positive");
    if (!(p_none >= 0.0 && p_none <= 1.0)) throw ValidationError("p_none must lie in [0,1]");
    if (!(poly_power > 0.0)) throw ValidationError("poly power must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  /// Mean over iterations with a nonempty mask in a projecting mode; 0 if none.
  double alignment_loss = 0.0;
  double val_accuracy = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// Wall time is left out so identical runs serialize identically.
  std::string to_csv() const {
    std::string out = "epoch,task_loss,alignment_loss,val_accuracy\n";
    char buf[160];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.task_loss, e.alignment_loss, e.val_accuracy);
      out += buf;
    }
    return out;
  }
};

inline void check_compatible(const MmpModel& model, const Dataset& ds) {
  const auto& mods = model.config().modalities;
  if (mods.size() != ds.num_modalities()) {
    throw ContractError("model has " + std::to_string(mods.size()) + " modalities, dataset has " +
                        std::to_string(ds.num_modalities()));
  }
  for (std::size_t i = 0; i < mods.size(); ++i) {
    if (mods[i].feature_length != ds.feature_lengths[i]) {
      throw ContractError("modality '" + mods[i].name + "' expects " + std::to_string(mods[i].feature_length) +
                          " features, dataset has " + std::to_string(ds.feature_lengths[i]));
    }
  }
  if (model.config().classes != ds.classes) throw ContractError("model and dataset disagree on the class count");
}

/// Accuracy with every modality available.
inline double accuracy(const MmpModel& model, const Dataset& ds, std::span<const std::size_t> idx,
                       const MaskPattern& pattern, SubstitutionMode mode, std::size_t chunk = 256) {
  if (idx.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    auto part = idx.subspan(start, std::min(chunk, idx.size() - start));
    InputMap inputs;
    for (auto j : pattern.available()) inputs.emplace(j, ds.batch(j, part));
    const Tensor logits = model.predict(inputs, pattern, mode);
    for (std::size_t r = 0; r < part.size(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (logits(r, c) > logits(r, best)) best = c;
      correct += best == ds.labels[part[r]];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

/// Trains in place. Deterministic given (model init, dataset, cfg).
inline TrainHistory train(MmpModel& model, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  check_compatible(model, ds);
  auto train_idx = ds.indices(Split::kTrain);
  const auto val_idx = ds.indices(Split::kVal);
  if (train_idx.empty()) throw ContractError("dataset has no training split");

  ParameterStore& store = model.parameters();
  for (const auto& prefix : cfg.freeze) model.set_trainable(prefix, false);
  const std::size_t per_epoch = (train_idx.size() + cfg.batch - 1) / cfg.batch;
  AdamWConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.eps = cfg.eps;
  ocfg.weight_decay = cfg.weight_decay;
  ocfg.schedule = cfg.schedule;
  ocfg.poly_power = cfg.poly_power;
  ocfg.total_steps = per_epoch * cfg.epochs;
  AdamW opt(store, ocfg);

  Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
  Rng mask_rng = make_rng(cfg.seed, "mask");
  MaskSchedulerConfig mcfg;
  mcfg.p_none = cfg.p_none;
  const std::size_t m = model.num_modalities();

  TrainHistory history;
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    const bool warmup = epoch < cfg.warmup_dropout_epochs;
    const SubstitutionMode mode = warmup ? SubstitutionMode::kZeroFill : cfg.mode();
    const bool align = !warmup && cfg.alignment();
    double task_sum = 0.0, align_sum = 0.0;
    std::size_t align_count = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch, ++iteration) {
      const std::span<const std::size_t> part(train_idx.data() + start, std::min(cfg.batch, train_idx.size() - start));
      const MaskPattern pattern = sample_mask(mask_rng, m, mcfg);
      const auto inputs = ds.batch_inputs(part);
      const auto labels = ds.batch_labels(part);
      Tape tape;
      try {
        const auto r = model.forward(tape, inputs, pattern, mode);
        const auto loss = model.total_loss(tape, r, labels, align);
        if (!std::isfinite(loss.total_value())) throw NonFiniteError("non-finite loss");
        task_sum += loss.task_value() * static_cast<double>(part.size());
        if (!r.projected.empty()) {
          const double a = align ? loss.alignment_value()
                                 : model.total_loss(tape, r, labels, true).alignment_value();
          align_sum += a;
          ++align_count;
        }
        tape.run_backward(loss.total);
        tape.write_gradients(store);
      } catch (const NonFiniteError& e) {
        throw DivergenceError("training diverged at iteration " + std::to_string(iteration) + " (epoch " +
                              std::to_string(epoch + 1) + "): " + e.what());
      }
      opt.step(store);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.task_loss = task_sum / static_cast<double>(train_idx.size());
    rec.alignment_loss = align_count ? align_sum / static_cast<double>(align_count) : 0.0;
    rec.val_accuracy = accuracy(model, ds, val_idx, MaskPattern::none(m), SubstitutionMode::kZeroFill);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ScenarioAccuracy {
  std::string scenario;
  SubstitutionMode mode = SubstitutionMode::kZeroFill;
  std::size_t num_masked = 0;
  double accuracy = 0.0;
};

/// Substituted vs. real tokens of one masked modality in one scenario.
struct AlignmentDiagnostic {
  std::string scenario;
  std::string modality;
  SubstitutionMode mode = SubstitutionMode::kZeroFill;
  std::size_t num_masked = 0;
  double smooth_l1 = 0.0;
  double mse = 0.0;
  /// Mean per-sample cosine between logits with real and substituted tokens.
  double cosine = 0.0;
};

/// Results of one trained model (one tag, one seed).
struct RunRecord {
  std::string tag;
  std::uint64_t seed = 0;
  std::vector<ScenarioAccuracy> accuracy;
  std::vector<AlignmentDiagnostic> alignment;

  /// Mean accuracy over scenarios with at least one missing modality.
  double missing_average(SubstitutionMode mode) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& a : accuracy) {
      if (a.mode != mode || a.num_masked == 0) continue;
      s += a.accuracy;
      ++n;
    }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

struct EvalOptions {
  std::vector<SubstitutionMode> modes{SubstitutionMode::kZeroFill, SubstitutionMode::kMmp};
  std::size_t alignment_samples = 512;
  bool diagnostics = true;
  Split split = Split::kTest;
};

/// Every scenario x mode. Predictions see only the available modalities'
/// inputs; real tokens of masked modalities are used for diagnostics only.
inline RunRecord evaluate(const MmpModel& model, const Dataset& ds, const EvalOptions& opts, std::string tag = "",
                          std::uint64_t seed = 0) {
  check_compatible(model, ds);
  const auto idx = ds.indices(opts.split);
  if (idx.empty()) throw ContractError("evaluation split is empty");
  RunRecord rec;
  rec.tag = std::move(tag);
  rec.seed = seed;
  const std::size_t m = model.num_modalities();
  const auto names = model.modality_names();
  const auto scenarios = enumerate_scenarios(m);
  for (const auto& pattern : scenarios) {
    for (auto mode : opts.modes) {
      rec.accuracy.push_back(
          {scenario_name(pattern, names), mode, pattern.masked().size(), accuracy(model, ds, idx, pattern, mode)});
    }
  }
  if (!opts.diagnostics || opts.alignment_samples == 0) return rec;

  const std::span<const std::size_t> diag_idx(idx.data(), std::min(opts.alignment_samples, idx.size()));
  const InputMap all_inputs = ds.batch_inputs(diag_idx);
  const Tensor real_logits = model.predict(all_inputs, MaskPattern::none(m), SubstitutionMode::kZeroFill);
  for (const auto& pattern : scenarios) {
    if (pattern.empty()) continue;
    for (auto mode : opts.modes) {
      InputMap visible;
      for (auto j : pattern.available()) visible.emplace(j, all_inputs.at(j));
      Tape tape;
      ForwardOptions fo;
      fo.collect_targets = false;
      const auto r = model.forward(tape, visible, pattern, mode, fo);
      const Tensor& logits = r.logits.value();
      double cos_sum = 0.0;
      for (std::size_t s = 0; s < diag_idx.size(); ++s) {
        const auto c = logits.cols();
        cos_sum += cosine_similarity(std::span<const double>(real_logits.data()).subspan(s * c, c),
                                     std::span<const double>(logits.data()).subspan(s * c, c));
      }
      for (auto i : pattern.masked()) {
        const Tensor real = model.embed(tape, i, all_inputs.at(i)).value();
        const Tensor& sub = r.branch_tokens.at(i).value();
        Tape scratch;
        const double sl1 = smooth_l1(scratch.constant(sub), scratch.constant(real)).value().item();
        rec.alignment.push_back({scenario_name(pattern, names), names[i], mode, pattern.masked().size(), sl1,
                                 mse(sub, real), cos_sum / static_cast<double>(diag_idx.size())});
      }
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<AblationTag> tags{std::begin(kAllTags), std::end(kAllTags)};
  std::size_t threads = 1;
  std::size_t alignment_samples = 512;
};

struct OrderingCheck {
  std::vector<std::pair<std::string, double>> means;  // ascending rung order
  double tolerance = 0.01;
  bool pass = false;
};

struct AblationResult {
  std::vector<RunRecord> runs;  // sorted by (tag rung, seed)
  std::vector<TrainHistory> histories;
  OrderingCheck ordering;
};

inline double mean_of(std::span<const double> xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation; 0 for fewer than two values.
inline double stddev_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mu = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Mean missing-modality accuracy per tag must not decrease along the
/// ladder dropout, lp, lp_align, ca_align (up to `tolerance`).
inline OrderingCheck check_ordering(const std::vector<RunRecord>& runs, double tolerance = 0.01) {
  OrderingCheck out;
  out.tolerance = tolerance;
  for (auto tag : kAllTags) {
    std::vector<double> xs;
    for (const auto& r : runs)
      if (r.tag == to_string(tag)) xs.push_back(r.missing_average(mode_for(tag)));
    if (!xs.empty()) out.means.emplace_back(std::string(to_string(tag)), mean_of(xs));
  }
  out.pass = out.means.size() == std::size(kAllTags);
  for (std::size_t i = 1; i < out.means.size(); ++i)
    if (out.means[i].second < out.means[i - 1].second - tolerance) out.pass = false;
  return out;
}

/// Trains every (tag, seed) on the same data, model seed = run seed, and
/// evaluates each tag in its own substitution mode.
inline AblationResult run_ablation(const Dataset& ds, const ModelConfig& model_cfg, const AblationConfig& cfg,
                                   const std::function<void(std::string_view)>& progress = {}) {
  if (cfg.seeds.empty() || cfg.tags.empty()) throw ValidationError("ablation needs at least one tag and seed");
  struct Job {
    AblationTag tag;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto tag : cfg.tags)
    for (auto seed : cfg.seeds) jobs.push_back({tag, seed});
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return std::pair(static_cast<int>(a.tag), a.seed) < std::pair(static_cast<int>(b.tag), b.seed);
  });

  AblationResult result;
  result.runs.resize(jobs.size());
  result.histories.resize(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mu;
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        TrainConfig tc = cfg.train;
        tc.tag = jobs[j].tag;
        tc.seed = jobs[j].seed;
        MmpModel model(model_cfg, jobs[j].seed);
        result.histories[j] = train(model, ds, tc);
        EvalOptions eo;
        eo.modes = {tc.mode()};
        eo.alignment_samples = cfg.alignment_samples;
        result.runs[j] = evaluate(model, ds, eo, std::string(to_string(tc.tag)), tc.seed);
        if (progress) {
          std::lock_guard lock(progress_mu);
          progress(std::string(to_string(tc.tag)) + " seed " + std::to_string(tc.seed) + " done");
        }
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.threads, jobs.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  result.ordering = check_ordering(result.runs);
  return result;
}

}  // namespace mmp
