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

// Run configuration: flat `key=value` text with dotted namespaces.

#pragma once

#include <charconv>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "mmp/harness.hpp"
#include "mmp/synthdata.hpp"

namespace mmp {

struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig data;
  /// Per-modality token counts and native widths; empty means 8 each.
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> widths;
  std::size_t common_width = 16;
  std::size_t aggregated_tokens = 8;
  std::size_t heads = 4;
  std::size_t projector_hidden = 32;
  std::size_t encoder_hidden = 32;
  bool per_modality_update = false;
  TrainConfig train;
  std::size_t ablate_seeds = 5;
  std::size_t ablate_threads = 1;
  std::vector<SubstitutionMode> eval_modes{SubstitutionMode::kZeroFill, SubstitutionMode::kMmp,
                                           SubstitutionMode::kLinearProjection};
  std::size_t eval_alignment_samples = 512;
  std::string out = "runs";

  RunConfig() {
    train.warmup_dropout_epochs = 10;
  }

  SynthConfig synth() const {
    SynthConfig s = data;
    s.seed = seed;
    return s;
  }

  ModelConfig model() const {
    ModelConfig m;
    const std::size_t count = data.feature_lengths.size();
    if (!tokens.empty() && tokens.size() != count) throw ValidationError("model.tokens needs one entry per modality");
    if (!widths.empty() && widths.size() != count) throw ValidationError("model.widths needs one entry per modality");
    for (std::size_t i = 0; i < count; ++i) {
      m.modalities.push_back({"m" + std::to_string(i), tokens.empty() ? 8 : tokens[i], widths.empty() ? 8 : widths[i],
                              data.feature_lengths[i]});
    }
    m.classes = data.classes;
    m.common_width = common_width;
    m.aggregated_tokens = aggregated_tokens;
    m.heads = heads;
    m.projector_hidden = projector_hidden;
    m.encoder_hidden = encoder_hidden;
    m.per_modality_update = per_modality_update;
    m.validate();
    return m;
  }

  TrainConfig train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
  }

  std::vector<std::uint64_t> ablation_seeds() const {
    std::vector<std::uint64_t> s;
    for (std::size_t i = 0; i < ablate_seeds; ++i) s.push_back(seed + i);
    return s;
  }

  void validate() const {
    synth().validate();
    model();
    train.validate();
    if (ablate_seeds == 0) throw ValidationError("ablate.seeds must be positive");
    if (eval_modes.empty()) throw ValidationError("eval.modes must name at least one mode");
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValidationError("bad value for " + key + ": '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("bad value for " + key + ": '" + v + "' (expected true/false)");
}

inline std::vector<std::string> split(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    auto comma = v.find(',', start);
    if (comma == std::string::npos) comma = v.size();
    auto item = trim(std::string_view(v).substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& item : split(v)) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

// Shortest text that parses back to the same double.
inline std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename Seq, typename F>
std::string join(const Seq& xs, F f) {
  std::string s;
  for (const auto& x : xs) s += (s.empty() ? "" : ",") + f(x);
  return s;
}

struct Field {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string size_str(std::size_t v) { return std::to_string(v); }

#define MMP_SIZE_FIELD(KEY, MEMBER, DOC)                                                             \
  Field {                                                                                            \
    KEY, DOC, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<std::size_t>(KEY, v); }, \
        [](const RunConfig& c) { return std::to_string(c.MEMBER); }                                  \
  }
#define MMP_DOUBLE_FIELD(KEY, MEMBER, DOC)                                                       \
  Field {                                                                                        \
    KEY, DOC, [](RunConfig& c, const std::string& v) { c.MEMBER = parse_number<double>(KEY, v); }, \
        [](const RunConfig& c) { return num(c.MEMBER); }                                         \
  }

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      Field{"seed", "root seed for data, initialization, masking and shuffling",
            [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"out", "output root (default: $MMP_OUT, else ./runs)",
            [](RunConfig& c, const std::string& v) { c.out = v; }, [](const RunConfig& c) { return c.out; }},
      Field{"data.feature_lengths", "comma list, one feature length per modality",
            [](RunConfig& c, const std::string& v) { c.data.feature_lengths = parse_sizes("data.feature_lengths", v); },
            [](const RunConfig& c) { return join(c.data.feature_lengths, size_str); }},
      MMP_SIZE_FIELD("data.latent", data.latent, "latent width k"),
      MMP_SIZE_FIELD("data.classes", data.classes, "class count C"),
      MMP_SIZE_FIELD("data.n_train", data.n_train, "training samples"),
      MMP_SIZE_FIELD("data.n_val", data.n_val, "validation samples"),
      MMP_SIZE_FIELD("data.n_test", data.n_test, "test samples"),
      MMP_DOUBLE_FIELD("data.noise", data.noise, "feature noise scale sigma"),
      MMP_DOUBLE_FIELD("data.map_gain", data.map_gain, "scale of the latent-to-feature maps"),
      MMP_SIZE_FIELD("data.view_rank", data.view_rank, "rank of each latent-to-feature map (0 = full)"),
      Field{"model.tokens", "comma list of token counts N_i (empty = 8 each)",
            [](RunConfig& c, const std::string& v) { c.tokens = parse_sizes("model.tokens", v); },
            [](const RunConfig& c) { return join(c.tokens, size_str); }},
      Field{"model.widths", "comma list of native widths d_i (empty = 8 each)",
            [](RunConfig& c, const std::string& v) { c.widths = parse_sizes("model.widths", v); },
            [](const RunConfig& c) { return join(c.widths, size_str); }},
      MMP_SIZE_FIELD("model.common_width", common_width, "common projection width d"),
      MMP_SIZE_FIELD("model.aggregated_tokens", aggregated_tokens, "aggregated tokens K per modality"),
      MMP_SIZE_FIELD("model.heads", heads, "attention heads H"),
      MMP_SIZE_FIELD("model.projector_hidden", projector_hidden, "hidden width of the projector MLP"),
      MMP_SIZE_FIELD("model.encoder_hidden", encoder_hidden, "hidden width of the branch encoders"),
      Field{"model.per_modality_update", "separate bank update attention per modality",
            [](RunConfig& c, const std::string& v) {
              c.per_modality_update = parse_bool("model.per_modality_update", v);
            },
            [](const RunConfig& c) { return std::string(c.per_modality_update ? "true" : "false"); }},
      MMP_SIZE_FIELD("train.epochs", train.epochs, "training epochs"),
      MMP_SIZE_FIELD("train.batch", train.batch, "batch size"),
      MMP_DOUBLE_FIELD("train.lr", train.lr, "learning rate"),
      MMP_DOUBLE_FIELD("train.weight_decay", train.weight_decay, "decoupled weight decay"),
      MMP_DOUBLE_FIELD("train.eps", train.eps, "optimizer epsilon"),
      Field{"train.schedule", "constant | poly",
            [](RunConfig& c, const std::string& v) {
              if (v == "constant") c.train.schedule = LrSchedule::kConstant;
              else if (v == "poly") c.train.schedule = LrSchedule::kPoly;
              else throw ValidationError("bad value for train.schedule: '" + v + "'");
            },
            [](const RunConfig& c) {
              return std::string(c.train.schedule == LrSchedule::kPoly ? "poly" : "constant");
            }},
      MMP_DOUBLE_FIELD("train.poly_power", train.poly_power, "exponent of the poly schedule"),
      MMP_DOUBLE_FIELD("train.p_none", train.p_none, "probability of an unmasked iteration"),
      Field{"train.tag", "dropout | lp | lp_align | ca_align",
            [](RunConfig& c, const std::string& v) { c.train.tag = parse_tag(v); },
            [](const RunConfig& c) { return std::string(to_string(c.train.tag)); }},
      MMP_SIZE_FIELD("train.warmup_dropout_epochs", train.warmup_dropout_epochs,
                     "leading epochs of plain dropout before the tag's mode"),
      Field{"train.freeze", "comma list of parameter-name prefixes kept fixed",
            [](RunConfig& c, const std::string& v) { c.train.freeze = split(v); },
            [](const RunConfig& c) { return join(c.train.freeze, [](const std::string& s) { return s; }); }},
      MMP_SIZE_FIELD("ablate.seeds", ablate_seeds, "number of seeds (seed, seed+1, ...)"),
      MMP_SIZE_FIELD("ablate.threads", ablate_threads, "concurrent training runs"),
      Field{"eval.modes", "comma list of substitution modes to evaluate",
            [](RunConfig& c, const std::string& v) {
              c.eval_modes.clear();
              for (const auto& s : split(v)) c.eval_modes.push_back(parse_substitution_mode(s));
            },
            [](const RunConfig& c) {
              return join(c.eval_modes, [](SubstitutionMode m) { return std::string(to_string(m)); });
            }},
      MMP_SIZE_FIELD("eval.alignment_samples", eval_alignment_samples, "test samples used for alignment diagnostics"),
  };
  return table;
}

#undef MMP_SIZE_FIELD
#undef MMP_DOUBLE_FIELD

}  // namespace config_detail

/// Applies one `key=value` assignment. Unknown keys are rejected.
inline void apply_setting(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ValidationError("expected key=value, got '" + std::string(assignment) + "'");
  const std::string key = config_detail::trim(assignment.substr(0, eq));
  const std::string value = config_detail::trim(assignment.substr(eq + 1));
  for (const auto& f : config_detail::fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

/// Parses a config document: one assignment per line, `#` starts a comment.
inline void apply_config_text(RunConfig& cfg, std::string_view text) {
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (config_detail::trim(line).empty()) continue;
    try {
      const std::string key = config_detail::trim(line.substr(0, line.find('=')));
      if (!seen.insert(key).second) throw ValidationError("duplicate key '" + key + "'");
      apply_setting(cfg, line);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

/// Every key with its current value, in a fixed order. Parsing this text
/// reproduces the configuration exactly.
inline std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_detail::fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

/// Key, default value and description of every setting.
inline std::string describe_settings() {
  const RunConfig defaults;
  std::string out;
  for (const auto& f : config_detail::fields()) out += f.key + "=" + f.get(defaults) + "  # " + f.doc + "\n";
  return out;
}

}  // namespace mmp
