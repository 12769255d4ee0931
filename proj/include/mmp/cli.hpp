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

// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mmp/config.hpp"
#include "mmp/harness.hpp"
#include "mmp/report.hpp"
#include "mmp/synthdata.hpp"

namespace mmp {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitStatus : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

namespace cli_detail {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

inline void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "config document (key=value lines)");
  cmd->add_option("--set", o.sets, "override a setting, e.g. --set train.epochs=2")->allow_extra_args(false);
  cmd->add_option("--seed", o.seed, "root seed (overrides the config value)");
}

/// Defaults, then $MMP_OUT, then the base text (a config file or a run's
/// snapshot), then --set, then --seed.
inline RunConfig resolve(const CommonOptions& o, const std::string& base_text = "") {
  RunConfig cfg;
  if (const char* env = std::getenv("MMP_OUT"); env && *env) cfg.out = env;
  if (!base_text.empty()) apply_config_text(cfg, base_text);
  if (!o.config_path.empty()) {
    const auto bytes = io::read_file(o.config_path);
    try {
      apply_config_text(cfg, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    } catch (const ValidationError& e) {
      throw ValidationError(o.config_path + ": " + e.what());
    }
  }
  for (const auto& s : o.sets) apply_setting(cfg, s);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

inline std::string read_text(const std::string& path) {
  const auto bytes = io::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

inline void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path.string(), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// <out>/run-<hash>, where the hash covers the resolved config (and a kind
/// label, so ablation and single runs never share a directory).
inline fs::path run_dir(const RunConfig& cfg, std::string_view kind) {
  const std::string text = std::string(kind) + "\n" + resolved_text(cfg);
  const fs::path dir = fs::path(cfg.out) / ("run-" + hex(sha256(text)).substr(0, 12));
  fs::create_directories(dir);
  write_text(dir / "config.resolved", resolved_text(cfg));
  return dir;
}

inline Dataset obtain_dataset(const RunConfig& cfg, const std::string& data_path, std::ostream& log) {
  if (!data_path.empty()) {
    Dataset ds = load_dataset(data_path);
    log << "loaded dataset " << data_path << " (" << ds.size() << " samples)\n";
    return ds;
  }
  return generate(cfg.synth());
}

inline EvalOptions eval_options(const RunConfig& cfg) {
  EvalOptions eo;
  eo.modes = cfg.eval_modes;
  eo.alignment_samples = cfg.eval_alignment_samples;
  return eo;
}

inline void write_report(const fs::path& dir, const EvalReport& report) {
  write_text(dir / "report.json", to_json_string(report));
  write_text(dir / "report.csv", to_csv(report));
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;
  CLI::App app{"Multimodal training with modality projection for missing inputs", "mmp"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, eval_opts, ablate_opts;
  std::string gen_output, train_data, eval_run, eval_data, eval_checkpoint, ablate_data, report_csv;
  std::vector<std::string> report_inputs;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset file");
  add_common(gen, gen_opts);
  gen->add_option("-o,--output", gen_output, "dataset path (default <run>/dataset.mmpd)");

  auto* tr = app.add_subcommand("train", "train one model (tag from train.tag)");
  add_common(tr, train_opts);
  tr->add_option("--data", train_data, "dataset file (default: generate from config)");

  auto* ev = app.add_subcommand("eval", "evaluate a trained run over every scenario");
  add_common(ev, eval_opts);
  ev->add_option("--run", eval_run, "run directory written by train")->required();
  ev->add_option("--data", eval_data, "dataset file (default: generate from the run's config)");

  auto* ab = app.add_subcommand("ablate", "train and evaluate the four ablation tags over several seeds");
  add_common(ab, ablate_opts);
  ab->add_option("--data", ablate_data, "dataset file (default: generate from config)");

  auto* rep = app.add_subcommand("report", "render one or more report.json files as tables");
  rep->add_option("reports", report_inputs, "report files")->required();
  rep->add_option("--csv", report_csv, "also write the merged flat CSV to this path ('-' for stdout)");

  auto* settings = app.add_subcommand("settings", "list every config key with its default");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kExitOk;
  } catch (const CLI::Success&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*settings) {
      out << describe_settings();
      return kExitOk;
    }
    if (*gen) {
      const RunConfig cfg = resolve(gen_opts);
      const Dataset ds = generate(cfg.synth());
      const fs::path path = gen_output.empty() ? run_dir(cfg, "data") / "dataset.mmpd" : fs::path(gen_output);
      save(ds, path.string());
      out << path.string() << "\n";
      return kExitOk;
    }
    if (*tr) {
      const RunConfig cfg = resolve(train_opts);
      const Dataset ds = obtain_dataset(cfg, train_data, err);
      MmpModel model(cfg.model(), cfg.seed);
      const TrainHistory history = train(model, ds, cfg.train_config());
      const fs::path dir = run_dir(cfg, "run");
      model.parameters().save((dir / "checkpoint.mmpc").string());
      write_text(dir / "history.csv", history.to_csv());
      if (!history.epochs.empty()) {
        const auto& last = history.epochs.back();
        err << "epoch " << last.epoch << ": task " << last.task_loss << ", alignment " << last.alignment_loss
            << ", val accuracy " << last.val_accuracy << "\n";
      }
      out << dir.string() << "\n";
      return kExitOk;
    }
    if (*ev) {
      const fs::path dir(eval_run);
      const RunConfig cfg = resolve(eval_opts, read_text((dir / "config.resolved").string()));
      const Dataset ds = obtain_dataset(cfg, eval_data, err);
      MmpModel model(cfg.model(), cfg.seed);
      model.parameters().assign_values(ParameterStore::load((dir / "checkpoint.mmpc").string()));
      EvalReport report;
      report.modalities = model.modality_names();
      report.runs.push_back(evaluate(model, ds, eval_options(cfg), std::string(to_string(cfg.train.tag)), cfg.seed));
      write_report(dir, report);
      out << render_report(report);
      return kExitOk;
    }
    if (*ab) {
      const RunConfig cfg = resolve(ablate_opts);
      const Dataset ds = obtain_dataset(cfg, ablate_data, err);
      AblationConfig ac;
      ac.train = cfg.train_config();
      ac.seeds = cfg.ablation_seeds();
      ac.threads = cfg.ablate_threads;
      ac.alignment_samples = cfg.eval_alignment_samples;
      const auto result = run_ablation(ds, cfg.model(), ac, [&](std::string_view msg) { err << msg << "\n"; });
      const fs::path dir = run_dir(cfg, "ablate");
      EvalReport report;
      report.modalities = cfg.model().modalities.size() ? MmpModel(cfg.model(), 0).modality_names()
                                                        : std::vector<std::string>{};
      report.runs = result.runs;
      write_report(dir, report);
      std::string hist = "tag,seed," + std::string("epoch,task_loss,alignment_loss,val_accuracy\n");
      for (std::size_t i = 0; i < result.runs.size(); ++i) {
        const std::string csv = result.histories[i].to_csv();
        std::size_t pos = csv.find('\n') + 1;
        while (pos < csv.size()) {
          const auto nl = csv.find('\n', pos);
          hist += result.runs[i].tag + "," + std::to_string(result.runs[i].seed) + "," + csv.substr(pos, nl - pos + 1);
          pos = nl + 1;
        }
      }
      write_text(dir / "history.csv", hist);
      out << render_report(report);
      out << "ordering dropout <= lp <= lp_align <= ca_align (tolerance " << result.ordering.tolerance * 100
          << " points): " << (result.ordering.pass ? "PASS" : "FAIL") << "\n";
      out << dir.string() << "\n";
      return kExitOk;
    }
    if (*rep) {
      std::vector<EvalReport> reports;
      for (const auto& p : report_inputs) reports.push_back(load_report(p));
      const EvalReport merged = merge_reports(reports);
      out << render_report(merged);
      if (report_csv == "-") out << to_csv(merged);
      else if (!report_csv.empty()) write_text(report_csv, to_csv(merged));
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    // Config problems are usage errors; malformed report files are runtime failures.
    if (*rep) {
      err << "error: " << e.what() << "\n";
      return kExitFailure;
    }
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace mmp
