// SPDX-License-Identifier: Apache-2.0
//
// nfbeam - near-field beam prediction toolkit
// Copyright (C) 2026 The nfbeam authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// nfbeam: dataset generation, training, evaluation and sweeps.

#include "nfbeam/dataset.hpp"
#include "nfbeam/eval.hpp"
#include "nfbeam/manifest.hpp"
#include "nfbeam/nn/model.hpp"
#include "nfbeam/selfcheck.hpp"
#include "nfbeam/sysconfig.hpp"
#include "nfbeam/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace {

using namespace nfbeam;
using nn::CheckpointInfo;
using nn::load_checkpoint;
using nn::read_checkpoint_info;
using nn::save_checkpoint;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Raised for bad flag values discovered after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::string preset_name = "desk";
  std::vector<std::string> sets;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::optional<double> noise_dbm;
  std::optional<double> alpha;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::string freeze_stage;
  bool masked_only = false;
};

RunConfig resolve_config(const CommonOptions& o, const std::string& command) {
  try {
    RunConfig cfg = preset(o.preset_name);
    std::string path = o.config_path;
    if (path.empty())
      if (const char* env = std::getenv("NFBEAM_CONFIG")) path = env;
    if (!path.empty()) cfg = load_config_file(path, cfg);
    for (const auto& s : o.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
      set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (o.noise_dbm) cfg.system.noise_power_dbm = *o.noise_dbm;
    if (o.alpha) cfg.train.mask_alpha = *o.alpha;
    if (o.epochs) (command == "pretrain" ? cfg.train.pretrain_epochs : cfg.train.finetune_epochs) = *o.epochs;
    if (o.lr) (command == "pretrain" ? cfg.train.pretrain_lr : cfg.train.finetune_lr) = *o.lr;
    if (!o.freeze_stage.empty()) cfg.train.freeze_stage = parse_freeze_stage(o.freeze_stage);
    if (o.masked_only) cfg.train.masked_only_loss = true;
    cfg.validate();
    return cfg;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

PilotVariant pilot_flag(const std::string& s) {
  try {
    return parse_pilot_variant(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("--config", o.config_path, "Configuration file (default: $NFBEAM_CONFIG)");
  sub->add_option("--preset", o.preset_name, "Base preset: desk or paper")->capture_default_str();
  sub->add_option("--set", o.sets, "Override a configuration key, e.g. --set system.num_subcarriers=16");
  sub->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest manifest_for(const std::string& command, const std::vector<std::string>& args, const RunConfig& cfg,
                         std::uint64_t seed, std::vector<std::string> artifacts, const Stopwatch& sw) {
  RunManifest m;
  m.command = command;
  m.arguments = args;
  m.config_hash = config_hash(cfg);
  m.master_seed = seed;
  m.artifacts = std::move(artifacts);
  m.wall_clock_s = sw.seconds();
  m.git_describe = build_git_describe();
  return m;
}

void print_log_row(const EpochLog& e) {
  std::cout << std::left << std::setw(9) << e.stage << " eval " << std::setw(3) << e.epoch << ' ' << std::setw(5)
            << e.split << " loss " << std::fixed << std::setprecision(4) << e.loss << "  acc " << e.accuracy
            << "  samples " << e.samples_seen << std::endl;
}

std::span<const Sample> range(const std::vector<Sample>& v, const SplitRange& r) {
  return std::span<const Sample>(v).subspan(r.begin, r.size());
}

void check_system_dims(const SystemConfig& data, const nn::ModelDims& dims) {
  if (!(nn::ModelDims::from(data) == dims))
    throw std::runtime_error("dataset dimensions do not match the checkpoint");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"nfbeam: near-field beam prediction toolkit"};
  app.require_subcommand(1);

  CommonOptions common;

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "Generate a labelled dataset file");
  add_common(gen, common);
  std::string gen_out, gen_pilots = "zc", gen_norm = "per-frame";
  std::uint64_t gen_count = 1000, gen_first = 0;
  std::optional<std::uint64_t> gen_seed;
  bool gen_stats = false;
  gen->add_option("--out", gen_out, "Output dataset path")->required();
  gen->add_option("--count", gen_count, "Number of samples")->capture_default_str();
  gen->add_option("--noise-dbm", common.noise_dbm, "Receiver noise power (dBm)");
  gen->add_option("--seed", gen_seed, "Master seed (default: system.rng_seed)");
  gen->add_option("--first-index", gen_first, "Index of the first sample")->capture_default_str();
  gen->add_option("--pilots", gen_pilots, "Pilot variant: zc or simplified")->capture_default_str();
  gen->add_option("--normalization", gen_norm, "per-frame or whole-tensor")->capture_default_str();
  gen->add_flag("--store-stats", gen_stats, "Keep per-frame mean/std in each record");

  // pretrain / finetune
  std::string data_path, out_path, ckpt_path;
  bool direct = false;
  auto* pre = app.add_subcommand("pretrain", "Masked pre-training on per-frame labels");
  add_common(pre, common);
  pre->add_option("--data", data_path, "Dataset file")->required();
  pre->add_option("--out", out_path, "Output checkpoint")->required();
  pre->add_option("--alpha", common.alpha, "Mask ratio");
  pre->add_option("--epochs", common.epochs, "Epoch budget");
  pre->add_option("--lr", common.lr, "Base learning rate");
  pre->add_option("--freeze-stage", common.freeze_stage, "pretrain, finetune or none");
  pre->add_flag("--masked-only-loss", common.masked_only, "Supervise masked positions only");

  auto* fin = app.add_subcommand("finetune", "Next-frame fine-tuning");
  add_common(fin, common);
  fin->add_option("--data", data_path, "Dataset file")->required();
  fin->add_option("--out", out_path, "Output checkpoint")->required();
  fin->add_option("--ckpt", ckpt_path, "Pre-trained checkpoint");
  fin->add_option("--epochs", common.epochs, "Epoch budget");
  fin->add_option("--lr", common.lr, "Base learning rate");
  fin->add_option("--freeze-stage", common.freeze_stage, "pretrain, finetune or none");
  fin->add_flag("--direct", direct, "Train from scratch with nothing frozen");

  // evaluate
  std::string split = "test";
  auto* ev = app.add_subcommand("evaluate", "Accuracy, top-2 accuracy and NBG of a checkpoint");
  add_common(ev, common);
  ev->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
  ev->add_option("--data", data_path, "Dataset file")->required();
  ev->add_option("--out", out_path, "Report CSV")->required();
  ev->add_option("--split", split, "test or all")->capture_default_str();

  // sweep
  std::string axis_name, values_text, pilots = "zc";
  std::uint64_t test_count = 500;
  std::optional<std::uint64_t> sweep_seed;
  auto* sw = app.add_subcommand("sweep", "Evaluate over a grid of one parameter");
  add_common(sw, common);
  sw->add_option("--axis", axis_name, "noise_dbm, speed_kmh, rician_k_db or mask_alpha")->required();
  sw->add_option("--values", values_text, "Comma-separated values (default grid per axis)");
  sw->add_option("--ckpt", ckpt_path, "Checkpoint (not needed for mask_alpha)");
  sw->add_option("--out", out_path, "Output directory")->required();
  sw->add_option("--count", test_count, "Test samples per value")->capture_default_str();
  sw->add_option("--pilots", pilots, "zc or simplified")->capture_default_str();
  sw->add_option("--seed", sweep_seed, "Master seed (default: system.rng_seed)");

  auto* sc = app.add_subcommand("selfcheck", "Run the fast invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  Stopwatch clock;
  try {
    if (*gen) {
      const RunConfig cfg = resolve_config(common, "gen-dataset");
      DatasetSpec spec;
      spec.system = cfg.system;
      spec.pilot_variant = pilot_flag(gen_pilots);
      if (gen_norm == "per-frame")
        spec.normalization = Normalization::kPerFrame;
      else if (gen_norm == "whole-tensor")
        spec.normalization = Normalization::kWholeTensor;
      else
        throw UsageError("unknown normalization '" + gen_norm + "'");
      spec.master_seed = gen_seed.value_or(cfg.system.rng_seed);
      spec.first_index = gen_first;
      spec.store_stats = gen_stats;

      DatasetWriter writer(gen_out, make_header(spec, gen_count));
      constexpr std::uint64_t kChunk = 2048;
      for (std::uint64_t done = 0; done < gen_count; done += kChunk) {
        DatasetSpec part = spec;
        part.first_index = spec.first_index + done;
        const SampleFactory f(part);
        for (const auto& s : generate_samples(f, std::min(kChunk, gen_count - done), common.jobs)) writer.write(s);
      }
      writer.close();
      write_manifest(manifest_for("gen-dataset", args, cfg, spec.master_seed, {gen_out}, clock), gen_out);
      std::cout << "wrote " << gen_count << " samples to " << gen_out << "\n";
      return 0;
    }

    if (*pre || *fin) {
      const std::string command = *pre ? "pretrain" : "finetune";
      const RunConfig cfg = resolve_config(common, command);
      const LoadedDataset data = read_dataset(data_path);
      const DatasetSplit parts = split_80_10_10(data.samples.size());
      TrainOptions opt;
      opt.train = cfg.train;
      opt.on_log = print_log_row;
      std::optional<nn::CnnGpt<float>> model;
      if (*fin && !direct) {
        if (ckpt_path.empty()) throw UsageError("finetune needs --ckpt (or --direct)");
        const CheckpointInfo info = read_checkpoint_info(ckpt_path);
        model.emplace(info.model, info.dims);
        load_checkpoint(ckpt_path, *model);
      } else {
        model.emplace(cfg.model, nn::ModelDims::from(data.header.spec.system));
      }
      check_system_dims(data.header.spec.system, model->dims());
      opt.direct = direct;
      const auto train_part = range(data.samples, parts.train);
      const auto val_part = range(data.samples, parts.val);
      const TrainResult res = *pre ? pretrain(*model, train_part, val_part, opt) : finetune(*model, train_part, val_part, opt);

      CheckpointInfo info;
      info.step = res.steps;
      info.stage = direct ? "direct" : command;
      save_checkpoint(out_path, *model, info);
      const std::string log_path = out_path + ".log.csv";
      write_training_log(log_path, res.log);
      write_manifest(manifest_for(command, args, cfg, cfg.train.seed, {out_path, log_path}, clock), out_path);
      std::cout << "best validation accuracy " << res.best_val_accuracy << "; checkpoint " << out_path << "\n";
      return 0;
    }

    if (*ev) {
      const RunConfig cfg = resolve_config(common, "evaluate");
      const CheckpointInfo info = read_checkpoint_info(ckpt_path);
      nn::CnnGpt<float> model(info.model, info.dims);
      load_checkpoint(ckpt_path, model);
      const LoadedDataset data = read_dataset(data_path);
      check_system_dims(data.header.spec.system, model.dims());
      std::span<const Sample> part(data.samples);
      if (split == "test")
        part = range(data.samples, split_80_10_10(data.samples.size()).test);
      else if (split != "all")
        throw UsageError("--split must be test or all");
      const SampleFactory factory(data.header.spec);
      EvalOptions eo;
      eo.jobs = common.jobs;
      MetricsRecord r = evaluate(model_predictor(model), part, factory, eo);
      r.coordinate = data.header.spec.system.noise_power_dbm;
      const auto charts = emit_report({r}, out_path);
      std::vector<std::string> artifacts{out_path};
      artifacts.insert(artifacts.end(), charts.begin(), charts.end());
      write_manifest(manifest_for("evaluate", args, cfg, data.header.spec.master_seed, artifacts, clock), out_path);
      std::cout << "accuracy " << r.accuracy << "  top2 " << r.top2_accuracy << "  nbg " << r.mean_nbg << "  ("
                << r.sample_count << " samples)\n";
      return 0;
    }

    if (*sw) {
      const RunConfig cfg = resolve_config(common, "sweep");
      SweepAxis axis;
      try {
        axis = parse_sweep_axis(axis_name);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      std::vector<double> values = default_sweep_values(axis);
      if (!values_text.empty()) {
        values.clear();
        std::stringstream ss(values_text);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          try {
            values.push_back(parse_double(tok));
          } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
          }
        }
      }
      PipelineConfig pc;
      pc.run = cfg;
      pc.pilot_variant = pilot_flag(pilots);
      pc.master_seed = sweep_seed.value_or(cfg.system.rng_seed);
      pc.test_count = test_count;
      pc.jobs = common.jobs;
      std::optional<nn::CnnGpt<float>> model;
      if (axis != SweepAxis::kMaskAlpha) {
        if (ckpt_path.empty()) throw UsageError("sweep over " + axis_name + " needs --ckpt");
        const CheckpointInfo info = read_checkpoint_info(ckpt_path);
        model.emplace(info.model, info.dims);
        load_checkpoint(ckpt_path, *model);
        check_system_dims(cfg.system, model->dims());
      }
      const auto records = sweep(axis, values, pc, model ? &*model : nullptr);
      std::filesystem::create_directories(out_path);
      const std::string csv = (std::filesystem::path(out_path) / ("sweep_" + std::string(to_string(axis)) + ".csv")).string();
      const auto charts = emit_report(records, csv);
      std::vector<std::string> artifacts{csv};
      artifacts.insert(artifacts.end(), charts.begin(), charts.end());
      write_manifest(manifest_for("sweep", args, cfg, pc.master_seed, artifacts, clock), csv);
      for (const auto& r : records)
        std::cout << r.axis << " = " << r.coordinate << ": accuracy " << r.accuracy << "  top2 " << r.top2_accuracy
                  << "  nbg " << r.mean_nbg << "\n";
      return 0;
    }

    if (*sc) {
      bool ok = true;
      for (const auto& r : run_selfcheck()) {
        std::cout << (r.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(52) << r.name << r.detail << "\n";
        ok = ok && r.passed;
      }
      std::cout << "selfcheck finished in " << std::fixed << std::setprecision(2) << clock.seconds() << " s\n";
      return ok ? 0 : kExitRuntime;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
