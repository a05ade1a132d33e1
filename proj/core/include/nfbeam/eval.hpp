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

#pragma once

#include "nfbeam/dataset.hpp"
#include "nfbeam/nn/model.hpp"
#include "nfbeam/sysconfig.hpp"
#include "nfbeam/training.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nfbeam {

struct MetricsRecord {
  std::string axis = "none";  // sweep axis or "none"
  double coordinate = 0.0;
  std::string variant = "zc";
  double accuracy = 0.0;
  double top2_accuracy = 0.0;
  double mean_nbg = 0.0;
  std::size_t sample_count = 0;

  bool operator==(const MetricsRecord&) const = default;
};

/// Top-1 and top-2 beam candidates for the frame after the context window.
struct Prediction {
  int top1 = 0;
  int top2 = 0;
};

using Predictor = std::function<std::vector<Prediction>(std::span<const Sample>)>;

/// Runs the network in inference mode, batch by batch.
Predictor model_predictor(nn::CnnGpt<float>& model, int batch_size = 256);

/// Independent uniform draws over the codebook (two distinct indices).
Predictor uniform_random_predictor(int codebook_size, std::uint64_t seed);

/// Predicts the stored frame-(P+1) label; only meaningful as a reference.
Predictor oracle_predictor(int context_frames);

struct EvalOptions {
  int jobs = 1;
  bool warn_chance = true;
};

/// Accuracy, top-2 accuracy and NBG on `samples`. NBG regenerates each
/// sample's frame-(P+1) channel from its stored seed via `factory`.
MetricsRecord evaluate(const Predictor& predict, std::span<const Sample> samples, const SampleFactory& factory,
                       const EvalOptions& opt = {});

/// Wilson score interval for a binomial proportion at confidence z.
std::pair<double, double> binomial_ci(double successes, double trials, double z = 2.5758293035489004);

/// True when accuracy is within twice the uniform-guess level.
bool near_chance(double accuracy, int codebook_size);

enum class SweepAxis { kNoiseDbm, kSpeedKmh, kRicianKDb, kMaskAlpha };

std::string_view to_string(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view s);
std::vector<double> default_sweep_values(SweepAxis a);

/// Everything needed to regenerate a test set and (for mask_alpha) retrain.
struct PipelineConfig {
  RunConfig run;
  PilotVariant pilot_variant = PilotVariant::kZadoffChu;
  std::uint64_t master_seed = 1;
  std::uint64_t test_count = 1000;
  std::uint64_t test_first_index = 1'000'000;  // disjoint from training indices
  int jobs = 1;
};

/// Applies a sweep coordinate to a copy of the configuration.
PipelineConfig with_coordinate(PipelineConfig cfg, SweepAxis axis, double value);

/// Replaces the ZC pilots by constant 1/sqrt(K) entries and the digital
/// precoders by the identity.
PipelineConfig ablation_simplified_pilots(PipelineConfig cfg);

/// Pretrain (unless direct) and fine-tune a fresh model on training indices
/// disjoint from the test range. Validation uses a tenth of the fine-tune
/// budget. The direct variant trains from scratch on the union of both sets
/// for finetune_epochs * finetune_samples samples, validating every
/// finetune_samples.
struct TrainedPipeline {
  nn::CnnGpt<float> model;
  TrainResult pretrain_result;
  TrainResult finetune_result;
};
TrainedPipeline train_pipeline(const PipelineConfig& cfg, bool direct = false);

/// Test set of the pipeline (indices test_first_index ...).
std::vector<Sample> test_samples(const PipelineConfig& cfg);

/// For every value: regenerate the test set with that coordinate and
/// evaluate `model`; for mask_alpha the model is retrained per value.
std::vector<MetricsRecord> sweep(SweepAxis axis, const std::vector<double>& values, const PipelineConfig& cfg,
                                 nn::CnnGpt<float>* model);

/// CSV with one row per record plus one SVG line chart per axis, written as
/// <stem>_<axis>.svg next to the CSV (just <stem>.svg when the stem already
/// ends in _<axis>). Returns the chart paths.
std::vector<std::string> emit_report(const std::vector<MetricsRecord>& records, const std::string& csv_path);

std::vector<MetricsRecord> parse_report(const std::string& csv_path);

}  // namespace nfbeam
