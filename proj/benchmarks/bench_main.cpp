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

// Hot paths of dataset generation and training at desk and paper scale.

#include "nfbeam/channel.hpp"
#include "nfbeam/dataset.hpp"
#include "nfbeam/nn/model.hpp"
#include "nfbeam/oracle.hpp"
#include "nfbeam/training.hpp"

#include <benchmark/benchmark.h>

namespace {

using namespace nfbeam;

const char* preset_name(int i) { return i == 0 ? "desk" : "paper"; }

void BM_Label(benchmark::State& st) {
  const SystemConfig c = preset(preset_name(static_cast<int>(st.range(0)))).system;
  const Codebook book = near_field_codebook(c);
  Rng rng(1);
  const auto frames = generate_frame_sequence(c, sample_trajectory(c, rng), rng);
  for (auto _ : st) benchmark::DoNotOptimize(label_frame(frames[0], book));
  st.SetLabel(preset_name(static_cast<int>(st.range(0))));
}
BENCHMARK(BM_Label)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_ChannelSequence(benchmark::State& st) {
  const SystemConfig c = preset(preset_name(static_cast<int>(st.range(0)))).system;
  Rng rng(2);
  for (auto _ : st) benchmark::DoNotOptimize(generate_frame_sequence(c, sample_trajectory(c, rng), rng));
  st.SetLabel(preset_name(static_cast<int>(st.range(0))));
}
BENCHMARK(BM_ChannelSequence)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_Sample(benchmark::State& st) {
  DatasetSpec spec;
  spec.system = preset("desk").system;
  const SampleFactory f(spec);
  std::uint64_t i = 0;
  for (auto _ : st) benchmark::DoNotOptimize(f.build(i++));
}
BENCHMARK(BM_Sample)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& st) {
  const RunConfig rc = preset("desk");
  const nn::ModelDims dims = nn::ModelDims::from(rc.system);
  nn::CnnGpt<float> model(rc.model, dims);
  const int B = rc.train.batch_size, P = dims.context_frames;
  Tensor<float> x({B, P, 2, dims.num_subcarriers, dims.widebeam_count});
  Rng rng(3);
  for (auto& v : x.data) v = static_cast<float>(rng.normal());
  std::vector<int> labels(static_cast<std::size_t>(B) * P);
  for (auto& l : labels) l = static_cast<int>(rng.below(static_cast<std::uint64_t>(dims.codebook_size)));
  auto params = model.parameters();
  AdamState<float> adam;
  for (auto _ : st) {
    nn::ForwardTrace<float> trace;
    const Mat<float> logits = model.forward(x, {true, false, &rng}, &trace);
    const auto loss = pretrain_loss(logits, labels);
    model.zero_grad();
    model.backward(trace, loss.dlogits);
    optimizer_step(params, adam, 1e-4, AdamOptions{});
    benchmark::DoNotOptimize(loss.loss);
  }
  st.SetItemsProcessed(st.iterations() * B);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& st) {
  const RunConfig rc = preset("desk");
  const nn::ModelDims dims = nn::ModelDims::from(rc.system);
  nn::CnnGpt<float> model(rc.model, dims);
  const int B = 256;
  Tensor<float> x({B, dims.context_frames, 2, dims.num_subcarriers, dims.widebeam_count});
  for (auto _ : st) benchmark::DoNotOptimize(model.forward(x, {}));
  st.SetItemsProcessed(st.iterations() * B);
}
BENCHMARK(BM_Inference)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
