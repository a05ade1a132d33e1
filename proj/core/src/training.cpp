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

#include "nfbeam/training.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace nfbeam {

double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps, double min_fraction) {
  if (total_steps == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  const double floor = base * min_fraction;
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

Tensor<float> make_batch(std::span<const Sample> samples, const std::vector<std::size_t>& idx, int P, int K, int G) {
  Tensor<float> x({static_cast<int>(idx.size()), P, 2, K, G});
  const std::size_t per = static_cast<std::size_t>(P) * 2 * K * G;
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Sample& s = samples[idx[b]];
    if (s.pilots.size() != per) throw std::invalid_argument("sample tensor size does not match model dimensions");
    std::memcpy(x.data.data() + b * per, s.pilots.data(), per * sizeof(float));
  }
  return x;
}

namespace {

enum class Stage { kPretrain, kFinetune };

struct Snapshot {
  std::vector<Mat<float>> params;
  std::vector<Mat<float>> buffers;
};

Snapshot take_snapshot(nn::CnnGpt<float>& model) {
  Snapshot s;
  for (auto* p : model.parameters()) s.params.push_back(p->value);
  for (auto& [n, m] : model.buffers()) s.buffers.push_back(*m);
  return s;
}

void restore(nn::CnnGpt<float>& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s.params[i];
  auto bufs = model.buffers();
  for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].second = s.buffers[i];
}

void check_dims(const nn::CnnGpt<float>& model, std::span<const Sample> data) {
  const auto& d = model.dims();
  const std::size_t per = static_cast<std::size_t>(d.context_frames) * 2 * d.num_subcarriers * d.widebeam_count;
  for (const Sample& s : data) {
    if (s.pilots.size() != per || s.labels.size() != static_cast<std::size_t>(d.context_frames) + 1)
      throw std::invalid_argument("dataset dimensions do not match the model");
  }
}

/// Own-frame loss/accuracy over all positions, no masking, inference mode.
NextFrameScore score_own_frame(nn::CnnGpt<float>& model, std::span<const Sample> data, int batch_size) {
  const auto& d = model.dims();
  const int P = d.context_frames;
  double loss = 0.0;
  std::size_t correct = 0, terms = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      idx.push_back(i);
      for (int p = 0; p < P; ++p) labels.push_back(data[i].labels[static_cast<std::size_t>(p)]);
    }
    const Mat<float> logits = model.forward(make_batch(data, idx, P, d.num_subcarriers, d.widebeam_count), {});
    const auto r = pretrain_loss(logits, labels);
    loss += r.loss * static_cast<double>(r.terms);
    correct += r.correct;
    terms += r.terms;
  }
  if (terms == 0) return {};
  return {loss / static_cast<double>(terms), static_cast<double>(correct) / static_cast<double>(terms)};
}

TrainResult run(nn::CnnGpt<float>& model, std::span<const Sample> train, std::span<const Sample> val,
                const TrainOptions& opt, Stage stage) {
  const TrainConfig& tc = opt.train;
  tc.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  check_dims(model, train);
  check_dims(model, val);

  const auto& d = model.dims();
  const int P = d.context_frames;
  const bool pre = stage == Stage::kPretrain;
  const double base_lr = pre ? tc.pretrain_lr : tc.finetune_lr;
  const int epochs = pre ? tc.pretrain_epochs : tc.finetune_epochs;
  const bool freeze = !opt.direct && (pre ? tc.freeze_stage == FreezeStage::kPretrain
                                          : tc.freeze_stage == FreezeStage::kFinetune);

  auto params = model.parameters();
  std::vector<bool> frozen(params.size(), false);
  if (freeze)
    for (std::size_t i = 0; i < params.size(); ++i) frozen[i] = model.is_frozen_in_finetune(*params[i]);

  const std::size_t bs = static_cast<std::size_t>(tc.batch_size);
  std::uint64_t budget = static_cast<std::uint64_t>(epochs) * train.size();
  if (opt.max_samples > 0) budget = opt.max_samples;
  const std::uint64_t total_steps = (budget + bs - 1) / bs;

  Rng rng(derive_seed(tc.seed, {pre ? 1u : (opt.direct ? 3u : 2u)}));
  AdamState<float> adam;
  const AdamOptions aopt{tc.beta1, tc.beta2, tc.adam_eps, tc.grad_clip};

  TrainResult res;
  Snapshot best;
  bool have_best = false;
  double run_loss = 0.0;
  std::size_t run_terms = 0, run_correct = 0;
  int eval_index = 0;
  std::uint64_t next_eval = opt.eval_every_samples;

  auto evaluate_now = [&]() -> bool {
    ++eval_index;
    const char* name = pre ? "pretrain" : "finetune";
    EpochLog tr{name, eval_index, "train", run_terms ? run_loss / run_terms : 0.0,
                run_terms ? static_cast<double>(run_correct) / run_terms : 0.0, res.samples_seen};
    res.log.push_back(tr);
    if (opt.on_log) opt.on_log(tr);
    run_loss = 0.0;
    run_terms = run_correct = 0;
    if (val.empty()) return false;
    const NextFrameScore s = pre ? score_own_frame(model, val, tc.batch_size) : score_next_frame(model, val, tc.batch_size);
    EpochLog vl{name, eval_index, "val", s.loss, s.accuracy, res.samples_seen};
    res.log.push_back(vl);
    if (opt.on_log) opt.on_log(vl);
    if (s.accuracy > res.best_val_accuracy || (s.accuracy == res.best_val_accuracy && s.loss < res.best_val_loss)) {
      res.best_val_accuracy = s.accuracy;
      res.best_val_loss = s.loss;
      best = take_snapshot(model);
      have_best = true;
    }
    return opt.stop_at_val_accuracy > 0 && s.accuracy >= opt.stop_at_val_accuracy;
  };

  std::vector<std::size_t> order(train.size());
  bool stop = false;
  while (!stop && res.samples_seen < budget) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size() && res.samples_seen < budget; start += bs) {
      const std::size_t end = std::min({order.size(), start + bs, start + static_cast<std::size_t>(budget - res.samples_seen)});
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor<float> x = make_batch(train, idx, P, d.num_subcarriers, d.widebeam_count);

      nn::ForwardTrace<float> trace;
      const nn::ForwardOptions fo{true, freeze, &rng};
      LossResult<float> loss;
      if (pre) {
        const MaskPlan plan = apply_mask(x, tc.mask_alpha, rng);
        std::vector<int> labels;
        labels.reserve(idx.size() * P);
        for (std::size_t i : idx)
          for (int p = 0; p < P; ++p) labels.push_back(train[i].labels[static_cast<std::size_t>(p)]);
        const Mat<float> logits = model.forward(x, fo, &trace);
        loss = pretrain_loss(logits, labels, tc.masked_only_loss ? &plan.masked : nullptr);
      } else {
        std::vector<int> next;
        for (std::size_t i : idx) next.push_back(train[i].labels[static_cast<std::size_t>(P)]);
        const Mat<float> logits = model.forward(x, fo, &trace);
        loss = finetune_loss(logits, next, P);
      }
      model.zero_grad();
      model.backward(trace, loss.dlogits);
      for (std::size_t i = 0; i < params.size(); ++i)
        if (frozen[i]) params[i]->zero_grad();
      optimizer_step(params, adam, cosine_lr(base_lr, res.steps, total_steps, tc.min_lr_fraction), aopt, frozen);

      ++res.steps;
      res.samples_seen += idx.size();
      run_loss += loss.loss * static_cast<double>(loss.terms);
      run_terms += loss.terms;
      run_correct += loss.correct;

      if (opt.eval_every_samples > 0 && res.samples_seen >= next_eval) {
        next_eval += opt.eval_every_samples;
        if (evaluate_now()) {
          stop = true;
          break;
        }
      }
    }
    if (!stop && opt.eval_every_samples == 0 && evaluate_now()) stop = true;
  }
  if (have_best) restore(model, best);
  model.zero_grad();
  return res;
}

}  // namespace

NextFrameScore score_next_frame(nn::CnnGpt<float>& model, std::span<const Sample> data, int batch_size) {
  const auto& d = model.dims();
  const int P = d.context_frames;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx;
    std::vector<int> next;
    for (std::size_t i = start; i < end; ++i) {
      idx.push_back(i);
      next.push_back(data[i].labels[static_cast<std::size_t>(P)]);
    }
    const Mat<float> logits = model.forward(make_batch(data, idx, P, d.num_subcarriers, d.widebeam_count), {});
    const auto r = finetune_loss(logits, next, P);
    loss += r.loss * static_cast<double>(r.terms);
    correct += r.correct;
  }
  if (data.empty()) return {};
  return {loss / static_cast<double>(data.size()), static_cast<double>(correct) / static_cast<double>(data.size())};
}

TrainResult pretrain(nn::CnnGpt<float>& model, std::span<const Sample> train, std::span<const Sample> val,
                     const TrainOptions& opt) {
  return run(model, train, val, opt, Stage::kPretrain);
}

TrainResult finetune(nn::CnnGpt<float>& model, std::span<const Sample> train, std::span<const Sample> val,
                     const TrainOptions& opt) {
  if (opt.direct) model.initialize();
  return run(model, train, val, opt, Stage::kFinetune);
}

void write_training_log(const std::string& path, const std::vector<EpochLog>& log) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << "stage,epoch,split,loss,accuracy,samples_seen\n";
    for (const auto& e : log)
      out << e.stage << ',' << e.epoch << ',' << e.split << ',' << format_double(e.loss) << ','
          << format_double(e.accuracy) << ',' << e.samples_seen << '\n';
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace nfbeam
