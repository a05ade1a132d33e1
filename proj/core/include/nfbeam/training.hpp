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
#include "nfbeam/rng.hpp"
#include "nfbeam/sysconfig.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfbeam {

using nn::Mat;
using nn::Tensor;

enum class MaskAction : std::uint8_t { kNone = 0, kZero, kRandom, kKeep };

/// Which frames were selected for masking and what replaced them. Entries
/// are indexed b P + p.
struct MaskPlan {
  int batch = 0;
  int frames = 0;
  std::vector<std::uint8_t> masked;
  std::vector<MaskAction> action;
  std::vector<int> source;  // donor sample for kRandom, -1 otherwise

  std::size_t masked_count() const {
    std::size_t n = 0;
    for (auto m : masked) n += m;
    return n;
  }
};

/// Selects each frame independently with probability alpha; selected frames
/// are zeroed (80%), replaced by the same slot of another sample in the batch
/// (10%) or left unchanged (10%). Modifies `x` (B x P x 2 x K x G) in place.
template <typename T>
MaskPlan apply_mask(Tensor<T>& x, double alpha, Rng& rng) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("mask ratio must lie in [0, 1)");
  if (x.shape.size() != 5) throw std::invalid_argument("apply_mask expects a rank-5 batch");
  const int B = x.shape[0], P = x.shape[1];
  const std::size_t frame = static_cast<std::size_t>(x.shape[2]) * x.shape[3] * x.shape[4];
  MaskPlan plan;
  plan.batch = B;
  plan.frames = P;
  plan.masked.assign(static_cast<std::size_t>(B) * P, 0);
  plan.action.assign(plan.masked.size(), MaskAction::kNone);
  plan.source.assign(plan.masked.size(), -1);
  if (alpha == 0.0) return plan;
  const std::vector<T> original = x.data;
  for (int b = 0; b < B; ++b) {
    for (int p = 0; p < P; ++p) {
      const std::size_t i = static_cast<std::size_t>(b) * P + p;
      if (!rng.bernoulli(alpha)) continue;
      plan.masked[i] = 1;
      const double u = rng.uniform();
      T* dst = x.data.data() + i * frame;
      if (u < 0.8) {
        plan.action[i] = MaskAction::kZero;
        std::fill(dst, dst + frame, T(0));
      } else if (u < 0.9) {
        plan.action[i] = MaskAction::kRandom;
        int donor = b;
        if (B > 1) {
          donor = static_cast<int>(rng.below(static_cast<std::uint64_t>(B - 1)));
          if (donor >= b) ++donor;
        }
        plan.source[i] = donor;
        const T* src = original.data() + (static_cast<std::size_t>(donor) * P + p) * frame;
        std::copy(src, src + frame, dst);
      } else {
        plan.action[i] = MaskAction::kKeep;
      }
    }
  }
  return plan;
}

/// Mean cross-entropy and its gradient with respect to the logits.
template <typename T>
struct LossResult {
  double loss = 0.0;
  Mat<T> dlogits;
  std::size_t terms = 0;
  std::size_t correct = 0;  // argmax hits over the supervised rows
};

/// Cross-entropy over the given logit rows; `rows[i]` is supervised with
/// `labels[i]`. Gradient rows outside `rows` are zero.
template <typename T>
LossResult<T> cross_entropy_rows(const Mat<T>& logits, const std::vector<Eigen::Index>& rows,
                                 const std::vector<int>& labels) {
  if (rows.size() != labels.size()) throw std::invalid_argument("cross_entropy: rows/labels size mismatch");
  LossResult<T> r;
  r.dlogits = Mat<T>::Zero(logits.rows(), logits.cols());
  r.terms = rows.size();
  if (rows.empty()) return r;
  const Eigen::Index N = logits.cols();
  const double inv = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= N) throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(N) + ")");
    const auto row = logits.row(rows[i]);
    Eigen::Index arg = 0;
    const double mx = static_cast<double>(row.maxCoeff(&arg));
    double z = 0.0;
    for (Eigen::Index n = 0; n < N; ++n) z += std::exp(static_cast<double>(row[n]) - mx);
    const double lse = mx + std::log(z);
    total += lse - static_cast<double>(row[y]);
    if (arg == y) ++r.correct;
    for (Eigen::Index n = 0; n < N; ++n)
      r.dlogits(rows[i], n) = static_cast<T>(std::exp(static_cast<double>(row[n]) - lse) * inv);
    r.dlogits(rows[i], y) -= static_cast<T>(inv);
  }
  r.loss = total * inv;
  return r;
}

/// Mean cross-entropy over all B P positions against each frame's own label
/// (labels indexed b P + p). With `only` set, positions whose flag is zero
/// are excluded.
template <typename T>
LossResult<T> pretrain_loss(const Mat<T>& logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>* only = nullptr) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size())
    throw std::invalid_argument("pretrain_loss: one label per logit row expected");
  std::vector<Eigen::Index> rows;
  std::vector<int> ys;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (only && !(*only)[static_cast<std::size_t>(i)]) continue;
    rows.push_back(i);
    ys.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return cross_entropy_rows(logits, rows, ys);
}

/// Cross-entropy of the position-P logits against the frame P+1 labels.
template <typename T>
LossResult<T> finetune_loss(const Mat<T>& logits, const std::vector<int>& next_labels, int P) {
  if (logits.rows() != static_cast<Eigen::Index>(next_labels.size()) * P)
    throw std::invalid_argument("finetune_loss: logits must have B P rows");
  std::vector<Eigen::Index> rows(next_labels.size());
  for (std::size_t b = 0; b < rows.size(); ++b) rows[b] = static_cast<Eigen::Index>(b) * P + (P - 1);
  return cross_entropy_rows(logits, rows, next_labels);
}

/// Index of the largest logit at position P of sample b.
template <typename T>
int predict_next(const Mat<T>& logits, int b, int P) {
  Eigen::Index arg = 0;
  logits.row(static_cast<Eigen::Index>(b) * P + (P - 1)).maxCoeff(&arg);
  return static_cast<int>(arg);
}

/// Indices of the two largest logits at position P (largest first).
template <typename T>
std::pair<int, int> predict_top2(const Mat<T>& logits, int b, int P) {
  const auto row = logits.row(static_cast<Eigen::Index>(b) * P + (P - 1));
  int first = 0, second = -1;
  for (Eigen::Index n = 1; n < row.size(); ++n) {
    if (row[n] > row[first]) {
      second = first;
      first = static_cast<int>(n);
    } else if (second < 0 || row[n] > row[second]) {
      second = static_cast<int>(n);
    }
  }
  return {first, second};
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables clipping
};

template <typename T>
struct AdamState {
  std::vector<Mat<T>> m, v;
  std::uint64_t step = 0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One Adam step with bias correction over the parameters whose `frozen`
/// flag is false (all when `frozen` is empty). Gradients are clipped to a
/// global norm first. Returns the norm before clipping.
template <typename T>
double optimizer_step(const std::vector<nn::Param<T>*>& params, AdamState<T>& st, double lr,
                      const AdamOptions& opt, const std::vector<bool>& frozen = {}) {
  auto active = [&](std::size_t i) { return frozen.empty() || !frozen[i]; };
  if (st.m.empty()) {
    for (auto* p : params) {
      st.m.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
      st.v.push_back(Mat<T>::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (st.m.size() != params.size()) throw std::invalid_argument("optimizer state does not match parameter list");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active(i)) continue;
    const auto& g = params[i]->grad;
    if (st.m[i].rows() != g.rows() || st.m[i].cols() != g.cols())
      throw std::invalid_argument("optimizer state shape differs for " + params[i]->name);
    double s = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) s += static_cast<double>(g.data()[j]) * g.data()[j];
    if (!std::isfinite(s))
      throw NonFiniteGradient("non-finite gradient in '" + params[i]->name + "' at step " + std::to_string(st.step + 1));
    sq += s;
  }
  const double norm = std::sqrt(sq);
  const double scale = opt.grad_clip > 0 && norm > opt.grad_clip ? opt.grad_clip / norm : 1.0;
  ++st.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.step));
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active(i)) continue;
    auto& p = *params[i];
    const Mat<T> g = p.grad * static_cast<T>(scale);
    st.m[i] = b1 * st.m[i] + (T(1) - b1) * g;
    st.v[i] = b2 * st.v[i] + (T(1) - b2) * g.cwiseProduct(g);
    if (lr == 0.0) continue;
    const T step = static_cast<T>(lr / bc1);
    const T c2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(opt.eps);
    p.value.array() -= step * st.m[i].array() / ((st.v[i].array() * c2).sqrt() + eps);
  }
  return norm;
}

/// Cosine decay from base to base min_fraction over total_steps.
double cosine_lr(double base, std::uint64_t step, std::uint64_t total_steps, double min_fraction = 0.0);

/// Stacks the pilot tensors of the given samples into B x P x 2 x K x G.
Tensor<float> make_batch(std::span<const Sample> samples, const std::vector<std::size_t>& idx, int P, int K, int G);

/// One row of the training log.
struct EpochLog {
  std::string stage;  // "pretrain" or "finetune"
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;
  std::uint64_t samples_seen = 0;
};

struct TrainOptions {
  TrainConfig train;
  /// Validation cadence in processed training samples; 0 means once per epoch.
  std::uint64_t eval_every_samples = 0;
  /// Cap on processed samples; 0 means epochs * training-set size.
  std::uint64_t max_samples = 0;
  /// Stop as soon as validation accuracy reaches this value (<= 0 disables).
  double stop_at_val_accuracy = 0.0;
  bool direct = false;  // fine-tune from scratch with nothing frozen
  std::function<void(const EpochLog&)> on_log;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_val_accuracy = -1.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::uint64_t steps = 0;
  std::uint64_t samples_seen = 0;
};

/// Masked pre-training on own-frame labels. The parameters with the best
/// validation accuracy are kept in `model` on return.
TrainResult pretrain(nn::CnnGpt<float>& model, std::span<const Sample> train, std::span<const Sample> val,
                     const TrainOptions& opt);

/// Next-frame fine-tuning (or direct training with opt.direct).
TrainResult finetune(nn::CnnGpt<float>& model, std::span<const Sample> train, std::span<const Sample> val,
                     const TrainOptions& opt);

/// Loss and accuracy of next-frame prediction in inference mode.
struct NextFrameScore {
  double loss = 0.0;
  double accuracy = 0.0;
};
NextFrameScore score_next_frame(nn::CnnGpt<float>& model, std::span<const Sample> data, int batch_size);

/// Writes the log as CSV (stage, epoch, split, loss, accuracy, samples_seen).
void write_training_log(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace nfbeam
