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

#include "nfbeam/nn/layers.hpp"
#include "nfbeam/sysconfig.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace nfbeam::nn {

/// Dense row-major tensor with an explicit shape.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape), T(0)) {}

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }
  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape.at(i); }
};

/// Shapes the model is built for.
struct ModelDims {
  int num_subcarriers = 8;  // K, input height
  int widebeam_count = 8;   // G, input width
  int context_frames = 5;   // P
  int codebook_size = 96;   // |N|

  static ModelDims from(const SystemConfig& cfg) {
    return {cfg.num_subcarriers, cfg.widebeam_count, cfg.context_frames, cfg.codebook_size()};
  }
  bool operator==(const ModelDims&) const = default;
};

/// Per-forward options. A frozen CNN always runs in inference mode and is
/// skipped by backward.
struct ForwardOptions {
  bool train = false;
  bool cnn_frozen = false;
  Rng* rng = nullptr;
};

template <typename T>
struct ForwardTrace {
  int B = 0, P = 0;
  bool cnn_frozen = false;
  typename Conv2d<T>::Cache conv0;
  typename BatchNorm<T>::Cache bn0;
  Mat<T> a0;
  typename ResBlock<T>::Cache rb[3];
  int pool_c = 0, pool_n = 0, pool_h = 0, pool_w = 0;
  typename Linear<T>::Cache proj;
  Mat<T> proj_out, proj_mask;
  Mat<T> emb_mask;
  std::vector<typename TransformerBlock<T>::Cache> blocks;
  typename LayerNorm<T>::Cache ln_f;
  typename Linear<T>::Cache head;
};

/// Parameter count of one named module group.
struct ParamGroup {
  std::string name;
  std::size_t count = 0;
};

/// CNN feature extractor, GPT-2 style transformer and classification head.
template <typename T>
class CnnGpt {
 public:
  CnnGpt(const ModelConfig& cfg, const ModelDims& dims);

  const ModelConfig& config() const { return cfg_; }
  const ModelDims& dims() const { return dims_; }

  /// Redraws all parameters from cfg.init_seed.
  void initialize();

  /// Input B x P x 2 x K x G; returns logits as (B P) x |N| with row b P + p.
  Mat<T> forward(const Tensor<T>& x, const ForwardOptions& opt, ForwardTrace<T>* trace = nullptr);

  /// Per-frame CNN embeddings, (B P) x D_emb.
  Mat<T> cnn_forward(const Tensor<T>& x, const Context& ctx, ForwardTrace<T>* trace);

  /// Accumulates parameter gradients for upstream dL/dlogits. Returns dL/dx
  /// (empty when the CNN was frozen).
  Tensor<T> backward(const ForwardTrace<T>& trace, const Mat<T>& dlogits);

  /// All trainable parameters in a fixed order.
  std::vector<Param<T>*> parameters();
  /// Batch-norm running statistics (name, matrix), fixed order.
  std::vector<std::pair<std::string, Mat<T>*>> buffers();

  /// Parameters frozen under the fine-tuning policy: CNN, projection and the
  /// first transformer block.
  bool is_frozen_in_finetune(const Param<T>& p) const;

  void zero_grad();

  std::vector<ParamGroup> param_count() const;
  std::size_t total_params() const;

  // Sub-modules, exposed for tests.
  Conv2d<T> conv0;
  BatchNorm<T> bn0;
  ResBlock<T> rb[3];
  Linear<T> proj;
  Param<T> pos;
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> ln_f;
  Linear<T> head;

 private:
  ModelConfig cfg_;
  ModelDims dims_;
};

/// Parameter counts computed from the dimensions alone.
std::vector<ParamGroup> param_count(const ModelConfig& cfg, const ModelDims& dims);

/// C_in C_out k^2 H W for one convolution (H, W of the output map).
std::uint64_t conv_flops(int cin, int cout, int k, int h, int w);

/// Sum of the convolution terms plus L (P^2 D + P D^2).
std::uint64_t flops_estimate(const ModelConfig& cfg, const ModelDims& dims);

/// Checkpoint header plus payload, independent of the scalar type.
struct CheckpointInfo {
  ModelConfig model;
  ModelDims dims;
  std::uint64_t step = 0;
  std::string stage;  // free-form tag ("pretrain", "finetune", ...)
};

template <typename T>
void save_checkpoint(const std::string& path, CnnGpt<T>& model, const CheckpointInfo& info);

/// Reads header only.
CheckpointInfo read_checkpoint_info(const std::string& path);

/// Loads parameters and buffers into `model`; throws FormatError if the
/// stored dimensions differ.
template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, CnnGpt<T>& model);

extern template class CnnGpt<float>;
extern template class CnnGpt<double>;

}  // namespace nfbeam::nn
