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

// Finite-difference checks for every layer type and the whole model, in
// double. Dropout layers run with a generator reseeded before every forward
// pass so the mask is identical across perturbations.

#include "nfbeam/nn/layers.hpp"
#include "nfbeam/nn/model.hpp"
#include "support/gradcheck.hpp"

#include <string>
#include <vector>

namespace nfbeam::testing {

struct GradCase {
  std::string name;
  GradReport report;
};

inline nn::FeatureMap<double> random_map(int c, int n, int h, int w, Rng& rng) {
  return {random_matrix(c, static_cast<Eigen::Index>(n) * h * w, rng), n, h, w};
}

inline GradCase check_linear() {
  Rng rng(1);
  nn::Linear<double> lin("lin", 6, 5);
  lin.init(0.5, rng);
  lin.b.value = random_matrix(1, 5, rng);
  MatD x = random_matrix(4, 6, rng);
  const MatD R = random_matrix(4, 5, rng);
  auto loss = [&] { return project(lin.forward(x, nullptr), R); };
  nn::Linear<double>::Cache c;
  lin.forward(x, &c);
  const MatD dx = lin.backward(R, c);
  GradCase g{"head (linear)", {}};
  check_entries(loss, lin.W.value, lin.W.grad, "W", g.report);
  check_entries(loss, lin.b.value, lin.b.grad, "b", g.report);
  check_entries(loss, x, dx, "x", g.report);
  return g;
}

inline GradCase check_layernorm() {
  Rng rng(2);
  nn::LayerNorm<double> ln("ln", 8);
  ln.gamma.value = random_matrix(1, 8, rng);
  ln.beta.value = random_matrix(1, 8, rng);
  MatD x = random_matrix(5, 8, rng, 2.0);
  const MatD R = random_matrix(5, 8, rng);
  auto loss = [&] { return project(ln.forward(x, nullptr), R); };
  nn::LayerNorm<double>::Cache c;
  ln.forward(x, &c);
  const MatD dx = ln.backward(R, c);
  GradCase g{"layer-norm", {}};
  check_entries(loss, ln.gamma.value, ln.gamma.grad, "gamma", g.report);
  check_entries(loss, ln.beta.value, ln.beta.grad, "beta", g.report);
  check_entries(loss, x, dx, "x", g.report);
  return g;
}

inline GradCase check_batchnorm() {
  Rng rng(3);
  nn::BatchNorm<double> bn("bn", 3);
  bn.gamma.value = random_matrix(1, 3, rng);
  bn.beta.value = random_matrix(1, 3, rng);
  MatD x = random_matrix(3, 20, rng, 1.5);
  const MatD R = random_matrix(3, 20, rng);
  const nn::Context ctx{true, nullptr};
  auto loss = [&] { return project(bn.forward(x, ctx, nullptr), R); };
  nn::BatchNorm<double>::Cache c;
  bn.forward(x, ctx, &c);
  const MatD dx = bn.backward(R, c);
  GradCase g{"batch-norm (train)", {}};
  check_entries(loss, bn.gamma.value, bn.gamma.grad, "gamma", g.report);
  check_entries(loss, bn.beta.value, bn.beta.grad, "beta", g.report);
  check_entries(loss, x, dx, "x", g.report);

  // Inference mode uses the running statistics.
  bn.running_mean = random_matrix(1, 3, rng);
  bn.running_var = MatD::Constant(1, 3, 0.7);
  bn.gamma.zero_grad();
  const nn::Context eval{false, nullptr};
  auto loss_eval = [&] { return project(bn.forward(x, eval, nullptr), R); };
  bn.forward(x, eval, &c);
  const MatD dxe = bn.backward(R, c);
  check_entries(loss_eval, bn.gamma.value, bn.gamma.grad, "gamma(eval)", g.report);
  check_entries(loss_eval, x, dxe, "x(eval)", g.report);
  return g;
}

inline GradCase check_conv() {
  Rng rng(4);
  GradCase g{"conv", {}};
  for (const auto& [k, s, p] : {std::tuple{3, 1, 1}, std::tuple{3, 2, 1}, std::tuple{1, 2, 0}}) {
    nn::Conv2d<double> conv("conv", 2, 3, k, s, p, true);
    conv.init(0.5, rng);
    conv.b.value = random_matrix(1, 3, rng);
    nn::FeatureMap<double> x = random_map(2, 2, 5, 4, rng);
    const int ho = conv.out_size(5), wo = conv.out_size(4);
    const MatD R = random_matrix(3, 2 * ho * wo, rng);
    auto loss = [&] { return project(conv.forward(x, nullptr).x, R); };
    nn::Conv2d<double>::Cache c;
    conv.forward(x, &c);
    const auto dx = conv.backward(R, c);
    const std::string tag = "k" + std::to_string(k) + "s" + std::to_string(s);
    check_entries(loss, conv.W.value, conv.W.grad, tag + ".W", g.report);
    check_entries(loss, conv.b.value, conv.b.grad, tag + ".b", g.report);
    check_entries(loss, x.x, dx.x, tag + ".x", g.report);
  }
  return g;
}

inline GradCase check_resblock() {
  Rng rng(5);
  GradCase g{"resblock", {}};
  for (const auto& [cin, cout, stride] : {std::tuple{2, 3, 2}, std::tuple{3, 3, 1}}) {
    nn::ResBlock<double> rb("rb", cin, cout, stride, 0.3);
    rb.init(rng);
    nn::FeatureMap<double> x = random_map(cin, 3, 4, 4, rng);
    const int ho = stride == 2 ? 2 : 4;
    const MatD R = random_matrix(cout, 3 * ho * ho, rng);
    Rng drop(0);
    auto fwd = [&](typename nn::ResBlock<double>::Cache* c) {
      drop = Rng(77);
      return rb.forward(x, nn::Context{true, &drop}, c);
    };
    auto loss = [&] { return project(fwd(nullptr).x, R); };
    typename nn::ResBlock<double>::Cache c;
    fwd(&c);
    const auto dx = rb.backward(R, c);
    const std::string tag = rb.projected ? "projected." : "identity.";
    rb.for_each_param([&](nn::Param<double>& p) { check_entries(loss, p.value, p.grad, tag + p.name, g.report); });
    check_entries(loss, x.x, dx.x, tag + "x", g.report);
  }
  return g;
}

inline GradCase check_attention() {
  Rng rng(6);
  GradCase g{"attention", {}};
  for (bool causal : {true, false}) {
    nn::MultiHeadAttention<double> mha("attn", 8, 2, causal);
    mha.init(0.4, rng);
    mha.wo.b.value = random_matrix(1, 8, rng);
    const int B = 2, P = 3;
    MatD x = random_matrix(B * P, 8, rng);
    const MatD R = random_matrix(B * P, 8, rng);
    auto loss = [&] { return project(mha.forward(x, B, P, nullptr), R); };
    typename nn::MultiHeadAttention<double>::Cache c;
    mha.forward(x, B, P, &c);
    const MatD dx = mha.backward(R, c);
    const std::string tag = causal ? "causal." : "full.";
    mha.for_each_param([&](nn::Param<double>& p) { check_entries(loss, p.value, p.grad, tag + p.name, g.report); });
    check_entries(loss, x, dx, tag + "x", g.report);
  }
  return g;
}

inline GradCase check_ffn() {
  Rng rng(7);
  nn::FeedForward<double> ffn("ffn", 6, 10);
  ffn.init(0.5, rng);
  ffn.fc1.b.value = random_matrix(1, 10, rng, 0.3);
  MatD x = random_matrix(4, 6, rng);
  const MatD R = random_matrix(4, 6, rng);
  auto loss = [&] { return project(ffn.forward(x, nullptr), R); };
  typename nn::FeedForward<double>::Cache c;
  ffn.forward(x, &c);
  const MatD dx = ffn.backward(R, c);
  GradCase g{"ffn", {}};
  ffn.for_each_param([&](nn::Param<double>& p) { check_entries(loss, p.value, p.grad, p.name, g.report); });
  check_entries(loss, x, dx, "x", g.report);
  return g;
}

inline GradCase check_transformer_block() {
  Rng rng(8);
  nn::TransformerBlock<double> blk("blk", 8, 2, 12, 0.25, true);
  blk.init(0.4, rng);
  const int B = 2, P = 3;
  MatD x = random_matrix(B * P, 8, rng);
  const MatD R = random_matrix(B * P, 8, rng);
  Rng drop(0);
  auto fwd = [&](typename nn::TransformerBlock<double>::Cache* c) {
    drop = Rng(31);
    return blk.forward(x, B, P, nn::Context{true, &drop}, c);
  };
  auto loss = [&] { return project(fwd(nullptr), R); };
  typename nn::TransformerBlock<double>::Cache c;
  fwd(&c);
  const MatD dx = blk.backward(R, c);
  GradCase g{"transformer block", {}};
  blk.for_each_param([&](nn::Param<double>& p) { check_entries(loss, p.value, p.grad, p.name, g.report); });
  check_entries(loss, x, dx, "x", g.report);
  return g;
}

inline GradCase check_pool() {
  Rng rng(9);
  nn::FeatureMap<double> x = random_map(2, 2, 5, 3, rng);
  const MatD R = random_matrix(2, 2 * 2 * 2, rng);
  auto loss = [&] { return project(nn::adaptive_avg_pool_flatten(x, 2, 2), R); };
  const auto dx = nn::adaptive_avg_pool_flatten_backward<double>(R, 2, 2, 5, 3, 2, 2);
  GradCase g{"adaptive pool", {}};
  check_entries(loss, x.x, dx.x, "x", g.report);
  return g;
}

/// Desk-scale model with dropout on and batch norm in train mode.
inline GradCase check_full_model() {
  ModelConfig cfg = preset("desk").model;
  cfg.dropout = 0.2;
  const nn::ModelDims dims = nn::ModelDims::from(preset("desk").system);
  nn::CnnGpt<double> model(cfg, dims);
  const int B = 2;
  Rng rng(10);
  nn::Tensor<double> x({B, dims.context_frames, 2, dims.num_subcarriers, dims.widebeam_count});
  for (auto& v : x.data) v = rng.normal();
  const MatD R = random_matrix(static_cast<Eigen::Index>(B) * dims.context_frames, dims.codebook_size, rng);
  Rng drop(0);
  auto fwd = [&](nn::ForwardTrace<double>* t) {
    drop = Rng(55);
    return model.forward(x, nn::ForwardOptions{true, false, &drop}, t);
  };
  auto loss = [&] { return project(fwd(nullptr), R); };
  nn::ForwardTrace<double> trace;
  fwd(&trace);
  model.zero_grad();
  const nn::Tensor<double> dx = model.backward(trace, R);
  GradCase g{"full desk model", {}};
  for (auto* p : model.parameters()) check_entries(loss, p->value, p->grad, p->name, g.report, 6);
  MatD xin = Eigen::Map<MatD>(x.data.data(), 1, static_cast<Eigen::Index>(x.data.size()));
  const MatD dxin = Eigen::Map<const MatD>(dx.data.data(), 1, static_cast<Eigen::Index>(dx.data.size()));
  auto loss_x = [&] {
    std::copy(xin.data(), xin.data() + xin.size(), x.data.begin());
    return loss();
  };
  check_entries(loss_x, xin, dxin, "input", g.report, 30);
  std::copy(xin.data(), xin.data() + xin.size(), x.data.begin());
  return g;
}

inline std::vector<GradCase> run_gradient_suite() {
  return {check_conv(),       check_batchnorm(),   check_resblock(),
          check_pool(),       check_attention(),   check_ffn(),
          check_layernorm(),  check_transformer_block(), check_linear(),
          check_full_model()};
}

}  // namespace nfbeam::testing
