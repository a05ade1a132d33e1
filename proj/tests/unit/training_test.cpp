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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace nfbeam {
namespace {

using MatD = Mat<double>;

Tensor<double> tagged_batch(int B, int P, int frame) {
  // Every entry of frame (b, p) equals 1 + b P + p, so donors are traceable.
  Tensor<double> x({B, P, 1, 1, frame});
  for (int b = 0; b < B; ++b)
    for (int p = 0; p < P; ++p)
      for (int i = 0; i < frame; ++i) x.data[(static_cast<std::size_t>(b) * P + p) * frame + i] = 1.0 + b * P + p;
  return x;
}

TEST(Mask, SelectionRateAndActionSplit) {
  Rng rng(2024);
  std::size_t selected = 0, total = 0, zero = 0, random = 0, keep = 0;
  for (int rep = 0; rep < 200; ++rep) {
    Tensor<double> x = tagged_batch(50, 10, 1);
    const MaskPlan plan = apply_mask(x, 0.3, rng);
    total += plan.masked.size();
    selected += plan.masked_count();
    for (auto a : plan.action) {
      zero += a == MaskAction::kZero;
      random += a == MaskAction::kRandom;
      keep += a == MaskAction::kKeep;
    }
  }
  ASSERT_EQ(total, 100000u);
  EXPECT_NEAR(static_cast<double>(selected) / total, 0.3, 0.01);
  const double s = static_cast<double>(selected);
  EXPECT_NEAR(zero / s, 0.8, 0.02);
  EXPECT_NEAR(random / s, 0.1, 0.02);
  EXPECT_NEAR(keep / s, 0.1, 0.02);
}

TEST(Mask, ActionsRewriteFramesAsRecorded) {
  Rng rng(5);
  const int B = 6, P = 5, F = 3;
  const Tensor<double> orig = tagged_batch(B, P, F);
  Tensor<double> x = orig;
  const MaskPlan plan = apply_mask(x, 0.6, rng);
  for (int b = 0; b < B; ++b) {
    for (int p = 0; p < P; ++p) {
      const std::size_t i = static_cast<std::size_t>(b) * P + p;
      const double v = x.data[i * F];
      switch (plan.action[i]) {
        case MaskAction::kNone:
        case MaskAction::kKeep: EXPECT_EQ(v, orig.data[i * F]); break;
        case MaskAction::kZero: EXPECT_EQ(v, 0.0); break;
        case MaskAction::kRandom:
          ASSERT_NE(plan.source[i], b);
          EXPECT_EQ(v, 1.0 + plan.source[i] * P + p);
          break;
      }
      EXPECT_EQ(plan.masked[i] != 0, plan.action[i] != MaskAction::kNone);
    }
  }
}

TEST(Mask, ZeroAlphaAndValidation) {
  Rng rng(1);
  Tensor<double> x = tagged_batch(3, 4, 2);
  const Tensor<double> before = x;
  EXPECT_EQ(apply_mask(x, 0.0, rng).masked_count(), 0u);
  EXPECT_EQ(x.data, before.data);
  EXPECT_THROW(apply_mask(x, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(apply_mask(x, -0.1, rng), std::invalid_argument);
  Tensor<double> flat({4, 4});
  EXPECT_THROW(apply_mask(flat, 0.3, rng), std::invalid_argument);
}

TEST(Loss, CrossEntropyValueAndGradient) {
  MatD logits(2, 3);
  logits << 1, 2, 3, 0, 0, 0;
  const auto r = cross_entropy_rows(logits, {0, 1}, {2, 0});
  const double l0 = std::log(std::exp(1) + std::exp(2) + std::exp(3)) - 3;
  const double l1 = std::log(3.0);
  EXPECT_NEAR(r.loss, (l0 + l1) / 2, 1e-12);
  EXPECT_EQ(r.correct, 2u);  // the all-zero row argmaxes to index 0
  // Each gradient row sums to zero; finite differences agree.
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(r.dlogits.row(i).sum(), 0.0, 1e-12);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      MatD up = logits, dn = logits;
      up(i, j) += h;
      dn(i, j) -= h;
      const double fd =
          (cross_entropy_rows(up, {0, 1}, {2, 0}).loss - cross_entropy_rows(dn, {0, 1}, {2, 0}).loss) / (2 * h);
      EXPECT_NEAR(r.dlogits(i, j), fd, 1e-8);
    }
  }
  EXPECT_THROW(cross_entropy_rows(logits, {0}, {3}), std::out_of_range);
  EXPECT_THROW(cross_entropy_rows(logits, {0, 1}, {1}), std::invalid_argument);
}

TEST(Loss, LargeLogitsStayFinite) {
  MatD logits(1, 2);
  logits << 1000, -1000;
  const auto r = cross_entropy_rows(logits, {0}, {1});
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
  EXPECT_TRUE(r.dlogits.allFinite());
}

TEST(Loss, PretrainAndFinetuneSelectRows) {
  const int B = 2, P = 3;
  Rng rng(3);
  MatD logits(B * P, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  const std::vector<int> own = {0, 1, 2, 3, 0, 1};
  const auto all = pretrain_loss(logits, own);
  EXPECT_EQ(all.terms, 6u);
  const std::vector<std::uint8_t> only = {0, 1, 0, 0, 0, 1};
  const auto some = pretrain_loss(logits, own, &only);
  EXPECT_EQ(some.terms, 2u);
  EXPECT_TRUE(some.dlogits.row(0).isZero());
  EXPECT_FALSE(some.dlogits.row(1).isZero());

  const auto ft = finetune_loss(logits, {3, 2}, P);
  EXPECT_EQ(ft.terms, 2u);
  for (int r : {0, 1, 3, 4}) EXPECT_TRUE(ft.dlogits.row(r).isZero());
  const auto direct = cross_entropy_rows(logits, {2, 5}, {3, 2});
  EXPECT_NEAR(ft.loss, direct.loss, 1e-15);
  EXPECT_THROW(finetune_loss(logits, {1, 2, 3}, P), std::invalid_argument);
  EXPECT_THROW(pretrain_loss(logits, {1, 2}), std::invalid_argument);
}

TEST(Predict, TopTwoOrdering) {
  MatD logits = MatD::Zero(4, 5);
  logits.row(1) << 0.1, 3, -1, 2, 0;
  logits.row(3) << 5, 4, 0, 0, 0;
  EXPECT_EQ(predict_top2(logits, 0, 2), std::make_pair(1, 3));
  EXPECT_EQ(predict_next(logits, 0, 2), 1);
  EXPECT_EQ(predict_top2(logits, 1, 2), std::make_pair(0, 1));
  // Ties keep the lower index first.
  MatD flat = MatD::Zero(1, 3);
  EXPECT_EQ(predict_top2(flat, 0, 1), std::make_pair(0, 1));
}

struct TwoParams {
  nn::Param<double> a{"a", MatD::Zero(2, 2), MatD::Zero(2, 2)};
  nn::Param<double> b{"b", MatD::Zero(1, 3), MatD::Zero(1, 3)};
  std::vector<nn::Param<double>*> list() { return {&a, &b}; }
};

TEST(Adam, FirstStepMovesByLearningRate) {
  TwoParams p;
  p.a.grad << 0.1, -0.2, 0.3, 0;
  p.b.grad << 1e-3, -5, 0;
  AdamState<double> st;
  AdamOptions opt;
  opt.grad_clip = 0;
  optimizer_step(p.list(), st, 0.01, opt);
  // With bias correction the first update is lr * sign(g) (up to eps).
  EXPECT_NEAR(p.a.value(0, 0), -0.01, 1e-8);
  EXPECT_NEAR(p.a.value(0, 1), 0.01, 1e-8);
  EXPECT_EQ(p.a.value(1, 1), 0.0);
  EXPECT_NEAR(p.b.value(0, 1), 0.01, 1e-8);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FrozenParamsAndZeroRate) {
  TwoParams p;
  p.a.grad.setConstant(1.0);
  p.b.grad.setConstant(1.0);
  AdamState<double> st;
  optimizer_step(p.list(), st, 0.1, AdamOptions{}, {true, false});
  EXPECT_TRUE(p.a.value.isZero());
  EXPECT_FALSE(p.b.value.isZero());
  EXPECT_TRUE(st.m[0].isZero());

  TwoParams q;
  q.a.grad.setConstant(2.0);
  AdamState<double> sq;
  optimizer_step(q.list(), sq, 0.0, AdamOptions{});
  EXPECT_TRUE(q.a.value.isZero());
  EXPECT_FALSE(sq.m[0].isZero());
}

TEST(Adam, ClipsToGlobalNormAndRejectsNonFinite) {
  TwoParams p;
  p.a.grad.setConstant(3.0);
  p.b.grad.setConstant(4.0);
  AdamState<double> st;
  AdamOptions opt;
  opt.grad_clip = 1.0;
  const double norm = optimizer_step(p.list(), st, 0.0, opt);
  EXPECT_NEAR(norm, std::sqrt(4 * 9.0 + 3 * 16.0), 1e-12);
  // m = (1 - beta1) * clipped gradient.
  EXPECT_NEAR(st.m[0](0, 0), 0.1 * 3.0 / norm, 1e-12);

  p.b.grad(0, 2) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(optimizer_step(p.list(), st, 0.1, opt), NonFiniteGradient);
}

TEST(Schedule, CosineEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 50, 100), 5e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100), 0.0, 1e-18);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100, 0.1), 1e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 500, 100, 0.1), 1e-4, 1e-15);
  EXPECT_DOUBLE_EQ(cosine_lr(2.0, 7, 0), 2.0);
  double prev = 1.0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const double v = cosine_lr(1.0, s, 20);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

std::vector<Sample> desk_samples(std::uint64_t first, std::size_t count) {
  DatasetSpec spec;
  spec.system = preset("desk").system;
  spec.master_seed = 3;
  spec.first_index = first;
  return generate_samples(SampleFactory(spec), count, 1);
}

TEST(Batch, StacksSamplesInOrder) {
  const auto s = desk_samples(0, 3);
  const Tensor<float> x = make_batch(s, {2, 0}, 5, 8, 8);
  ASSERT_EQ(x.shape, (std::vector<int>{2, 5, 2, 8, 8}));
  EXPECT_TRUE(std::equal(s[2].pilots.begin(), s[2].pilots.end(), x.data.begin()));
  EXPECT_TRUE(std::equal(s[0].pilots.begin(), s[0].pilots.end(), x.data.begin() + 640));
  EXPECT_THROW(make_batch(s, {0}, 4, 8, 8), std::invalid_argument);
}

TEST(Loop, SmallRunsLowerLossAndLog) {
  const auto train = desk_samples(0, 96);
  const auto val = desk_samples(500, 32);
  RunConfig rc = preset("desk");
  rc.model.num_layers = 1;
  nn::CnnGpt<float> model(rc.model, nn::ModelDims::from(rc.system));

  TrainOptions opt;
  opt.train = rc.train;
  opt.train.batch_size = 32;
  opt.train.pretrain_epochs = 3;
  opt.train.finetune_epochs = 2;
  std::vector<EpochLog> seen;
  opt.on_log = [&](const EpochLog& e) { seen.push_back(e); };
  const TrainResult pre = pretrain(model, train, val, opt);
  EXPECT_EQ(pre.steps, 9u);
  EXPECT_EQ(pre.samples_seen, 288u);
  ASSERT_FALSE(pre.log.empty());
  EXPECT_EQ(pre.log.front().stage, "pretrain");
  EXPECT_EQ(seen.size(), pre.log.size());
  double first_train = -1, last_train = -1;
  for (const auto& e : pre.log) {
    EXPECT_TRUE(std::isfinite(e.loss));
    if (e.split == "train") {
      if (first_train < 0) first_train = e.loss;
      last_train = e.loss;
    }
  }
  EXPECT_LT(last_train, first_train);

  // Fine-tuning leaves the frozen CNN untouched.
  const Mat<float> conv_before = model.conv0.W.value;
  const TrainResult ft = finetune(model, train, val, opt);
  EXPECT_EQ(model.conv0.W.value, conv_before);
  EXPECT_EQ(ft.log.front().stage, "finetune");
  EXPECT_GE(ft.best_val_accuracy, 0.0);
  const NextFrameScore sc = score_next_frame(model, val, 16);
  EXPECT_GE(sc.accuracy, 0.0);
  EXPECT_LE(sc.accuracy, 1.0);

  const auto dir = std::filesystem::temp_directory_path() / "nfbeam_tests";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "train.log.csv").string();
  write_training_log(path, ft.log);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "stage,epoch,split,loss,accuracy,samples_seen");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, static_cast<int>(ft.log.size()));
}

TEST(Loop, RunsAreDeterministic) {
  const auto train = desk_samples(0, 32);
  const auto val = desk_samples(500, 16);
  RunConfig rc = preset("desk");
  rc.model.num_layers = 1;
  TrainOptions opt;
  opt.train = rc.train;
  opt.train.batch_size = 16;
  opt.train.pretrain_epochs = 1;
  nn::CnnGpt<float> a(rc.model, nn::ModelDims::from(rc.system));
  nn::CnnGpt<float> b(rc.model, nn::ModelDims::from(rc.system));
  pretrain(a, train, val, opt);
  pretrain(b, train, val, opt);
  EXPECT_EQ(a.head.W.value, b.head.W.value);
}

}  // namespace
}  // namespace nfbeam
