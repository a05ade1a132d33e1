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

#include "nfbeam/selfcheck.hpp"

#include "nfbeam/codebook.hpp"
#include "nfbeam/dataset.hpp"
#include "nfbeam/nn/model.hpp"
#include "nfbeam/oracle.hpp"
#include "nfbeam/sounding.hpp"
#include "nfbeam/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>

namespace nfbeam {

namespace {

CheckResult check(const std::string& name, const std::function<std::string()>& body) {
  CheckResult r{name, false, ""};
  try {
    r.detail = body();
    r.passed = r.detail.empty();
    if (r.passed) r.detail = "ok";
  } catch (const std::exception& e) {
    r.detail = std::string("exception: ") + e.what();
  }
  return r;
}

std::string num(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

}  // namespace

std::vector<CheckResult> run_selfcheck() {
  const SystemConfig desk = preset(Preset::kDesk).system;
  const SystemConfig paper = preset(Preset::kPaper).system;
  std::vector<CheckResult> out;

  out.push_back(check("pilot budget (paper preset = 8 symbols)", [&] {
    const int t = pilot_symbol_budget(paper);
    return t == 8 ? std::string() : "got " + std::to_string(t);
  }));

  out.push_back(check("near-field codebook size (paper preset = 1280)", [&] {
    const int n = near_field_codebook(paper).size();
    return n == 1280 ? std::string() : "got " + std::to_string(n);
  }));

  out.push_back(check("ZC constant amplitude and zero autocorrelation", [&]() -> std::string {
    for (int K : {7, 8, 60}) {
      int coprime = 0;
      for (int r = 1; r < K; ++r) coprime += std::gcd(r, K) == 1;
      const PilotMatrix pm = zc_pilot(K, default_roots(K, coprime));
      for (Eigen::Index t = 0; t < pm.X.cols(); ++t) {
        for (int k = 0; k < K; ++k)
          if (std::abs(std::abs(pm.X(k, t)) - 1.0 / std::sqrt(K)) > 1e-12) return "modulus off for K=" + std::to_string(K);
        for (int lag = 1; lag < K; ++lag) {
          cplx acc = 0;
          for (int k = 0; k < K; ++k) acc += pm.X(k, t) * std::conj(pm.X((k + lag) % K, t));
          if (std::abs(acc) > 1e-10) return "autocorrelation " + num(std::abs(acc)) + " at K=" + std::to_string(K);
        }
      }
    }
    return {};
  }));

  out.push_back(check("digital schedule unitary, widebeam modulus", [&]() -> std::string {
    const DigitalSchedule s = digital_schedule(desk);
    const double e = (s.base.adjoint() * s.base - CMatrix::Identity(s.base.rows(), s.base.cols())).cwiseAbs().maxCoeff();
    if (e > 1e-12) return "Q^H Q deviates by " + num(e);
    const Codebook wb = widebeam_codebook(desk);
    const double m = (wb.codewords.cwiseAbs().array() - 1.0 / std::sqrt(desk.num_bs_antennas)).abs().maxCoeff();
    if (m > 1e-12) return "widebeam modulus deviates by " + num(m);
    return {};
  }));

  out.push_back(check("far-field limit of near-field codewords", [&]() -> std::string {
    const Codebook dft = dft_codebook(desk);
    const double r = 1e6 * desk.wavelength();
    for (int m = 0; m < dft.size(); m += 4) {
      const CVector nf = near_field_codeword(dft.angles[m], r, desk);
      const double c = std::abs(nf.dot(dft.codewords.col(m)));
      if (c < 0.999) return "correlation " + num(c) + " at angle index " + std::to_string(m);
    }
    return {};
  }));

  out.push_back(check("labeler equals exhaustive loop", [&]() -> std::string {
    const Codebook nf = near_field_codebook(desk);
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const UserTrajectory traj = sample_trajectory(desk, rng);
      const auto frames = generate_frame_sequence(desk, traj, rng);
      const CMatrix& H = frames.front().H;
      int best = 0;
      double best_g = -1;
      for (int n = 0; n < nf.size(); ++n) {
        double g = 0;
        for (Eigen::Index k = 0; k < H.rows(); ++k) {
          cplx acc = 0;
          for (Eigen::Index s = 0; s < H.cols(); ++s) acc += H(k, s) * nf.codewords(s, n);
          g += std::abs(acc);
        }
        if (g > best_g) {
          best_g = g;
          best = n;
        }
      }
      if (label_frame(H, nf).index != best) return "mismatch in trial " + std::to_string(trial);
    }
    return {};
  }));

  out.push_back(check("masking statistics (alpha = 0.3)", [&]() -> std::string {
    nn::Tensor<float> x({1000, 100, 1, 1, 1});
    Rng rng(9);
    const MaskPlan plan = apply_mask(x, 0.3, rng);
    const double n = static_cast<double>(plan.masked.size());
    const double masked = static_cast<double>(plan.masked_count());
    if (std::abs(masked / n - 0.3) > 0.01) return "masked fraction " + num(masked / n);
    double z = 0, r = 0, k = 0;
    for (auto a : plan.action) {
      z += a == MaskAction::kZero;
      r += a == MaskAction::kRandom;
      k += a == MaskAction::kKeep;
    }
    if (std::abs(z / masked - 0.8) > 0.02 || std::abs(r / masked - 0.1) > 0.02 || std::abs(k / masked - 0.1) > 0.02)
      return "action split " + num(z / masked) + "/" + num(r / masked) + "/" + num(k / masked);
    return {};
  }));

  out.push_back(check("preprocessing statistics and sample shape", [&]() -> std::string {
    DatasetSpec spec;
    spec.system = desk;
    const SampleFactory f(spec);
    const Sample s = f.build(0);
    const int P = desk.context_frames;
    const std::size_t block = 2 * static_cast<std::size_t>(desk.num_subcarriers) * desk.widebeam_count;
    if (s.pilots.size() != P * block || s.labels.size() != static_cast<std::size_t>(P) + 1) return "shape mismatch";
    for (int p = 0; p < P; ++p) {
      double mu = 0, var = 0;
      for (std::size_t i = 0; i < block; ++i) mu += s.pilots[p * block + i];
      mu /= block;
      for (std::size_t i = 0; i < block; ++i) var += std::pow(s.pilots[p * block + i] - mu, 2);
      var /= block;
      if (std::abs(mu) > 1e-5 || std::abs(std::sqrt(var) - 1) > 1e-5) return "frame " + std::to_string(p) + " not standardised";
    }
    return {};
  }));

  out.push_back(check("dataset round trip", [&]() -> std::string {
    DatasetSpec spec;
    spec.system = desk;
    const SampleFactory f(spec);
    const auto samples = generate_samples(f, 4);
    const auto path = (std::filesystem::temp_directory_path() / "nfbeam_selfcheck.nfds").string();
    write_dataset(path, make_header(spec, samples.size()), samples);
    const LoadedDataset d = read_dataset(path);
    std::filesystem::remove(path);
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (d.samples[i].pilots != samples[i].pilots || d.samples[i].labels != samples[i].labels) return "record differs";
    return {};
  }));

  out.push_back(check("model gradient spot check (float64)", [&]() -> std::string {
    ModelConfig mc;
    mc.conv_channels = 2;
    mc.feature_channels = 4;
    mc.pool_h = mc.pool_w = 2;
    mc.d_emb = 8;
    mc.num_heads = 2;
    mc.num_layers = 1;
    mc.ffn_dim = 16;
    mc.dropout = 0.0;
    mc.init_std = 0.3;
    const nn::ModelDims dims{4, 4, 3, 6};
    nn::CnnGpt<double> model(mc, dims);
    nn::Tensor<double> x({2, 3, 2, 4, 4});
    Rng rng(3);
    for (auto& v : x.data) v = rng.normal();
    const std::vector<int> labels = {0, 1, 2, 3, 4, 5};
    auto loss_at = [&] {
      return pretrain_loss(model.forward(x, {true, false, &rng}), labels).loss;
    };
    nn::ForwardTrace<double> tr;
    const auto l = pretrain_loss(model.forward(x, {true, false, &rng}, &tr), labels);
    model.zero_grad();
    model.backward(tr, l.dlogits);
    for (auto* p : model.parameters()) {
      const Eigen::Index i = p->value.size() / 2;
      const double orig = p->value.data()[i];
      const double eps = 1e-5;
      p->value.data()[i] = orig + eps;
      const double up = loss_at();
      p->value.data()[i] = orig - eps;
      const double dn = loss_at();
      p->value.data()[i] = orig;
      const double numeric = (up - dn) / (2 * eps);
      const double analytic = p->grad.data()[i];
      const double rel = std::abs(analytic - numeric) / std::max({1e-6, std::abs(analytic), std::abs(numeric)});
      if (rel > 1e-4) return p->name + ": relative error " + num(rel);
    }
    return {};
  }));

  return out;
}

}  // namespace nfbeam
