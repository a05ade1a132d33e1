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

#include "nfbeam/sounding.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nfbeam {

std::vector<int> default_roots(int K, int T) {
  if (K < 2) throw std::invalid_argument("ZC roots need K >= 2");
  std::vector<int> roots;
  for (int r = 1; static_cast<int>(roots.size()) < T; ++r) {
    if (r >= K)
      throw std::invalid_argument("only " + std::to_string(roots.size()) + " ZC roots coprime with K=" +
                                  std::to_string(K) + ", " + std::to_string(T) + " requested");
    if (std::gcd(r, K) == 1) roots.push_back(r);
  }
  return roots;
}

PilotMatrix zc_pilot(int K, const std::vector<int>& roots) {
  if (K < 1) throw std::invalid_argument("ZC length must be positive");
  PilotMatrix pm;
  pm.roots = roots;
  pm.X.resize(K, static_cast<Eigen::Index>(roots.size()));
  // Odd K takes k(k+1), even K takes k^2. This is the assignment under which
  // the sequence is periodic in K and therefore CAZAC; the opposite one is not.
  const int eta = K % 2;
  const double scale = 1.0 / std::sqrt(static_cast<double>(K));
  for (std::size_t t = 0; t < roots.size(); ++t) {
    const int r = roots[t];
    if (r <= 0 || r >= K || std::gcd(r, K) != 1)
      throw std::invalid_argument("ZC root " + std::to_string(r) + " is not coprime with K=" +
                                  std::to_string(K) + " inside (0, K)");
    for (int k = 0; k < K; ++k) {
      // Reduce k(k+eta) r modulo 2K before scaling so the phase stays exact
      // for long sequences.
      const long long num = (static_cast<long long>(k) * (k + eta) % (2LL * K)) * r % (2LL * K);
      const double ph = -std::numbers::pi * static_cast<double>(num) / K;
      pm.X(k, static_cast<Eigen::Index>(t)) = scale * cplx(std::cos(ph), std::sin(ph));
    }
  }
  return pm;
}

PilotMatrix constant_pilot(int K, int T) {
  PilotMatrix pm;
  pm.X = CMatrix::Constant(K, T, cplx(1.0 / std::sqrt(static_cast<double>(K)), 0.0));
  return pm;
}

std::string_view to_string(PilotVariant v) {
  return v == PilotVariant::kZadoffChu ? "zc" : "simplified";
}

PilotVariant parse_pilot_variant(std::string_view s) {
  if (s == "zc") return PilotVariant::kZadoffChu;
  if (s == "simplified") return PilotVariant::kSimplified;
  throw std::invalid_argument("unknown pilot variant '" + std::string(s) + "'");
}

SoundingScheme make_sounding_scheme(const SystemConfig& cfg, PilotVariant variant) {
  cfg.validate();
  SoundingScheme s;
  s.variant = variant;
  const int T = cfg.pilot_symbols();
  s.widebeams = widebeam_codebook(cfg);
  if (variant == PilotVariant::kZadoffChu) {
    // K = 1 admits no root in (0, K); a single-subcarrier pilot is just 1.
    s.pilots = cfg.num_subcarriers >= 2 ? zc_pilot(cfg.num_subcarriers, default_roots(cfg.num_subcarriers, T))
                                        : constant_pilot(1, T);
    s.schedule = digital_schedule(cfg);
  } else {
    s.pilots = constant_pilot(cfg.num_subcarriers, T);
    s.schedule = identity_schedule(cfg);
  }
  return s;
}

CVector receive_pilot_symbol(const CVector& h_k, const CMatrix& f_rf, const CMatrix& f_bb, cplx x,
                             double ul_power_w, double noise_power_w, Rng& rng) {
  if (h_k.size() != f_rf.rows() || f_rf.cols() != f_bb.rows())
    throw std::invalid_argument("receive_pilot_symbol: dimension mismatch");
  if (ul_power_w < 0 || noise_power_w < 0)
    throw std::invalid_argument("receive_pilot_symbol: negative power");
  const CMatrix f_hyb = f_rf * f_bb;
  CVector y = (std::sqrt(ul_power_w) * x) * (f_hyb.adjoint() * h_k);
  if (noise_power_w > 0) {
    CVector n(h_k.size());
    for (Eigen::Index s = 0; s < n.size(); ++s) n[s] = rng.complex_normal(noise_power_w);
    y += f_hyb.adjoint() * n;
  }
  return y;
}

MeasurementFrame measure_frame(const ChannelFrame& frame, const SoundingScheme& scheme,
                               const SystemConfig& cfg, Rng& rng) {
  const int K = cfg.num_subcarriers;
  const int nrf = cfg.num_rf_chains;
  const int T = cfg.pilot_symbols();
  if (frame.H.rows() != K || frame.H.cols() != cfg.num_bs_antennas)
    throw std::invalid_argument("measure_frame: channel dimensions do not match config");

  const double p_ul = dbm_to_watts(cfg.ul_power_dbm);
  const double noise = dbm_to_watts(cfg.noise_power_dbm);

  std::vector<CMatrix> f_rf(T);
  for (int t = 0; t < T; ++t) f_rf[t] = analog_precoder_for_symbol(t + 1, scheme.widebeams, cfg);

  MeasurementFrame m;
  m.frame_index = frame.frame_index;
  m.noise_power_dbm = cfg.noise_power_dbm;
  m.Y.resize(K, cfg.widebeam_count);
  for (int k = 0; k < K; ++k) {
    const CVector h = frame.H.row(k).transpose();
    const CMatrix f_bb = scheme.schedule.precoder(k);
    for (int t = 0; t < T; ++t) {
      const CVector y = receive_pilot_symbol(h, f_rf[t], f_bb, scheme.pilots.X(k, t), p_ul, noise, rng);
      m.Y.row(k).segment(static_cast<Eigen::Index>(t) * nrf, nrf) = y.transpose();
    }
  }
  return m;
}

}  // namespace nfbeam
