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

#include "nfbeam/codebook.hpp"

#include "nfbeam/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nfbeam {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Below this magnitude the averaged element has no meaningful phase; the
// grouped DFT sum cancels exactly at some elements in exact arithmetic.
constexpr double kZeroMagnitude = 1e-12;

}  // namespace

std::vector<double> sine_grid(int num_antennas) {
  std::vector<double> g(num_antennas);
  for (int m = 0; m < num_antennas; ++m) g[m] = -1.0 + 2.0 * m / num_antennas;
  return g;
}

std::vector<double> distance_grid(const SystemConfig& cfg) {
  const int m = cfg.distance_samples;
  std::vector<double> g(m);
  if (m == 1) {
    g[0] = 0.5 * (cfg.distance_range_m.min + cfg.distance_range_m.max);
    return g;
  }
  for (int i = 0; i < m; ++i)
    g[i] = cfg.distance_range_m.min + cfg.distance_range_m.width() * i / (m - 1);
  return g;
}

Codebook dft_codebook(const SystemConfig& cfg) {
  const int n = cfg.num_bs_antennas;
  const double spacing = cfg.antenna_spacing_wavelengths;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Codebook cb;
  cb.kind = CodebookKind::kDft;
  cb.codewords.resize(n, n);
  const auto grid = sine_grid(n);
  for (int m = 0; m < n; ++m) {
    for (int e = 0; e < n; ++e) {
      const double ph = -kTwoPi * spacing * e * grid[m];
      cb.codewords(e, m) = scale * cplx(std::cos(ph), std::sin(ph));
    }
    cb.angles.push_back(std::asin(grid[m]));
  }
  return cb;
}

CVector near_field_codeword(double angle_rad, double range_m, const SystemConfig& cfg) {
  if (!(range_m > 0)) throw std::invalid_argument("near-field codeword range must be positive");
  const auto elems = element_positions(cfg);
  const Vec2 focus = polar_to_position(angle_rad, range_m);
  const double k0 = kTwoPi / cfg.wavelength();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.num_bs_antennas));
  CVector b(cfg.num_bs_antennas);
  for (int s = 0; s < cfg.num_bs_antennas; ++s) {
    const double ph = k0 * ((elems[s] - focus).norm() - range_m);
    b[s] = scale * cplx(std::cos(ph), std::sin(ph));
  }
  return b;
}

Codebook near_field_codebook(const SystemConfig& cfg) {
  const int n = cfg.num_bs_antennas;
  const auto grid = sine_grid(n);
  const auto dists = distance_grid(cfg);
  Codebook cb;
  cb.kind = CodebookKind::kNearField;
  cb.codewords.resize(n, static_cast<Eigen::Index>(n) * cfg.distance_samples);
  for (int di = 0; di < cfg.distance_samples; ++di) {
    for (int ai = 0; ai < n; ++ai) {
      const double psi = std::asin(grid[ai]);
      cb.codewords.col(near_field_index(ai, di, n)) = near_field_codeword(psi, dists[di], cfg);
      cb.angles.push_back(psi);
      cb.distances.push_back(dists[di]);
    }
  }
  return cb;
}

Codebook widebeam_codebook(const SystemConfig& cfg) {
  const int n = cfg.num_bs_antennas;
  const int v = cfg.widebeam_group_factor;
  if (v * cfg.widebeam_count != n)
    throw std::invalid_argument("widebeam grouping requires v * G == N_BS");
  const Codebook dft = dft_codebook(cfg);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  Codebook cb;
  cb.kind = CodebookKind::kWidebeam;
  cb.codewords.resize(n, cfg.widebeam_count);
  for (int g = 0; g < cfg.widebeam_count; ++g) {
    const CVector mean = dft.codewords.middleCols(static_cast<Eigen::Index>(g) * v, v).rowwise().mean();
    for (int e = 0; e < n; ++e) {
      const double ph = std::abs(mean[e]) <= kZeroMagnitude * scale ? 0.0 : std::arg(mean[e]);
      cb.codewords(e, g) = scale * cplx(std::cos(ph), std::sin(ph));
    }
    double centre = 0.0;
    for (int i = 0; i < v; ++i) centre += dft.angles[g * v + i];
    cb.angles.push_back(centre / v);
  }
  return cb;
}

CMatrix analog_precoder_for_symbol(int t, const Codebook& widebeams, const SystemConfig& cfg) {
  const int nrf = cfg.num_rf_chains;
  const int symbols = widebeams.size() / nrf;
  if (t < 1 || t > symbols)
    throw std::out_of_range("pilot symbol index " + std::to_string(t) + " outside [1, " +
                            std::to_string(symbols) + "]");
  return widebeams.codewords.middleCols(static_cast<Eigen::Index>(t - 1) * nrf, nrf);
}

CMatrix DigitalSchedule::precoder(int k) const {
  const auto& cols = columns.at(static_cast<std::size_t>(k));
  CMatrix f(base.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) f.col(static_cast<Eigen::Index>(j)) = base.col(cols[j]);
  return f;
}

DigitalSchedule digital_schedule(const SystemConfig& cfg) {
  const int nrf = cfg.num_rf_chains;
  DigitalSchedule s;
  s.base.resize(nrf, nrf);
  const double scale = 1.0 / std::sqrt(static_cast<double>(nrf));
  for (int a = 0; a < nrf; ++a)
    for (int b = 0; b < nrf; ++b) {
      const double ph = -kTwoPi * a * b / nrf;
      s.base(a, b) = scale * cplx(std::cos(ph), std::sin(ph));
    }
  // Subcarrier k here is subcarrier k+1 in 1-based numbering, so the shift
  // is ((j + k) mod N_RF).
  s.columns.resize(cfg.num_subcarriers);
  for (int k = 0; k < cfg.num_subcarriers; ++k) {
    s.columns[k].resize(nrf);
    for (int j = 0; j < nrf; ++j) s.columns[k][j] = (j + k) % nrf;
  }
  return s;
}

DigitalSchedule identity_schedule(const SystemConfig& cfg) {
  const int nrf = cfg.num_rf_chains;
  DigitalSchedule s;
  s.base = CMatrix::Identity(nrf, nrf);
  s.columns.assign(cfg.num_subcarriers, std::vector<int>(nrf));
  for (auto& c : s.columns)
    for (int j = 0; j < nrf; ++j) c[j] = j;
  return s;
}

}  // namespace nfbeam
