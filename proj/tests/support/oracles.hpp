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

// Reference implementations used only by tests. They follow the textbook
// formulas with plain loops and long double where it helps, and share no
// code with the library beyond its data types.

#include "nfbeam/channel.hpp"
#include "nfbeam/codebook.hpp"

#include <boost/math/distributions/beta.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <utility>
#include <vector>

namespace nfbeam::oracle_ref {

using lcplx = std::complex<long double>;

inline lcplx phasor(long double phase) { return std::polar(1.0L, phase); }

/// x_r(k) = exp(-j pi r k (k + (K mod 2)) / K) / sqrt(K), no modular tricks.
inline std::vector<lcplx> zadoff_chu(int K, int r) {
  std::vector<lcplx> x(static_cast<std::size_t>(K));
  const long double pi = std::numbers::pi_v<long double>;
  for (int k = 0; k < K; ++k) {
    const long double n = static_cast<long double>(k) * (k + K % 2);
    x[static_cast<std::size_t>(k)] = phasor(-pi * r * n / K) / std::sqrt(static_cast<long double>(K));
  }
  return x;
}

/// sum_k x(k) conj(x(k + lag mod K)).
template <typename V>
auto periodic_autocorrelation(const V& x, int lag) {
  const int K = static_cast<int>(x.size());
  decltype(x[0] * x[0]) acc = 0;
  for (int k = 0; k < K; ++k) acc += x[k] * std::conj(x[(k + lag) % K]);
  return acc;
}

/// Element s of an N-element ULA with spacing d, centred on the origin.
inline long double element_x(int s, int n, long double d) { return (s - (n - 1) / 2.0L) * d; }

/// Per-element, per-tap evaluation of
///   h_s[k] = sqrt(1/(KR+1)) sum_p beta_p e^{-j2pi f_k tau_p} e^{-j2pi |e_s - q_p| / lambda}
///          + sqrt(KR/(KR+1)) los_s e^{-j2pi f_k tau_1}
/// with KR given linearly (an empty tap set puts all weight on the LoS term).
inline std::vector<lcplx> naive_subcarrier_channel(const ClusterSet& taps, const CVector& los, double kr_linear,
                                                   double fc, double df, int k, int n_bs, double spacing_m,
                                                   double lambda) {
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  const long double fk = static_cast<long double>(fc) + static_cast<long double>(k) * df;
  long double w_nlos = std::sqrt(1.0L / (kr_linear + 1.0L));
  long double w_los = std::sqrt(kr_linear / (kr_linear + 1.0L));
  if (taps.paths.empty()) {
    w_nlos = 0.0L;
    w_los = 1.0L;
  }
  std::vector<lcplx> h(static_cast<std::size_t>(n_bs));
  for (int s = 0; s < n_bs; ++s) {
    const long double ex = element_x(s, n_bs, spacing_m);
    lcplx acc = 0;
    for (const auto& p : taps.paths) {
      const long double dx = ex - p.scatterer.x(), dy = -static_cast<long double>(p.scatterer.y());
      const long double dist = std::sqrt(dx * dx + dy * dy);
      const long double tau = static_cast<long double>(taps.los_delay_s) + p.excess_delay_s;
      acc += lcplx(p.gain.real(), p.gain.imag()) * phasor(-two_pi * fk * tau) * phasor(-two_pi * dist / lambda);
    }
    const lcplx l(los[s].real(), los[s].imag());
    h[static_cast<std::size_t>(s)] = w_nlos * acc + w_los * l * phasor(-two_pi * fk * taps.los_delay_s);
  }
  return h;
}

/// Double loop over codewords and subcarriers; ties keep the lowest index.
inline int naive_label(const CMatrix& H, const CMatrix& book) {
  int best = -1;
  long double best_score = -1.0L;
  for (Eigen::Index n = 0; n < book.cols(); ++n) {
    long double score = 0.0L;
    for (Eigen::Index k = 0; k < H.rows(); ++k) {
      lcplx acc = 0;
      for (Eigen::Index s = 0; s < H.cols(); ++s)
        acc += lcplx(H(k, s).real(), H(k, s).imag()) * lcplx(book(s, n).real(), book(s, n).imag());
      score += std::abs(acc);
    }
    if (score > best_score) {
      best_score = score;
      best = static_cast<int>(n);
    }
  }
  return best;
}

/// Clopper-Pearson interval for x successes in n trials at level 1 - a.
inline std::pair<double, double> clopper_pearson(double x, double n, double a) {
  using boost::math::beta_distribution;
  using boost::math::quantile;
  const double lo = x <= 0 ? 0.0 : quantile(beta_distribution<double>(x, n - x + 1), a / 2);
  const double hi = x >= n ? 1.0 : quantile(beta_distribution<double>(x + 1, n - x), 1 - a / 2);
  return {lo, hi};
}

}  // namespace nfbeam::oracle_ref
