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

#include "nfbeam/sysconfig.hpp"
#include "nfbeam/types.hpp"

#include <vector>

namespace nfbeam {

enum class CodebookKind { kDft, kNearField, kWidebeam };

/// Unit-norm codewords stored as columns. For the near-field codebook,
/// column n = distance_index * N_BS + angle_index; `distances` is empty for
/// the DFT and widebeam books.
struct Codebook {
  CodebookKind kind = CodebookKind::kDft;
  CMatrix codewords;             // N_BS x size
  std::vector<double> angles;    // per codeword (rad)
  std::vector<double> distances; // per codeword (m), near-field only

  int size() const { return static_cast<int>(codewords.cols()); }
  int num_antennas() const { return static_cast<int>(codewords.rows()); }
};

/// sin(psi_m) = -1 + 2m/N_BS, m = 0..N_BS-1.
std::vector<double> sine_grid(int num_antennas);

/// Uniform distance grid over the configured range, endpoints included.
std::vector<double> distance_grid(const SystemConfig& cfg);

Codebook dft_codebook(const SystemConfig& cfg);

/// Beamfocusing vector towards (angle, range); throws for range <= 0.
CVector near_field_codeword(double angle_rad, double range_m, const SystemConfig& cfg);

Codebook near_field_codebook(const SystemConfig& cfg);

/// Flat label of (angle_index, distance_index) in the near-field layout.
inline int near_field_index(int angle_index, int distance_index, int num_antennas) {
  return distance_index * num_antennas + angle_index;
}

/// Constant-modulus widebeams from groups of v adjacent DFT beams.
Codebook widebeam_codebook(const SystemConfig& cfg);

/// Analog precoder of pilot symbol t (1-based): widebeams
/// (t-1)N_RF+1 .. tN_RF as columns.
CMatrix analog_precoder_for_symbol(int t, const Codebook& widebeams, const SystemConfig& cfg);

/// Unitary DFT base matrix and the cyclic column selection per subcarrier.
struct DigitalSchedule {
  CMatrix base;                            // Q, N_RF x N_RF
  std::vector<std::vector<int>> columns;   // I_k for k = 0..K-1, 0-based column ids

  /// F_BB for subcarrier k (0-based): Q restricted to I_k in order.
  CMatrix precoder(int k) const;
};

DigitalSchedule digital_schedule(const SystemConfig& cfg);

/// Same shape as digital_schedule but every F_BB is the identity.
DigitalSchedule identity_schedule(const SystemConfig& cfg);

/// Bilinear beam response h f with h a row channel (no conjugation).
inline cplx beam_response(const CVector& h, const CVector& f) { return (h.transpose() * f)(0, 0); }

}  // namespace nfbeam
