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

#include "nfbeam/channel.hpp"
#include "nfbeam/codebook.hpp"
#include "nfbeam/rng.hpp"
#include "nfbeam/sysconfig.hpp"
#include "nfbeam/types.hpp"

#include <string_view>
#include <vector>

namespace nfbeam {

/// K x T pilot symbols; column t uses root roots[t].
struct PilotMatrix {
  CMatrix X;
  std::vector<int> roots;
};

/// The T smallest integers >= 1 coprime with K.
std::vector<int> default_roots(int K, int T);

/// Zadoff-Chu pilots, k = 0..K-1. Throws for roots outside (0, K) or not
/// coprime with K.
PilotMatrix zc_pilot(int K, const std::vector<int>& roots);

/// All entries 1/sqrt(K).
PilotMatrix constant_pilot(int K, int T);

enum class PilotVariant { kZadoffChu, kSimplified };

std::string_view to_string(PilotVariant v);
PilotVariant parse_pilot_variant(std::string_view s);

/// Everything the BS needs to sound one frame.
struct SoundingScheme {
  PilotVariant variant = PilotVariant::kZadoffChu;
  PilotMatrix pilots;
  Codebook widebeams;
  DigitalSchedule schedule;
};

SoundingScheme make_sounding_scheme(const SystemConfig& cfg,
                                    PilotVariant variant = PilotVariant::kZadoffChu);

/// y = sqrt(P_ul) F_hyb^H h x + F_hyb^H n with F_hyb = F_RF F_BB and
/// n ~ CN(0, noise_power I). No noise is drawn when noise_power == 0.
CVector receive_pilot_symbol(const CVector& h_k, const CMatrix& f_rf, const CMatrix& f_bb, cplx x,
                             double ul_power_w, double noise_power_w, Rng& rng);

struct MeasurementFrame {
  CMatrix Y;  // K x G, column g = (t-1) N_RF + i
  int frame_index = 0;
  double noise_power_dbm = 0.0;
};

MeasurementFrame measure_frame(const ChannelFrame& frame, const SoundingScheme& scheme,
                               const SystemConfig& cfg, Rng& rng);

}  // namespace nfbeam
