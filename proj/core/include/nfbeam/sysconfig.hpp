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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>

namespace nfbeam {

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kFrameDurationS = 10e-3;

// One radio frame at numerology 3 carries 80 slots; with the chosen slot
// pattern this amounts to 640 SRS-capable symbols. Recorded for reference
// only, nothing is derived from it.
inline constexpr int kSrsSymbolsPerFrame = 80 * 8;

/// Closed real interval used for the sampling ranges.
struct Range {
  double min = 0.0;
  double max = 0.0;
  double width() const { return max - min; }
};

/// Physical, array, frame and codebook dimensions.
struct SystemConfig {
  double carrier_freq_hz = 30e9;
  double subcarrier_spacing_hz = 120e3;
  int num_subcarriers = 8;            // K
  int num_bs_antennas = 32;           // N_BS
  double antenna_spacing_wavelengths = 0.5;
  int num_rf_chains = 4;              // N_RF
  int widebeam_group_factor = 4;      // v
  int widebeam_count = 8;             // G
  int distance_samples = 3;           // M
  Range distance_range_m{5.0, 20.0};
  Range angle_range_deg{-60.0, 60.0};
  int context_frames = 5;             // P
  double rician_k_db = 10.0;          // +inf selects a LoS-only channel
  int num_clusters = 12;
  int rays_per_cluster = 20;
  double cluster_delay_mean_s = 100e-9;
  Range scatterer_annulus_m{1.0, 50.0};
  double ul_power_dbm = 20.0;
  double noise_power_dbm = -110.0;    // -inf disables noise
  Range speed_range_kmh{30.0, 100.0};
  bool apply_pathloss = true;
  std::uint64_t rng_seed = 20260101;

  double wavelength() const { return kSpeedOfLight / carrier_freq_hz; }
  double antenna_spacing_m() const { return antenna_spacing_wavelengths * wavelength(); }
  int codebook_size() const { return num_bs_antennas * distance_samples; }
  int pilot_symbols() const { return widebeam_count / num_rf_chains; }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

/// NR frame bookkeeping for the SRS placement.
struct FrameTiming {
  int slots_per_frame = 80;
  int symbols_per_slot = 14;
  int srs_symbols_per_ul_slot = 4;
  int pilot_symbols_per_frame = 0;

  void validate(const SystemConfig& cfg) const;
};

FrameTiming frame_timing(const SystemConfig& cfg);

/// Number of pilot OFDM symbols per frame needed to sweep every widebeam.
int pilot_symbol_budget(const SystemConfig& cfg);

/// Dimensions of the CNN + transformer predictor.
struct ModelConfig {
  int conv_channels = 8;        // C_0, output of the initial convolution
  int feature_channels = 16;    // C_p, output of the residual stack
  int pool_h = 2;
  int pool_w = 2;
  int d_emb = 64;
  int num_heads = 4;
  int num_layers = 2;
  int ffn_dim = 256;
  double dropout = 0.0;        // desk value; preset "paper" uses 0.2
  bool causal = true;
  double init_std = 0.02;
  std::uint64_t init_seed = 7;

  void validate() const;
};

enum class FreezeStage { kPretrain, kFinetune, kNone };

std::string_view to_string(FreezeStage s);
FreezeStage parse_freeze_stage(std::string_view s);

/// Optimizer, masking and loop budgets.
struct TrainConfig {
  int batch_size = 64;
  int pretrain_epochs = 12;
  int finetune_epochs = 20;
  double pretrain_lr = 3e-3;
  double finetune_lr = 1e-3;
  double min_lr_fraction = 0.0;  // cosine floor as a fraction of the base lr
  double mask_alpha = 0.3;
  bool masked_only_loss = false;
  FreezeStage freeze_stage = FreezeStage::kFinetune;
  double grad_clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int pretrain_samples = 8000;
  int finetune_samples = 2000;
  std::uint64_t seed = 11;

  void validate() const;
};

/// Everything a run needs. Immutable once built.
struct RunConfig {
  SystemConfig system;
  ModelConfig model;
  TrainConfig train;

  void validate() const;
};

enum class Preset { kDesk, kPaper };

Preset parse_preset(std::string_view name);
RunConfig preset(Preset p);
RunConfig preset(std::string_view name);

/// Applies `key = value` assignments from an INI-style text with sections
/// [system], [model] and [train] on top of `base`. Unknown keys throw.
RunConfig load_config(std::istream& in, RunConfig base);
RunConfig load_config_file(const std::string& path, RunConfig base);

/// Sets one dotted key ("system.num_subcarriers") from its textual value.
void set_config_value(RunConfig& cfg, std::string_view dotted_key, std::string_view value);

/// Canonical text form; load_config(to_text(c)) reproduces c exactly.
std::string to_text(const RunConfig& cfg);
std::string to_text(const SystemConfig& cfg);

/// Stable 64-bit FNV-1a hash of the canonical text form.
std::uint64_t config_hash(const RunConfig& cfg);

double dbm_to_watts(double dbm);

/// Shortest round-trip decimal form; infinities print as "inf"/"-inf".
std::string format_double(double v);
double parse_double(std::string_view s);

}  // namespace nfbeam
