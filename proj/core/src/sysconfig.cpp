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

#include "nfbeam/sysconfig.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace nfbeam {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid configuration: " + what);
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("not a boolean: '" + std::string(s) + "'");
}

Range parse_range(std::string_view s) {
  auto comma = s.find(',');
  if (comma == std::string_view::npos)
    throw std::invalid_argument("range must be 'min,max': '" + std::string(s) + "'");
  auto trim = [](std::string_view t) {
    while (!t.empty() && t.front() == ' ') t.remove_prefix(1);
    while (!t.empty() && t.back() == ' ') t.remove_suffix(1);
    return t;
  };
  return Range{parse_double(trim(s.substr(0, comma))), parse_double(trim(s.substr(comma + 1)))};
}

struct Field {
  std::string key;  // section.name
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define NFB_DOUBLE(sec, f)                                                    \
  Field {                                                                     \
    #sec "." #f, [](const RunConfig& c) { return format_double(c.sec.f); },  \
        [](RunConfig& c, std::string_view v) { c.sec.f = parse_double(v); }  \
  }
#define NFB_INT(sec, f)                                                          \
  Field {                                                                        \
    #sec "." #f, [](const RunConfig& c) { return std::to_string(c.sec.f); },    \
        [](RunConfig& c, std::string_view v) {                                   \
          c.sec.f = parse_int<decltype(c.sec.f)>(v);                             \
        }                                                                        \
  }
#define NFB_BOOL(sec, f)                                                               \
  Field {                                                                              \
    #sec "." #f, [](const RunConfig& c) { return std::string(c.sec.f ? "true" : "false"); }, \
        [](RunConfig& c, std::string_view v) { c.sec.f = parse_bool(v); }             \
  }
#define NFB_RANGE(sec, f)                                                        \
  Field {                                                                        \
    #sec "." #f,                                                                 \
        [](const RunConfig& c) {                                                 \
          return format_double(c.sec.f.min) + "," + format_double(c.sec.f.max);  \
        },                                                                       \
        [](RunConfig& c, std::string_view v) { c.sec.f = parse_range(v); }       \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      NFB_DOUBLE(system, carrier_freq_hz),
      NFB_DOUBLE(system, subcarrier_spacing_hz),
      NFB_INT(system, num_subcarriers),
      NFB_INT(system, num_bs_antennas),
      NFB_DOUBLE(system, antenna_spacing_wavelengths),
      NFB_INT(system, num_rf_chains),
      NFB_INT(system, widebeam_group_factor),
      NFB_INT(system, widebeam_count),
      NFB_INT(system, distance_samples),
      NFB_RANGE(system, distance_range_m),
      NFB_RANGE(system, angle_range_deg),
      NFB_INT(system, context_frames),
      NFB_DOUBLE(system, rician_k_db),
      NFB_INT(system, num_clusters),
      NFB_INT(system, rays_per_cluster),
      NFB_DOUBLE(system, cluster_delay_mean_s),
      NFB_RANGE(system, scatterer_annulus_m),
      NFB_DOUBLE(system, ul_power_dbm),
      NFB_DOUBLE(system, noise_power_dbm),
      NFB_RANGE(system, speed_range_kmh),
      NFB_BOOL(system, apply_pathloss),
      NFB_INT(system, rng_seed),
      NFB_INT(model, conv_channels),
      NFB_INT(model, feature_channels),
      NFB_INT(model, pool_h),
      NFB_INT(model, pool_w),
      NFB_INT(model, d_emb),
      NFB_INT(model, num_heads),
      NFB_INT(model, num_layers),
      NFB_INT(model, ffn_dim),
      NFB_DOUBLE(model, dropout),
      NFB_BOOL(model, causal),
      NFB_DOUBLE(model, init_std),
      NFB_INT(model, init_seed),
      NFB_INT(train, batch_size),
      NFB_INT(train, pretrain_epochs),
      NFB_INT(train, finetune_epochs),
      NFB_DOUBLE(train, pretrain_lr),
      NFB_DOUBLE(train, finetune_lr),
      NFB_DOUBLE(train, min_lr_fraction),
      NFB_DOUBLE(train, mask_alpha),
      NFB_BOOL(train, masked_only_loss),
      Field{"train.freeze_stage",
            [](const RunConfig& c) { return std::string(to_string(c.train.freeze_stage)); },
            [](RunConfig& c, std::string_view v) { c.train.freeze_stage = parse_freeze_stage(v); }},
      NFB_DOUBLE(train, grad_clip),
      NFB_DOUBLE(train, beta1),
      NFB_DOUBLE(train, beta2),
      NFB_DOUBLE(train, adam_eps),
      NFB_INT(train, pretrain_samples),
      NFB_INT(train, finetune_samples),
      NFB_INT(train, seed),
  };
  return table;
}

#undef NFB_DOUBLE
#undef NFB_INT
#undef NFB_BOOL
#undef NFB_RANGE

}  // namespace

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}


void SystemConfig::validate() const {
  require(carrier_freq_hz > 0, "carrier_freq_hz must be positive");
  require(subcarrier_spacing_hz > 0, "subcarrier_spacing_hz must be positive");
  require(num_subcarriers >= 1, "K >= 1");
  require(num_bs_antennas >= 1, "N_BS >= 1");
  require(antenna_spacing_wavelengths > 0, "antenna spacing must be positive");
  require(num_rf_chains >= 1, "N_RF >= 1");
  require(widebeam_group_factor >= 1, "v >= 1");
  require(widebeam_count >= 1, "G >= 1");
  require(widebeam_count % num_rf_chains == 0, "N_RF must divide G");
  require(widebeam_count * widebeam_group_factor == num_bs_antennas, "G * v must equal N_BS");
  require(distance_samples >= 1, "M >= 1");
  require(distance_range_m.min > 0, "distance_range_m.min > 0");
  require(distance_range_m.max >= distance_range_m.min, "distance range inverted");
  require(angle_range_deg.min >= -90 && angle_range_deg.max <= 90 &&
              angle_range_deg.min <= angle_range_deg.max,
          "angle range must lie inside [-90, 90]");
  require(context_frames >= 1, "P >= 1");
  require(!std::isnan(rician_k_db), "rician_k_db is NaN");
  require(num_clusters >= 0, "num_clusters >= 0");
  require(rays_per_cluster >= 1, "rays_per_cluster >= 1");
  require(cluster_delay_mean_s > 0, "cluster_delay_mean_s > 0");
  require(scatterer_annulus_m.min >= 0 && scatterer_annulus_m.max >= scatterer_annulus_m.min,
          "scatterer annulus");
  require(speed_range_kmh.min >= 0 && speed_range_kmh.max >= speed_range_kmh.min, "speed range");
}

void FrameTiming::validate(const SystemConfig& cfg) const {
  require(pilot_symbols_per_frame == cfg.widebeam_count / cfg.num_rf_chains,
          "pilot_symbols_per_frame must equal G / N_RF");
  require(srs_symbols_per_ul_slot == 1 || srs_symbols_per_ul_slot == 2 ||
              srs_symbols_per_ul_slot == 4,
          "srs_symbols_per_ul_slot must be 1, 2 or 4");
}

FrameTiming frame_timing(const SystemConfig& cfg) {
  FrameTiming t;
  t.pilot_symbols_per_frame = pilot_symbol_budget(cfg);
  return t;
}

int pilot_symbol_budget(const SystemConfig& cfg) {
  cfg.validate();
  return cfg.widebeam_count / cfg.num_rf_chains;
}

void ModelConfig::validate() const {
  require(conv_channels >= 1 && feature_channels >= 1, "CNN channel counts >= 1");
  require(pool_h >= 1 && pool_w >= 1, "pooling grid >= 1x1");
  require(d_emb >= 1 && num_heads >= 1, "d_emb, num_heads >= 1");
  require(d_emb % num_heads == 0, "d_emb must be divisible by num_heads");
  require(num_layers >= 0, "num_layers >= 0");
  require(ffn_dim >= 1, "ffn_dim >= 1");
  require(dropout >= 0 && dropout < 1, "dropout in [0, 1)");
  require(init_std > 0, "init_std > 0");
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "batch_size >= 1");
  require(pretrain_epochs >= 0 && finetune_epochs >= 0, "epochs >= 0");
  require(pretrain_lr >= 0 && finetune_lr >= 0, "learning rates >= 0");
  require(min_lr_fraction >= 0 && min_lr_fraction <= 1, "min_lr_fraction in [0, 1]");
  require(mask_alpha >= 0 && mask_alpha < 1, "mask_alpha in [0, 1)");
  require(grad_clip > 0, "grad_clip > 0");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas in [0, 1)");
  require(adam_eps > 0, "adam_eps > 0");
  require(pretrain_samples >= 0 && finetune_samples >= 0, "sample counts >= 0");
}

void RunConfig::validate() const {
  system.validate();
  model.validate();
  train.validate();
}

std::string_view to_string(FreezeStage s) {
  switch (s) {
    case FreezeStage::kPretrain: return "pretrain";
    case FreezeStage::kFinetune: return "finetune";
    case FreezeStage::kNone: return "none";
  }
  return "none";
}

FreezeStage parse_freeze_stage(std::string_view s) {
  if (s == "pretrain") return FreezeStage::kPretrain;
  if (s == "finetune") return FreezeStage::kFinetune;
  if (s == "none") return FreezeStage::kNone;
  throw std::invalid_argument("unknown freeze stage '" + std::string(s) + "'");
}

Preset parse_preset(std::string_view name) {
  if (name == "desk") return Preset::kDesk;
  if (name == "paper") return Preset::kPaper;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "' (expected desk or paper)");
}

RunConfig preset(Preset p) {
  RunConfig c;
  if (p == Preset::kPaper) {
    auto& s = c.system;
    s.num_subcarriers = 60;
    s.num_bs_antennas = 256;
    s.num_rf_chains = 8;
    s.widebeam_group_factor = 4;
    s.widebeam_count = 64;
    s.distance_samples = 5;
    s.context_frames = 7;

    auto& m = c.model;
    m.conv_channels = 32;
    m.feature_channels = 64;
    m.pool_h = 4;
    m.pool_w = 4;
    m.d_emb = 512;
    m.num_heads = 8;
    m.num_layers = 4;
    m.ffn_dim = 2048;
    m.dropout = 0.2;

    c.train.batch_size = 256;
    c.train.pretrain_lr = 1e-3;
    c.train.finetune_lr = 1e-4;
    c.train.pretrain_samples = 80000;
    c.train.finetune_samples = 20000;
  }
  c.validate();
  return c;
}

RunConfig preset(std::string_view name) { return preset(parse_preset(name)); }

void set_config_value(RunConfig& cfg, std::string_view dotted_key, std::string_view value) {
  for (const auto& f : fields()) {
    if (f.key == dotted_key) {
      f.set(cfg, value);
      return;
    }
  }
  throw std::invalid_argument("unknown configuration key '" + std::string(dotted_key) + "'");
}

RunConfig load_config(std::istream& in, RunConfig base) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config parse error: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (!body.data().empty()) {
      throw std::invalid_argument("config key '" + section + "' must live in a section");
    }
    for (const auto& [key, val] : body) {
      set_config_value(base, section + "." + key, val.get_value<std::string>());
    }
  }
  base.validate();
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return load_config(in, std::move(base));
}

std::string to_text(const RunConfig& cfg) {
  std::ostringstream out;
  std::string current;
  for (const auto& f : fields()) {
    auto dot = f.key.find('.');
    std::string section = f.key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

std::string to_text(const SystemConfig& cfg) {
  RunConfig rc;
  rc.system = cfg;
  std::ostringstream out;
  out << "[system]\n";
  for (const auto& f : fields()) {
    if (f.key.rfind("system.", 0) == 0) out << f.key.substr(7) << " = " << f.get(rc) << '\n';
  }
  return out.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_text(cfg)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

}  // namespace nfbeam
