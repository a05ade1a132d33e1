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

#include "nfbeam/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nfbeam {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinElementDistance = 1e-6;

cplx unit_phasor(double phase) { return {std::cos(phase), std::sin(phase)}; }

double frequency(const SystemConfig& cfg, int k) {
  return cfg.carrier_freq_hz + k * cfg.subcarrier_spacing_hz;
}

}  // namespace

Vec2 polar_to_position(double angle_rad, double range_m) {
  return {range_m * std::sin(angle_rad), range_m * std::cos(angle_rad)};
}

double position_angle(const Vec2& p) { return std::atan2(p.x(), p.y()); }

UserTrajectory make_trajectory(double angle_rad, double distance_m, const Vec2& velocity_mps,
                               int num_frames) {
  if (num_frames < 1) throw std::invalid_argument("trajectory needs at least one frame");
  UserTrajectory t;
  t.initial_angle_rad = angle_rad;
  t.initial_distance_m = distance_m;
  t.velocity_mps = velocity_mps;
  t.frame_positions.reserve(num_frames);
  Vec2 pos = polar_to_position(angle_rad, distance_m);
  for (int p = 0; p < num_frames; ++p) {
    t.frame_positions.push_back(pos);
    pos += velocity_mps * kFrameDurationS;
  }
  return t;
}

std::vector<Vec2> element_positions(const SystemConfig& cfg) {
  const int n = cfg.num_bs_antennas;
  const double d = cfg.antenna_spacing_m();
  std::vector<Vec2> out(n);
  for (int s = 0; s < n; ++s) out[s] = Vec2((s - 0.5 * (n - 1)) * d, 0.0);
  return out;
}

ClusterSet generate_clusters(const SystemConfig& cfg, const UserTrajectory& traj, Rng& rng) {
  if (cfg.num_clusters < 0) throw std::invalid_argument("num_clusters must be >= 0");
  ClusterSet set;
  const Vec2 user = traj.frame_positions.empty()
                        ? polar_to_position(traj.initial_angle_rad, traj.initial_distance_m)
                        : traj.frame_positions.front();
  set.los_delay_s = user.norm() / kSpeedOfLight;
  if (cfg.num_clusters == 0) return set;

  // Exponential power-delay profile over cluster excess delays.
  std::vector<double> delays(cfg.num_clusters);
  for (auto& d : delays) d = rng.exponential(cfg.cluster_delay_mean_s);
  std::sort(delays.begin(), delays.end());
  std::vector<double> power(cfg.num_clusters);
  double total = 0.0;
  for (int c = 0; c < cfg.num_clusters; ++c) {
    power[c] = std::exp(-delays[c] / cfg.cluster_delay_mean_s);
    total += power[c];
  }

  const double lambda = cfg.wavelength();
  const double r2_lo = cfg.scatterer_annulus_m.min * cfg.scatterer_annulus_m.min;
  const double r2_hi = cfg.scatterer_annulus_m.max * cfg.scatterer_annulus_m.max;
  set.paths.reserve(static_cast<std::size_t>(cfg.num_clusters) * cfg.rays_per_cluster);
  for (int c = 0; c < cfg.num_clusters; ++c) {
    const double ray_power = power[c] / total / cfg.rays_per_cluster;
    for (int r = 0; r < cfg.rays_per_cluster; ++r) {
      NlosPath path;
      path.gain = rng.complex_normal(ray_power);
      path.excess_delay_s = delays[c];
      const double radius = std::sqrt(rng.uniform(r2_lo, r2_hi));
      const double phi = rng.uniform(0.0, kTwoPi);
      path.scatterer = user + Vec2(radius * std::cos(phi), radius * std::sin(phi));
      const Vec2 towards = path.scatterer - user;
      const double len = towards.norm();
      path.doppler_rate =
          len > 0 ? kTwoPi * towards.dot(traj.velocity_mps) / (len * lambda) : 0.0;
      set.paths.push_back(path);
    }
  }
  return set;
}

CVector spherical_phase_vector(const Vec2& point, const SystemConfig& cfg) {
  const auto elems = element_positions(cfg);
  const double k0 = kTwoPi / cfg.wavelength();
  CVector v(cfg.num_bs_antennas);
  for (int s = 0; s < cfg.num_bs_antennas; ++s) {
    const double dist = (elems[s] - point).norm();
    if (dist < kMinElementDistance)
      throw DegenerateInput("point is collocated with antenna element " + std::to_string(s));
    v[s] = unit_phasor(-k0 * dist);
  }
  return v;
}

CVector los_phase_vector(const Vec2& user_pos, const Vec2& velocity_mps, const SystemConfig& cfg,
                         double time_s) {
  CVector v = spherical_phase_vector(user_pos, cfg);
  const double range = user_pos.norm();
  if (range > 0 && time_s != 0.0) {
    // Arrival direction at the user points back towards the array centre.
    const Vec2 r_hat = -user_pos / range;
    const double doppler = kTwoPi * r_hat.dot(velocity_mps) / cfg.wavelength() * time_s;
    v *= unit_phasor(doppler);
  }
  return v;
}

RicianWeights rician_weights(const SystemConfig& cfg, bool has_nlos) {
  if (!has_nlos || (std::isinf(cfg.rician_k_db) && cfg.rician_k_db > 0)) return {0.0, 1.0};
  if (std::isinf(cfg.rician_k_db)) return {1.0, 0.0};
  const double kr = std::pow(10.0, cfg.rician_k_db / 10.0);
  return {std::sqrt(1.0 / (kr + 1.0)), std::sqrt(kr / (kr + 1.0))};
}

CVector frequency_domain_channel(const ClusterSet& clusters, const CVector& los,
                                 const SystemConfig& cfg, int k) {
  if (k < 0 || k >= cfg.num_subcarriers) throw std::out_of_range("subcarrier index out of range");
  const auto w = rician_weights(cfg, !clusters.empty());
  const double fk = frequency(cfg, k);
  CVector h = CVector::Zero(cfg.num_bs_antennas);
  if (w.nlos != 0.0) {
    for (std::size_t p = 0; p < clusters.paths.size(); ++p) {
      const cplx coeff = clusters.paths[p].gain * unit_phasor(-kTwoPi * fk * clusters.delay(p));
      h += coeff * spherical_phase_vector(clusters.paths[p].scatterer, cfg);
    }
    h *= w.nlos;
  }
  if (w.los != 0.0) h += (w.los * unit_phasor(-kTwoPi * fk * clusters.los_delay_s)) * los;
  return h;
}

CMatrix nlos_steering_matrix(const ClusterSet& clusters, const SystemConfig& cfg) {
  CMatrix a(cfg.num_bs_antennas, static_cast<Eigen::Index>(clusters.paths.size()));
  for (std::size_t p = 0; p < clusters.paths.size(); ++p)
    a.col(static_cast<Eigen::Index>(p)) = spherical_phase_vector(clusters.paths[p].scatterer, cfg);
  return a;
}

CMatrix frequency_domain_channel_matrix(const ClusterSet& clusters, const CMatrix& nlos_steering,
                                        const CVector& los, const SystemConfig& cfg) {
  const int K = cfg.num_subcarriers;
  const auto w = rician_weights(cfg, !clusters.empty());
  CMatrix H = CMatrix::Zero(K, cfg.num_bs_antennas);
  if (w.nlos != 0.0) {
    const auto np = static_cast<Eigen::Index>(clusters.paths.size());
    CMatrix coeff(K, np);
    for (int k = 0; k < K; ++k) {
      const double fk = frequency(cfg, k);
      for (Eigen::Index p = 0; p < np; ++p)
        coeff(k, p) = clusters.paths[p].gain * unit_phasor(-kTwoPi * fk * clusters.delay(p));
    }
    H.noalias() = w.nlos * (coeff * nlos_steering.transpose());
  }
  if (w.los != 0.0) {
    for (int k = 0; k < K; ++k) {
      const cplx c = w.los * unit_phasor(-kTwoPi * frequency(cfg, k) * clusters.los_delay_s);
      H.row(k) += c * los.transpose();
    }
  }
  return H;
}

double pathloss_db(double distance_m, const SystemConfig& cfg) {
  if (!(distance_m > 0)) throw std::invalid_argument("pathloss distance must be positive");
  return 32.4 + 20.0 * std::log10(cfg.carrier_freq_hz / 1e9) + 20.0 * std::log10(distance_m);
}

ClusterSet snapshot_clusters(const ClusterSet& base, const UserTrajectory& traj, int p) {
  ClusterSet snap = base;
  const double t = p * kFrameDurationS;
  snap.los_delay_s = traj.frame_positions.at(p).norm() / kSpeedOfLight;
  for (auto& path : snap.paths) path.gain *= unit_phasor(path.doppler_rate * t);
  return snap;
}

std::vector<ChannelFrame> generate_frame_sequence(const SystemConfig& cfg,
                                                  const UserTrajectory& traj, Rng& rng) {
  if (traj.frame_positions.empty()) throw std::invalid_argument("empty trajectory");
  const ClusterSet base = generate_clusters(cfg, traj, rng);
  const CMatrix steering = nlos_steering_matrix(base, cfg);

  std::vector<ChannelFrame> frames;
  frames.reserve(traj.frame_positions.size());
  for (int p = 0; p < static_cast<int>(traj.frame_positions.size()); ++p) {
    ChannelFrame f;
    f.frame_index = p;
    f.time_s = p * kFrameDurationS;
    f.user_position = traj.frame_positions[p];
    const ClusterSet snap = snapshot_clusters(base, traj, p);
    const CVector los = los_phase_vector(f.user_position, traj.velocity_mps, cfg, f.time_s);
    f.H = frequency_domain_channel_matrix(snap, steering, los, cfg);
    if (cfg.apply_pathloss)
      f.H *= std::pow(10.0, -pathloss_db(f.user_position.norm(), cfg) / 20.0);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace nfbeam
