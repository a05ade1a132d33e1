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

#include "nfbeam/rng.hpp"
#include "nfbeam/sysconfig.hpp"
#include "nfbeam/types.hpp"

#include <vector>

namespace nfbeam {

// Geometry convention: the BS array lies on the x axis centred at the
// origin and faces +y. A user at angle psi (from broadside, positive towards
// +x) and range r sits at (r sin psi, r cos psi).

/// Position of a point at (angle, range) seen from the array centre.
Vec2 polar_to_position(double angle_rad, double range_m);
double position_angle(const Vec2& p);

struct UserTrajectory {
  double initial_angle_rad = 0.0;
  double initial_distance_m = 1.0;
  Vec2 velocity_mps = Vec2::Zero();
  std::vector<Vec2> frame_positions;  // one per frame, kFrameDurationS apart
};

/// Straight-line trajectory with `num_frames` positions.
UserTrajectory make_trajectory(double angle_rad, double distance_m, const Vec2& velocity_mps,
                               int num_frames);

struct NlosPath {
  cplx gain;                // beta_p at t = 0
  double excess_delay_s;    // tau_p - tau_1
  Vec2 scatterer;           // world position (m)
  double doppler_rate;      // rad/s
};

/// NLoS taps plus the LoS delay of the snapshot they belong to.
struct ClusterSet {
  std::vector<NlosPath> paths;
  double los_delay_s = 0.0;

  double delay(std::size_t p) const { return los_delay_s + paths[p].excess_delay_s; }
  bool empty() const { return paths.empty(); }
};

struct ChannelFrame {
  CMatrix H;                 // K x N_BS, row k is h[k]
  int frame_index = 0;
  double time_s = 0.0;
  Vec2 user_position = Vec2::Zero();
};

/// N_BS element positions on a line centred at the origin.
std::vector<Vec2> element_positions(const SystemConfig& cfg);

/// Draws num_clusters * rays_per_cluster NLoS paths around the trajectory's
/// first position. Mean path powers sum to one.
ClusterSet generate_clusters(const SystemConfig& cfg, const UserTrajectory& traj, Rng& rng);

/// Spherical-wavefront LoS phases with the Doppler rotation at `time_s`.
CVector los_phase_vector(const Vec2& user_pos, const Vec2& velocity_mps, const SystemConfig& cfg,
                         double time_s);

/// exp(-j 2 pi |element_s - point| / lambda) for every element.
CVector spherical_phase_vector(const Vec2& point, const SystemConfig& cfg);

/// Amplitude weights (nlos, los) of the Rician combination.
struct RicianWeights {
  double nlos;
  double los;
};
RicianWeights rician_weights(const SystemConfig& cfg, bool has_nlos);

/// Per-subcarrier channel h[k], 0 <= k < K, from taps and LoS phases.
CVector frequency_domain_channel(const ClusterSet& clusters, const CVector& los,
                                 const SystemConfig& cfg, int k);

/// All K subcarriers at once (K x N_BS); same values as calling
/// frequency_domain_channel for every k.
CMatrix frequency_domain_channel_matrix(const ClusterSet& clusters, const CMatrix& nlos_steering,
                                        const CVector& los, const SystemConfig& cfg);

/// N_BS x paths matrix of spherical phase vectors towards each scatterer.
CMatrix nlos_steering_matrix(const ClusterSet& clusters, const SystemConfig& cfg);

/// Free-space pathloss in dB; throws for non-positive distance.
double pathloss_db(double distance_m, const SystemConfig& cfg);

/// Clusters evolved to frame `p` of `traj`.
ClusterSet snapshot_clusters(const ClusterSet& base, const UserTrajectory& traj, int p);

/// P+1 quasi-static frames along the trajectory. NLoS taps are drawn once
/// from `rng` and persist across frames.
std::vector<ChannelFrame> generate_frame_sequence(const SystemConfig& cfg,
                                                  const UserTrajectory& traj, Rng& rng);

}  // namespace nfbeam
