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

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

namespace nfbeam {
namespace {

SystemConfig desk() { return preset("desk").system; }

UserTrajectory straight(double angle, double range, int frames) {
  return make_trajectory(angle, range, Vec2(5.0, -3.0), frames);
}

TEST(Geometry, PolarRoundTrip) {
  for (double a : {-1.0, -0.3, 0.0, 0.7}) {
    const Vec2 p = polar_to_position(a, 12.0);
    EXPECT_NEAR(position_angle(p), a, 1e-14);
    EXPECT_NEAR(p.norm(), 12.0, 1e-12);
  }
  // Broadside is +y.
  EXPECT_NEAR(polar_to_position(0.0, 3.0).y(), 3.0, 1e-15);
}

TEST(Geometry, ElementsCentredHalfWavelength) {
  const SystemConfig c = desk();
  const auto e = element_positions(c);
  ASSERT_EQ(e.size(), 32u);
  EXPECT_NEAR(e.front().x() + e.back().x(), 0.0, 1e-15);
  EXPECT_NEAR(e[1].x() - e[0].x(), c.wavelength() / 2, 1e-15);
}

TEST(Geometry, TrajectoryStepsOneFrame) {
  const UserTrajectory t = straight(0.2, 10.0, 6);
  ASSERT_EQ(t.frame_positions.size(), 6u);
  const Vec2 step = t.frame_positions[3] - t.frame_positions[2];
  EXPECT_NEAR(step.x(), 5.0 * kFrameDurationS, 1e-14);
  EXPECT_NEAR(step.y(), -3.0 * kFrameDurationS, 1e-14);
  EXPECT_THROW(make_trajectory(0, 1, Vec2::Zero(), 0), std::invalid_argument);
}

TEST(Rician, WeightsFollowKFactor) {
  SystemConfig c = desk();
  c.rician_k_db = 0.0;
  auto w = rician_weights(c, true);
  EXPECT_NEAR(w.los, std::sqrt(0.5), 1e-15);
  EXPECT_NEAR(w.nlos, std::sqrt(0.5), 1e-15);
  c.rician_k_db = 10.0;
  w = rician_weights(c, true);
  EXPECT_NEAR(w.los * w.los / (w.nlos * w.nlos), 10.0, 1e-12);
  EXPECT_NEAR(w.los * w.los + w.nlos * w.nlos, 1.0, 1e-15);
  c.rician_k_db = std::numeric_limits<double>::infinity();
  w = rician_weights(c, true);
  EXPECT_EQ(w.nlos, 0.0);
  EXPECT_EQ(w.los, 1.0);
  c.rician_k_db = -std::numeric_limits<double>::infinity();
  w = rician_weights(c, true);
  EXPECT_EQ(w.los, 0.0);
  // Without NLoS taps all power sits on the LoS path.
  c.rician_k_db = 0.0;
  w = rician_weights(c, false);
  EXPECT_EQ(w.los, 1.0);
}

TEST(Clusters, CountDeterminismAndEmptyCase) {
  SystemConfig c = desk();
  const UserTrajectory t = straight(0.1, 8.0, 6);
  Rng a(3), b(3);
  const ClusterSet x = generate_clusters(c, t, a);
  const ClusterSet y = generate_clusters(c, t, b);
  ASSERT_EQ(x.paths.size(), static_cast<std::size_t>(c.num_clusters * c.rays_per_cluster));
  for (std::size_t i = 0; i < x.paths.size(); ++i) {
    EXPECT_EQ(x.paths[i].gain, y.paths[i].gain);
    EXPECT_GE(x.paths[i].excess_delay_s, 0.0);
    const double r = (x.paths[i].scatterer - t.frame_positions[0]).norm();
    EXPECT_GE(r, c.scatterer_annulus_m.min - 1e-12);
    EXPECT_LE(r, c.scatterer_annulus_m.max + 1e-12);
  }
  EXPECT_NEAR(x.los_delay_s, 8.0 / kSpeedOfLight, 1e-20);
  c.num_clusters = 0;
  Rng d(3);
  EXPECT_TRUE(generate_clusters(c, t, d).empty());
}

TEST(Clusters, MeanTapPowerIsOne) {
  SystemConfig c = desk();
  const UserTrajectory t = straight(0.0, 10.0, 2);
  Rng rng(17);
  double total = 0.0;
  const int trials = 2000;
  for (int i = 0; i < trials; ++i)
    for (const auto& p : generate_clusters(c, t, rng).paths) total += std::norm(p.gain);
  EXPECT_NEAR(total / trials, 1.0, 0.03);
}

TEST(Channel, MatrixFormMatchesPerSubcarrier) {
  SystemConfig c = desk();
  c.rician_k_db = 3.0;
  const UserTrajectory t = straight(-0.4, 6.0, 2);
  Rng rng(5);
  const ClusterSet cl = generate_clusters(c, t, rng);
  const CVector los = los_phase_vector(t.frame_positions[0], t.velocity_mps, c, 0.0);
  const CMatrix H = frequency_domain_channel_matrix(cl, nlos_steering_matrix(cl, c), los, c);
  for (int k = 0; k < c.num_subcarriers; ++k) {
    const CVector h = frequency_domain_channel(cl, los, c, k);
    EXPECT_LT((H.row(k).transpose() - h).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(frequency_domain_channel(cl, los, c, c.num_subcarriers), std::out_of_range);
}

TEST(Channel, NaiveTapSumAgreesOnOneDraw) {
  SystemConfig c = desk();
  c.rician_k_db = 5.0;
  const UserTrajectory t = straight(0.5, 9.0, 2);
  Rng rng(23);
  const ClusterSet cl = generate_clusters(c, t, rng);
  const CVector los = los_phase_vector(t.frame_positions[0], t.velocity_mps, c, 0.0);
  for (int k : {0, 3, 7}) {
    const CVector h = frequency_domain_channel(cl, los, c, k);
    const auto ref = oracle_ref::naive_subcarrier_channel(cl, los, std::pow(10.0, 0.5), c.carrier_freq_hz,
                                                          c.subcarrier_spacing_hz, k, c.num_bs_antennas,
                                                          c.antenna_spacing_m(), c.wavelength());
    for (int s = 0; s < c.num_bs_antennas; ++s)
      EXPECT_LT(std::abs(std::complex<long double>(h[s].real(), h[s].imag()) - ref[s]), 1e-10L);
  }
}

TEST(Channel, CollocatedPointIsDegenerate) {
  const SystemConfig c = desk();
  EXPECT_THROW(spherical_phase_vector(element_positions(c)[4], c), DegenerateInput);
}

TEST(Channel, PathlossFreeSpace) {
  const SystemConfig c = desk();
  EXPECT_NEAR(pathloss_db(1.0, c), 32.4 + 20 * std::log10(30.0), 1e-12);
  EXPECT_NEAR(pathloss_db(10.0, c) - pathloss_db(1.0, c), 20.0, 1e-12);
  EXPECT_THROW(pathloss_db(0.0, c), std::invalid_argument);
}

TEST(Channel, PureLosSequenceHasPathlossModulus) {
  SystemConfig c = desk();
  c.num_clusters = 0;
  const UserTrajectory t = straight(0.3, 7.0, c.context_frames + 1);
  Rng rng(1);
  const auto frames = generate_frame_sequence(c, t, rng);
  ASSERT_EQ(frames.size(), 6u);
  for (const auto& f : frames) {
    const double amp = std::pow(10.0, -pathloss_db(f.user_position.norm(), c) / 20);
    EXPECT_LT((f.H.cwiseAbs().array() - amp).abs().maxCoeff(), 1e-12 * amp);
  }
  EXPECT_DOUBLE_EQ(frames[2].time_s, 2 * kFrameDurationS);
}

TEST(Channel, DopplerRotatesLosPhaseOnly) {
  const SystemConfig c = desk();
  const Vec2 pos = polar_to_position(0.2, 10.0);
  const Vec2 vel(0.0, 20.0);
  const CVector a = los_phase_vector(pos, vel, c, 0.0);
  const CVector b = los_phase_vector(pos, vel, c, 0.01);
  const cplx ratio = b[0] / a[0];
  EXPECT_NEAR(std::abs(ratio), 1.0, 1e-12);
  for (int s = 1; s < c.num_bs_antennas; ++s) EXPECT_LT(std::abs(b[s] / a[s] - ratio), 1e-12);
}

TEST(Channel, SnapshotEvolvesGainsAndDelay) {
  const SystemConfig c = desk();
  const UserTrajectory t = straight(0.0, 10.0, 4);
  Rng rng(8);
  const ClusterSet base = generate_clusters(c, t, rng);
  const ClusterSet s0 = snapshot_clusters(base, t, 0);
  const ClusterSet s3 = snapshot_clusters(base, t, 3);
  EXPECT_EQ(s0.paths[0].gain, base.paths[0].gain);
  EXPECT_NEAR(std::abs(s3.paths[0].gain), std::abs(base.paths[0].gain), 1e-15);
  EXPECT_NEAR(s3.los_delay_s, t.frame_positions[3].norm() / kSpeedOfLight, 1e-20);
}

}  // namespace
}  // namespace nfbeam
