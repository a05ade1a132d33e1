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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace nfbeam {
namespace {

SystemConfig desk() { return preset("desk").system; }

TEST(Grids, SineAndDistance) {
  const auto g = sine_grid(4);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_DOUBLE_EQ(g[0], -1.0);
  EXPECT_DOUBLE_EQ(g[1], -0.5);
  EXPECT_DOUBLE_EQ(g[3], 0.5);
  SystemConfig c = desk();
  const auto d = distance_grid(c);
  ASSERT_EQ(d.size(), 3u);
  EXPECT_DOUBLE_EQ(d.front(), 5.0);
  EXPECT_DOUBLE_EQ(d[1], 12.5);
  EXPECT_DOUBLE_EQ(d.back(), 20.0);
  c.distance_samples = 1;
  EXPECT_DOUBLE_EQ(distance_grid(c)[0], 12.5);
}

TEST(Dft, OrthonormalColumns) {
  const Codebook b = dft_codebook(desk());
  const CMatrix g = b.codewords.adjoint() * b.codewords;
  EXPECT_LT((g - CMatrix::Identity(32, 32)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(b.kind, CodebookKind::kDft);
  EXPECT_TRUE(b.distances.empty());
}

TEST(NearField, LayoutAndNorms) {
  const SystemConfig c = desk();
  const Codebook b = near_field_codebook(c);
  ASSERT_EQ(b.size(), 96);
  ASSERT_EQ(b.num_antennas(), 32);
  for (int n = 0; n < b.size(); ++n) EXPECT_NEAR(b.codewords.col(n).norm(), 1.0, 1e-12);
  const int n = near_field_index(7, 2, 32);
  EXPECT_EQ(n, 71);
  EXPECT_DOUBLE_EQ(b.distances[n], 20.0);
  EXPECT_NEAR(std::sin(b.angles[n]), sine_grid(32)[7], 1e-15);
  EXPECT_THROW(near_field_codeword(0.1, 0.0, c), std::invalid_argument);
}

TEST(NearField, FocusesOnItsOwnPoint) {
  // A codeword has unit correlation with the spherical wave from its focus.
  const SystemConfig c = desk();
  const CVector b = near_field_codeword(0.3, 6.0, c);
  const CVector h = spherical_phase_vector(polar_to_position(0.3, 6.0), c);
  EXPECT_NEAR(std::abs(beam_response(h, b)) / h.norm(), 1.0, 1e-12);
}

TEST(NearField, DistanceMattersForLargeArrays) {
  // At 256 antennas a 5 m focus is a poor match for a user at 20 m.
  const SystemConfig c = preset("paper").system;
  const CVector h = spherical_phase_vector(polar_to_position(0.0, 20.0), c);
  const double matched = std::abs(beam_response(h, near_field_codeword(0.0, 20.0, c)));
  const double mismatched = std::abs(beam_response(h, near_field_codeword(0.0, 5.0, c)));
  EXPECT_GT(matched, 2.0 * mismatched);
}

TEST(Widebeam, ConstantModulusAndCoverage) {
  const SystemConfig c = desk();
  const Codebook wb = widebeam_codebook(c);
  const Codebook dft = dft_codebook(c);
  ASSERT_EQ(wb.size(), 8);
  const double m = 1.0 / std::sqrt(32.0);
  EXPECT_LT((wb.codewords.cwiseAbs().array() - m).abs().maxCoeff(), 1e-15);
  // Every DFT direction is served best by the widebeam of its own group.
  for (int d = 0; d < 32; ++d) {
    Eigen::Index best = 0;
    (wb.codewords.adjoint() * dft.codewords.col(d)).cwiseAbs().maxCoeff(&best);
    EXPECT_EQ(best, d / 4) << "DFT direction " << d;
  }
  SystemConfig bad = c;
  bad.widebeam_group_factor = 2;
  EXPECT_THROW(widebeam_codebook(bad), std::invalid_argument);
}

TEST(Widebeam, AnalogPrecoderPerSymbol) {
  const SystemConfig c = desk();
  const Codebook wb = widebeam_codebook(c);
  const CMatrix f2 = analog_precoder_for_symbol(2, wb, c);
  ASSERT_EQ(f2.cols(), 4);
  EXPECT_EQ(f2.col(0), wb.codewords.col(4));
  EXPECT_EQ(f2.col(3), wb.codewords.col(7));
  EXPECT_THROW(analog_precoder_for_symbol(0, wb, c), std::out_of_range);
  EXPECT_THROW(analog_precoder_for_symbol(3, wb, c), std::out_of_range);
}

TEST(Digital, UnitaryBaseAndCyclicPermutations) {
  const SystemConfig c = desk();
  const DigitalSchedule s = digital_schedule(c);
  EXPECT_LT((s.base.adjoint() * s.base - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_EQ(s.columns.size(), 8u);
  for (int k = 0; k < 8; ++k) {
    std::set<int> seen(s.columns[k].begin(), s.columns[k].end());
    EXPECT_EQ(seen.size(), 4u);
    EXPECT_EQ(*seen.begin(), 0);
    EXPECT_EQ(*seen.rbegin(), 3);
    EXPECT_EQ(s.columns[k][0], k % 4);
    const CMatrix f = s.precoder(k);
    EXPECT_LT((f.adjoint() * f - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  }
  // Adjacent subcarriers see different column orders.
  EXPECT_NE(s.columns[0], s.columns[1]);
  const DigitalSchedule id = identity_schedule(c);
  EXPECT_EQ(id.precoder(5), CMatrix::Identity(4, 4));
}

TEST(BeamResponse, BilinearNoConjugation) {
  CVector h(2), f(2);
  h << cplx(0, 1), cplx(1, 0);
  f << cplx(0, 1), cplx(2, 0);
  EXPECT_EQ(beam_response(h, f), cplx(-1, 0) + cplx(2, 0));
}

}  // namespace
}  // namespace nfbeam
