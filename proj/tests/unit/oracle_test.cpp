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

#include "nfbeam/oracle.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

namespace nfbeam {
namespace {

TEST(Label, MatchesDoubleLoop) {
  const SystemConfig c = preset("desk").system;
  const Codebook b = near_field_codebook(c);
  std::srand(3);
  for (int i = 0; i < 10; ++i) {
    const CMatrix H = CMatrix::Random(c.num_subcarriers, c.num_bs_antennas);
    EXPECT_EQ(label_frame(H, b).index, oracle_ref::naive_label(H, b.codewords));
  }
}

TEST(Label, TiesGoToLowestIndex) {
  Codebook b;
  b.codewords = CMatrix::Zero(2, 3);
  b.codewords(0, 0) = 1;
  b.codewords(1, 1) = 1;
  b.codewords(1, 2) = 1;
  CMatrix H(1, 2);
  H << cplx(0.1, 0), cplx(0, 2);
  EXPECT_EQ(label_frame(H, b).index, 1);
  EXPECT_NEAR(label_frame(H, b).gain, 2.0, 1e-15);
}

TEST(Label, AntennaMismatchThrows) {
  const Codebook b = near_field_codebook(preset("desk").system);
  EXPECT_THROW(label_frame(CMatrix::Ones(2, 7), b), std::invalid_argument);
}

TEST(Nbg, RangeAndOracleOnLos) {
  SystemConfig c = preset("desk").system;
  c.num_clusters = 0;
  const Codebook b = near_field_codebook(c);
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const UserTrajectory t = make_trajectory(rng.uniform(-1, 1), rng.uniform(5, 20), Vec2::Zero(), 1);
    const auto frames = generate_frame_sequence(c, t, rng);
    const int label = label_frame(frames[0], b).index;
    // A near-flat LoS channel makes the summed argmax nearly optimal per subcarrier.
    EXPECT_GE(nbg(frames[0], label, b), 0.99);
    for (int n : {0, 17, 95}) {
      const double v = nbg(frames[0], n, b);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
  }
}

TEST(Nbg, ErrorCases) {
  const Codebook b = near_field_codebook(preset("desk").system);
  EXPECT_THROW(nbg(CMatrix::Zero(8, 32), 0, b), DegenerateInput);
  EXPECT_THROW(nbg(CMatrix::Ones(8, 32), 96, b), std::out_of_range);
  EXPECT_THROW(nbg(CMatrix::Ones(8, 32), -1, b), std::out_of_range);
}

}  // namespace
}  // namespace nfbeam
