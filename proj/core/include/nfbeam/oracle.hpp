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
#include "nfbeam/types.hpp"

namespace nfbeam {

struct BeamLabel {
  int index = 0;
  double gain = 0.0;  // sum over subcarriers of |h[k] b|
};

/// |h[k] b_n| for every subcarrier (rows) and codeword (columns).
Eigen::MatrixXd beam_magnitudes(const CMatrix& H, const Codebook& book);

/// Exhaustive search maximising sum_k |h[k] b_n|; ties go to the lowest index.
BeamLabel label_frame(const CMatrix& H, const Codebook& book);
inline BeamLabel label_frame(const ChannelFrame& f, const Codebook& book) { return label_frame(f.H, book); }

/// Mean over subcarriers of |h[k] b_pred|^2 / max_n |h[k] b_n|^2. Throws
/// DegenerateInput if some subcarrier has zero response to every codeword.
double nbg(const CMatrix& H, int predicted, const Codebook& book);
inline double nbg(const ChannelFrame& f, int predicted, const Codebook& book) { return nbg(f.H, predicted, book); }

}  // namespace nfbeam
