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

#include <stdexcept>
#include <string>

namespace nfbeam {

Eigen::MatrixXd beam_magnitudes(const CMatrix& H, const Codebook& book) {
  if (H.cols() != book.codewords.rows())
    throw std::invalid_argument("beam_magnitudes: channel has " + std::to_string(H.cols()) +
                                " antennas, codebook " + std::to_string(book.codewords.rows()));
  return (H * book.codewords).cwiseAbs();
}

BeamLabel label_frame(const CMatrix& H, const Codebook& book) {
  const Eigen::RowVectorXd score = beam_magnitudes(H, book).colwise().sum();
  BeamLabel best{0, score.size() > 0 ? score[0] : 0.0};
  for (Eigen::Index n = 1; n < score.size(); ++n) {
    if (score[n] > best.gain) best = {static_cast<int>(n), score[n]};
  }
  return best;
}

double nbg(const CMatrix& H, int predicted, const Codebook& book) {
  if (predicted < 0 || predicted >= book.size())
    throw std::out_of_range("nbg: predicted index " + std::to_string(predicted) + " out of range");
  const Eigen::MatrixXd power = beam_magnitudes(H, book).array().square();
  double acc = 0.0;
  for (Eigen::Index k = 0; k < power.rows(); ++k) {
    const double best = power.row(k).maxCoeff();
    if (!(best > 0)) throw DegenerateInput("nbg: subcarrier " + std::to_string(k) + " has zero gain");
    acc += power(k, predicted) / best;
  }
  return acc / static_cast<double>(power.rows());
}

}  // namespace nfbeam
