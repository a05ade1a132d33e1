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
#include "nfbeam/sounding.hpp"
#include "nfbeam/sysconfig.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace nfbeam {

inline constexpr char kDatasetMagic[8] = {'N', 'F', 'B', 'E', 'A', 'M', 'D', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Scope of the zero-mean/unit-variance standardisation.
enum class Normalization : int { kWholeTensor = 0, kPerFrame = 1 };

struct SampleMeta {
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
  float angle_rad = 0;
  float distance_m = 0;
  float speed_mps = 0;
  float heading_rad = 0;
  float noise_dbm = 0;
};

/// One labelled training sequence. `pilots` holds P x 2 x K x G values
/// (real plane then imaginary plane per frame); `labels` covers frames
/// 1..P+1.
struct Sample {
  std::vector<float> pilots;
  std::vector<std::int32_t> labels;
  SampleMeta meta;
  std::vector<float> frame_mean;  // per frame; empty unless stats are kept
  std::vector<float> frame_std;
};

/// How a dataset is produced. Sample i uses seed derive_seed(master_seed, {i}).
struct DatasetSpec {
  SystemConfig system;
  PilotVariant pilot_variant = PilotVariant::kZadoffChu;
  Normalization normalization = Normalization::kPerFrame;
  std::uint64_t master_seed = 1;
  std::uint64_t first_index = 0;
  bool store_stats = false;
};

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  DatasetSpec spec;
  std::uint64_t count = 0;
  std::vector<double> angle_grid;     // sin-uniform codebook angles (rad)
  std::vector<double> distance_grid;  // codebook ranges (m)

  std::size_t pilot_values() const;
  std::size_t label_values() const;
  std::size_t record_bytes() const;
};

DatasetHeader make_header(const DatasetSpec& spec, std::uint64_t count);

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t index);

/// Uniform angle, range, speed and heading within the configured ranges.
UserTrajectory sample_trajectory(const SystemConfig& cfg, Rng& rng);

/// Real/imag split followed by standardisation; output is frames x 2 x K x G.
/// Throws DegenerateInput for a zero-variance block.
std::vector<double> preprocess(const std::vector<MeasurementFrame>& raw,
                               Normalization scheme = Normalization::kPerFrame,
                               std::vector<double>* means = nullptr,
                               std::vector<double>* stds = nullptr);

/// Shared, immutable per-dataset state (codebook, sounding scheme).
class SampleFactory {
 public:
  explicit SampleFactory(DatasetSpec spec);

  const DatasetSpec& spec() const { return spec_; }
  const Codebook& near_field() const { return near_field_; }
  const SoundingScheme& sounding() const { return sounding_; }

  /// Sample number `index` of this dataset.
  Sample build(std::uint64_t index) const;

  /// Sample built from an explicit seed.
  Sample build_from_seed(std::uint64_t seed, std::uint64_t index = 0) const;

  /// The P+1 channel frames behind a stored sample, regenerated from its seed.
  std::vector<ChannelFrame> channels(std::uint64_t seed) const;

 private:
  DatasetSpec spec_;
  Codebook near_field_;
  SoundingScheme sounding_;
};

/// Builds samples first_index .. first_index+count-1 with `jobs` workers.
/// The result does not depend on `jobs`.
std::vector<Sample> generate_samples(const SampleFactory& factory, std::uint64_t count, int jobs = 1);

/// Streaming writer; the file appears atomically on close().
class DatasetWriter {
 public:
  DatasetWriter(const std::string& path, const DatasetHeader& header);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const Sample& s);
  void close();

 private:
  std::string path_;
  std::string tmp_path_;
  DatasetHeader header_;
  std::ofstream out_;
  std::uint64_t written_ = 0;
  bool closed_ = false;
};

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& path);

  const DatasetHeader& header() const { return header_; }
  /// Reads the next record; false once `count` records were read.
  bool next(Sample& s);

 private:
  std::ifstream in_;
  DatasetHeader header_;
  std::uint64_t read_ = 0;
};

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<Sample>& samples);

struct LoadedDataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

LoadedDataset read_dataset(const std::string& path);

/// Index ranges [begin, end) of the 80/10/10 train/val/test split.
struct SplitRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};
struct DatasetSplit {
  SplitRange train, val, test;
};
DatasetSplit split_80_10_10(std::size_t count);

std::string header_text(const DatasetHeader& h);
DatasetHeader parse_header_text(const std::string& text);

}  // namespace nfbeam
