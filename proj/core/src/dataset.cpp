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

#include "nfbeam/dataset.hpp"

#include "nfbeam/oracle.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <thread>

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

namespace nfbeam {

namespace {

constexpr std::size_t kMetaFloats = 5;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_array(std::ostream& out, const std::vector<T>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
bool get(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return in.gcount() == static_cast<std::streamsize>(sizeof(T));
}

template <typename T>
bool get_array(std::istream& in, std::vector<T>& v, std::size_t n) {
  v.resize(n);
  const auto bytes = static_cast<std::streamsize>(n * sizeof(T));
  in.read(reinterpret_cast<char*>(v.data()), bytes);
  return in.gcount() == bytes;
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  return s;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = s.find(',', pos);
    std::string_view tok(s.data() + pos, (comma == std::string::npos ? s.size() : comma) - pos);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    out.push_back(parse_double(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void check_sample_shape(const Sample& s, const DatasetHeader& h) {
  if (s.pilots.size() != h.pilot_values() || s.labels.size() != h.label_values())
    throw std::invalid_argument("sample dimensions do not match dataset header");
  if (h.spec.store_stats) {
    const auto P = static_cast<std::size_t>(h.spec.system.context_frames);
    if (s.frame_mean.size() != P || s.frame_std.size() != P)
      throw std::invalid_argument("sample is missing per-frame statistics");
  }
}

}  // namespace

std::size_t DatasetHeader::pilot_values() const {
  const auto& c = spec.system;
  return static_cast<std::size_t>(c.context_frames) * 2 * c.num_subcarriers * c.widebeam_count;
}

std::size_t DatasetHeader::label_values() const {
  return static_cast<std::size_t>(spec.system.context_frames) + 1;
}

std::size_t DatasetHeader::record_bytes() const {
  std::size_t b = 2 * sizeof(std::uint64_t) + kMetaFloats * sizeof(float) + pilot_values() * sizeof(float) +
                  label_values() * sizeof(std::int32_t);
  if (spec.store_stats) b += 2 * static_cast<std::size_t>(spec.system.context_frames) * sizeof(float);
  return b;
}

DatasetHeader make_header(const DatasetSpec& spec, std::uint64_t count) {
  spec.system.validate();
  DatasetHeader h;
  h.spec = spec;
  h.count = count;
  for (double s : sine_grid(spec.system.num_bs_antennas)) h.angle_grid.push_back(std::asin(s));
  h.distance_grid = distance_grid(spec.system);
  return h;
}

std::uint64_t sample_seed(std::uint64_t master_seed, std::uint64_t index) {
  return derive_seed(master_seed, {index});
}

UserTrajectory sample_trajectory(const SystemConfig& cfg, Rng& rng) {
  const double deg = std::numbers::pi / 180.0;
  const double angle = rng.uniform(cfg.angle_range_deg.min, cfg.angle_range_deg.max) * deg;
  const double dist = rng.uniform(cfg.distance_range_m.min, cfg.distance_range_m.max);
  const double speed = rng.uniform(cfg.speed_range_kmh.min, cfg.speed_range_kmh.max) / 3.6;
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec2 vel(speed * std::cos(heading), speed * std::sin(heading));
  return make_trajectory(angle, dist, vel, cfg.context_frames + 1);
}

std::vector<double> preprocess(const std::vector<MeasurementFrame>& raw, Normalization scheme,
                               std::vector<double>* means, std::vector<double>* stds) {
  std::vector<double> out;
  if (raw.empty()) return out;
  const Eigen::Index K = raw.front().Y.rows();
  const Eigen::Index G = raw.front().Y.cols();
  const std::size_t block = static_cast<std::size_t>(2 * K * G);
  out.resize(raw.size() * block);
  for (std::size_t p = 0; p < raw.size(); ++p) {
    const CMatrix& Y = raw[p].Y;
    if (Y.rows() != K || Y.cols() != G) throw std::invalid_argument("preprocess: inconsistent frame sizes");
    double* dst = out.data() + p * block;
    for (Eigen::Index k = 0; k < K; ++k) {
      for (Eigen::Index g = 0; g < G; ++g) {
        dst[k * G + g] = Y(k, g).real();
        dst[K * G + k * G + g] = Y(k, g).imag();
      }
    }
  }

  const std::size_t span = scheme == Normalization::kPerFrame ? block : out.size();
  if (means) means->clear();
  if (stds) stds->clear();
  for (std::size_t start = 0; start < out.size(); start += span) {
    double mu = 0.0;
    for (std::size_t i = start; i < start + span; ++i) mu += out[i];
    mu /= static_cast<double>(span);
    double var = 0.0;
    for (std::size_t i = start; i < start + span; ++i) var += (out[i] - mu) * (out[i] - mu);
    var /= static_cast<double>(span);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0) || sd <= 1e-12 * std::abs(mu))
      throw DegenerateInput("preprocess: zero-variance block starting at value " + std::to_string(start));
    for (std::size_t i = start; i < start + span; ++i) out[i] = (out[i] - mu) / sd;
    if (means) means->push_back(mu);
    if (stds) stds->push_back(sd);
  }
  return out;
}

SampleFactory::SampleFactory(DatasetSpec spec)
    : spec_(std::move(spec)),
      near_field_(near_field_codebook(spec_.system)),
      sounding_(make_sounding_scheme(spec_.system, spec_.pilot_variant)) {}

std::vector<ChannelFrame> SampleFactory::channels(std::uint64_t seed) const {
  Rng geo(derive_seed(seed, {1}));
  const UserTrajectory traj = sample_trajectory(spec_.system, geo);
  return generate_frame_sequence(spec_.system, traj, geo);
}

Sample SampleFactory::build(std::uint64_t index) const {
  return build_from_seed(sample_seed(spec_.master_seed, index), index);
}

Sample SampleFactory::build_from_seed(std::uint64_t seed, std::uint64_t index) const {
  const SystemConfig& cfg = spec_.system;
  const int P = cfg.context_frames;

  Rng geo(derive_seed(seed, {1}));
  const UserTrajectory traj = sample_trajectory(cfg, geo);
  const std::vector<ChannelFrame> frames = generate_frame_sequence(cfg, traj, geo);

  Rng noise(derive_seed(seed, {2}));
  std::vector<MeasurementFrame> measured;
  measured.reserve(P);
  Sample s;
  s.labels.resize(P + 1);
  for (int p = 0; p <= P; ++p) {
    s.labels[p] = label_frame(frames[p], near_field_).index;
    // Frame P+1 is only needed for its label.
    if (p < P) measured.push_back(measure_frame(frames[p], sounding_, cfg, noise));
  }

  std::vector<double> mu, sd;
  const std::vector<double> t = preprocess(measured, spec_.normalization, &mu, &sd);
  s.pilots.assign(t.begin(), t.end());
  if (spec_.store_stats) {
    // Whole-tensor normalisation shares one (mu, sigma) across all frames.
    for (int p = 0; p < P; ++p) {
      const std::size_t i = mu.size() == 1 ? 0 : static_cast<std::size_t>(p);
      s.frame_mean.push_back(static_cast<float>(mu[i]));
      s.frame_std.push_back(static_cast<float>(sd[i]));
    }
  }

  const double speed = traj.velocity_mps.norm();
  s.meta.seed = seed;
  s.meta.index = index;
  s.meta.angle_rad = static_cast<float>(traj.initial_angle_rad);
  s.meta.distance_m = static_cast<float>(traj.initial_distance_m);
  s.meta.speed_mps = static_cast<float>(speed);
  s.meta.heading_rad = static_cast<float>(speed > 0 ? std::atan2(traj.velocity_mps.y(), traj.velocity_mps.x()) : 0.0);
  s.meta.noise_dbm = static_cast<float>(cfg.noise_power_dbm);
  return s;
}

std::vector<Sample> generate_samples(const SampleFactory& factory, std::uint64_t count, int jobs) {
  std::vector<Sample> out(count);
  const std::uint64_t first = factory.spec().first_index;
  const int workers = static_cast<int>(std::min<std::uint64_t>(std::max(jobs, 1), std::max<std::uint64_t>(count, 1)));
  if (workers <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) out[i] = factory.build(first + i);
    return out;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::uint64_t i = next++; i < count; i = next++) {
        try {
          out[i] = factory.build(first + i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::string header_text(const DatasetHeader& h) {
  std::ostringstream o;
  o << "[dataset]\n"
    << "format_version = " << h.version << '\n'
    << "count = " << h.count << '\n'
    << "normalization = " << static_cast<int>(h.spec.normalization) << '\n'
    << "pilot_variant = " << to_string(h.spec.pilot_variant) << '\n'
    << "master_seed = " << h.spec.master_seed << '\n'
    << "first_index = " << h.spec.first_index << '\n'
    << "store_stats = " << (h.spec.store_stats ? 1 : 0) << '\n'
    << "codebook_layout = distance_major\n"
    << "angle_grid = " << join(h.angle_grid) << '\n'
    << "distance_grid = " << join(h.distance_grid) << "\n\n"
    << to_text(h.spec.system);
  return o.str();
}

DatasetHeader parse_header_text(const std::string& text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(text);
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  }
  DatasetHeader h;
  try {
    const auto& d = tree.get_child("dataset");
    h.version = d.get<std::uint32_t>("format_version");
    h.count = d.get<std::uint64_t>("count");
    const int norm = d.get<int>("normalization");
    if (norm != 0 && norm != 1) throw FormatError("dataset header: unknown normalization scheme " + std::to_string(norm));
    h.spec.normalization = static_cast<Normalization>(norm);
    h.spec.pilot_variant = parse_pilot_variant(d.get<std::string>("pilot_variant"));
    h.spec.master_seed = d.get<std::uint64_t>("master_seed");
    h.spec.first_index = d.get<std::uint64_t>("first_index");
    h.spec.store_stats = d.get<int>("store_stats") != 0;
    if (d.get<std::string>("codebook_layout") != "distance_major")
      throw FormatError("dataset header: unsupported codebook layout");
    h.angle_grid = split_doubles(d.get<std::string>("angle_grid"));
    h.distance_grid = split_doubles(d.get<std::string>("distance_grid"));

    RunConfig rc;
    for (const auto& [key, val] : tree.get_child("system"))
      set_config_value(rc, "system." + key, val.get_value<std::string>());
    rc.system.validate();
    h.spec.system = rc.system;
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  }
  if (h.angle_grid.size() != static_cast<std::size_t>(h.spec.system.num_bs_antennas) ||
      h.distance_grid.size() != static_cast<std::size_t>(h.spec.system.distance_samples))
    throw FormatError("dataset header: codebook grids do not match system dimensions");
  return h;
}

DatasetWriter::DatasetWriter(const std::string& path, const DatasetHeader& header)
    : path_(path), tmp_path_(path + ".tmp"), header_(header) {
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open '" + tmp_path_ + "' for writing");
  const std::string text = header_text(header_);
  out_.write(kDatasetMagic, sizeof(kDatasetMagic));
  put(out_, header_.version);
  put(out_, static_cast<std::uint32_t>(text.size()));
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
}

DatasetWriter::~DatasetWriter() {
  if (!closed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void DatasetWriter::write(const Sample& s) {
  if (closed_) throw std::logic_error("DatasetWriter: write after close");
  if (written_ >= header_.count) throw std::logic_error("DatasetWriter: more samples than declared in header");
  check_sample_shape(s, header_);
  put(out_, s.meta.seed);
  put(out_, s.meta.index);
  const float meta[kMetaFloats] = {s.meta.angle_rad, s.meta.distance_m, s.meta.speed_mps, s.meta.heading_rad,
                                   s.meta.noise_dbm};
  out_.write(reinterpret_cast<const char*>(meta), sizeof(meta));
  put_array(out_, s.pilots);
  put_array(out_, s.labels);
  if (header_.spec.store_stats) {
    put_array(out_, s.frame_mean);
    put_array(out_, s.frame_std);
  }
  ++written_;
}

void DatasetWriter::close() {
  if (closed_) return;
  if (written_ != header_.count)
    throw std::logic_error("DatasetWriter: header declares " + std::to_string(header_.count) + " samples, " +
                           std::to_string(written_) + " written");
  out_.flush();
  if (!out_) throw std::runtime_error("write to '" + tmp_path_ + "' failed");
  out_.close();
  std::filesystem::rename(tmp_path_, path_);
  closed_ = true;
}

DatasetReader::DatasetReader(const std::string& path) : in_(path, std::ios::binary) {
  if (!in_) throw std::runtime_error("cannot open dataset '" + path + "'");
  char magic[sizeof(kDatasetMagic)];
  in_.read(magic, sizeof(magic));
  if (in_.gcount() != sizeof(magic) || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw FormatError("'" + path + "' is not a dataset file (bad magic)");
  std::uint32_t version = 0, len = 0;
  if (!get(in_, version)) throw FormatError("dataset truncated in header");
  if (version != kDatasetVersion)
    throw FormatError("dataset format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kDatasetVersion) + ")");
  if (!get(in_, len) || len > (1u << 24)) throw FormatError("dataset truncated in header");
  std::string text(len, '\0');
  in_.read(text.data(), len);
  if (in_.gcount() != static_cast<std::streamsize>(len)) throw FormatError("dataset truncated in header");
  header_ = parse_header_text(text);
  if (header_.version != version) throw FormatError("dataset header version disagrees with binary prefix");

  const auto payload_start = static_cast<std::uint64_t>(in_.tellg());
  const auto file_size = std::filesystem::file_size(path);
  const std::uint64_t expected = payload_start + header_.count * header_.record_bytes();
  if (file_size < expected) throw FormatError("dataset truncated: payload shorter than declared sample count");
  if (file_size > expected) throw FormatError("dataset payload size does not match header dimensions");
}

bool DatasetReader::next(Sample& s) {
  if (read_ >= header_.count) return false;
  float meta[kMetaFloats];
  bool ok = get(in_, s.meta.seed) && get(in_, s.meta.index);
  in_.read(reinterpret_cast<char*>(meta), sizeof(meta));
  ok = ok && in_.gcount() == sizeof(meta);
  ok = ok && get_array(in_, s.pilots, header_.pilot_values()) && get_array(in_, s.labels, header_.label_values());
  if (ok && header_.spec.store_stats) {
    const auto P = static_cast<std::size_t>(header_.spec.system.context_frames);
    ok = get_array(in_, s.frame_mean, P) && get_array(in_, s.frame_std, P);
  } else {
    s.frame_mean.clear();
    s.frame_std.clear();
  }
  if (!ok) throw FormatError("dataset truncated at record " + std::to_string(read_));
  s.meta.angle_rad = meta[0];
  s.meta.distance_m = meta[1];
  s.meta.speed_mps = meta[2];
  s.meta.heading_rad = meta[3];
  s.meta.noise_dbm = meta[4];
  const int book = header_.spec.system.codebook_size();
  for (auto l : s.labels)
    if (l < 0 || l >= book) throw FormatError("label out of codebook range at record " + std::to_string(read_));
  ++read_;
  return true;
}

void write_dataset(const std::string& path, const DatasetHeader& header, const std::vector<Sample>& samples) {
  DatasetHeader h = header;
  h.count = samples.size();
  DatasetWriter w(path, h);
  for (const auto& s : samples) w.write(s);
  w.close();
}

LoadedDataset read_dataset(const std::string& path) {
  DatasetReader r(path);
  LoadedDataset d;
  d.header = r.header();
  d.samples.reserve(d.header.count);
  Sample s;
  while (r.next(s)) d.samples.push_back(s);
  return d;
}

DatasetSplit split_80_10_10(std::size_t count) {
  const std::size_t train = count * 8 / 10;
  const std::size_t val = count / 10;
  return {{0, train}, {train, train + val}, {train + val, count}};
}

}  // namespace nfbeam
