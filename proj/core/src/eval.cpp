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

#include "nfbeam/eval.hpp"

#include "nfbeam/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace nfbeam {

Predictor model_predictor(nn::CnnGpt<float>& model, int batch_size) {
  return [&model, batch_size](std::span<const Sample> samples) {
    const auto& d = model.dims();
    const int P = d.context_frames;
    std::vector<Prediction> out;
    out.reserve(samples.size());
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < end; ++i) idx.push_back(i);
      const Mat<float> logits = model.forward(make_batch(samples, idx, P, d.num_subcarriers, d.widebeam_count), {});
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto [t1, t2] = predict_top2(logits, static_cast<int>(b), P);
        out.push_back({t1, t2});
      }
    }
    return out;
  };
}

Predictor uniform_random_predictor(int codebook_size, std::uint64_t seed) {
  if (codebook_size < 2) throw std::invalid_argument("random predictor needs at least two codewords");
  return [codebook_size, seed](std::span<const Sample> samples) {
    Rng rng(seed);
    std::vector<Prediction> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      Prediction p;
      p.top1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(codebook_size)));
      p.top2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(codebook_size - 1)));
      if (p.top2 >= p.top1) ++p.top2;
      out.push_back(p);
    }
    return out;
  };
}

Predictor oracle_predictor(int context_frames) {
  return [context_frames](std::span<const Sample> samples) {
    std::vector<Prediction> out;
    for (const auto& s : samples) {
      const int y = s.labels.at(static_cast<std::size_t>(context_frames));
      out.push_back({y, y == 0 ? 1 : 0});
    }
    return out;
  };
}

std::pair<double, double> binomial_ci(double successes, double trials, double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double p = successes / trials;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / trials;
  const double centre = (p + z2 / (2 * trials)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

bool near_chance(double accuracy, int codebook_size) { return accuracy <= 2.0 / codebook_size; }

MetricsRecord evaluate(const Predictor& predict, std::span<const Sample> samples, const SampleFactory& factory,
                       const EvalOptions& opt) {
  const SystemConfig& sys = factory.spec().system;
  const int P = sys.context_frames;
  const std::vector<Prediction> pred = predict(samples);
  if (pred.size() != samples.size()) throw std::logic_error("predictor returned the wrong number of predictions");

  std::vector<double> nbgs(samples.size(), 0.0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        const Sample& s = samples[i];
        if (s.labels.size() != static_cast<std::size_t>(P) + 1)
          throw FormatError("sample " + std::to_string(s.meta.index) + " has no frame-(P+1) label");
        const std::vector<ChannelFrame> ch = factory.channels(s.meta.seed);
        const BeamLabel truth = label_frame(ch[static_cast<std::size_t>(P)], factory.near_field());
        if (truth.index != s.labels[static_cast<std::size_t>(P)])
          throw FormatError("sample " + std::to_string(s.meta.index) +
                            ": stored seed does not regenerate its channel (system configuration mismatch)");
        nbgs[i] = nbg(ch[static_cast<std::size_t>(P)], pred[i].top1, factory.near_field());
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = samples.size();
      }
    }
  };
  const int workers = std::max(1, std::min<int>(opt.jobs, static_cast<int>(std::max<std::size_t>(samples.size(), 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  MetricsRecord r;
  r.variant = std::string(to_string(factory.spec().pilot_variant));
  r.sample_count = samples.size();
  std::size_t hit1 = 0, hit2 = 0;
  double nbg_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int y = samples[i].labels[static_cast<std::size_t>(P)];
    if (pred[i].top1 == y) ++hit1;
    if (pred[i].top1 == y || pred[i].top2 == y) ++hit2;
    nbg_sum += nbgs[i];
  }
  if (!samples.empty()) {
    const double n = static_cast<double>(samples.size());
    r.accuracy = static_cast<double>(hit1) / n;
    r.top2_accuracy = static_cast<double>(hit2) / n;
    r.mean_nbg = nbg_sum / n;
  }
  if (opt.warn_chance && !samples.empty() && near_chance(r.accuracy, sys.codebook_size()))
    std::cerr << "warning: accuracy " << r.accuracy << " is within twice the chance level 1/"
              << sys.codebook_size() << "\n";
  return r;
}

std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNoiseDbm: return "noise_dbm";
    case SweepAxis::kSpeedKmh: return "speed_kmh";
    case SweepAxis::kRicianKDb: return "rician_k_db";
    case SweepAxis::kMaskAlpha: return "mask_alpha";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view s) {
  if (s == "noise_dbm" || s == "noise") return SweepAxis::kNoiseDbm;
  if (s == "speed_kmh" || s == "speed") return SweepAxis::kSpeedKmh;
  if (s == "rician_k_db" || s == "rician") return SweepAxis::kRicianKDb;
  if (s == "mask_alpha" || s == "alpha") return SweepAxis::kMaskAlpha;
  throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "'");
}

std::vector<double> default_sweep_values(SweepAxis a) {
  std::vector<double> v;
  switch (a) {
    case SweepAxis::kNoiseDbm:
      for (int x = -120; x <= -95; x += 3) v.push_back(x);
      break;
    case SweepAxis::kSpeedKmh:
      for (int x = 30; x <= 110; x += 10) v.push_back(x);
      break;
    case SweepAxis::kRicianKDb:
      v = {0.0, 5.0, 10.0, 15.0};
      break;
    case SweepAxis::kMaskAlpha:
      v = {0.2, 0.3, 0.4, 0.6};
      break;
  }
  return v;
}

PipelineConfig with_coordinate(PipelineConfig cfg, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::kNoiseDbm: cfg.run.system.noise_power_dbm = value; break;
    case SweepAxis::kSpeedKmh: cfg.run.system.speed_range_kmh = {value, value}; break;
    case SweepAxis::kRicianKDb: cfg.run.system.rician_k_db = value; break;
    case SweepAxis::kMaskAlpha: cfg.run.train.mask_alpha = value; break;
  }
  cfg.run.validate();
  return cfg;
}

PipelineConfig ablation_simplified_pilots(PipelineConfig cfg) {
  cfg.pilot_variant = PilotVariant::kSimplified;
  return cfg;
}

namespace {

DatasetSpec dataset_spec(const PipelineConfig& cfg, std::uint64_t first_index) {
  DatasetSpec spec;
  spec.system = cfg.run.system;
  spec.pilot_variant = cfg.pilot_variant;
  spec.master_seed = cfg.master_seed;
  spec.first_index = first_index;
  return spec;
}

}  // namespace

std::vector<Sample> test_samples(const PipelineConfig& cfg) {
  const SampleFactory f(dataset_spec(cfg, cfg.test_first_index));
  return generate_samples(f, cfg.test_count, cfg.jobs);
}

TrainedPipeline train_pipeline(const PipelineConfig& cfg, bool direct) {
  const auto& tc = cfg.run.train;
  const std::uint64_t npre = static_cast<std::uint64_t>(tc.pretrain_samples);
  const std::uint64_t nft = static_cast<std::uint64_t>(tc.finetune_samples);
  const std::uint64_t nval = std::max<std::uint64_t>(nft / 10, 1);
  if (npre + nft + nval > cfg.test_first_index)
    throw std::invalid_argument("training indices overlap the test range");

  const SampleFactory fpre(dataset_spec(cfg, 0));
  const SampleFactory fft(dataset_spec(cfg, npre));
  const SampleFactory fval(dataset_spec(cfg, npre + nft));
  std::vector<Sample> pre = generate_samples(fpre, npre, cfg.jobs);
  std::vector<Sample> ft = generate_samples(fft, nft, cfg.jobs);
  const std::vector<Sample> val = generate_samples(fval, nval, cfg.jobs);

  TrainedPipeline out{nn::CnnGpt<float>(cfg.run.model, nn::ModelDims::from(cfg.run.system)), {}, {}};
  TrainOptions opt;
  opt.train = tc;
  if (direct) {
    // Budget and validation cadence in fine-tune-equivalent epochs so both
    // variants are compared on the same axis.
    pre.insert(pre.end(), ft.begin(), ft.end());
    opt.direct = true;
    opt.eval_every_samples = nft;
    opt.max_samples = static_cast<std::uint64_t>(tc.finetune_epochs) * nft;
    out.finetune_result = finetune(out.model, pre, val, opt);
  } else {
    out.pretrain_result = pretrain(out.model, pre, val, opt);
    out.finetune_result = finetune(out.model, ft, val, opt);
  }
  return out;
}

std::vector<MetricsRecord> sweep(SweepAxis axis, const std::vector<double>& values, const PipelineConfig& cfg,
                                 nn::CnnGpt<float>* model) {
  if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
  if (axis != SweepAxis::kMaskAlpha && !model) throw std::invalid_argument("sweep needs a trained model");
  std::vector<MetricsRecord> out;
  for (double v : values) {
    const PipelineConfig c = with_coordinate(cfg, axis, v);
    const std::vector<Sample> test = test_samples(c);
    const SampleFactory f(dataset_spec(c, c.test_first_index));
    MetricsRecord r;
    EvalOptions eo;
    eo.jobs = c.jobs;
    if (axis == SweepAxis::kMaskAlpha) {
      TrainedPipeline tp = train_pipeline(c);
      r = evaluate(model_predictor(tp.model), test, f, eo);
    } else {
      r = evaluate(model_predictor(*model), test, f, eo);
    }
    r.axis = std::string(to_string(axis));
    r.coordinate = v;
    out.push_back(r);
  }
  return out;
}

namespace {

const char* kCsvHeader = "axis,coordinate,variant,accuracy,top2_accuracy,mean_nbg,sample_count";

std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

void write_chart(const std::string& path, const std::string& axis, const std::vector<MetricsRecord>& recs) {
  const double W = 640, H = 400, L = 70, R = 170, T = 30, B = 60;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& r : recs) {
    xmin = std::min(xmin, r.coordinate);
    xmax = std::max(xmax, r.coordinate);
  }
  if (!(xmax > xmin)) {
    xmin -= 1;
    xmax += 1;
  }
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - y * (H - T - B); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    o << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << fmt(y)
      << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& r : recs) xs.push_back(r.coordinate);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    o << "<text x=\"" << px(x) << "\" y=\"" << H - B + 16 << "\" font-size=\"11\" text-anchor=\"middle\">" << fmt(x, 4)
      << "</text>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" font-size=\"13\" text-anchor=\"middle\">"
    << svg_escape(axis) << "</text>\n"
    << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << (T + H - B) / 2 << ")\">metric value</text>\n";

  std::map<std::string, std::vector<const MetricsRecord*>> by_variant;
  for (const auto& r : recs) by_variant[r.variant].push_back(&r);
  const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  int series = 0;
  for (auto& [variant, rs] : by_variant) {
    std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->coordinate < b->coordinate; });
    const std::pair<const char*, double MetricsRecord::*> metrics[] = {
        {"accuracy", &MetricsRecord::accuracy},
        {"top2_accuracy", &MetricsRecord::top2_accuracy},
        {"mean_nbg", &MetricsRecord::mean_nbg}};
    for (const auto& [mname, field] : metrics) {
      const char* color = colors[series % 6];
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (const auto* r : rs) o << px(r->coordinate) << ',' << py(r->*field) << ' ';
      o << "\"/>\n";
      const double ly = T + 16 * series;
      o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << svg_escape(mname) << " ("
        << svg_escape(variant) << ")</text>\n";
      ++series;
    }
  }
  o << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write chart '" + path + "'");
  out << o.str();
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<MetricsRecord>& records, const std::string& csv_path) {
  const std::string tmp = csv_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out << kCsvHeader << '\n';
    for (const auto& r : records)
      out << r.axis << ',' << format_double(r.coordinate) << ',' << r.variant << ',' << format_double(r.accuracy)
          << ',' << format_double(r.top2_accuracy) << ',' << format_double(r.mean_nbg) << ',' << r.sample_count
          << '\n';
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, csv_path);

  std::map<std::string, std::vector<MetricsRecord>> by_axis;
  for (const auto& r : records)
    if (r.axis != "none") by_axis[r.axis].push_back(r);
  std::vector<std::string> charts;
  const std::filesystem::path base(csv_path);
  for (const auto& [axis, recs] : by_axis) {
    std::string stem = base.stem().string();
    if (!stem.ends_with("_" + axis)) stem += "_" + axis;
    const auto path = (base.parent_path() / (stem + ".svg")).string();
    write_chart(path, axis, recs);
    charts.push_back(path);
  }
  return charts;
}

std::vector<MetricsRecord> parse_report(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("cannot open report '" + csv_path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("report '" + csv_path + "' has an unexpected header");
  std::vector<MetricsRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw FormatError("report row has " + std::to_string(f.size()) + " fields: " + line);
    MetricsRecord r;
    r.axis = f[0];
    r.coordinate = parse_double(f[1]);
    r.variant = f[2];
    r.accuracy = parse_double(f[3]);
    r.top2_accuracy = parse_double(f[4]);
    r.mean_nbg = parse_double(f[5]);
    r.sample_count = std::stoull(f[6]);
    out.push_back(r);
  }
  return out;
}

}  // namespace nfbeam
