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

#include "nfbeam/nn/model.hpp"

#include "nfbeam/types.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace nfbeam::nn {

namespace {

constexpr char kCheckpointMagic[8] = {'N', 'F', 'B', 'E', 'A', 'M', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

}  // namespace

template <typename T>
CnnGpt<T>::CnnGpt(const ModelConfig& cfg, const ModelDims& dims) : cfg_(cfg), dims_(dims) {
  cfg_.validate();
  if (dims.num_subcarriers < 1 || dims.widebeam_count < 1 || dims.context_frames < 1 || dims.codebook_size < 1)
    throw std::invalid_argument("model dimensions must be positive");
  const int hp = conv_out(dims.num_subcarriers, 3, 2, 1);
  const int wp = conv_out(dims.widebeam_count, 3, 2, 1);
  if (hp < cfg.pool_h || wp < cfg.pool_w)
    throw std::invalid_argument("input " + std::to_string(dims.num_subcarriers) + "x" +
                                std::to_string(dims.widebeam_count) + " is too small for the pooling grid");
  const int c0 = cfg.conv_channels, cp = cfg.feature_channels, D = cfg.d_emb;
  conv0 = Conv2d<T>("cnn.conv0", 2, c0, 3, 1, 1, false);
  bn0 = BatchNorm<T>("cnn.bn0", c0);
  rb[0] = ResBlock<T>("cnn.rb1", c0, cp, 2, cfg.dropout);
  rb[1] = ResBlock<T>("cnn.rb2", cp, cp, 1, cfg.dropout);
  rb[2] = ResBlock<T>("cnn.rb3", cp, cp, 1, cfg.dropout);
  proj = Linear<T>("cnn.proj", cp * cfg.pool_h * cfg.pool_w, D);
  pos.name = "pos_emb";
  pos.resize(dims.context_frames, D);
  blocks.clear();
  for (int l = 0; l < cfg.num_layers; ++l)
    blocks.emplace_back("blocks." + std::to_string(l), D, cfg.num_heads, cfg.ffn_dim, cfg.dropout, cfg.causal);
  ln_f = LayerNorm<T>("ln_f", D);
  head = Linear<T>("head", D, dims.codebook_size);
  initialize();
}

template <typename T>
void CnnGpt<T>::initialize() {
  Rng rng(cfg_.init_seed);
  conv0.init(std::sqrt(2.0 / (2 * 9)), rng);
  for (auto& r : rb) r.init(rng);
  proj.init(cfg_.init_std, rng);
  init_normal(pos.value, cfg_.init_std, rng);
  for (auto& b : blocks) b.init(cfg_.init_std, rng);
  head.init(cfg_.init_std, rng);
  // Normalisation layers start at identity.
  for (Param<T>* p : parameters()) {
    const auto& n = p->name;
    if (n.ends_with(".gamma")) p->value.setOnes();
    if (n.ends_with(".beta")) p->value.setZero();
  }
  for (auto& [name, m] : buffers()) {
    if (name.ends_with("running_mean"))
      m->setZero();
    else
      m->setOnes();
  }
  zero_grad();
}

template <typename T>
Mat<T> CnnGpt<T>::cnn_forward(const Tensor<T>& x, const Context& ctx, ForwardTrace<T>* tr) {
  if (x.shape.size() != 5 || x.shape[2] != 2 || x.shape[3] != dims_.num_subcarriers ||
      x.shape[4] != dims_.widebeam_count)
    throw std::invalid_argument("model input must be B x P x 2 x K x G with K=" +
                                std::to_string(dims_.num_subcarriers) + ", G=" + std::to_string(dims_.widebeam_count));
  const int B = x.shape[0], P = x.shape[1];
  const int K = dims_.num_subcarriers, G = dims_.widebeam_count;
  const int N = B * P;
  const Eigen::Index img = static_cast<Eigen::Index>(K) * G;

  FeatureMap<T> in;
  in.n = N;
  in.h = K;
  in.w = G;
  in.x.resize(2, N * img);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < 2; ++c)
      std::memcpy(in.x.row(c).data() + n * img, x.data.data() + (static_cast<Eigen::Index>(n) * 2 + c) * img,
                  sizeof(T) * static_cast<std::size_t>(img));

  FeatureMap<T> f = conv0.forward(in, tr ? &tr->conv0 : nullptr);
  f.x = bn0.forward(f.x, ctx, tr ? &tr->bn0 : nullptr).cwiseMax(T(0));
  if (tr) tr->a0 = f.x;
  for (int i = 0; i < 3; ++i) f = rb[i].forward(f, ctx, tr ? &tr->rb[i] : nullptr);

  const Mat<T> pooled = adaptive_avg_pool_flatten(f, cfg_.pool_h, cfg_.pool_w);
  if (tr) {
    tr->pool_c = f.channels();
    tr->pool_n = f.n;
    tr->pool_h = f.h;
    tr->pool_w = f.w;
  }
  Mat<T> e = proj.forward(pooled, tr ? &tr->proj : nullptr).cwiseMax(T(0));
  if (tr) tr->proj_out = e;
  return dropout_forward<T>(e, cfg_.dropout, ctx, tr ? &tr->proj_mask : nullptr);
}

template <typename T>
Mat<T> CnnGpt<T>::forward(const Tensor<T>& x, const ForwardOptions& opt, ForwardTrace<T>* tr) {
  if (x.shape.size() != 5) throw std::invalid_argument("model input must have rank 5");
  const int B = x.shape[0], P = x.shape[1];
  if (P < 1 || P > dims_.context_frames)
    throw std::invalid_argument("sequence length " + std::to_string(P) + " exceeds positional table " +
                                std::to_string(dims_.context_frames));
  if (opt.train && !opt.rng && cfg_.dropout > 0) throw std::logic_error("training forward needs an RNG");

  const Context ctx{opt.train, opt.rng};
  const Context cnn_ctx{opt.train && !opt.cnn_frozen, opt.rng};
  if (tr) {
    *tr = ForwardTrace<T>{};
    tr->B = B;
    tr->P = P;
    tr->cnn_frozen = opt.cnn_frozen;
  }
  Mat<T> z = cnn_forward(x, cnn_ctx, opt.cnn_frozen ? nullptr : tr);
  for (int b = 0; b < B; ++b) z.middleRows(static_cast<Eigen::Index>(b) * P, P) += pos.value.topRows(P);
  z = dropout_forward<T>(z, cfg_.dropout, ctx, tr ? &tr->emb_mask : nullptr);
  if (tr) tr->blocks.resize(blocks.size());
  for (std::size_t l = 0; l < blocks.size(); ++l) z = blocks[l].forward(z, B, P, ctx, tr ? &tr->blocks[l] : nullptr);
  z = ln_f.forward(z, tr ? &tr->ln_f : nullptr);
  return head.forward(z, tr ? &tr->head : nullptr);
}

template <typename T>
Tensor<T> CnnGpt<T>::backward(const ForwardTrace<T>& tr, const Mat<T>& dlogits) {
  if (tr.B == 0) throw std::logic_error("backward called without a training trace");
  const int B = tr.B, P = tr.P;
  Mat<T> dz = ln_f.backward(head.backward(dlogits, tr.head), tr.ln_f);
  for (std::size_t l = blocks.size(); l-- > 0;) dz = blocks[l].backward(dz, tr.blocks[l]);
  dz = dropout_backward<T>(dz, tr.emb_mask);
  for (int b = 0; b < B; ++b) pos.grad.topRows(P) += dz.middleRows(static_cast<Eigen::Index>(b) * P, P);
  if (tr.cnn_frozen) return {};

  Mat<T> de = relu_backward<T>(dropout_backward<T>(dz, tr.proj_mask), tr.proj_out);
  const Mat<T> dpool = proj.backward(de, tr.proj);
  FeatureMap<T> df = adaptive_avg_pool_flatten_backward<T>(dpool, tr.pool_c, tr.pool_n, tr.pool_h, tr.pool_w,
                                                           cfg_.pool_h, cfg_.pool_w);
  for (int i = 3; i-- > 0;) df = rb[i].backward(df.x, tr.rb[i]);
  const Mat<T> da0 = bn0.backward(relu_backward<T>(df.x, tr.a0), tr.bn0);
  const FeatureMap<T> dx = conv0.backward(da0, tr.conv0);

  const int K = dims_.num_subcarriers, G = dims_.widebeam_count;
  const Eigen::Index img = static_cast<Eigen::Index>(K) * G;
  Tensor<T> out({B, P, 2, K, G});
  for (int n = 0; n < B * P; ++n)
    for (int c = 0; c < 2; ++c)
      std::memcpy(out.data.data() + (static_cast<Eigen::Index>(n) * 2 + c) * img, dx.x.row(c).data() + n * img,
                  sizeof(T) * static_cast<std::size_t>(img));
  return out;
}

template <typename T>
std::vector<Param<T>*> CnnGpt<T>::parameters() {
  std::vector<Param<T>*> out;
  auto add = [&](Param<T>& p) { out.push_back(&p); };
  conv0.for_each_param(add);
  bn0.for_each_param(add);
  for (auto& r : rb) r.for_each_param(add);
  proj.for_each_param(add);
  out.push_back(&pos);
  for (auto& b : blocks) b.for_each_param(add);
  ln_f.for_each_param(add);
  head.for_each_param(add);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Mat<T>*>> CnnGpt<T>::buffers() {
  std::vector<std::pair<std::string, Mat<T>*>> out;
  out.emplace_back(bn0.name + ".running_mean", &bn0.running_mean);
  out.emplace_back(bn0.name + ".running_var", &bn0.running_var);
  for (auto& r : rb) r.for_each_buffer([&](const std::string& n, Mat<T>& m) { out.emplace_back(n, &m); });
  return out;
}

template <typename T>
bool CnnGpt<T>::is_frozen_in_finetune(const Param<T>& p) const {
  return p.name.starts_with("cnn.") || p.name.starts_with("blocks.0.");
}

template <typename T>
void CnnGpt<T>::zero_grad() {
  for (Param<T>* p : parameters()) p->zero_grad();
}

template <typename T>
std::vector<ParamGroup> CnnGpt<T>::param_count() const {
  std::vector<ParamGroup> groups = {{"initial_conv", 0}, {"resblock1", 0},  {"resblock2", 0},
                                    {"resblock3", 0},    {"projection", 0}, {"positional_embedding", 0},
                                    {"transformer_blocks", 0}, {"final_norm", 0}, {"head", 0}};
  auto bump = [&](const std::string& n, std::size_t c) {
    for (auto& g : groups)
      if (g.name == n) g.count += c;
  };
  for (Param<T>* p : const_cast<CnnGpt<T>*>(this)->parameters()) {
    const auto& n = p->name;
    std::string g;
    if (n.starts_with("cnn.conv0") || n.starts_with("cnn.bn0"))
      g = "initial_conv";
    else if (n.starts_with("cnn.rb1"))
      g = "resblock1";
    else if (n.starts_with("cnn.rb2"))
      g = "resblock2";
    else if (n.starts_with("cnn.rb3"))
      g = "resblock3";
    else if (n.starts_with("cnn.proj"))
      g = "projection";
    else if (n == "pos_emb")
      g = "positional_embedding";
    else if (n.starts_with("blocks."))
      g = "transformer_blocks";
    else if (n.starts_with("ln_f"))
      g = "final_norm";
    else
      g = "head";
    bump(g, p->size());
  }
  return groups;
}

template <typename T>
std::size_t CnnGpt<T>::total_params() const {
  std::size_t n = 0;
  for (const auto& g : param_count()) n += g.count;
  return n;
}

std::vector<ParamGroup> param_count(const ModelConfig& cfg, const ModelDims& dims) {
  const std::size_t c0 = cfg.conv_channels, cp = cfg.feature_channels, D = cfg.d_emb, F = cfg.ffn_dim;
  auto resblock = [](std::size_t in, std::size_t out, bool projected) {
    std::size_t n = out * in * 9 + 2 * out + out * out * 9 + 2 * out;
    if (projected) n += out * in + out;
    return n;
  };
  const std::size_t block = 3 * D * D + (D * D + D) + (D * F + F) + (F * D + D) + 4 * D;
  return {{"initial_conv", c0 * 2 * 9 + 2 * c0},
          {"resblock1", resblock(c0, cp, true)},
          {"resblock2", resblock(cp, cp, false)},
          {"resblock3", resblock(cp, cp, false)},
          {"projection", cp * cfg.pool_h * cfg.pool_w * D + D},
          {"positional_embedding", static_cast<std::size_t>(dims.context_frames) * D},
          {"transformer_blocks", static_cast<std::size_t>(cfg.num_layers) * block},
          {"final_norm", 2 * D},
          {"head", D * dims.codebook_size + dims.codebook_size}};
}

std::uint64_t conv_flops(int cin, int cout, int k, int h, int w) {
  return static_cast<std::uint64_t>(cin) * cout * k * k * h * w;
}

std::uint64_t flops_estimate(const ModelConfig& cfg, const ModelDims& dims) {
  const int H = dims.num_subcarriers, W = dims.widebeam_count;
  const int h2 = conv_out(H, 3, 2, 1), w2 = conv_out(W, 3, 2, 1);
  const int c0 = cfg.conv_channels, cp = cfg.feature_channels;
  std::uint64_t cnn = conv_flops(2, c0, 3, H, W);
  cnn += conv_flops(c0, cp, 3, h2, w2) + conv_flops(cp, cp, 3, h2, w2) + conv_flops(c0, cp, 1, h2, w2);
  cnn += 4 * conv_flops(cp, cp, 3, h2, w2);
  const std::uint64_t P = dims.context_frames, D = cfg.d_emb;
  return cnn + static_cast<std::uint64_t>(cfg.num_layers) * (P * P * D + P * D * D);
}

namespace {

std::string checkpoint_text(const CheckpointInfo& info, const char* scalar, std::size_t values) {
  RunConfig rc;
  rc.model = info.model;
  const std::string all = to_text(rc);
  const auto m0 = all.find("[model]");
  const auto m1 = all.find("\n[", m0 + 1);
  std::ostringstream o;
  o << "[checkpoint]\n"
    << "format_version = " << kCheckpointVersion << '\n'
    << "scalar = " << scalar << '\n'
    << "values = " << values << '\n'
    << "step = " << info.step << '\n'
    << "stage = " << (info.stage.empty() ? "none" : info.stage) << '\n'
    << "num_subcarriers = " << info.dims.num_subcarriers << '\n'
    << "widebeam_count = " << info.dims.widebeam_count << '\n'
    << "context_frames = " << info.dims.context_frames << '\n'
    << "codebook_size = " << info.dims.codebook_size << "\n\n"
    << all.substr(m0, m1 == std::string::npos ? std::string::npos : m1 - m0 + 1);
  return o.str();
}

struct ParsedHeader {
  CheckpointInfo info;
  std::string scalar;
  std::uint64_t values = 0;
  std::uint64_t payload_offset = 0;
};

ParsedHeader read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw FormatError("'" + path + "' is not a checkpoint (bad magic)");
  std::uint32_t version = 0, len = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || len > (1u << 20)) throw FormatError("checkpoint truncated in header");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("checkpoint truncated in header");

  ParsedHeader h;
  try {
    boost::property_tree::ptree tree;
    std::istringstream ts(text);
    boost::property_tree::read_ini(ts, tree);
    const auto& c = tree.get_child("checkpoint");
    h.scalar = c.get<std::string>("scalar");
    h.values = c.get<std::uint64_t>("values");
    h.info.step = c.get<std::uint64_t>("step");
    h.info.stage = c.get<std::string>("stage");
    h.info.dims.num_subcarriers = c.get<int>("num_subcarriers");
    h.info.dims.widebeam_count = c.get<int>("widebeam_count");
    h.info.dims.context_frames = c.get<int>("context_frames");
    h.info.dims.codebook_size = c.get<int>("codebook_size");
    RunConfig rc;
    for (const auto& [key, val] : tree.get_child("model"))
      set_config_value(rc, "model." + key, val.get_value<std::string>());
    rc.model.validate();
    h.info.model = rc.model;
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  h.payload_offset = static_cast<std::uint64_t>(in.tellg());
  return h;
}

template <typename T>
constexpr const char* scalar_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, CnnGpt<T>& model, const CheckpointInfo& info_in) {
  CheckpointInfo info = info_in;
  info.model = model.config();
  info.dims = model.dims();
  std::size_t values = 0;
  for (auto* p : model.parameters()) values += p->size();
  for (auto& [n, m] : model.buffers()) values += static_cast<std::size_t>(m->size());
  const std::string text = checkpoint_text(info, scalar_name<T>(), values);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out.write(kCheckpointMagic, 8);
    const std::uint32_t version = kCheckpointVersion, len = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(text.data(), len);
    for (auto* p : model.parameters())
      out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(T)));
    for (auto& [n, m] : model.buffers())
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(T)));
    out.flush();
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return read_header(in, path).info;
}

template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, CnnGpt<T>& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  const ParsedHeader h = read_header(in, path);
  if (h.scalar != scalar_name<T>())
    throw FormatError("checkpoint stores " + h.scalar + " values, model uses " + scalar_name<T>());
  if (!(h.info.dims == model.dims())) throw FormatError("checkpoint dimensions do not match the model");
  CnnGpt<T> loaded(h.info.model, h.info.dims);
  std::size_t values = 0;
  for (auto* p : loaded.parameters()) values += p->size();
  for (auto& [n, m] : loaded.buffers()) values += static_cast<std::size_t>(m->size());
  if (values != h.values) throw FormatError("checkpoint payload size disagrees with its model section");

  const auto expected = h.payload_offset + h.values * sizeof(T);
  if (std::filesystem::file_size(path) != expected) throw FormatError("checkpoint payload truncated or oversized");
  for (auto* p : loaded.parameters()) {
    in.read(reinterpret_cast<char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(T)));
  }
  for (auto& [n, m] : loaded.buffers())
    in.read(reinterpret_cast<char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(T)));
  if (!in) throw FormatError("checkpoint truncated in payload");
  loaded.zero_grad();
  model = std::move(loaded);
  return h.info;
}

template class CnnGpt<float>;
template class CnnGpt<double>;
template void save_checkpoint<float>(const std::string&, CnnGpt<float>&, const CheckpointInfo&);
template void save_checkpoint<double>(const std::string&, CnnGpt<double>&, const CheckpointInfo&);
template CheckpointInfo load_checkpoint<float>(const std::string&, CnnGpt<float>&);
template CheckpointInfo load_checkpoint<double>(const std::string&, CnnGpt<double>&);

}  // namespace nfbeam::nn
