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

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfbeam::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Trainable tensor stored as a matrix plus its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  void resize(Eigen::Index r, Eigen::Index c) {
    value = Mat<T>::Zero(r, c);
    grad = Mat<T>::Zero(r, c);
  }
  void zero_grad() { grad.setZero(); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

template <typename T>
void init_normal(Mat<T>& m, double std, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(std * rng.normal());
}

/// Forward-pass switches. With train = false dropout is off and batch norm
/// uses its running statistics.
struct Context {
  bool train = false;
  Rng* rng = nullptr;
};

/// Inverted dropout. `mask` receives the per-element scale (empty when the
/// layer is inactive).
template <typename T>
Mat<T> dropout_forward(const Mat<T>& x, double p, const Context& ctx, Mat<T>* mask) {
  if (!ctx.train || p <= 0.0) {
    if (mask) mask->resize(0, 0);
    return x;
  }
  if (!ctx.rng) throw std::logic_error("dropout in train mode needs an RNG");
  Mat<T> m(x.rows(), x.cols());
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = ctx.rng->uniform() < p ? T(0) : keep;
  Mat<T> y = x.cwiseProduct(m);
  if (mask) *mask = std::move(m);
  return y;
}

template <typename T>
Mat<T> dropout_backward(const Mat<T>& dy, const Mat<T>& mask) {
  return mask.size() == 0 ? dy : Mat<T>(dy.cwiseProduct(mask));
}

template <typename T>
Mat<T> relu_backward(const Mat<T>& dy, const Mat<T>& y) {
  return (y.array() > T(0)).select(dy, T(0));
}

/// y = x W + b with W stored in x out.
template <typename T>
struct Linear {
  Param<T> W, b;
  bool has_bias = true;

  struct Cache {
    Mat<T> x;
  };

  Linear() = default;
  Linear(const std::string& name, int in, int out, bool bias = true) : has_bias(bias) {
    W.name = name + ".weight";
    W.resize(in, out);
    if (bias) {
      b.name = name + ".bias";
      b.resize(1, out);
    }
  }

  int in_features() const { return static_cast<int>(W.value.rows()); }
  int out_features() const { return static_cast<int>(W.value.cols()); }

  void init(double std, Rng& rng) {
    init_normal(W.value, std, rng);
    if (has_bias) b.value.setZero();
  }

  Mat<T> forward(const Mat<T>& x, Cache* c) const {
    if (x.cols() != W.value.rows()) throw std::invalid_argument(W.name + ": input width mismatch");
    Mat<T> y = x * W.value;
    if (has_bias) y.rowwise() += b.value.row(0);
    if (c) c->x = x;
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    W.grad.noalias() += c.x.transpose() * dy;
    if (has_bias) b.grad.row(0) += dy.colwise().sum();
    return dy * W.value.transpose();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(W);
    if (has_bias) f(b);
  }
};

/// Row-wise normalisation over the feature dimension.
template <typename T>
struct LayerNorm {
  Param<T> gamma, beta;
  double eps = 1e-5;

  struct Cache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
  };

  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim) {
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.resize(1, dim);
    beta.resize(1, dim);
    gamma.value.setOnes();
  }

  Mat<T> forward(const Mat<T>& x, Cache* c) const {
    const Eigen::Index D = x.cols();
    Mat<T> xhat(x.rows(), D);
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T mu = x.row(r).mean();
      const T var = (x.row(r).array() - mu).square().mean();
      rstd[r] = T(1) / std::sqrt(var + static_cast<T>(eps));
      xhat.row(r) = (x.row(r).array() - mu) * rstd[r];
    }
    Mat<T> y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
    if (c) {
      c->xhat = std::move(xhat);
      c->rstd = std::move(rstd);
    }
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    gamma.grad.row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
    beta.grad.row(0) += dy.colwise().sum();
    const Mat<T> dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
      const T m1 = dxhat.row(r).mean();
      const T m2 = dxhat.row(r).cwiseProduct(c.xhat.row(r)).mean();
      dx.row(r) = c.rstd[r] * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
    }
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(gamma);
    f(beta);
  }
};

/// Feature maps stored channel-major: row c, column (n H + y) W + x.
template <typename T>
struct FeatureMap {
  Mat<T> x;
  int n = 0, h = 0, w = 0;
  int channels() const { return static_cast<int>(x.rows()); }
};

/// Per-channel batch normalisation over the batch and spatial axes.
template <typename T>
struct BatchNorm {
  Param<T> gamma, beta;
  Mat<T> running_mean, running_var;  // 1 x C
  double eps = 1e-5;
  double momentum = 0.1;
  std::string name;

  struct Cache {
    Mat<T> xhat;
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd;
    bool batch_stats = false;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& n, int channels) : name(n) {
    gamma.name = n + ".gamma";
    beta.name = n + ".beta";
    gamma.resize(1, channels);
    beta.resize(1, channels);
    gamma.value.setOnes();
    running_mean = Mat<T>::Zero(1, channels);
    running_var = Mat<T>::Ones(1, channels);
  }

  /// Normalises each row of the C x M matrix. Running statistics are updated
  /// in train mode only.
  Mat<T> forward(const Mat<T>& x, const Context& ctx, Cache* c) {
    const Eigen::Index C = x.rows(), M = x.cols();
    if (C != gamma.value.cols()) throw std::invalid_argument(name + ": channel mismatch");
    Mat<T> xhat(C, M);
    Eigen::Matrix<T, Eigen::Dynamic, 1> rstd(C);
    for (Eigen::Index ch = 0; ch < C; ++ch) {
      T mu, var;
      if (ctx.train) {
        if (M < 2) throw std::invalid_argument(name + ": batch statistics need at least two values per channel");
        mu = x.row(ch).mean();
        var = (x.row(ch).array() - mu).square().mean();
        const T m = static_cast<T>(momentum);
        running_mean(0, ch) = (T(1) - m) * running_mean(0, ch) + m * mu;
        running_var(0, ch) = (T(1) - m) * running_var(0, ch) + m * var * static_cast<T>(M) / static_cast<T>(M - 1);
      } else {
        mu = running_mean(0, ch);
        var = running_var(0, ch);
      }
      rstd[ch] = T(1) / std::sqrt(var + static_cast<T>(eps));
      xhat.row(ch) = (x.row(ch).array() - mu) * rstd[ch];
    }
    Mat<T> y(C, M);
    for (Eigen::Index ch = 0; ch < C; ++ch)
      y.row(ch) = xhat.row(ch).array() * gamma.value(0, ch) + beta.value(0, ch);
    if (c) {
      c->xhat = std::move(xhat);
      c->rstd = std::move(rstd);
      c->batch_stats = ctx.train;
    }
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    const Eigen::Index C = dy.rows();
    Mat<T> dx(C, dy.cols());
    for (Eigen::Index ch = 0; ch < C; ++ch) {
      gamma.grad(0, ch) += dy.row(ch).dot(c.xhat.row(ch));
      beta.grad(0, ch) += dy.row(ch).sum();
      const T g = gamma.value(0, ch);
      if (c.batch_stats) {
        const T m1 = g * dy.row(ch).mean();
        const T m2 = g * dy.row(ch).dot(c.xhat.row(ch)) / static_cast<T>(dy.cols());
        dx.row(ch) = c.rstd[ch] * (g * dy.row(ch).array() - m1 - c.xhat.row(ch).array() * m2);
      } else {
        dx.row(ch) = dy.row(ch) * (g * c.rstd[ch]);
      }
    }
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(gamma);
    f(beta);
  }
};

/// 2-D convolution via im2col; weight is C_out x (C_in k k).
template <typename T>
struct Conv2d {
  Param<T> W, b;
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
  bool has_bias = false;

  struct Cache {
    Mat<T> cols;
    int n = 0, h = 0, w = 0;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int kernel, int s, int p, bool bias)
      : cin(in), cout(out), k(kernel), stride(s), pad(p), has_bias(bias) {
    W.name = name + ".weight";
    W.resize(out, static_cast<Eigen::Index>(in) * k * k);
    if (bias) {
      b.name = name + ".bias";
      b.resize(1, out);
    }
  }

  int out_size(int in) const { return (in + 2 * pad - k) / stride + 1; }

  void init(double std, Rng& rng) {
    init_normal(W.value, std, rng);
    if (has_bias) b.value.setZero();
  }

  FeatureMap<T> forward(const FeatureMap<T>& in, Cache* c) const {
    if (in.channels() != cin) throw std::invalid_argument(W.name + ": input channel mismatch");
    const int ho = out_size(in.h), wo = out_size(in.w);
    if (ho < 1 || wo < 1) throw std::invalid_argument(W.name + ": input smaller than kernel");
    Mat<T> cols = Mat<T>::Zero(static_cast<Eigen::Index>(cin) * k * k, static_cast<Eigen::Index>(in.n) * ho * wo);
    const Eigen::Index in_img = static_cast<Eigen::Index>(in.h) * in.w;
    const Eigen::Index out_img = static_cast<Eigen::Index>(ho) * wo;
    for (int ci = 0; ci < cin; ++ci) {
      const T* src = in.x.row(ci).data();
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          T* dst = cols.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
          for (int n = 0; n < in.n; ++n) {
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= in.h) continue;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= in.w) continue;
                dst[n * out_img + oy * wo + ox] = src[n * in_img + iy * in.w + ix];
              }
            }
          }
        }
      }
    }
    FeatureMap<T> out;
    out.n = in.n;
    out.h = ho;
    out.w = wo;
    out.x.noalias() = W.value * cols;
    if (has_bias) out.x.colwise() += b.value.row(0).transpose();
    if (c) {
      c->cols = std::move(cols);
      c->n = in.n;
      c->h = in.h;
      c->w = in.w;
    }
    return out;
  }

  FeatureMap<T> backward(const Mat<T>& dy, const Cache& c) {
    W.grad.noalias() += dy * c.cols.transpose();
    if (has_bias) b.grad.row(0) += dy.rowwise().sum().transpose();
    const Mat<T> dcols = W.value.transpose() * dy;
    const int ho = out_size(c.h), wo = out_size(c.w);
    const Eigen::Index in_img = static_cast<Eigen::Index>(c.h) * c.w;
    const Eigen::Index out_img = static_cast<Eigen::Index>(ho) * wo;
    FeatureMap<T> dx;
    dx.n = c.n;
    dx.h = c.h;
    dx.w = c.w;
    dx.x = Mat<T>::Zero(cin, static_cast<Eigen::Index>(c.n) * in_img);
    for (int ci = 0; ci < cin; ++ci) {
      T* dst = dx.x.row(ci).data();
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T* src = dcols.row((static_cast<Eigen::Index>(ci) * k + ky) * k + kx).data();
          for (int n = 0; n < c.n; ++n) {
            for (int oy = 0; oy < ho; ++oy) {
              const int iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= c.h) continue;
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= c.w) continue;
                dst[n * in_img + iy * c.w + ix] += src[n * out_img + oy * wo + ox];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(W);
    if (has_bias) f(b);
  }
};

/// ReLU(F(x) + R(x)) followed by dropout, where F is conv-BN-ReLU-conv-BN
/// and R is the identity or a strided 1x1 convolution.
template <typename T>
struct ResBlock {
  Conv2d<T> conv1, conv2, skip;
  BatchNorm<T> bn1, bn2;
  bool projected = false;
  double dropout = 0.0;

  struct Cache {
    typename Conv2d<T>::Cache c1, c2, cs;
    typename BatchNorm<T>::Cache b1, b2;
    Mat<T> a1;   // ReLU output inside F
    Mat<T> out;  // ReLU(F + R)
    Mat<T> mask;
    int oh = 0, ow = 0;
  };

  ResBlock() = default;
  ResBlock(const std::string& name, int in, int out, int stride, double drop)
      : conv1(name + ".conv1", in, out, 3, stride, 1, false),
        conv2(name + ".conv2", out, out, 3, 1, 1, false),
        bn1(name + ".bn1", out),
        bn2(name + ".bn2", out),
        projected(in != out || stride != 1),
        dropout(drop) {
    if (projected) skip = Conv2d<T>(name + ".skip", in, out, 1, stride, 0, true);
  }

  void init(Rng& rng) {
    conv1.init(std::sqrt(2.0 / (conv1.cin * 9)), rng);
    conv2.init(std::sqrt(2.0 / (conv2.cin * 9)), rng);
    if (projected) skip.init(std::sqrt(1.0 / skip.cin), rng);
  }

  FeatureMap<T> forward(const FeatureMap<T>& x, const Context& ctx, Cache* c) {
    typename Conv2d<T>::Cache c1, c2, cs;
    typename BatchNorm<T>::Cache b1, b2;
    FeatureMap<T> f = conv1.forward(x, c ? &c1 : nullptr);
    Mat<T> a1 = bn1.forward(f.x, ctx, c ? &b1 : nullptr).cwiseMax(T(0));
    FeatureMap<T> g{std::move(a1), f.n, f.h, f.w};
    FeatureMap<T> h2 = conv2.forward(g, c ? &c2 : nullptr);
    Mat<T> sum = bn2.forward(h2.x, ctx, c ? &b2 : nullptr);
    if (projected)
      sum += skip.forward(x, c ? &cs : nullptr).x;
    else
      sum += x.x;
    Mat<T> out = sum.cwiseMax(T(0));
    Mat<T> mask;
    Mat<T> y = dropout_forward(out, dropout, ctx, &mask);
    if (c) {
      c->c1 = std::move(c1);
      c->c2 = std::move(c2);
      c->cs = std::move(cs);
      c->b1 = std::move(b1);
      c->b2 = std::move(b2);
      c->a1 = std::move(g.x);
      c->out = std::move(out);
      c->mask = std::move(mask);
      c->oh = h2.h;
      c->ow = h2.w;
    }
    return {std::move(y), h2.n, h2.h, h2.w};
  }

  FeatureMap<T> backward(const Mat<T>& dy, const Cache& c) {
    const Mat<T> dsum = relu_backward<T>(dropout_backward<T>(dy, c.mask), c.out);
    const Mat<T> dh2 = bn2.backward(dsum, c.b2);
    const FeatureMap<T> dg = conv2.backward(dh2, c.c2);
    const Mat<T> df = bn1.backward(relu_backward<T>(dg.x, c.a1), c.b1);
    FeatureMap<T> dx = conv1.backward(df, c.c1);
    if (projected)
      dx.x += skip.backward(dsum, c.cs).x;
    else
      dx.x += dsum;
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    conv1.for_each_param(f);
    bn1.for_each_param(f);
    conv2.for_each_param(f);
    bn2.for_each_param(f);
    if (projected) skip.for_each_param(f);
  }
  template <typename F>
  void for_each_buffer(F&& f) {
    f(bn1.name + ".running_mean", bn1.running_mean);
    f(bn1.name + ".running_var", bn1.running_var);
    f(bn2.name + ".running_mean", bn2.running_mean);
    f(bn2.name + ".running_var", bn2.running_var);
  }
};

/// Bin edges of adaptive average pooling: [floor(i L / O), ceil((i+1) L / O)).
inline std::pair<int, int> adaptive_bin(int i, int in, int out) {
  return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

/// Pools every image to hp x wp and flattens it (channel, row, column order)
/// into one row of the result.
template <typename T>
Mat<T> adaptive_avg_pool_flatten(const FeatureMap<T>& in, int hp, int wp) {
  if (in.h < hp || in.w < wp) throw std::invalid_argument("adaptive pool: input smaller than pooling grid");
  const int C = in.channels();
  Mat<T> out = Mat<T>::Zero(in.n, static_cast<Eigen::Index>(C) * hp * wp);
  const Eigen::Index img = static_cast<Eigen::Index>(in.h) * in.w;
  for (int n = 0; n < in.n; ++n)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < hp; ++i) {
        const auto [y0, y1] = adaptive_bin(i, in.h, hp);
        for (int j = 0; j < wp; ++j) {
          const auto [x0, x1] = adaptive_bin(j, in.w, wp);
          T acc = 0;
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) acc += in.x(c, n * img + y * in.w + x);
          out(n, (static_cast<Eigen::Index>(c) * hp + i) * wp + j) = acc / static_cast<T>((y1 - y0) * (x1 - x0));
        }
      }
  return out;
}

template <typename T>
FeatureMap<T> adaptive_avg_pool_flatten_backward(const Mat<T>& dy, int C, int n, int h, int w, int hp, int wp) {
  FeatureMap<T> dx;
  dx.n = n;
  dx.h = h;
  dx.w = w;
  const Eigen::Index img = static_cast<Eigen::Index>(h) * w;
  dx.x = Mat<T>::Zero(C, n * img);
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < hp; ++i) {
        const auto [y0, y1] = adaptive_bin(i, h, hp);
        for (int j = 0; j < wp; ++j) {
          const auto [x0, x1] = adaptive_bin(j, w, wp);
          const T g = dy(b, (static_cast<Eigen::Index>(c) * hp + i) * wp + j) / static_cast<T>((y1 - y0) * (x1 - x0));
          for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) dx.x(c, b * img + y * w + x) += g;
        }
      }
  return dx;
}

/// Multi-head self-attention over B sequences of length P stacked as B P
/// rows. Q, K, V projections carry no bias; the output projection does.
template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;
  bool causal = true;

  struct Cache {
    typename Linear<T>::Cache q, k, v, o;
    Mat<T> Q, K, V;
    std::vector<Mat<T>> probs;  // index b * heads + h, each P x P
    int B = 0, P = 0;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, int dim, int num_heads, bool is_causal)
      : wq(name + ".wq", dim, dim, false),
        wk(name + ".wk", dim, dim, false),
        wv(name + ".wv", dim, dim, false),
        wo(name + ".wo", dim, dim, true),
        heads(num_heads),
        causal(is_causal) {
    if (num_heads < 1 || dim % num_heads != 0)
      throw std::invalid_argument(name + ": embedding width not divisible by head count");
  }

  void init(double std, Rng& rng) {
    wq.init(std, rng);
    wk.init(std, rng);
    wv.init(std, rng);
    wo.init(std, rng);
  }

  Mat<T> forward(const Mat<T>& x, int B, int P, Cache* c) const {
    if (x.rows() != static_cast<Eigen::Index>(B) * P) throw std::invalid_argument("attention: row count != B P");
    const int D = wq.in_features();
    const int dh = D / heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    typename Linear<T>::Cache cq, ck, cv, co;
    Mat<T> Q = wq.forward(x, c ? &cq : nullptr);
    Mat<T> K = wk.forward(x, c ? &ck : nullptr);
    Mat<T> V = wv.forward(x, c ? &cv : nullptr);
    Mat<T> A(x.rows(), D);
    std::vector<Mat<T>> probs;
    if (c) probs.resize(static_cast<std::size_t>(B) * heads);
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < heads; ++h) {
        const auto q = Q.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
        const auto k = K.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
        const auto v = V.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh);
        Mat<T> s = (q * k.transpose()) * scale;
        for (int i = 0; i < P; ++i) {
          const int last = causal ? i : P - 1;
          T mx = s(i, 0);
          for (int j = 1; j <= last; ++j) mx = std::max(mx, s(i, j));
          T z = 0;
          for (int j = 0; j < P; ++j) {
            s(i, j) = j <= last ? std::exp(s(i, j) - mx) : T(0);
            z += s(i, j);
          }
          s.row(i) /= z;
        }
        A.block(static_cast<Eigen::Index>(b) * P, h * dh, P, dh).noalias() = s * v;
        if (c) probs[static_cast<std::size_t>(b) * heads + h] = std::move(s);
      }
    }
    Mat<T> y = wo.forward(A, c ? &co : nullptr);
    if (c) {
      c->q = std::move(cq);
      c->k = std::move(ck);
      c->v = std::move(cv);
      c->o = std::move(co);
      c->Q = std::move(Q);
      c->K = std::move(K);
      c->V = std::move(V);
      c->probs = std::move(probs);
      c->B = B;
      c->P = P;
    }
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    const int D = wq.in_features();
    const int dh = D / heads;
    const int P = c.P;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const Mat<T> dA = wo.backward(dy, c.o);
    Mat<T> dQ(dA.rows(), D), dK(dA.rows(), D), dV(dA.rows(), D);
    for (int b = 0; b < c.B; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Eigen::Index r0 = static_cast<Eigen::Index>(b) * P;
        const Mat<T>& pr = c.probs[static_cast<std::size_t>(b) * heads + h];
        const auto q = c.Q.block(r0, h * dh, P, dh);
        const auto k = c.K.block(r0, h * dh, P, dh);
        const auto v = c.V.block(r0, h * dh, P, dh);
        const auto da = dA.block(r0, h * dh, P, dh);
        const Mat<T> dp = da * v.transpose();
        dV.block(r0, h * dh, P, dh).noalias() = pr.transpose() * da;
        Mat<T> ds(P, P);
        for (int i = 0; i < P; ++i) {
          const T dot = dp.row(i).dot(pr.row(i));
          ds.row(i) = pr.row(i).array() * (dp.row(i).array() - dot);
        }
        ds *= scale;
        dQ.block(r0, h * dh, P, dh).noalias() = ds * k;
        dK.block(r0, h * dh, P, dh).noalias() = ds.transpose() * q;
      }
    }
    Mat<T> dx = wq.backward(dQ, c.q);
    dx += wk.backward(dK, c.k);
    dx += wv.backward(dV, c.v);
    return dx;
  }

  template <typename F>
  void for_each_param(F&& f) {
    wq.for_each_param(f);
    wk.for_each_param(f);
    wv.for_each_param(f);
    wo.for_each_param(f);
  }
};

/// ReLU(x W1 + b1) W2 + b2.
template <typename T>
struct FeedForward {
  Linear<T> fc1, fc2;

  struct Cache {
    typename Linear<T>::Cache c1, c2;
    Mat<T> hidden;
  };

  FeedForward() = default;
  FeedForward(const std::string& name, int dim, int hidden)
      : fc1(name + ".fc1", dim, hidden), fc2(name + ".fc2", hidden, dim) {}

  void init(double std, Rng& rng) {
    fc1.init(std, rng);
    fc2.init(std, rng);
  }

  Mat<T> forward(const Mat<T>& x, Cache* c) const {
    typename Linear<T>::Cache c1;
    Mat<T> hidden = fc1.forward(x, c ? &c1 : nullptr).cwiseMax(T(0));
    Mat<T> y = fc2.forward(hidden, c ? &c->c2 : nullptr);
    if (c) {
      c->c1 = std::move(c1);
      c->hidden = std::move(hidden);
    }
    return y;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    return fc1.backward(relu_backward<T>(fc2.backward(dy, c.c2), c.hidden), c.c1);
  }

  template <typename F>
  void for_each_param(F&& f) {
    fc1.for_each_param(f);
    fc2.for_each_param(f);
  }
};

/// Pre-norm block: H = Z + MHA(LN1(Z)), Z' = H + FFN(LN2(H)), with dropout
/// on both residual branches.
template <typename T>
struct TransformerBlock {
  LayerNorm<T> ln1, ln2;
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  double dropout = 0.0;

  struct Cache {
    typename LayerNorm<T>::Cache l1, l2;
    typename MultiHeadAttention<T>::Cache a;
    typename FeedForward<T>::Cache f;
    Mat<T> m1, m2;
  };

  TransformerBlock() = default;
  TransformerBlock(const std::string& name, int dim, int heads, int hidden, double drop, bool causal)
      : ln1(name + ".ln1", dim),
        ln2(name + ".ln2", dim),
        attn(name + ".attn", dim, heads, causal),
        ffn(name + ".ffn", dim, hidden),
        dropout(drop) {}

  void init(double std, Rng& rng) {
    attn.init(std, rng);
    ffn.init(std, rng);
  }

  Mat<T> forward(const Mat<T>& z, int B, int P, const Context& ctx, Cache* c) const {
    Mat<T> h = z + dropout_forward<T>(attn.forward(ln1.forward(z, c ? &c->l1 : nullptr), B, P, c ? &c->a : nullptr),
                                      dropout, ctx, c ? &c->m1 : nullptr);
    Mat<T> out = h + dropout_forward<T>(ffn.forward(ln2.forward(h, c ? &c->l2 : nullptr), c ? &c->f : nullptr),
                                        dropout, ctx, c ? &c->m2 : nullptr);
    return out;
  }

  Mat<T> backward(const Mat<T>& dy, const Cache& c) {
    Mat<T> dh = dy + ln2.backward(ffn.backward(dropout_backward<T>(dy, c.m2), c.f), c.l2);
    return dh + ln1.backward(attn.backward(dropout_backward<T>(dh, c.m1), c.a), c.l1);
  }

  template <typename F>
  void for_each_param(F&& f) {
    ln1.for_each_param(f);
    attn.for_each_param(f);
    ln2.for_each_param(f);
    ffn.for_each_param(f);
  }
};

}  // namespace nfbeam::nn
