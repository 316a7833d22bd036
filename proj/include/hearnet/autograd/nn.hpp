// Copyright 2026 The HearNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Layers built from the autograd ops. Every layer exposes
//   template <class F> void Visit(const std::string& prefix, F&& f)
// which calls f(name, Var&, is_buffer) for each parameter and buffer, so
// models can be enumerated, serialized and optimized without a registry.

#include <cmath>
#include <string>
#include <vector>

#include "hearnet/autograd/ops.hpp"
#include "hearnet/core/rng.hpp"

namespace hearnet::nn {

using ag::Var;

template <class T>
Var<T> UniformParam(Rng& rng, Shape s, double bound) {
  Tensor<T> t(std::move(s));
  for (size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(rng.Uniform(-bound, bound));
  return ag::Parameter(std::move(t));
}

template <class T>
Var<T> ConstParam(Shape s, T v) {
  return ag::Parameter(Tensor<T>(std::move(s), v));
}

inline std::string Join(const std::string& a, const std::string& b) {
  return a.empty() ? b : a + "." + b;
}

// y = x @ w + b over the last axis; fan-in uniform init.
template <class T>
struct Linear {
  Var<T> w, b;
  Linear() = default;
  Linear(Rng& rng, size_t in, size_t out, bool bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w = UniformParam<T>(rng, {in, out}, bound);
    if (bias) b = UniformParam<T>(rng, {out}, bound);
  }
  size_t in() const { return w.dim(0); }
  size_t out() const { return w.dim(1); }
  Var<T> operator()(const Var<T>& x) const { return ag::Linear(x, w, b); }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "weight"), w, false);
    if (b.defined()) f(Join(p, "bias"), b, false);
  }
};

template <class T>
struct Conv2d {
  Var<T> w, b;
  ag::Conv2dGeometry geom;
  Conv2d() = default;
  Conv2d(Rng& rng, size_t cin, size_t cout, size_t kh, size_t kw,
         ag::Conv2dGeometry g = {}, bool bias = true)
      : geom(g) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * kh * kw));
    w = UniformParam<T>(rng, {cout, cin, kh, kw}, bound);
    if (bias) b = UniformParam<T>(rng, {cout}, bound);
  }
  Var<T> operator()(const Var<T>& x) const { return ag::Conv2d(x, w, b, geom); }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "weight"), w, false);
    if (b.defined()) f(Join(p, "bias"), b, false);
  }
};

// Learned slope, broadcast against the input (shape chosen by the caller,
// e.g. [C, 1, 1] for channel-first maps or [C] for channel-last).
template <class T>
struct PRelu {
  Var<T> slope;
  PRelu() = default;
  explicit PRelu(Shape s) : slope(ConstParam<T>(std::move(s), T(0.25))) {}
  Var<T> operator()(const Var<T>& x) const { return ag::PRelu(x, slope); }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "slope"), slope, false);
  }
};

// Normalization over the last axis with elementwise affine.
template <class T>
struct LayerNorm {
  Var<T> gamma, beta;
  T eps = T(1e-5);
  LayerNorm() = default;
  explicit LayerNorm(size_t d)
      : gamma(ConstParam<T>({d}, T(1))), beta(ConstParam<T>({d}, T(0))) {}
  Var<T> operator()(const Var<T>& x) const {
    return ag::NormalizeLastDim(x, eps) * gamma + beta;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "gamma"), gamma, false);
    f(Join(p, "beta"), beta, false);
  }
};

// Per-frame normalization of [C, T, F] maps over (C, F) with a per-channel
// affine. Each frame is normalized on its own, so time causality holds.
template <class T>
struct FrameNorm {
  Var<T> gamma, beta;
  T eps = T(1e-5);
  FrameNorm() = default;
  explicit FrameNorm(size_t c)
      : gamma(ConstParam<T>({c, 1, 1}, T(1))),
        beta(ConstParam<T>({c, 1, 1}, T(0))) {}
  Var<T> operator()(const Var<T>& x) const {
    return ag::NormalizeFrames(x, eps) * gamma + beta;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "gamma"), gamma, false);
    f(Join(p, "beta"), beta, false);
  }
};

// Per-channel normalization of [C, H, W] over (H, W) with affine.
template <class T>
struct InstanceNorm {
  Var<T> gamma, beta;
  T eps = T(1e-5);
  InstanceNorm() = default;
  explicit InstanceNorm(size_t c)
      : gamma(ConstParam<T>({c, 1, 1}, T(1))),
        beta(ConstParam<T>({c, 1, 1}, T(0))) {}
  Var<T> operator()(const Var<T>& x) const {
    const Shape s = x.shape();
    const Var<T> flat = ag::Reshape(x, {s[0], s[1] * s[2]});
    return ag::Reshape(ag::NormalizeLastDim(flat, eps), s) * gamma + beta;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "gamma"), gamma, false);
    f(Join(p, "beta"), beta, false);
  }
};

// Batch normalization of [C, N, W] over (N, W): batch statistics while
// training (updating running estimates), running estimates in eval mode.
template <class T>
struct BatchNorm {
  Var<T> gamma, beta;
  Var<T> running_mean, running_var;  // buffers, [C, 1, 1]
  T eps = T(1e-5);
  T momentum = T(0.1);
  bool training = true;
  BatchNorm() = default;
  explicit BatchNorm(size_t c)
      : gamma(ConstParam<T>({c, 1, 1}, T(1))),
        beta(ConstParam<T>({c, 1, 1}, T(0))),
        running_mean(Tensor<T>(Shape{c, 1, 1}, T(0))),
        running_var(Tensor<T>(Shape{c, 1, 1}, T(1))) {}

  Var<T> operator()(const Var<T>& x) {
    const Shape s = x.shape();
    const size_t C = s[0], n = s[1] * s[2];
    if (!training) {
      Tensor<T> scale(Shape{C, 1, 1}), shift(Shape{C, 1, 1});
      for (size_t c = 0; c < C; ++c) {
        scale[c] = T(1) / std::sqrt(running_var.value()[c] + eps);
        shift[c] = -running_mean.value()[c] * scale[c];
      }
      return (x * ag::Constant(scale) + ag::Constant(shift)) * gamma + beta;
    }
    const Var<T> flat = ag::Reshape(x, {C, n});
    if (ag::GradEnabled()) {
      const T* px = x.value().data();
      for (size_t c = 0; c < C; ++c) {
        double m = 0, v = 0;
        for (size_t i = 0; i < n; ++i) m += px[c * n + i];
        m /= static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) v += std::pow(px[c * n + i] - m, 2);
        // Unbiased variance for the running estimate.
        v /= static_cast<double>(std::max<size_t>(n - 1, 1));
        T& rm = running_mean.mutable_value()[c];
        T& rv = running_var.mutable_value()[c];
        rm = (1 - momentum) * rm + momentum * static_cast<T>(m);
        rv = (1 - momentum) * rv + momentum * static_cast<T>(v);
      }
    }
    return ag::Reshape(ag::NormalizeLastDim(flat, eps), s) * gamma + beta;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(Join(p, "gamma"), gamma, false);
    f(Join(p, "beta"), beta, false);
    f(Join(p, "running_mean"), running_mean, true);
    f(Join(p, "running_var"), running_var, true);
  }
};

// Single-layer unidirectional GRU over x [T, in] -> [T, hidden], zero
// initial state. Gate layout (r, z, n) as in the common formulation.
template <class T>
struct Gru {
  Linear<T> ih, hh;
  size_t hidden = 0;
  Gru() = default;
  Gru(Rng& rng, size_t in, size_t h) : hidden(h) {
    // Both projections use the hidden-size bound.
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    ih.w = UniformParam<T>(rng, {in, 3 * h}, bound);
    ih.b = UniformParam<T>(rng, {3 * h}, bound);
    hh.w = UniformParam<T>(rng, {h, 3 * h}, bound);
    hh.b = UniformParam<T>(rng, {3 * h}, bound);
  }
  Var<T> operator()(const Var<T>& x) const {
    const size_t Tn = x.dim(0), H = hidden;
    const Var<T> xi = ih(x);  // [T, 3H]
    Var<T> h = ag::Constant(Tensor<T>(Shape{1, H}));
    std::vector<Var<T>> outs;
    outs.reserve(Tn);
    for (size_t t = 0; t < Tn; ++t) {
      const Var<T> gx = ag::Slice(xi, 0, t, 1);
      const Var<T> gh = hh(h);
      const Var<T> r = ag::Sigmoid(ag::Slice(gx, 1, 0, H) + ag::Slice(gh, 1, 0, H));
      const Var<T> z = ag::Sigmoid(ag::Slice(gx, 1, H, H) + ag::Slice(gh, 1, H, H));
      const Var<T> n =
          ag::Tanh(ag::Slice(gx, 1, 2 * H, H) + r * ag::Slice(gh, 1, 2 * H, H));
      h = n + z * (h - n);
      outs.push_back(h);
    }
    return ag::Concat(outs, 0);
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    ih.Visit(Join(p, "ih"), f);
    hh.Visit(Join(p, "hh"), f);
  }
};

// Multi-head self-attention over x [B, L, C].
template <class T>
struct MultiHeadAttention {
  Linear<T> qkv, proj;
  size_t heads = 4;
  bool causal = false;
  MultiHeadAttention() = default;
  MultiHeadAttention(Rng& rng, size_t c, size_t h, bool causal_mask)
      : qkv(rng, c, 3 * c), proj(rng, c, c), heads(h), causal(causal_mask) {
    Require(c % h == 0, "attention: heads must divide channels");
  }
  Var<T> operator()(const Var<T>& x) const {
    const size_t B = x.dim(0), L = x.dim(1), C = x.dim(2), H = heads, d = C / H;
    // [B, L, 3, H, d] -> [3, B, H, L, d]
    const Var<T> all = ag::Permute(ag::Reshape(qkv(x), {B, L, 3, H, d}), {2, 0, 3, 1, 4});
    const Var<T> q = ag::Reshape(ag::Slice(all, 0, 0, 1), {B, H, L, d});
    const Var<T> k = ag::Reshape(ag::Slice(all, 0, 1, 1), {B, H, L, d});
    const Var<T> v = ag::Reshape(ag::Slice(all, 0, 2, 1), {B, H, L, d});
    const T scale = T(1) / std::sqrt(static_cast<T>(d));
    const Var<T> att = ag::Softmax(ag::MatMul(q, k, false, true) * scale, causal);
    const Var<T> o = ag::MatMul(att, v);  // [B, H, L, d]
    return proj(ag::Reshape(ag::Permute(o, {0, 2, 1, 3}), {B, L, C}));
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    qkv.Visit(Join(p, "qkv"), f);
    proj.Visit(Join(p, "proj"), f);
  }
};

template <class T>
struct FeedForward {
  LayerNorm<T> norm;
  Linear<T> up, down;
  FeedForward() = default;
  FeedForward(Rng& rng, size_t c, size_t mult)
      : norm(c), up(rng, c, mult * c), down(rng, mult * c, c) {}
  Var<T> operator()(const Var<T>& x) const {
    return down(ag::Silu(up(norm(x))));
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    norm.Visit(Join(p, "norm"), f);
    up.Visit(Join(p, "up"), f);
    down.Visit(Join(p, "down"), f);
  }
};

// Pointwise GLU, depthwise conv along the sequence, norm, SiLU, pointwise.
// Layer norm stands in for batch norm so every position is normalized on
// its own.
template <class T>
struct ConvModule {
  LayerNorm<T> norm, mid_norm;
  Linear<T> pw_in, pw_out;
  Var<T> dw_w, dw_b;
  size_t kernel = 7;
  bool causal = false;
  ConvModule() = default;
  ConvModule(Rng& rng, size_t c, size_t expansion, size_t k, bool causal_pad)
      : norm(c),
        mid_norm(expansion * c),
        pw_in(rng, c, 2 * expansion * c),
        pw_out(rng, expansion * c, c),
        kernel(k),
        causal(causal_pad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(k));
    dw_w = UniformParam<T>(rng, {expansion * c, k}, bound);
    dw_b = UniformParam<T>(rng, {expansion * c}, bound);
  }
  Var<T> operator()(const Var<T>& x) const {
    const Var<T> h = pw_in(norm(x));
    const size_t e = h.shape().back() / 2;
    const Var<T> glu = ag::Slice(h, 2, 0, e) * ag::Sigmoid(ag::Slice(h, 2, e, e));
    const size_t pl = causal ? kernel - 1 : (kernel - 1) / 2;
    const size_t pr = causal ? 0 : kernel - 1 - pl;
    const Var<T> d = ag::DepthwiseConv1d(glu, dw_w, dw_b, pl, pr);
    return pw_out(ag::Silu(mid_norm(d)));
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    norm.Visit(Join(p, "norm"), f);
    pw_in.Visit(Join(p, "pw_in"), f);
    f(Join(p, "dw.weight"), dw_w, false);
    f(Join(p, "dw.bias"), dw_b, false);
    mid_norm.Visit(Join(p, "mid_norm"), f);
    pw_out.Visit(Join(p, "pw_out"), f);
  }
};

struct ConformerConfig {
  size_t channels = 48;
  size_t heads = 4;
  size_t ffn_mult = 4;
  size_t conv_expansion = 2;
  size_t conv_kernel = 7;
};

// Pre-norm Conformer block over x [B, L, C]: half-step FFN, self-attention,
// convolution module, half-step FFN, final norm.
template <class T>
struct Conformer {
  FeedForward<T> ff1, ff2;
  LayerNorm<T> att_norm, out_norm;
  MultiHeadAttention<T> att;
  ConvModule<T> conv;
  Conformer() = default;
  Conformer(Rng& rng, const ConformerConfig& c, bool causal)
      : ff1(rng, c.channels, c.ffn_mult),
        ff2(rng, c.channels, c.ffn_mult),
        att_norm(c.channels),
        out_norm(c.channels),
        att(rng, c.channels, c.heads, causal),
        conv(rng, c.channels, c.conv_expansion, c.conv_kernel, causal) {}
  Var<T> operator()(const Var<T>& x0) const {
    Var<T> x = x0 + ff1(x0) * T(0.5);
    x = x + att(att_norm(x));
    x = x + conv(x);
    x = x + ff2(x) * T(0.5);
    return out_norm(x);
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    ff1.Visit(Join(p, "ff1"), f);
    att_norm.Visit(Join(p, "att_norm"), f);
    att.Visit(Join(p, "att"), f);
    conv.Visit(Join(p, "conv"), f);
    ff2.Visit(Join(p, "ff2"), f);
    out_norm.Visit(Join(p, "out_norm"), f);
  }
};

// Counts trainable scalars reachable through Visit.
template <class M>
size_t CountParameters(M& m) {
  size_t n = 0;
  m.Visit("", [&](const std::string&, auto& v, bool buffer) {
    if (!buffer) n += v.size();
  });
  return n;
}

}  // namespace hearnet::nn
