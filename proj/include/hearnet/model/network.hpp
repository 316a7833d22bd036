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

// The enhancement network and its discriminator.
//
// Layout conventions: feature maps are [C, T, F'] (channel, frame, bin);
// sequence views for the fusion stages are [B, L, C].

#include <array>
#include <string>
#include <vector>

#include "hearnet/audiogram.hpp"
#include "hearnet/autograd/nn.hpp"
#include "hearnet/autograd/spectral_ops.hpp"
#include "hearnet/model/config.hpp"

namespace hearnet {

using ag::Var;

namespace detail {

inline ag::Conv2dGeometry FreqDown() {
  ag::Conv2dGeometry g;
  g.stride_w = 2;
  g.pad_left = g.pad_right = 1;
  return g;
}

inline ag::Conv2dGeometry FreqSame() {
  ag::Conv2dGeometry g;
  g.pad_left = g.pad_right = 1;
  return g;
}

}  // namespace detail

// Densely connected causal conv stack: layer i sees the concatenation of the
// input and all earlier outputs, kernel 2x3, time dilation 2^i.
template <class T>
struct DenseBlock {
  std::vector<nn::Conv2d<T>> convs;
  std::vector<nn::FrameNorm<T>> norms;
  std::vector<nn::PRelu<T>> acts;
  DenseBlock() = default;
  DenseBlock(Rng& rng, size_t c, size_t depth) {
    for (size_t i = 0; i < depth; ++i) {
      ag::Conv2dGeometry g;
      g.dilation_h = size_t{1} << i;
      g.pad_top = g.dilation_h;  // causal: only past frames
      g.pad_left = g.pad_right = 1;
      convs.emplace_back(rng, c * (i + 1), c, 2, 3, g);
      norms.emplace_back(c);
      acts.emplace_back(Shape{c, 1, 1});
    }
  }
  Var<T> operator()(const Var<T>& x) const {
    Var<T> skip = x, out;
    for (size_t i = 0; i < convs.size(); ++i) {
      out = acts[i](norms[i](convs[i](skip)));
      if (i + 1 < convs.size()) skip = ag::Concat(std::vector<Var<T>>{out, skip}, 0);
    }
    return out;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    for (size_t i = 0; i < convs.size(); ++i) {
      const std::string q = nn::Join(p, std::to_string(i));
      convs[i].Visit(nn::Join(q, "conv"), f);
      norms[i].Visit(nn::Join(q, "norm"), f);
      acts[i].Visit(nn::Join(q, "act"), f);
    }
  }
};

// [2, T, F] compressed spectrum -> [C, T, F'].
template <class T>
struct SpectrumEncoder {
  std::vector<nn::Conv2d<T>> downs;
  std::vector<nn::FrameNorm<T>> norms;
  std::vector<nn::PRelu<T>> acts;
  DenseBlock<T> dense;
  size_t bins = 0;
  SpectrumEncoder() = default;
  SpectrumEncoder(Rng& rng, const ModelConfig& cfg) : bins(cfg.bins()) {
    const size_t C = cfg.channels;
    for (size_t i = 0; i < cfg.stages(); ++i) {
      downs.emplace_back(rng, i == 0 ? 2 : C, C, 1, 3, detail::FreqDown());
      norms.emplace_back(C);
      acts.emplace_back(Shape{C, 1, 1});
    }
    dense = DenseBlock<T>(rng, C, cfg.dense_depth);
  }
  Var<T> operator()(const Var<T>& spec) const {
    Require(spec.rank() == 3 && spec.dim(0) == 2 && spec.dim(2) == bins,
            "spectrum_encoder: expected [2, T, " + std::to_string(bins) + "], got " +
                ShapeString(spec.shape()));
    Var<T> h = spec;
    for (size_t i = 0; i < downs.size(); ++i) h = acts[i](norms[i](downs[i](h)));
    return dense(h);
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    for (size_t i = 0; i < downs.size(); ++i) {
      const std::string q = nn::Join(p, "down" + std::to_string(i));
      downs[i].Visit(nn::Join(q, "conv"), f);
      norms[i].Visit(nn::Join(q, "norm"), f);
      acts[i].Visit(nn::Join(q, "act"), f);
    }
    dense.Visit(nn::Join(p, "dense"), f);
  }
};

// Dense audiograms [N, F] (dB HL) -> codes [N, F', C]. The batch sits on the
// conv height axis, so batch norm statistics span (batch, frequency).
template <class T>
struct AudiogramEncoder {
  nn::Linear<T> expand, project;
  std::vector<nn::Conv2d<T>> convs;
  std::vector<nn::BatchNorm<T>> norms;
  std::vector<nn::PRelu<T>> acts;
  size_t bins = 0;
  static constexpr double kInputScale = 0.01;  // dB HL -> O(1)
  AudiogramEncoder() = default;
  AudiogramEncoder(Rng& rng, const ModelConfig& cfg) : bins(cfg.bins()) {
    const size_t F = bins;
    expand = nn::Linear<T>(rng, F, 4 * F);
    const size_t chans[] = {4, 16, 64, 64};
    for (size_t i = 0; i < cfg.stages(); ++i) {
      convs.emplace_back(rng, chans[i], chans[i + 1], 1, 3, detail::FreqDown());
      norms.emplace_back(chans[i + 1]);
      acts.emplace_back(Shape{chans[i + 1], 1, 1});
    }
    project = nn::Linear<T>(rng, chans[cfg.stages()], cfg.channels);
  }
  void SetTraining(bool on) {
    for (auto& n : norms) n.training = on;
  }
  Var<T> operator()(const Var<T>& dense_hl) {
    Require(dense_hl.rank() == 2 && dense_hl.dim(1) == bins,
            "audiogram_encoder: expected [N, " + std::to_string(bins) + "]");
    const size_t N = dense_hl.dim(0), F = bins;
    Var<T> h = ag::Gelu(expand(dense_hl * static_cast<T>(kInputScale)));  // [N, 4F]
    h = ag::Permute(ag::Reshape(h, {N, 4, F}), {1, 0, 2});           // [4, N, F]
    for (size_t i = 0; i < convs.size(); ++i) h = acts[i](norms[i](convs[i](h)));
    return project(ag::Permute(h, {1, 2, 0}));  // [N, F', C]
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    expand.Visit(nn::Join(p, "expand"), f);
    for (size_t i = 0; i < convs.size(); ++i) {
      const std::string q = nn::Join(p, "conv" + std::to_string(i));
      convs[i].Visit(nn::Join(q, "conv"), f);
      norms[i].Visit(nn::Join(q, "norm"), f);
      acts[i].Visit(nn::Join(q, "act"), f);
    }
    project.Visit(nn::Join(p, "project"), f);
  }
};

// gamma1, beta1, alpha1, gamma2, beta2, alpha2; each [F', C].
template <class T>
struct ModulationParams {
  std::array<Var<T>, 6> p;
  const Var<T>& gamma1() const { return p[0]; }
  const Var<T>& beta1() const { return p[1]; }
  const Var<T>& alpha1() const { return p[2]; }
  const Var<T>& gamma2() const { return p[3]; }
  const Var<T>& beta2() const { return p[4]; }
  const Var<T>& alpha2() const { return p[5]; }

  // gamma = beta = 0, alpha = 1: the unconditioned block.
  static ModulationParams Identity(size_t fr, size_t c) {
    ModulationParams m;
    for (size_t i = 0; i < 6; ++i)
      m.p[i] = ag::Constant(Tensor<T>(Shape{fr, c}, (i == 2 || i == 5) ? T(1) : T(0)));
    return m;
  }
  ModulationParams Reshaped(const Shape& s) const {
    ModulationParams m;
    for (size_t i = 0; i < 6; ++i) m.p[i] = ag::Reshape(p[i], s);
    return m;
  }
};

// SiLU then one linear map C -> 6C. The map starts at zero weights with the
// alpha biases at one, so an untrained head yields the identity modulation.
template <class T>
struct ModulationHead {
  nn::Linear<T> lin;
  ModulationHead() = default;
  explicit ModulationHead(size_t c) {
    lin.w = nn::ConstParam<T>({c, 6 * c}, T(0));
    Tensor<T> b(Shape{6 * c});
    for (size_t i = 0; i < c; ++i) b[2 * c + i] = b[5 * c + i] = T(1);
    lin.b = ag::Parameter(std::move(b));
  }
  ModulationParams<T> operator()(const Var<T>& code) const {
    Require(code.rank() == 2, "modulation_params: expected [F', C] code");
    const size_t fr = code.dim(0), c = code.dim(1);
    const Var<T> all = ag::Reshape(lin(ag::Silu(code)), {fr, 6, c});
    ModulationParams<T> m;
    for (size_t i = 0; i < 6; ++i) m.p[i] = ag::Reshape(ag::Slice(all, 1, i, 1), {fr, c});
    return m;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    lin.Visit(p, f);
  }
};

template <class T>
struct StageMlp {
  nn::Linear<T> up, down;
  StageMlp() = default;
  StageMlp(Rng& rng, size_t c) : up(rng, c, 2 * c), down(rng, 2 * c, c) {}
  Var<T> operator()(const Var<T>& x) const { return down(ag::Gelu(up(x))); }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    up.Visit(nn::Join(p, "up"), f);
    down.Visit(nn::Join(p, "down"), f);
  }
};

// Modulated residual Conformer + MLP over a [B, L, C] view:
//   Z'  = Conformer(Z * (1 + g1) + b1) * a1 + Z
//   Z'' = MLP(Z' * (1 + g2) + b2) * a2 + Z'
// Modulation params must broadcast against the view.
template <class T>
struct FusionStage {
  nn::Conformer<T> conformer;
  StageMlp<T> mlp;
  FusionStage() = default;
  FusionStage(Rng& rng, const nn::ConformerConfig& c, bool causal)
      : conformer(rng, c, causal), mlp(rng, c.channels) {}
  Var<T> operator()(const Var<T>& z, const ModulationParams<T>& m) const {
    Require(z.rank() == 3, "fusion_stage: expected a [B, L, C] view");
    const Var<T> z1 = conformer(z * (m.gamma1() + T(1)) + m.beta1()) * m.alpha1() + z;
    return mlp(z1 * (m.gamma2() + T(1)) + m.beta2()) * m.alpha2() + z1;
  }
  // Residual Conformer + MLP without conditioning.
  Var<T> Plain(const Var<T>& z) const {
    const Var<T> z1 = conformer(z) + z;
    return mlp(z1) + z1;
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    conformer.Visit(nn::Join(p, "conformer"), f);
    mlp.Visit(nn::Join(p, "mlp"), f);
  }
};

// Frequency stage (attention across bins within a frame) followed by the
// temporal stage (causal attention across frames per bin).
template <class T>
struct AmftBlock {
  FusionStage<T> freq, time;
  ModulationHead<T> freq_head, time_head;
  AmftBlock() = default;
  AmftBlock(Rng& rng, const ModelConfig& cfg) {
    nn::ConformerConfig c{cfg.channels, cfg.heads, cfg.ffn_mult, cfg.conv_expansion,
                          cfg.conv_kernel};
    freq = FusionStage<T>(rng, c, false);
    time = FusionStage<T>(rng, c, true);
    freq_head = ModulationHead<T>(cfg.channels);
    time_head = ModulationHead<T>(cfg.channels);
  }
  // z [C, T, F'], code [F', C].
  Var<T> operator()(const Var<T>& z, const Var<T>& code) const {
    return Apply(z, freq_head(code), time_head(code));
  }
  Var<T> Apply(const Var<T>& z, const ModulationParams<T>& mf,
               const ModulationParams<T>& mt) const {
    const size_t C = z.dim(0), fr = z.dim(2);
    Var<T> h = freq(ag::Permute(z, {1, 2, 0}), mf);                   // [T, F', C]
    h = time(ag::Permute(h, {1, 0, 2}), mt.Reshaped({fr, 1, C}));     // [F', T, C]
    return ag::Permute(h, {2, 1, 0});                                 // [C, T, F']
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    freq.Visit(nn::Join(p, "freq"), f);
    freq_head.Visit(nn::Join(p, "freq_head"), f);
    time.Visit(nn::Join(p, "time"), f);
    time_head.Visit(nn::Join(p, "time_head"), f);
  }
};

// Dense block, then per stage: conv to 2C, channel-to-frequency shuffle
// (doubling the width), a width-2 valid conv trimming one bin, norm, PReLU;
// finally a 1x1 projection to `out` channels. [C, T, F'] -> [out, T, F].
template <class T>
struct SubPixelDecoder {
  DenseBlock<T> dense;
  std::vector<nn::Conv2d<T>> expand, trim;
  std::vector<nn::FrameNorm<T>> norms;
  std::vector<nn::PRelu<T>> acts;
  nn::Conv2d<T> head;
  SubPixelDecoder() = default;
  SubPixelDecoder(Rng& rng, const ModelConfig& cfg, size_t out) {
    const size_t C = cfg.channels;
    dense = DenseBlock<T>(rng, C, cfg.dense_depth);
    for (size_t i = 0; i < cfg.stages(); ++i) {
      expand.emplace_back(rng, C, 2 * C, 1, 3, detail::FreqSame());
      trim.emplace_back(rng, C, C, 1, 2);
      norms.emplace_back(C);
      acts.emplace_back(Shape{C, 1, 1});
    }
    head = nn::Conv2d<T>(rng, C, out, 1, 1);
  }
  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = dense(x);
    for (size_t i = 0; i < expand.size(); ++i) {
      const Var<T> e = expand[i](h);  // [2C, T, W]
      const size_t C = e.dim(0) / 2, Tn = e.dim(1), W = e.dim(2);
      // out[c, t, 2w + r] = e[r * C + c, t, w]
      const Var<T> s = ag::Reshape(
          ag::Permute(ag::Reshape(e, {2, C, Tn, W}), {1, 2, 3, 0}), {C, Tn, 2 * W});
      h = acts[i](norms[i](trim[i](s)));
    }
    return head(h);
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    dense.Visit(nn::Join(p, "dense"), f);
    for (size_t i = 0; i < expand.size(); ++i) {
      const std::string q = nn::Join(p, "up" + std::to_string(i));
      expand[i].Visit(nn::Join(q, "expand"), f);
      trim[i].Visit(nn::Join(q, "trim"), f);
      norms[i].Visit(nn::Join(q, "norm"), f);
      acts[i].Visit(nn::Join(q, "act"), f);
    }
    head.Visit(nn::Join(p, "head"), f);
  }
};

// Frequency mean, pointwise projection, norm, PReLU, GRU, linear, sigmoid.
// [C, T, F'] -> [T].
template <class T>
struct VadEstimator {
  nn::Linear<T> pointwise, out;
  nn::LayerNorm<T> norm;
  nn::PRelu<T> act;
  nn::Gru<T> gru;
  VadEstimator() = default;
  VadEstimator(Rng& rng, const ModelConfig& cfg)
      : pointwise(rng, cfg.channels, cfg.channels),
        out(rng, cfg.gru_hidden, 1),
        norm(cfg.channels),
        act(Shape{cfg.channels}),
        gru(rng, cfg.channels, cfg.gru_hidden) {}
  Var<T> operator()(const Var<T>& h) const {
    const size_t C = h.dim(0), Tn = h.dim(1);
    const Var<T> pooled =
        ag::Permute(ag::Reshape(ag::MeanAxis(h, 2), {C, Tn}), {1, 0});  // [T, C]
    const Var<T> g = gru(act(norm(pointwise(pooled))));
    return ag::Reshape(ag::Sigmoid(out(g)), {Tn});
  }
  template <class F>
  void Visit(const std::string& p, F&& f) {
    pointwise.Visit(nn::Join(p, "pointwise"), f);
    norm.Visit(nn::Join(p, "norm"), f);
    act.Visit(nn::Join(p, "act"), f);
    gru.Visit(nn::Join(p, "gru"), f);
    out.Visit(nn::Join(p, "out"), f);
  }
};

template <class T>
struct NetworkOutput {
  Var<T> enhanced;   // [L]
  Var<T> spectrum;   // [2, T, F] enhanced spectrum
  Var<T> mask;       // [T, F] magnitude mask on |Y|, non-negative
  Var<T> phase;      // [2, T, F] (real, imag) phase estimate
  Var<T> vad;        // [T] speech probabilities
  Var<T> features;   // [C, T, F'] fused representation
};

// Dense audiogram [F] in dB HL for the configured STFT.
template <class T>
Tensor<T> DenseAudiogramTensor(const Audiogram& a, const ModelConfig& cfg) {
  const auto d = InterpolateAudiogram(a, cfg.bins(), kSampleRate, cfg.stft.frame_len);
  Tensor<T> t(Shape{cfg.bins()});
  for (size_t k = 0; k < cfg.bins(); ++k) t[k] = static_cast<T>(d.values[k]);
  return t;
}

template <class T>
Tensor<T> DenseAudiogramBatch(const std::vector<Audiogram>& as, const ModelConfig& cfg) {
  const size_t F = cfg.bins();
  Tensor<T> t(Shape{as.size(), F});
  for (size_t i = 0; i < as.size(); ++i) {
    const auto d = DenseAudiogramTensor<T>(as[i], cfg);
    std::copy(d.data(), d.data() + F, t.data() + i * F);
  }
  return t;
}

// Noisy waveform + audiogram code -> enhanced waveform and VAD.
//
// Features are the power-law compressed complex spectrum. The mask decoder
// works in the compressed domain; its output m maps to the magnitude mask
// m^(1/c) applied to |Y|, so the reconstruction is exactly
// |X| = mask * |Y| with phase atan2(phase_imag, phase_real).
template <class T>
class Generator {
 public:
  Generator() = default;
  Generator(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.Validate();
    Rng rng(seed);
    encoder_ = SpectrumEncoder<T>(rng, cfg_);
    audiogram_ = AudiogramEncoder<T>(rng, cfg_);
    for (size_t i = 0; i < cfg_.n_blocks; ++i) blocks_.emplace_back(rng, cfg_);
    mask_ = SubPixelDecoder<T>(rng, cfg_, 1);
    mask_act_ = nn::PRelu<T>(Shape{1, 1, 1});
    phase_ = SubPixelDecoder<T>(rng, cfg_, 2);
    vad_ = VadEstimator<T>(rng, cfg_);
  }

  const ModelConfig& config() const { return cfg_; }
  void SetTraining(bool on) { audiogram_.SetTraining(on); }

  // [N, F] dense dB HL -> [N, F', C].
  Var<T> EncodeAudiograms(const Var<T>& dense_hl) { return audiogram_(dense_hl); }
  Var<T> EncodeAudiogram(const Audiogram& a) {
    const Var<T> codes = audiogram_(ag::Constant(DenseAudiogramBatch<T>({a}, cfg_)));
    return ag::Reshape(codes, {codes.dim(1), codes.dim(2)});
  }

  // Compressed [2, T, F] features of a complex spectrum.
  Var<T> CompressedFeatures(const Var<T>& spec) const {
    const Var<T> mag = ag::Magnitude(spec);
    return spec * ag::Pow(mag + static_cast<T>(kMagnitudeFloor), static_cast<T>(cfg_.compress - 1));
  }

  Var<T> Encode(const Var<T>& spec) const { return encoder_(CompressedFeatures(spec)); }

  // Fusion with explicit modulation (per block: frequency, temporal).
  Var<T> Fuse(const Var<T>& z, const Var<T>& code) const {
    Var<T> h = z;
    for (const auto& b : blocks_) h = b(h, code);
    return h;
  }

  NetworkOutput<T> Decode(const Var<T>& h, const Var<T>& spec, size_t out_len) const {
    NetworkOutput<T> o;
    o.features = h;
    const size_t Tn = h.dim(1), F = cfg_.bins();
    const Var<T> m = ag::Relu(mask_act_(mask_(h)));  // [1, T, F], compressed domain
    o.mask = ag::Pow(ag::Reshape(m, {Tn, F}), static_cast<T>(1.0 / cfg_.compress));
    o.phase = phase_(h);
    o.spectrum = ag::UnitPhasor(o.phase) * (o.mask * ag::Magnitude(spec));
    o.enhanced = ag::IstftOp(o.spectrum, cfg_.stft, out_len);
    o.vad = vad_(h);
    return o;
  }

  // noisy [L], code [F', C].
  NetworkOutput<T> Forward(const Var<T>& noisy, const Var<T>& code) const {
    Require(noisy.rank() == 1, "forward: expected a 1-D waveform");
    const size_t fr = cfg_.reduced_bins();
    Require(code.rank() == 2 && code.dim(0) == fr && code.dim(1) == cfg_.channels,
            "forward: audiogram code must be [" + std::to_string(fr) + ", " +
                std::to_string(cfg_.channels) + "]");
    const Var<T> spec = ag::StftOp(noisy, cfg_.stft);
    return Decode(Fuse(Encode(spec), code), spec, noisy.size());
  }

  NetworkOutput<T> Forward(const Waveform& noisy, const Audiogram& a) {
    noisy.Validate();
    Tensor<T> x(Shape{noisy.size()});
    for (size_t i = 0; i < noisy.size(); ++i) x[i] = static_cast<T>(noisy.samples[i]);
    return Forward(ag::Constant(std::move(x)), EncodeAudiogram(a));
  }

  SpectrumEncoder<T>& encoder() { return encoder_; }
  AudiogramEncoder<T>& audiogram_encoder() { return audiogram_; }
  std::vector<AmftBlock<T>>& blocks() { return blocks_; }
  SubPixelDecoder<T>& mask_decoder() { return mask_; }
  SubPixelDecoder<T>& phase_decoder() { return phase_; }
  VadEstimator<T>& vad_estimator() { return vad_; }

  template <class F>
  void Visit(const std::string& p, F&& f) {
    encoder_.Visit(nn::Join(p, "encoder"), f);
    audiogram_.Visit(nn::Join(p, "audiogram"), f);
    for (size_t i = 0; i < blocks_.size(); ++i)
      blocks_[i].Visit(nn::Join(p, "block" + std::to_string(i)), f);
    mask_.Visit(nn::Join(p, "mask"), f);
    mask_act_.Visit(nn::Join(p, "mask_act"), f);
    phase_.Visit(nn::Join(p, "phase"), f);
    vad_.Visit(nn::Join(p, "vad"), f);
  }

 private:
  ModelConfig cfg_;
  SpectrumEncoder<T> encoder_;
  AudiogramEncoder<T> audiogram_;
  std::vector<AmftBlock<T>> blocks_;
  SubPixelDecoder<T> mask_, phase_;
  nn::PRelu<T> mask_act_;
  VadEstimator<T> vad_;
};

// Metric-predicting critic over [|X|^c, |X_hat|^c, dense audiogram / 100]
// planes: four stride-2 convs with instance norm and PReLU, global average
// pooling, two linear layers, sigmoid.
template <class T>
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.Validate();
    Rng rng(seed);
    const size_t chans[] = {3, 16, 32, 64, 128};
    for (size_t i = 0; i < 4; ++i) {
      ag::Conv2dGeometry g;
      g.stride_h = g.stride_w = 2;
      g.pad_top = g.pad_bottom = g.pad_left = g.pad_right = 1;
      convs_.emplace_back(rng, chans[i], chans[i + 1], 3, 3, g);
      norms_.emplace_back(chans[i + 1]);
      acts_.emplace_back(Shape{chans[i + 1], 1, 1});
    }
    fc1_ = nn::Linear<T>(rng, 128, cfg_.disc_hidden);
    act_ = nn::PRelu<T>(Shape{cfg_.disc_hidden});
    fc2_ = nn::Linear<T>(rng, cfg_.disc_hidden, 1);
  }

  // ref, est [L]; dense_hl [F] in dB HL. Returns a scalar in [0, 1].
  Var<T> operator()(const Var<T>& ref, const Var<T>& est, const Var<T>& dense_hl) const {
    Require(ref.rank() == 1 && est.rank() == 1 && ref.size() == est.size(),
            "discriminator: reference and estimate must have equal length");
    const size_t F = cfg_.bins();
    Require(dense_hl.size() == F, "discriminator: audiogram must have one value per bin");
    const Var<T> a = Planar(ref), b = Planar(est);
    const size_t Tn = a.dim(1);
    const Var<T> hl = ag::Reshape(dense_hl * T(0.01), {1, 1, F}) +
                      ag::Constant(Tensor<T>(Shape{1, Tn, F}));
    Var<T> h = ag::Concat(std::vector<Var<T>>{a, b, hl}, 0);
    for (size_t i = 0; i < convs_.size(); ++i) h = acts_[i](norms_[i](convs_[i](h)));
    const Var<T> pooled = ag::Reshape(ag::MeanAxis(ag::Reshape(h, {h.dim(0), h.dim(1) * h.dim(2)}), 1),
                                      {1, h.dim(0)});
    return ag::Reshape(ag::Sigmoid(fc2_(act_(fc1_(pooled)))), {});
  }

  template <class F>
  void Visit(const std::string& p, F&& f) {
    for (size_t i = 0; i < convs_.size(); ++i) {
      const std::string q = nn::Join(p, "conv" + std::to_string(i));
      convs_[i].Visit(nn::Join(q, "conv"), f);
      norms_[i].Visit(nn::Join(q, "norm"), f);
      acts_[i].Visit(nn::Join(q, "act"), f);
    }
    fc1_.Visit(nn::Join(p, "fc1"), f);
    act_.Visit(nn::Join(p, "act"), f);
    fc2_.Visit(nn::Join(p, "fc2"), f);
  }

 private:
  // [L] -> [1, T, F] compressed magnitude.
  Var<T> Planar(const Var<T>& x) const {
    const Var<T> mag = ag::Magnitude(ag::StftOp(x, cfg_.stft));
    const Var<T> c = ag::Pow(mag + static_cast<T>(kMagnitudeFloor), static_cast<T>(cfg_.compress));
    return ag::Reshape(c, {1, c.dim(0), c.dim(1)});
  }

  ModelConfig cfg_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::InstanceNorm<T>> norms_;
  std::vector<nn::PRelu<T>> acts_;
  nn::Linear<T> fc1_, fc2_;
  nn::PRelu<T> act_;
};

}  // namespace hearnet
