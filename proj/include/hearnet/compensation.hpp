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

// Classical wide-dynamic-range compression driven by the FIG6 prescription.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "hearnet/audiogram.hpp"
#include "hearnet/core/error.hpp"
#include "hearnet/core/tensor.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet {

// Inputs quieter than this receive no gain.
inline constexpr double kFig6ActivationSpl = 20.0;

// FIG6 insertion gain at the three anchor input levels.
struct Fig6Anchors {
  double g40, g65, g95;
};

inline Fig6Anchors Fig6AnchorGains(double hl) {
  Fig6Anchors a{};
  if (hl < 20)
    a.g40 = 0;
  else if (hl <= 60)
    a.g40 = hl - 20;
  else
    a.g40 = 0.5 * hl + 10;
  if (hl < 20)
    a.g65 = 0;
  else if (hl <= 60)
    a.g65 = 0.6 * (hl - 20);
  else
    a.g65 = 0.8 * hl - 23;
  a.g95 = hl < 40 ? 0 : 0.1 * std::pow(hl - 40, 1.4);
  return a;
}

// Gain in dB for a band with hearing loss `hl` (dB HL) at input level
// `input_spl` (dB SPL). Linear between anchors, flat outside [40, 95], zero
// below the activation level, never negative.
inline double Fig6InsertionGain(double hl, double input_spl) {
  Require(std::isfinite(hl) && std::isfinite(input_spl),
          "fig6_insertion_gain: non-finite input");
  if (input_spl < kFig6ActivationSpl) return 0.0;
  const Fig6Anchors a = Fig6AnchorGains(hl);
  double g;
  if (input_spl <= 40)
    g = a.g40;
  else if (input_spl <= 65)
    g = a.g40 + (a.g65 - a.g40) * (input_spl - 40) / 25.0;
  else if (input_spl <= 95)
    g = a.g65 + (a.g95 - a.g65) * (input_spl - 65) / 30.0;
  else
    g = a.g95;
  return std::max(g, 0.0);
}

// Six bands, one per audiometric frequency. Edges sit at geometric means of
// adjacent centers; the last band runs to Nyquist inclusive.
struct BandPlan {
  std::array<BinRange, 6> bands{};

  static BandPlan Default(const StftConfig& cfg = {},
                          double sample_rate = kSampleRate) {
    const auto& f = kAudiometricFreqs;
    std::array<double, 5> edges{};
    for (size_t i = 0; i < 5; ++i) edges[i] = std::sqrt(f[i] * f[i + 1]);
    const size_t F = cfg.num_bins();
    const double df = sample_rate / static_cast<double>(cfg.frame_len);
    BandPlan plan;
    size_t b = 0;
    plan.bands[0].begin = 0;
    for (size_t k = 0; k < F; ++k) {
      const double fk = static_cast<double>(k) * df;
      while (b < 5 && fk >= edges[b]) {
        plan.bands[b].end = k;
        plan.bands[++b].begin = k;
      }
    }
    plan.bands[b].end = F;
    plan.Validate(F, df);
    return plan;
  }

  size_t BandOf(size_t bin) const {
    for (size_t b = 0; b < 6; ++b)
      if (bin >= bands[b].begin && bin < bands[b].end) return b;
    throw ValidationError("BandPlan: bin outside plan");
  }

  void Validate(size_t num_bins, double bin_hz) const {
    Require(bands[0].begin == 0 && bands[5].end == num_bins,
            "BandPlan: bands must cover [0, F)");
    for (size_t b = 0; b < 6; ++b) {
      Require(bands[b].size() > 0, "BandPlan: empty band");
      if (b) Require(bands[b].begin == bands[b - 1].end, "BandPlan: gap");
      const size_t center =
          static_cast<size_t>(std::lround(kAudiometricFreqs[b] / bin_hz));
      Require(center >= bands[b].begin && center < bands[b].end,
              "BandPlan: band does not contain its center frequency");
    }
  }
};

struct WdrcConfig {
  StftConfig stft;
  BandPlan plan = BandPlan::Default();
  CalibrationOffset calib;
  bool smoothing = true;
  double attack_ms = 5.0;
  double release_ms = 50.0;
  double max_gain_db = 60.0;
};

// Per-frame, per-band gain in dB (T x 6).
using GainTrajectory = Tensor<double>;

// Band gains for every frame of `spec`: measured band SPL through FIG6,
// optionally smoothed with a one-pole attack/release follower, capped.
inline GainTrajectory WdrcGains(const ComplexSpectrogram& spec,
                                const Audiogram& audiogram,
                                const WdrcConfig& cfg) {
  audiogram.Validate();
  const size_t T = spec.frames();
  GainTrajectory g(Shape{T, 6});
  const double frame_s = static_cast<double>(cfg.stft.hop) / kSampleRate;
  const double c_attack = std::exp(-frame_s / (cfg.attack_ms * 1e-3));
  const double c_release = std::exp(-frame_s / (cfg.release_ms * 1e-3));
  for (size_t b = 0; b < 6; ++b) {
    const auto spl = BandSpl(spec, cfg.plan.bands[b], cfg.calib);
    double state = 0;
    for (size_t t = 0; t < T; ++t) {
      const double target = std::min(Fig6InsertionGain(audiogram[b], spl[t]),
                                     cfg.max_gain_db);
      if (!cfg.smoothing || t == 0) {
        state = target;
      } else {
        // Falling gain means a rising level: attack.
        const double c = target < state ? c_attack : c_release;
        state = c * state + (1 - c) * target;
      }
      g.at({t, b}) = state;
    }
  }
  return g;
}

// Scales every bin of band b at frame t by 10^(gain/20).
inline ComplexSpectrogram ApplyBandGains(const ComplexSpectrogram& spec,
                                         const GainTrajectory& gains_db,
                                         const BandPlan& plan) {
  Require(gains_db.rank() == 2 && gains_db.dim(0) == spec.frames() &&
              gains_db.dim(1) == 6,
          "apply_band_gains: gain trajectory must be T x 6");
  ComplexSpectrogram out = spec;
  const size_t F = spec.bins();
  for (size_t t = 0; t < spec.frames(); ++t)
    for (size_t b = 0; b < 6; ++b) {
      const double lin = std::pow(10.0, gains_db.at({t, b}) / 20.0);
      for (size_t k = plan.bands[b].begin; k < plan.bands[b].end; ++k) {
        out.real[t * F + k] *= lin;
        out.imag[t * F + k] *= lin;
      }
    }
  return out;
}

struct WdrcResult {
  Waveform output;
  GainTrajectory gains_db;
};

inline WdrcResult WdrcCompensate(const Waveform& x, const Audiogram& audiogram,
                                 const WdrcConfig& cfg = {}) {
  x.Validate();
  const auto spec = Stft(x, cfg.stft);
  WdrcResult r;
  r.gains_db = WdrcGains(spec, audiogram, cfg);
  r.output = Istft(ApplyBandGains(spec, r.gains_db, cfg.plan), cfg.stft,
                   x.size());
  return r;
}

// Per-sample weight of the speech source: frame l owns the samples nearest
// its center l*hop, and a one-hop moving average turns run boundaries into
// linear cross-fades. Interiors stay exactly 0 or 1.
inline std::vector<double> VadSampleWeights(const std::vector<bool>& vad,
                                            size_t len, const StftConfig& cfg) {
  const size_t hop = cfg.hop;
  std::vector<int> sel(len);
  for (size_t n = 0; n < len; ++n) {
    const size_t l = std::min(vad.size() - 1, (n + hop / 2) / hop);
    sel[n] = vad[l] ? 1 : 0;
  }
  std::vector<long> prefix(len + 1, 0);
  for (size_t n = 0; n < len; ++n) prefix[n + 1] = prefix[n] + sel[n];
  std::vector<double> w(len);
  const long half = static_cast<long>(hop / 2);
  const long L = static_cast<long>(len);
  for (long n = 0; n < L; ++n) {
    const long a = n - half, b = n - half + static_cast<long>(hop);
    // Edges replicate the first/last selector value.
    long count = prefix[std::clamp(b, 0L, L)] - prefix[std::clamp(a, 0L, L)];
    if (a < 0) count += -a * sel[0];
    if (b > L) count += (b - L) * sel[len - 1];
    w[n] = static_cast<double>(count) / static_cast<double>(hop);
  }
  return w;
}

// Speech frames from `compensated`, non-speech frames from `original`,
// cross-faded over one hop where the label changes.
inline Waveform VadGuardedTarget(const Waveform& compensated,
                                 const Waveform& original,
                                 const std::vector<bool>& vad,
                                 const StftConfig& cfg = {}) {
  Require(compensated.size() == original.size(),
          "vad_guarded_target: length mismatch");
  Require(!vad.empty() && vad.size() == cfg.NumFrames(original.size()),
          "vad_guarded_target: vad grid does not match the STFT frame grid");
  const auto w = VadSampleWeights(vad, original.size(), cfg);
  Waveform out(std::vector<double>(original.size()), original.sample_rate);
  for (size_t n = 0; n < original.size(); ++n) {
    if (w[n] == 1.0)
      out.samples[n] = compensated.samples[n];
    else if (w[n] == 0.0)
      out.samples[n] = original.samples[n];
    else
      out.samples[n] =
          w[n] * compensated.samples[n] + (1 - w[n]) * original.samples[n];
  }
  return out;
}

}  // namespace hearnet
