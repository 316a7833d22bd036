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

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "hearnet/core/error.hpp"
#include "hearnet/core/tensor.hpp"
#include "hearnet/dsp/fft.hpp"

namespace hearnet {

inline constexpr double kSampleRate = 16000.0;
// Floor applied to magnitudes before any logarithm.
inline constexpr double kMagnitudeFloor = 1e-5;

// Mono signal at the fixed 16 kHz rate, nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = kSampleRate;

  Waveform() = default;
  explicit Waveform(std::vector<double> s, double rate = kSampleRate)
      : samples(std::move(s)), sample_rate(rate) {}

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const { return static_cast<double>(size()) / sample_rate; }

  void Validate() const {
    Require(sample_rate == kSampleRate,
            "waveform sample rate " + std::to_string(sample_rate) +
                " Hz is not 16000 Hz; resample the input first");
    for (double v : samples)
      Require(std::isfinite(v), "waveform contains non-finite samples");
  }
};

enum class WindowKind { kHann };

struct StftConfig {
  size_t frame_len = 512;
  size_t hop = 256;
  WindowKind window = WindowKind::kHann;

  size_t num_bins() const { return frame_len / 2 + 1; }
  // Reflect padding applied before the first sample only.
  size_t pad_start() const { return frame_len / 2; }

  bool operator==(const StftConfig&) const = default;

  // Periodic Hann.
  std::vector<double> Window() const {
    std::vector<double> w(frame_len);
    for (size_t n = 0; n < frame_len; ++n)
      w[n] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * static_cast<double>(n) /
                                  static_cast<double>(frame_len));
    return w;
  }

  void Validate() const {
    Require(dsp::IsPowerOfTwo(frame_len),
            "StftConfig: frame_len must be a power of two");
    Require(hop >= 1 && hop <= frame_len, "StftConfig: need 1 <= hop <= frame_len");
    // Overlap-add must cover every sample with non-zero squared window.
    const auto w = Window();
    for (size_t r = 0; r < hop; ++r) {
      double acc = 0;
      for (size_t n = r; n < frame_len; n += hop) acc += w[n] * w[n];
      Require(acc > 1e-8, "StftConfig: window/hop pair violates overlap-add");
    }
  }

  // Frames for a signal of `len` samples: reflect-pad frame_len/2 at the
  // start, then zero-fill the end so the last partial frame is kept.
  size_t NumFrames(size_t len) const {
    Require(len > pad_start(),
            "stft: signal of " + std::to_string(len) +
                " samples is too short (need more than " +
                std::to_string(pad_start()) + ")");
    const size_t padded = len + pad_start();
    if (padded <= frame_len) return 1;
    return 1 + (padded - frame_len + hop - 1) / hop;
  }

  size_t PaddedLength(size_t len) const {
    return (NumFrames(len) - 1) * hop + frame_len;
  }

  // Sample at padded position p.
  template <class Seq>
  double PaddedSample(const Seq& x, size_t p) const {
    const size_t pad = pad_start();
    if (p < pad) return x[pad - p];
    const size_t i = p - pad;
    return i < x.size() ? static_cast<double>(x[i]) : 0.0;
  }
};

// T x F spectrogram stored as separate real/imaginary planes.
struct ComplexSpectrogram {
  Tensor<double> real;
  Tensor<double> imag;
  StftConfig cfg;

  size_t frames() const { return real.rank() ? real.dim(0) : 0; }
  size_t bins() const { return real.rank() ? real.dim(1) : 0; }

  double Magnitude(size_t t, size_t k) const {
    return std::hypot(real.at({t, k}), imag.at({t, k}));
  }

  void Validate() const {
    Require(real.rank() == 2 && real.shape() == imag.shape(),
            "ComplexSpectrogram: planes must be identically shaped T x F");
    Require(real.dim(1) == cfg.num_bins(),
            "ComplexSpectrogram: bin count does not match frame length");
    Require(real.AllFinite() && imag.AllFinite(),
            "ComplexSpectrogram: non-finite values");
  }
};

inline ComplexSpectrogram Stft(const Waveform& x, const StftConfig& cfg = {}) {
  Require(!x.empty(), "stft: empty input");
  cfg.Validate();
  const size_t T = cfg.NumFrames(x.size());
  const size_t F = cfg.num_bins();
  const auto w = cfg.Window();
  ComplexSpectrogram out{Tensor<double>({T, F}), Tensor<double>({T, F}), cfg};
  std::vector<std::complex<double>> buf(cfg.frame_len);
  for (size_t t = 0; t < T; ++t) {
    for (size_t n = 0; n < cfg.frame_len; ++n)
      buf[n] = cfg.PaddedSample(x.samples, t * cfg.hop + n) * w[n];
    dsp::Fft(buf);
    for (size_t k = 0; k < F; ++k) {
      out.real[t * F + k] = buf[k].real();
      out.imag[t * F + k] = buf[k].imag();
    }
  }
  return out;
}

// Weighted overlap-add with squared-window normalization, trimmed or
// zero-extended to out_len samples.
inline Waveform Istft(const ComplexSpectrogram& spec, const StftConfig& cfg,
                      size_t out_len) {
  Require(spec.cfg == cfg, "istft: spectrogram was produced with a different "
                           "StftConfig");
  spec.Validate();
  const size_t T = spec.frames(), F = spec.bins(), N = cfg.frame_len;
  const auto w = cfg.Window();
  const size_t padded = (T - 1) * cfg.hop + N;
  std::vector<double> acc(padded, 0.0), norm(padded, 0.0);
  std::vector<std::complex<double>> bins(F);
  for (size_t t = 0; t < T; ++t) {
    for (size_t k = 0; k < F; ++k)
      bins[k] = {spec.real[t * F + k], spec.imag[t * F + k]};
    const auto frame = dsp::Irfft(bins, N);
    for (size_t n = 0; n < N; ++n) {
      acc[t * cfg.hop + n] += frame[n] * w[n];
      norm[t * cfg.hop + n] += w[n] * w[n];
    }
  }
  Waveform out(std::vector<double>(out_len, 0.0));
  for (size_t i = 0; i < out_len; ++i) {
    const size_t p = i + cfg.pad_start();
    if (p < padded && norm[p] > 1e-10) out.samples[i] = acc[p] / norm[p];
  }
  return out;
}

// Digital level to dB SPL: a full-scale sinusoid reads `offset_db`.
struct CalibrationOffset {
  double offset_db = 100.0;
};

// Half-open bin range [begin, end).
struct BinRange {
  size_t begin = 0;
  size_t end = 0;
  size_t size() const { return end - begin; }
};

// Per-frame level of the bins in `band`. Band power is the sum of squared
// amplitude-normalized magnitudes divided by the window's equivalent noise
// bandwidth, so a sinusoid of peak amplitude A inside the band reads
// 20*log10(A) + offset. Floored at -100 dB before the offset.
inline std::vector<double> BandSpl(const ComplexSpectrogram& spec,
                                   BinRange band, CalibrationOffset calib = {}) {
  Require(band.size() > 0, "band_spl: empty band");
  Require(band.end <= spec.bins(), "band_spl: band exceeds bin count");
  const auto w = spec.cfg.Window();
  double sum_w = 0, sum_w2 = 0;
  for (double v : w) {
    sum_w += v;
    sum_w2 += v * v;
  }
  const double enbw = static_cast<double>(w.size()) * sum_w2 / (sum_w * sum_w);
  const double amp_scale = 2.0 / sum_w;
  std::vector<double> out(spec.frames());
  const size_t F = spec.bins();
  for (size_t t = 0; t < spec.frames(); ++t) {
    double p = 0;
    for (size_t k = band.begin; k < band.end; ++k) {
      const double re = spec.real[t * F + k] * amp_scale;
      const double im = spec.imag[t * F + k] * amp_scale;
      p += re * re + im * im;
    }
    p /= enbw;
    out[t] = 10.0 * std::log10(std::max(p, 1e-10)) + calib.offset_db;
  }
  return out;
}

// magnitude = mask * |noisy|, angle = atan2(phase_imag, phase_real); a zero
// phase vector yields angle 0.
inline ComplexSpectrogram ReconstructSpectrum(const Tensor<double>& mask,
                                              const ComplexSpectrogram& noisy,
                                              const Tensor<double>& phase_real,
                                              const Tensor<double>& phase_imag) {
  noisy.Validate();
  const Shape& s = noisy.real.shape();
  Require(mask.shape() == s && phase_real.shape() == s &&
              phase_imag.shape() == s,
          "reconstruct_spectrum: shape mismatch, expected " + ShapeString(s));
  ComplexSpectrogram out{Tensor<double>(s), Tensor<double>(s), noisy.cfg};
  for (size_t i = 0; i < mask.size(); ++i) {
    Require(mask[i] >= 0, "reconstruct_spectrum: mask must be non-negative");
    const double mag = mask[i] * std::hypot(noisy.real[i], noisy.imag[i]);
    const double m = std::hypot(phase_real[i], phase_imag[i]);
    const double c = m > 0 ? phase_real[i] / m : 1.0;
    const double sn = m > 0 ? phase_imag[i] / m : 0.0;
    out.real[i] = mag * c;
    out.imag[i] = mag * sn;
  }
  return out;
}

}  // namespace hearnet
