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

// Procedural stand-ins for speech and noise recordings. They let the corpus
// pipeline, tests and demos run without any downloaded data.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "hearnet/core/rng.hpp"
#include "hearnet/dsp/spectral.hpp"
#include "hearnet/synthesis.hpp"

namespace hearnet {

// Voiced "syllables": a jittered harmonic series under two formant-like
// resonances and a raised-cosine envelope, separated by short pauses.
inline Waveform SpeechLike(Rng& rng, double seconds, double level_db = -25.0) {
  const size_t n = static_cast<size_t>(seconds * kSampleRate);
  std::vector<double> x(n, 0.0);
  size_t pos = static_cast<size_t>(rng.Uniform(0.0, 0.05) * kSampleRate);
  while (pos < n) {
    const size_t len = static_cast<size_t>(rng.Uniform(0.18, 0.40) * kSampleRate);
    const double f0 = rng.Uniform(95, 230);
    const double f1 = rng.Uniform(300, 900), f2 = rng.Uniform(900, 2600);
    const double glide = rng.Uniform(-0.25, 0.25);
    double phase = 0;
    for (size_t i = 0; i < len && pos + i < n; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double env = std::sin(std::numbers::pi * u);
      const double f = f0 * (1 + glide * u);
      phase += 2 * std::numbers::pi * f / kSampleRate;
      double v = 0;
      for (int h = 1; h * f < 7600; ++h) {
        const double fh = h * f;
        const double r1 = 1.0 / (1 + std::pow((fh - f1) / 150, 2));
        const double r2 = 0.6 / (1 + std::pow((fh - f2) / 250, 2));
        v += (r1 + r2 + 0.02) * std::sin(h * phase) / std::sqrt(double(h));
      }
      x[pos + i] += env * (v + 0.05 * rng.Normal());
    }
    pos += len + static_cast<size_t>(rng.Uniform(0.03, 0.15) * kSampleRate);
  }
  Waveform w(std::move(x));
  if (RmsDb(w) > kLevelFloorDb) {
    const double g = std::pow(10.0, (level_db - RmsDb(w)) / 20.0);
    for (double& v : w.samples) v *= g;
  }
  return w;
}

enum class NoiseKind { kPink, kHum, kBabble, kBursts };

inline const char* ToString(NoiseKind k) {
  switch (k) {
    case NoiseKind::kPink:
      return "pink";
    case NoiseKind::kHum:
      return "hum";
    case NoiseKind::kBabble:
      return "babble";
    case NoiseKind::kBursts:
      return "bursts";
  }
  return "?";
}

inline Waveform NoiseLike(Rng& rng, NoiseKind kind, double seconds,
                          double level_db = -30.0) {
  const size_t n = static_cast<size_t>(seconds * kSampleRate);
  std::vector<double> x(n, 0.0);
  switch (kind) {
    case NoiseKind::kPink: {
      // Paul Kellet's economy filter.
      double b0 = 0, b1 = 0, b2 = 0;
      for (auto& v : x) {
        const double w = rng.Normal();
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        v = b0 + b1 + b2 + w * 0.1848;
      }
      break;
    }
    case NoiseKind::kHum: {
      const double f = rng.Uniform(48, 62);
      for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        for (int h = 1; h <= 8; ++h)
          x[i] += std::sin(2 * std::numbers::pi * f * h * t) / h;
        x[i] += 0.1 * rng.Normal();
      }
      break;
    }
    case NoiseKind::kBabble: {
      for (int talker = 0; talker < 5; ++talker) {
        const auto s = SpeechLike(rng, seconds, -30);
        for (size_t i = 0; i < n; ++i) x[i] += s.samples[i];
      }
      break;
    }
    case NoiseKind::kBursts: {
      double env = 0;
      for (auto& v : x) {
        if (rng.Uniform() < 8.0 / kSampleRate) env = 1.0;
        env *= 0.9995;
        v = (0.05 + env) * rng.Normal();
      }
      break;
    }
  }
  Waveform w(std::move(x));
  const double g = std::pow(10.0, (level_db - RmsDb(w)) / 20.0);
  for (double& v : w.samples) v *= g;
  return w;
}

// Pools of `n_speech` and `n_noise` procedural recordings.
inline void DemoPools(uint64_t seed, size_t n_speech, size_t n_noise,
                      double seconds, SourcePool& speech, SourcePool& noise) {
  for (size_t i = 0; i < n_speech; ++i) {
    Rng r = Rng::Child(seed, i);
    speech.Add("speech_" + std::to_string(i),
               SpeechLike(r, seconds, r.Uniform(-38, -18)));
  }
  for (size_t i = 0; i < n_noise; ++i) {
    Rng r = Rng::Child(seed + 1, i);
    const auto kind = static_cast<NoiseKind>(i % 4);
    noise.Add(std::string("noise_") + ToString(kind) + "_" + std::to_string(i),
              NoiseLike(r, kind, seconds));
  }
}

// A spread of audiogram shapes: flat, sloping, and rising losses.
inline std::vector<Audiogram> DemoAudiograms(uint64_t seed, size_t n) {
  std::vector<Audiogram> out;
  for (size_t i = 0; i < n; ++i) {
    Rng r = Rng::Child(seed, i);
    const double base = r.Uniform(0, 60), slope = r.Uniform(-5, 15);
    std::array<double, 6> h{};
    for (size_t k = 0; k < 6; ++k)
      h[k] = std::clamp(base + slope * k + r.Uniform(-5, 5), -10.0, 120.0);
    out.emplace_back(h);
  }
  return out;
}

}  // namespace hearnet
