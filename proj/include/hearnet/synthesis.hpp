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

// Training-sample synthesis: speech crop with activity check, random level
// transform, noise augmentation and SNR mixing, then WDRC compensation of the
// clean speech guarded by voice activity.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hearnet/audiogram.hpp"
#include "hearnet/compensation.hpp"
#include "hearnet/core/error.hpp"
#include "hearnet/core/rng.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet {

inline constexpr double kLevelFloorDb = -100.0;

// 20*log10(RMS), floored at -100 dBFS.
inline double RmsDb(const Waveform& x) {
  Require(!x.empty(), "rms_dB: empty waveform");
  double ms = 0;
  for (double v : x.samples) ms += v * v;
  ms /= static_cast<double>(x.size());
  if (ms <= 0) return kLevelFloorDb;
  return std::max(10.0 * std::log10(ms), kLevelFloorDb);
}

// Energy detector on the STFT frame grid: a frame is active when its
// windowed energy is within `range_db` of the loudest frame (and above an
// absolute floor); each active frame extends activity `hangover` frames on.
struct ActivityDetector {
  StftConfig grid;
  double range_db = 40.0;
  size_t hangover = 2;
  // Mean-square floor, equivalent to -100 dBFS.
  double floor_ms = 1e-10;

  std::vector<bool> Labels(const Waveform& x) const {
    Require(!x.empty(), "activity: empty waveform");
    const size_t T = grid.NumFrames(x.size());
    const auto w = grid.Window();
    double wsum2 = 0;
    for (double v : w) wsum2 += v * v;
    std::vector<double> e(T, 0.0);
    for (size_t t = 0; t < T; ++t) {
      double acc = 0;
      for (size_t n = 0; n < grid.frame_len; ++n) {
        const double s = grid.PaddedSample(x.samples, t * grid.hop + n) * w[n];
        acc += s * s;
      }
      e[t] = acc / wsum2;
    }
    const double peak = *std::max_element(e.begin(), e.end());
    const double thr = std::max(peak * std::pow(10.0, -range_db / 10.0), floor_ms);
    std::vector<bool> raw(T), out(T, false);
    for (size_t t = 0; t < T; ++t) raw[t] = e[t] > thr;
    for (size_t t = 0; t < T; ++t) {
      if (!raw[t]) continue;
      for (size_t h = 0; h <= hangover && t + h < T; ++h) out[t + h] = true;
    }
    return out;
  }

  double Fraction(const Waveform& x) const {
    const auto v = Labels(x);
    return static_cast<double>(std::count(v.begin(), v.end(), true)) /
           static_cast<double>(v.size());
  }
};

inline double ActivityFraction(const Waveform& x,
                               const ActivityDetector& det = {}) {
  return det.Fraction(x);
}

inline std::vector<bool> VadLabels(const Waveform& x,
                                   const ActivityDetector& det = {}) {
  return det.Labels(x);
}

enum class LevelMode { kRelease = 0, kAttack = 1, kBypass = 2 };

inline const char* ToString(LevelMode m) {
  switch (m) {
    case LevelMode::kRelease:
      return "release";
    case LevelMode::kAttack:
      return "attack";
    case LevelMode::kBypass:
      return "bypass";
  }
  return "?";
}

inline LevelMode DrawMode(Rng& rng, const std::array<double, 3>& probs = {
                                        0.4, 0.3, 0.3}) {
  return static_cast<LevelMode>(rng.Categorical(probs));
}

struct LevelResult {
  Waveform output;
  size_t clipped = 0;
};

// Brings `s` to `target_db` dBFS RMS. The linear gain is reached through a
// linear amplitude ramp over the first `ramp_s` seconds. Output is clipped to
// [-1, 1]; the number of clipped samples is reported.
inline LevelResult ApplyLevel(const Waveform& s, double target_db,
                              double ramp_s = 0.05) {
  Require(target_db <= 0.0, "apply_level: target level above 0 dBFS");
  Require(ramp_s >= 0.0, "apply_level: negative ramp");
  const double gain = std::pow(10.0, (target_db - RmsDb(s)) / 20.0);
  const size_t ramp = static_cast<size_t>(std::lround(ramp_s * s.sample_rate));
  LevelResult r{Waveform(std::vector<double>(s.size()), s.sample_rate), 0};
  for (size_t n = 0; n < s.size(); ++n) {
    const double m =
        n < ramp ? 1.0 + (gain - 1.0) * static_cast<double>(n) /
                             static_cast<double>(ramp)
                 : gain;
    double v = s.samples[n] * m;
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++r.clipped;
    }
    r.output.samples[n] = v;
  }
  return r;
}

struct MixResult {
  Waveform noisy;
  Waveform scaled_noise;
};

// Scales `noise` so that full-utterance powers satisfy
// 10*log10(P_speech / P_noise) = snr_db, then adds it to `speech`.
inline MixResult MixAtSnr(const Waveform& speech, const Waveform& noise,
                          double snr_db) {
  Require(speech.size() == noise.size(), "mix_at_snr: length mismatch");
  Require(!speech.empty(), "mix_at_snr: empty input");
  double ps = 0, pn = 0;
  for (double v : speech.samples) ps += v * v;
  for (double v : noise.samples) pn += v * v;
  Require(ps > 0, "mix_at_snr: speech is silent");
  Require(pn > 0, "mix_at_snr: noise is silent");
  const double scale = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  MixResult r;
  r.scaled_noise = Waveform(std::vector<double>(noise.size()), noise.sample_rate);
  r.noisy = Waveform(std::vector<double>(noise.size()), noise.sample_rate);
  for (size_t i = 0; i < noise.size(); ++i) {
    r.scaled_noise.samples[i] = noise.samples[i] * scale;
    r.noisy.samples[i] = speech.samples[i] + r.scaled_noise.samples[i];
  }
  return r;
}

// Realized SNR in dB between a speech signal and an additive noise signal.
inline double MeasuredSnr(const Waveform& speech, const Waveform& noise) {
  double ps = 0, pn = 0;
  for (double v : speech.samples) ps += v * v;
  for (double v : noise.samples) pn += v * v;
  return 10.0 * std::log10(ps / pn);
}

struct SynthConfig {
  double duration_s = 5.0;
  std::array<double, 3> mode_probs{0.4, 0.3, 0.3};
  double gaussian_prob = 0.7;
  std::array<double, 2> snr_range{-5.0, 15.0};
  uint64_t seed = 0;
  double min_activity = 0.6;
  double ramp_s = 0.05;
  double release_ceiling_db = -10.0;
  double attack_floor_db = -35.0;
  double level_margin_db = 5.0;
  size_t max_attempts = 1000;
  WdrcConfig wdrc;
  ActivityDetector detector;

  size_t num_samples() const {
    return static_cast<size_t>(std::lround(duration_s * kSampleRate));
  }

  void Validate() const {
    double sum = 0;
    for (double p : mode_probs) {
      Require(p >= 0 && std::isfinite(p), "SynthConfig: bad mode probability");
      sum += p;
    }
    Require(std::abs(sum - 1.0) < 1e-9, "SynthConfig: mode_probs must sum to 1");
    Require(gaussian_prob >= 0 && gaussian_prob <= 1,
            "SynthConfig: gaussian_prob outside [0, 1]");
    Require(snr_range[0] <= snr_range[1], "SynthConfig: snr bounds out of order");
    Require(duration_s > 0 && num_samples() > wdrc.stft.frame_len,
            "SynthConfig: duration too short for the STFT frame");
  }
};

// Named waveforms sampled uniformly.
struct SourcePool {
  std::vector<std::string> ids;
  std::vector<Waveform> waves;

  void Add(std::string id, Waveform w) {
    ids.push_back(std::move(id));
    waves.push_back(std::move(w));
  }
  size_t size() const { return waves.size(); }
  bool empty() const { return waves.empty(); }
};

struct SynthMeta {
  LevelMode mode = LevelMode::kBypass;          // as drawn
  LevelMode applied_mode = LevelMode::kBypass;  // after the release fallback
  bool release_fallback = false;
  double speech_rms_db = 0;
  double target_level_db = 0;  // RMS the level transform aims for
  bool gaussian_added = false;
  double gaussian_level_db = 0;
  double snr_db = 0;
  double activity = 0;
  std::string speech_id;
  size_t speech_offset = 0;
  std::string noise_id;
  size_t noise_offset = 0;
  size_t audiogram_index = 0;
  size_t crop_attempts = 0;
  size_t clipped_samples = 0;
  uint64_t seed = 0;
  uint64_t index = 0;
};

struct SynthSample {
  Waveform noisy;
  Audiogram audiogram;
  Waveform target;
  // Level-transformed clean speech before compensation.
  Waveform clean;
  // Noise component of `noisy` after SNR scaling.
  Waveform noise;
  std::vector<bool> vad;
  SynthMeta meta;
};

inline Waveform CropOrTile(const Waveform& w, size_t offset, size_t len) {
  std::vector<double> out(len);
  for (size_t i = 0; i < len; ++i) out[i] = w.samples[(offset + i) % w.size()];
  return Waveform(std::move(out), w.sample_rate);
}

inline SynthSample SynthesizeSample(const SourcePool& speech,
                                    const SourcePool& noise,
                                    const std::vector<Audiogram>& audiograms,
                                    const SynthConfig& cfg, Rng& rng) {
  cfg.Validate();
  Require(!speech.empty() && !noise.empty() && !audiograms.empty(),
          "synthesize_sample: empty source pool");
  const size_t D = cfg.num_samples();
  SynthSample out;
  SynthMeta& m = out.meta;

  // 1. Level mode, then a speech crop with enough activity whose level
  //    interval for that mode is non-empty (release falls back to bypass).
  m.mode = DrawMode(rng, cfg.mode_probs);
  Waveform s;
  for (;;) {
    if (++m.crop_attempts > cfg.max_attempts)
      throw RuntimeFailure(
          "synthesize_sample: speech pool exhausted; no crop reached the "
          "activity threshold within max_attempts");
    const size_t si = rng.Index(speech.size());
    const Waveform& s0 = speech.waves[si];
    if (s0.size() < D) continue;
    const size_t off = rng.Index(s0.size() - D + 1);
    s = CropOrTile(s0, off, D);
    m.activity = cfg.detector.Fraction(s);
    if (m.activity < cfg.min_activity) continue;
    m.speech_rms_db = RmsDb(s);
    if (m.mode == LevelMode::kAttack &&
        cfg.attack_floor_db >= m.speech_rms_db - cfg.level_margin_db)
      continue;
    m.speech_id = speech.ids[si];
    m.speech_offset = off;
    break;
  }

  m.applied_mode = m.mode;
  if (m.mode == LevelMode::kRelease &&
      m.speech_rms_db + cfg.level_margin_db >= cfg.release_ceiling_db) {
    m.applied_mode = LevelMode::kBypass;
    m.release_fallback = true;
  }
  switch (m.applied_mode) {
    case LevelMode::kRelease:
      m.target_level_db =
          rng.Uniform(m.speech_rms_db + cfg.level_margin_db, cfg.release_ceiling_db);
      break;
    case LevelMode::kAttack:
      m.target_level_db =
          rng.Uniform(cfg.attack_floor_db, m.speech_rms_db - cfg.level_margin_db);
      break;
    case LevelMode::kBypass:
      m.target_level_db = m.speech_rms_db;
      break;
  }
  if (m.applied_mode == LevelMode::kBypass) {
    out.clean = s;
  } else {
    auto lr = ApplyLevel(s, m.target_level_db, cfg.ramp_s);
    out.clean = std::move(lr.output);
    m.clipped_samples = lr.clipped;
  }

  // 2. Noise crop, optional white Gaussian augmentation, SNR mixing.
  const size_t ni = rng.Index(noise.size());
  const Waveform& e0 = noise.waves[ni];
  m.noise_id = noise.ids[ni];
  m.noise_offset = e0.size() > D ? rng.Index(e0.size() - D + 1) : 0;
  Waveform e = CropOrTile(e0, m.noise_offset, D);
  m.gaussian_added = rng.Uniform() < cfg.gaussian_prob;
  if (m.gaussian_added) {
    const double erms = RmsDb(e);
    m.gaussian_level_db = rng.Uniform(erms - 10.0, erms);
    const double sigma = std::pow(10.0, m.gaussian_level_db / 20.0);
    for (double& v : e.samples) v += sigma * rng.Normal();
  }
  m.snr_db = rng.Uniform(cfg.snr_range[0], cfg.snr_range[1]);
  auto mix = MixAtSnr(out.clean, e, m.snr_db);
  out.noisy = std::move(mix.noisy);
  out.noise = std::move(mix.scaled_noise);

  // 3. Compensation target guarded by voice activity of the clean speech.
  m.audiogram_index = rng.Index(audiograms.size());
  out.audiogram = audiograms[m.audiogram_index];
  out.vad = cfg.detector.Labels(out.clean);
  const auto comp = WdrcCompensate(out.clean, out.audiogram, cfg.wdrc);
  out.target = VadGuardedTarget(comp.output, out.clean, out.vad, cfg.wdrc.stft);
  return out;
}

// Synthesizes samples [0, n) with per-index child generators so the result
// does not depend on `workers`. `sink` runs on worker threads.
inline void SynthesizeCorpus(
    const SourcePool& speech, const SourcePool& noise,
    const std::vector<Audiogram>& audiograms, const SynthConfig& cfg, size_t n,
    size_t workers, const std::function<void(size_t, SynthSample&&)>& sink) {
  Require(n > 0, "synthesize_corpus: sample count must be positive");
  cfg.Validate();
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto work = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        Rng rng = Rng::Child(cfg.seed, i);
        SynthSample s = SynthesizeSample(speech, noise, audiograms, cfg, rng);
        s.meta.seed = cfg.seed;
        s.meta.index = i;
        sink(i, std::move(s));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!err) err = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  workers = std::max<size_t>(1, std::min(workers, n));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace hearnet
