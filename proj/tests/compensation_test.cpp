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

#include "hearnet/compensation.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace hearnet {
namespace {

using testing::Tone;
using testing::WhiteNoise;

TEST(Fig6, WorkedExamples) {
  for (double spl : {10.0, 40.0, 65.0, 95.0, 120.0})
    EXPECT_EQ(Fig6InsertionGain(10, spl), 0.0);
  EXPECT_DOUBLE_EQ(Fig6InsertionGain(40, 40), 20.0);
  EXPECT_DOUBLE_EQ(Fig6InsertionGain(40, 65), 12.0);
  EXPECT_DOUBLE_EQ(Fig6InsertionGain(40, 52.5), 16.0);
  EXPECT_EQ(Fig6InsertionGain(50, 10), 0.0);
  // Flat outside the anchors.
  EXPECT_DOUBLE_EQ(Fig6InsertionGain(70, 30), 0.5 * 70 + 10);
  EXPECT_DOUBLE_EQ(Fig6InsertionGain(70, 110), 0.1 * std::pow(30.0, 1.4));
}

TEST(Fig6, MonotoneInHearingLoss) {
  for (int spl = 40; spl <= 120; ++spl)
    for (int hl = 20; hl < 100; ++hl)
      EXPECT_LE(Fig6InsertionGain(hl, spl), Fig6InsertionGain(hl + 1, spl))
          << "hl=" << hl << " spl=" << spl;
}

TEST(Fig6, GainFallsWithLevel) {
  for (int hl = 21; hl <= 100; ++hl) {
    EXPECT_GE(Fig6InsertionGain(hl, 40), Fig6InsertionGain(hl, 65));
    EXPECT_GE(Fig6InsertionGain(hl, 65), Fig6InsertionGain(hl, 95));
    for (int spl = 40; spl < 120; ++spl)
      EXPECT_GE(Fig6InsertionGain(hl, spl) + 1e-12,
                Fig6InsertionGain(hl, spl + 1));
  }
}

TEST(Fig6, ReversalAboveOneHundredTenIsAPropertyOfTheRule) {
  // 0.5*HL + 10 < 0.8*HL - 23 once HL > 110.
  EXPECT_LT(Fig6InsertionGain(115, 40), Fig6InsertionGain(115, 65));
  EXPECT_DOUBLE_EQ(Fig6InsertionGain(110, 40), Fig6InsertionGain(110, 65));
}

TEST(Fig6, ContinuousAwayFromActivation) {
  for (int hl = -10; hl <= 120; hl += 5)
    for (double spl = 20.0; spl < 130; spl += 0.25) {
      const double a = Fig6InsertionGain(hl, spl);
      const double b = Fig6InsertionGain(hl, spl + 1e-7);
      EXPECT_NEAR(a, b, 1e-5) << hl << " " << spl;
    }
  for (int hl = -10; hl <= 120; ++hl)
    for (int spl = -20; spl < 20; ++spl)
      EXPECT_EQ(Fig6InsertionGain(hl, spl), 0.0);
}

TEST(BandPlan, DefaultEdges) {
  const auto p = BandPlan::Default();
  // Edges at sqrt(250*500)=353.6 Hz etc. with 31.25 Hz bins.
  const size_t expect[7] = {0, 12, 23, 46, 91, 182, 257};
  for (size_t b = 0; b < 6; ++b) {
    EXPECT_EQ(p.bands[b].begin, expect[b]);
    EXPECT_EQ(p.bands[b].end, expect[b + 1]);
  }
  EXPECT_EQ(p.BandOf(32), 2u);
  EXPECT_EQ(p.BandOf(256), 5u);
}

TEST(Wdrc, ZeroAudiogramIsTransparent) {
  Rng rng(2);
  const auto x = WhiteNoise(rng, 0.1, 16000);
  const auto r = WdrcCompensate(x, Audiogram::Flat(0));
  double e = 0;
  for (size_t i = 0; i < x.size(); ++i)
    e = std::max(e, std::abs(r.output.samples[i] - x.samples[i]));
  EXPECT_LT(e, 1e-4);
  for (size_t i = 0; i < r.gains_db.size(); ++i) EXPECT_EQ(r.gains_db[i], 0.0);
}

TEST(Wdrc, SilenceStaysSilent) {
  const auto r = WdrcCompensate(testing::Silence(8000), Audiogram::Flat(60));
  for (double v : r.output.samples) EXPECT_EQ(v, 0.0);
}

TEST(Wdrc, ToneAtSixtyFiveGetsTwelveDb) {
  // A 1 kHz tone reading 65 dB SPL in band 2 with 40 dB HL there.
  const double amp = std::pow(10.0, (65.0 - 100.0) / 20.0);
  const auto x = Tone(1000, amp, 32000);
  WdrcConfig cfg;
  const auto r = WdrcCompensate(x, Audiogram({0, 0, 40, 0, 0, 0}), cfg);
  const auto in = BandSpl(Stft(x), cfg.plan.bands[2]);
  const auto out = BandSpl(Stft(r.output), cfg.plan.bands[2]);
  const size_t t = in.size() / 2;
  EXPECT_NEAR(in[t], 65.0, 0.05);
  EXPECT_NEAR(out[t] - in[t], Fig6InsertionGain(40, in[t]), 0.5);
  EXPECT_NEAR(out[t] - in[t], 12.0, 0.5);
}

TEST(Wdrc, SmoothingOffIsFramewise) {
  Rng rng(3);
  auto x = WhiteNoise(rng, 0.05, 8000);
  for (size_t i = 4000; i < 8000; ++i) x.samples[i] *= 10;
  WdrcConfig cfg;
  cfg.smoothing = false;
  const auto spec = Stft(x);
  const Audiogram a({30, 40, 50, 60, 70, 80});
  const auto g = WdrcGains(spec, a, cfg);
  for (size_t b = 0; b < 6; ++b) {
    const auto spl = BandSpl(spec, cfg.plan.bands[b]);
    for (size_t t = 0; t < spec.frames(); ++t)
      EXPECT_EQ(g.at({t, b}), std::min(Fig6InsertionGain(a[b], spl[t]), 60.0));
  }
}

TEST(Wdrc, AttackFasterThanRelease) {
  // A level step up then down: the gain must drop quickly and recover slowly.
  std::vector<double> s(48000);
  for (size_t i = 0; i < s.size(); ++i) {
    const double amp = (i >= 16000 && i < 32000) ? 0.3 : 0.003;
    s[i] = amp * std::sin(2 * std::numbers::pi * 1000 * i / 16000.0);
  }
  WdrcConfig cfg;
  const auto r = WdrcCompensate(Waveform(s), Audiogram::Flat(60), cfg);
  cfg.smoothing = false;
  const auto raw = WdrcGains(Stft(Waveform(s)), Audiogram::Flat(60), cfg);
  const double lo = raw.at({90, 2}), hi = raw.at({170, 2});
  ASSERT_GT(hi - lo, 5.0);
  // Frames from the raw gain settling to the smoothed gain getting within
  // 10% of the step.
  auto lag = [&](size_t from, double settled) {
    size_t t_raw = from, t_s = from;
    while (std::abs(raw.at({t_raw, 2}) - settled) > 0.1) ++t_raw;
    while (std::abs(r.gains_db.at({t_s, 2}) - settled) > 0.1 * (hi - lo)) ++t_s;
    return static_cast<long>(t_s) - static_cast<long>(t_raw);
  };
  // 16 ms frames: attack (5 ms) settles at once, release (50 ms) takes
  // log(0.1) / (-16/50) ~ 7 frames.
  EXPECT_LE(lag(60, lo), 1);
  EXPECT_GE(lag(122, hi), 5);
  for (size_t i = 0; i < r.gains_db.size(); ++i)
    EXPECT_LE(r.gains_db[i], 60.0);
}

TEST(Wdrc, MaskThenGainEqualsCombinedMask) {
  Rng rng(4);
  const auto y = WhiteNoise(rng, 0.1, 6000);
  const auto Y = Stft(y);
  Tensor<double> m(Y.real.shape());
  for (size_t i = 0; i < m.size(); ++i) m[i] = rng.Uniform();
  ComplexSpectrogram masked = Y;
  for (size_t i = 0; i < m.size(); ++i) {
    masked.real[i] *= m[i];
    masked.imag[i] *= m[i];
  }
  WdrcConfig cfg;
  const Audiogram a({20, 30, 45, 60, 70, 75});
  const auto g = WdrcGains(masked, a, cfg);
  const auto two_step = Istft(ApplyBandGains(masked, g, cfg.plan), cfg.stft, 6000);
  ComplexSpectrogram combined = Y;
  const size_t F = Y.bins();
  for (size_t t = 0; t < Y.frames(); ++t)
    for (size_t k = 0; k < F; ++k) {
      const double lin =
          m[t * F + k] * std::pow(10.0, g.at({t, cfg.plan.BandOf(k)}) / 20);
      combined.real[t * F + k] *= lin;
      combined.imag[t * F + k] *= lin;
    }
  const auto one_step = Istft(combined, cfg.stft, 6000);
  for (size_t i = 0; i < 6000; ++i)
    EXPECT_NEAR(two_step.samples[i], one_step.samples[i], 1e-10);
}

TEST(VadGuardedTarget, AllTrueAndAllFalse) {
  Rng rng(5);
  const auto c = WhiteNoise(rng, 0.2, 5000);
  const auto o = WhiteNoise(rng, 0.2, 5000);
  const size_t T = StftConfig{}.NumFrames(5000);
  EXPECT_EQ(VadGuardedTarget(c, o, std::vector<bool>(T, true)).samples, c.samples);
  EXPECT_EQ(VadGuardedTarget(c, o, std::vector<bool>(T, false)).samples, o.samples);
  EXPECT_THROW(VadGuardedTarget(c, o, std::vector<bool>(T + 1, true)),
               ValidationError);
  EXPECT_THROW(VadGuardedTarget(c, WhiteNoise(rng, 0.2, 4000),
                                std::vector<bool>(T, true)),
               ValidationError);
}

TEST(VadGuardedTarget, AlternatingRunsAreExactInsideConvexAtSeams) {
  Rng rng(6);
  const size_t n = 16000, hop = 256;
  const auto c = WhiteNoise(rng, 0.2, n);
  const auto o = WhiteNoise(rng, 0.2, n);
  const size_t T = StftConfig{}.NumFrames(n);
  std::vector<bool> vad(T);
  for (size_t t = 0; t < T; ++t) vad[t] = (t / 5) % 2 == 0;
  const auto y = VadGuardedTarget(c, o, vad);
  // Label changes between frames l-1 and l sit at sample l*hop - hop/2.
  std::vector<long> seams;
  for (size_t l = 1; l < T; ++l)
    if (vad[l] != vad[l - 1]) seams.push_back(static_cast<long>(l * hop - hop / 2));
  for (size_t i = 0; i < n; ++i) {
    long dist = 1L << 40;
    for (long s : seams) dist = std::min(dist, std::abs(static_cast<long>(i) - s));
    const size_t l = std::min(T - 1, (i + hop / 2) / hop);
    const double lo = std::min(c.samples[i], o.samples[i]);
    const double hi = std::max(c.samples[i], o.samples[i]);
    EXPECT_GE(y.samples[i], lo - 1e-15);
    EXPECT_LE(y.samples[i], hi + 1e-15);
    if (dist >= static_cast<long>(hop / 2)) {
      EXPECT_EQ(y.samples[i], vad[l] ? c.samples[i] : o.samples[i]) << i;
    }
  }
}

}  // namespace
}  // namespace hearnet
