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

#include "hearnet/metrics.hpp"

#include <gtest/gtest.h>

#include <thread>

#include "hearnet/core/rng.hpp"

namespace hearnet {
namespace {

Waveform Noise(Rng& rng, size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& s : v) s = scale * rng.Normal();
  return Waveform(std::move(v));
}

void RemoveMean(std::vector<double>& v) {
  double m = 0;
  for (double s : v) m += s;
  m /= static_cast<double>(v.size());
  for (auto& s : v) s -= m;
}

// est = ref + e with e zero-mean, orthogonal to ref and |e|^2 = |ref|^2 / r.
Waveform AtRatio(const Waveform& ref, double r, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> s = ref.samples, e = Noise(rng, ref.size()).samples;
  RemoveMean(s);
  RemoveMean(e);
  double se = 0, ss = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    se += s[i] * e[i];
    ss += s[i] * s[i];
  }
  double ee = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    e[i] -= se / ss * s[i];
    ee += e[i] * e[i];
  }
  const double g = std::sqrt(ss / r / ee);
  std::vector<double> out(s.size());
  for (size_t i = 0; i < s.size(); ++i) out[i] = ref.samples[i] + g * e[i];
  return Waveform(std::move(out));
}

TEST(SiSnr, EqualPowerProjectionIsZeroDb) {
  // Zero-mean pair whose projection and residual carry equal power.
  const Waveform ref({1, -1, 0, 0}), est({1, -1, 1, -1});
  EXPECT_NEAR(SiSnr(ref, est), 0.0, 1e-12);
}

TEST(SiSnr, IdentityAndCaps) {
  Rng rng(1);
  const Waveform x = Noise(rng, 2000);
  EXPECT_EQ(SiSnr(x, x), 60.0);
  std::vector<double> half = x.samples;
  for (auto& s : half) s *= 0.5;
  EXPECT_EQ(SiSnr(x, Waveform(half)), 60.0);
  EXPECT_EQ(SiSnr(x, Waveform(std::vector<double>(2000, 0.0))), -60.0);
  for (double v : {SiSnr(x, Noise(rng, 2000)), SiSnr(x, Noise(rng, 2000, 1e-9))}) {
    EXPECT_GE(v, -60.0);
    EXPECT_LE(v, 60.0);
  }
}

TEST(SiSnr, ScaleAndOffsetInvariant) {
  Rng rng(2);
  const Waveform x = Noise(rng, 3000), y = Noise(rng, 3000);
  std::vector<double> mix(3000);
  for (size_t i = 0; i < 3000; ++i) mix[i] = x.samples[i] + 0.4 * y.samples[i];
  const double base = SiSnr(x, Waveform(mix));
  for (double a : {1e-3, 0.5, 3.0, 1e3}) {
    std::vector<double> s = mix;
    for (auto& v : s) v *= a;
    EXPECT_NEAR(SiSnr(x, Waveform(s)), base, 1e-9) << a;
  }
  for (double c : {-0.7, 0.01, 2.0}) {
    std::vector<double> s = mix;
    for (auto& v : s) v += c;
    EXPECT_NEAR(SiSnr(x, Waveform(s)), base, 1e-9) << c;
  }
}

TEST(SiSnr, ConstructedRatios) {
  Rng rng(3);
  const Waveform x = Noise(rng, 4000);
  for (double db : {-5.0, 0.0, 10.0, 25.0})
    EXPECT_NEAR(SiSnr(x, AtRatio(x, std::pow(10.0, db / 10), 7)), db, 1e-9) << db;
}

TEST(Sdr, IdentityZeroAndOrthogonalNoise) {
  Rng rng(4);
  const Waveform x = Noise(rng, 3000);
  EXPECT_EQ(Sdr(x, x), 60.0);
  EXPECT_NEAR(Sdr(x, Waveform(std::vector<double>(3000, 0.0))), 0.0, 1e-12);
  // Plain orthogonal noise at power ratio r.
  std::vector<double> n = Noise(rng, 3000).samples;
  double xn = 0, xx = 0;
  for (size_t i = 0; i < 3000; ++i) {
    xn += x.samples[i] * n[i];
    xx += x.samples[i] * x.samples[i];
  }
  double nn = 0;
  for (size_t i = 0; i < 3000; ++i) {
    n[i] -= xn / xx * x.samples[i];
    nn += n[i] * n[i];
  }
  for (double r : {0.5, 4.0, 100.0}) {
    std::vector<double> est(3000);
    const double g = std::sqrt(xx / r / nn);
    for (size_t i = 0; i < 3000; ++i) est[i] = x.samples[i] + g * n[i];
    EXPECT_NEAR(Sdr(x, Waveform(est)), 10 * std::log10(r), 1e-9) << r;
  }
}

TEST(Metrics, RejectBadPairs) {
  Rng rng(5);
  const Waveform x = Noise(rng, 100);
  EXPECT_THROW(SiSnr(x, Noise(rng, 99)), ValidationError);
  EXPECT_THROW(Sdr(Waveform(std::vector<double>(100, 0.0)), x), ValidationError);
  EXPECT_THROW(SiSnr(Waveform(std::vector<double>(100, 1.0)), x), ValidationError);
}

TEST(Oracle, EdgesMidpointAndMonotone) {
  Rng rng(6);
  const Waveform x = Noise(rng, 4000);
  const Audiogram hl = Audiogram::Flat(40);
  EXPECT_DOUBLE_EQ(DefaultOracle(x, x, hl), 1.0);
  EXPECT_NEAR(DefaultOracle(x, AtRatio(x, 0.1, 9), hl), 0.0, 1e-12);
  EXPECT_NEAR(DefaultOracle(x, AtRatio(x, 10.0, 9), hl), 0.5, 1e-12);
  EXPECT_EQ(DefaultOracle(x, AtRatio(x, 1e-3, 9), hl), 0.0);
  EXPECT_EQ(DefaultOracle(x, AtRatio(x, 1e4, 9), hl), 1.0);
  double prev = -1;
  for (double db = -20; db <= 40; db += 2.5) {
    const double q = DefaultOracle(x, AtRatio(x, std::pow(10.0, db / 10), 9), hl);
    EXPECT_GE(q, prev);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 1.0);
    prev = q;
  }
  EXPECT_DOUBLE_EQ(OracleByName("default")(x, x, hl), 1.0);
  EXPECT_THROW(OracleByName("hasqi"), ConfigError);
}

TEST(MetricRegistry, MissingAdapterNamesTheMetric) {
  MetricRegistry reg;
  Rng rng(7);
  const Waveform x = Noise(rng, 100);
  try {
    reg.Evaluate("pesq", x, x);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("pesq"), std::string::npos);
  }
  EXPECT_THROW(reg.Register("mystery", [](auto&, auto&, auto) { return 0.0; }), ConfigError);
}

TEST(MetricRegistry, PassthroughAndRangeCheck) {
  MetricRegistry reg;
  reg.Register("hasqi", [](const Waveform&, const Waveform&, const Audiogram* a) {
    return a ? 0.7 : 0.1;
  });
  reg.Register("stoi", [](const Waveform&, const Waveform&, const Audiogram*) { return 1.2; });
  reg.Register("pesq", [](const Waveform&, const Waveform&, const Audiogram*) { return 3.1; },
               /*serial=*/true);
  Rng rng(8);
  const Waveform x = Noise(rng, 800);
  const Waveform y = AtRatio(x, 10.0, 3);
  const Audiogram hl = Audiogram::Flat(30);
  const EvalRow r = EvaluatePair("u1", x, y, hl, DefaultOracle, {"hasqi", "pesq"}, reg);
  EXPECT_EQ(r.external.at("hasqi"), 0.7);
  EXPECT_EQ(r.external.at("pesq"), 3.1);
  EXPECT_NEAR(r.si_snr_db, 10.0, 1e-9);
  EXPECT_THROW(reg.Evaluate("stoi", x, y), RuntimeFailure);
  reg.Unregister("stoi");
  EXPECT_FALSE(reg.Has("stoi"));
}

TEST(MetricRegistry, SerialAdapterNeverRunsConcurrently) {
  MetricRegistry reg;
  std::atomic<int> inside{0}, peak{0};
  reg.Register("pesq",
               [&](const Waveform&, const Waveform&, const Audiogram*) {
                 const int n = ++inside;
                 peak = std::max(peak.load(), n);
                 std::this_thread::sleep_for(std::chrono::milliseconds(2));
                 --inside;
                 return 2.0;
               },
               true);
  Rng rng(9);
  const Waveform x = Noise(rng, 50);
  std::vector<std::thread> ts;
  for (int i = 0; i < 4; ++i)
    ts.emplace_back([&] {
      for (int k = 0; k < 5; ++k) reg.Evaluate("pesq", x, x);
    });
  for (auto& t : ts) t.join();
  EXPECT_EQ(peak.load(), 1);
}

TEST(EvalReport, MeansCsvAndJson) {
  EvalReport rep;
  rep.external_names = {"hasqi"};
  Rng rng(10);
  double sums[4] = {0, 0, 0, 0};
  for (int i = 0; i < 5; ++i) {
    EvalRow r{"u" + std::to_string(i), rng.Uniform(-5, 20), rng.Uniform(-5, 20),
              rng.Uniform(0, 1), {{"hasqi", rng.Uniform(0, 1)}}};
    sums[0] += r.sdr_db;
    sums[1] += r.si_snr_db;
    sums[2] += r.oracle;
    sums[3] += r.external["hasqi"];
    rep.Add(r);
  }
  const auto m = rep.Means();
  EXPECT_NEAR(m.at("sdr_db"), sums[0] / 5, 1e-9);
  EXPECT_NEAR(m.at("si_snr_db"), sums[1] / 5, 1e-9);
  EXPECT_NEAR(m.at("oracle"), sums[2] / 5, 1e-9);
  EXPECT_NEAR(m.at("hasqi"), sums[3] / 5, 1e-9);
  const std::string csv = rep.ToCsv();
  EXPECT_EQ(csv.rfind("id,sdr_db,si_snr_db,oracle,hasqi\n", 0), 0u);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
  const auto j = rep.ToJson();
  EXPECT_EQ(j.at("count").get<size_t>(), 5u);
  EXPECT_NEAR(j.at("mean").at("oracle").get<double>(), sums[2] / 5, 1e-9);
  const auto dir = std::filesystem::temp_directory_path() / "hearnet_metrics_test";
  rep.Write(dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "eval.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "eval.json"));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(EvalReport{}.Write(dir), ValidationError);
}

}  // namespace
}  // namespace hearnet
