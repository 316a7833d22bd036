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

#include "hearnet/training.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

namespace hearnet {
namespace {

namespace fs = std::filesystem;
using D = double;

constexpr size_t kLen = 640;

ModelConfig Tiny() { return ModelConfig::Tiny(); }

TrainConfig TinyTrain(uint64_t seed = 5) {
  TrainConfig c;
  c.seed = seed;
  c.batch_size = 2;
  c.epochs = 2;
  c.losses.resolutions = {{128, 64}, {64, 32}};
  c.losses.analysis = {64, 32};
  c.keep_epoch_checkpoints = false;
  return c;
}

// Tone bursts in noise; VAD labels on the tiny model's frame grid.
std::vector<CorpusItem> TinyItems(size_t n, uint64_t seed) {
  ActivityDetector det;
  det.grid = Tiny().stft;
  std::vector<CorpusItem> out;
  for (size_t i = 0; i < n; ++i) {
    Rng r = Rng::Child(seed, i);
    std::vector<double> clean(kLen), noisy(kLen);
    const double f = r.Uniform(300, 2000), on = r.Uniform(0, 200);
    for (size_t k = 0; k < kLen; ++k) {
      const double env = (k > on && k < on + 300) ? 1.0 : 0.05;
      clean[k] = 0.2 * env * std::sin(2 * std::numbers::pi * f * k / kSampleRate);
      noisy[k] = clean[k] + 0.05 * r.Normal();
    }
    CorpusItem it;
    it.id = "t" + std::to_string(i);
    it.target = Waveform(clean);
    it.noisy = Waveform(noisy);
    it.audiogram = Audiogram::Flat(r.Uniform(10, 70));
    it.vad = det.Labels(it.target);
    out.push_back(std::move(it));
  }
  return out;
}

template <class M>
std::vector<Tensor<D>> Snapshot(M& m) {
  std::vector<Tensor<D>> out;
  for (auto& [n, v] : NamedTensors<D>(m, true)) out.push_back(v.value());
  return out;
}

bool BitEqual(const std::vector<Tensor<D>>& a, const std::vector<Tensor<D>>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].shape() != b[i].shape() || a[i].vec() != b[i].vec()) return false;
  return true;
}

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

fs::path TempDir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("hearnet_training_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<const CorpusItem*> Ptrs(const std::vector<CorpusItem>& v) {
  std::vector<const CorpusItem*> p;
  for (const auto& i : v) p.push_back(&i);
  return p;
}

TEST(TrainConfig, LearningRateHalvesEveryTenEpochs) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.LearningRate(1), 5e-4);
  EXPECT_DOUBLE_EQ(c.LearningRate(10), 5e-4);
  EXPECT_DOUBLE_EQ(c.LearningRate(11), 2.5e-4);
  EXPECT_DOUBLE_EQ(c.LearningRate(20), 2.5e-4);
  EXPECT_DOUBLE_EQ(c.LearningRate(21), 1.25e-4);
  EXPECT_EQ(c.epochs, 25u);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig c = TinyTrain(9);
  c.weights.alpha = 1.5;
  const TrainConfig r = TrainConfigFromJson(TrainConfigToJson(c));
  EXPECT_EQ(TrainConfigToJson(r), TrainConfigToJson(c));
  EXPECT_THROW(TrainConfigFromJson({{"lr", -1.0}}), ValidationError);
  EXPECT_THROW(TrainConfigFromJson({{"epochs", 0}}), ValidationError);
  EXPECT_THROW(TrainConfigFromJson({{"oracle", "hasqi"}}), ConfigError);
  EXPECT_THROW(TrainConfigFromJson({{"lr", "fast"}}), ConfigError);
}

struct Quadratic {
  ag::Var<D> w = ag::Parameter(Tensor<D>(Shape{3}, std::vector<D>{1.0, -2.0, 0.5}));
  template <class F>
  void Visit(const std::string& p, F&& f) {
    f(nn::Join(p, "w"), w, false);
  }
};

TEST(Adam, MatchesReferenceRecursion) {
  Quadratic q;
  Adam<D> opt(q, 0.9, 0.999, 1e-8);
  std::vector<D> w = q.w.value().ToVector(), m(3, 0), v(3, 0);
  const D c[3] = {1.0, 3.0, -0.5};
  for (int t = 1; t <= 5; ++t) {
    opt.ZeroGrad();
    ag::Backward(ag::Sum(ag::Square(q.w - ag::Constant(Tensor<D>(Shape{3}, {c[0], c[1], c[2]})))));
    opt.Step(0.01);
    for (int k = 0; k < 3; ++k) {
      const D g = 2 * (w[k] - c[k]);
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const D mh = m[k] / (1 - std::pow(0.9, t)), vh = v[k] / (1 - std::pow(0.999, t));
      w[k] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(q.w.value()[k], w[k], 1e-12) << t << " " << k;
    }
  }
}

TEST(Adam, ClipsToGlobalNorm) {
  Quadratic q;
  Adam<D> opt(q);
  ag::Backward(ag::Sum(q.w * 100.0));
  EXPECT_NEAR(opt.ClipGradNorm(5.0), 100 * std::sqrt(3.0), 1e-9);
  EXPECT_NEAR(opt.GradNorm(), 5.0, 1e-9);
  EXPECT_NEAR(opt.ClipGradNorm(0.0), 5.0, 1e-9);  // disabled: untouched
  EXPECT_NEAR(opt.GradNorm(), 5.0, 1e-9);
}

class TrainStepTest : public ::testing::Test {
 protected:
  std::vector<CorpusItem> items_ = TinyItems(2, 11);
  QualityOracle oracle_ = DefaultOracle;
};

TEST_F(TrainStepTest, DeterministicAcrossInstances) {
  const TrainConfig tc = TinyTrain();
  TrainState<D> a(Tiny(), tc), b(Tiny(), tc);
  const auto pf = PerceptualRegistry<D>::Instance().Make(tc.losses);
  const auto la = TrainStep(a, Ptrs(items_), 1e-3, oracle_, pf);
  const auto lb = TrainStep(b, Ptrs(items_), 1e-3, oracle_, pf);
  EXPECT_EQ(la.g_total, lb.g_total);
  EXPECT_EQ(la.d_loss, lb.d_loss);
  EXPECT_TRUE(BitEqual(Snapshot(a.g), Snapshot(b.g)));
  EXPECT_TRUE(BitEqual(Snapshot(a.d), Snapshot(b.d)));
  TrainState<D> fresh(Tiny(), tc);
  EXPECT_FALSE(BitEqual(Snapshot(a.g), Snapshot(fresh.g)));
}

// The generator step must leave D exactly as the discriminator step left it.
TEST_F(TrainStepTest, DiscriminatorFrozenDuringGeneratorStep) {
  const TrainConfig tc = TinyTrain();
  TrainState<D> full(Tiny(), tc), manual(Tiny(), tc);
  const auto pf = PerceptualRegistry<D>::Instance().Make(tc.losses);
  TrainStep(full, Ptrs(items_), 1e-3, oracle_, pf);

  manual.g.SetTraining(true);
  std::vector<Audiogram> auds;
  for (const auto& it : items_) auds.push_back(it.audiogram);
  const auto codes = manual.g.EncodeAudiograms(ag::Constant(DenseAudiogramBatch<D>(auds, Tiny())));
  std::vector<ag::Var<D>> refs, ests, hls;
  std::vector<double> q;
  for (size_t i = 0; i < items_.size(); ++i) {
    const auto code = ag::Reshape(ag::Slice(codes, 0, i, 1), {codes.dim(1), codes.dim(2)});
    const auto o = manual.g.Forward(WaveformVar<D>(items_[i].noisy), code);
    refs.push_back(WaveformVar<D>(items_[i].target));
    ests.push_back(o.enhanced.Detach());
    hls.push_back(ag::Constant(DenseAudiogramTensor<D>(items_[i].audiogram, Tiny())));
    q.push_back(DefaultOracle(items_[i].target, VarWaveform(o.enhanced), items_[i].audiogram));
  }
  DiscriminatorUpdate(manual.d, manual.opt_d, refs, ests, hls, q, 1e-3, tc.clip_norm);
  EXPECT_TRUE(BitEqual(Snapshot(full.d), Snapshot(manual.d)));
}

// With only the STFT term active, one step equals a plain loop: forward,
// multi-resolution loss, backward and a first Adam step -lr * g / (|g| + eps).
TEST_F(TrainStepTest, StftOnlyStepEqualsPlainLoop) {
  TrainConfig tc = TinyTrain();
  tc.weights = {0, 0, 1, 0};
  tc.clip_norm = 0;
  TrainState<D> s(Tiny(), tc);
  Generator<D> ref(Tiny(), tc.seed);
  const auto pf = PerceptualRegistry<D>::Instance().Make(tc.losses);
  const double lr = 1e-3;
  TrainStep(s, Ptrs(items_), lr, oracle_, pf);

  ref.SetTraining(true);
  std::vector<Audiogram> auds;
  for (const auto& it : items_) auds.push_back(it.audiogram);
  const auto codes = ref.EncodeAudiograms(ag::Constant(DenseAudiogramBatch<D>(auds, Tiny())));
  ag::Var<D> loss;
  for (size_t i = 0; i < items_.size(); ++i) {
    const auto code = ag::Reshape(ag::Slice(codes, 0, i, 1), {codes.dim(1), codes.dim(2)});
    const auto o = ref.Forward(WaveformVar<D>(items_[i].noisy), code);
    const auto l = MultiResStftLoss(WaveformVar<D>(items_[i].target), o.enhanced,
                                    tc.losses.resolutions);
    loss = loss.defined() ? loss + l : l;
  }
  ag::Backward(loss * 0.5);
  const auto got = NamedTensors<D>(s.g, false);
  const auto want = NamedTensors<D>(ref, false);
  ASSERT_EQ(got.size(), want.size());
  size_t moved = 0;
  for (size_t i = 0; i < got.size(); ++i) {
    const auto& w0 = want[i].second;
    if (!w0.has_grad()) continue;
    for (size_t k = 0; k < w0.size(); ++k) {
      const D g = w0.node()->grad[k];
      const D expect = w0.value()[k] - lr * g / (std::abs(g) + 1e-8);
      EXPECT_NEAR(got[i].second.value()[k], expect, 1e-12) << got[i].first;
      moved += g != 0;
    }
  }
  EXPECT_GT(moved, 100u);
}

TEST_F(TrainStepTest, NonFiniteLossNamesTheBatch) {
  auto bad = items_;
  bad[1].noisy.samples[100] = std::numeric_limits<double>::quiet_NaN();
  const TrainConfig tc = TinyTrain();
  TrainState<D> s(Tiny(), tc);
  const auto pf = PerceptualRegistry<D>::Instance().Make(tc.losses);
  try {
    TrainStep(s, Ptrs(bad), 1e-3, oracle_, pf);
    FAIL() << "expected RuntimeFailure";
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos) << e.what();
  }
}

TEST_F(TrainStepTest, VadGridMismatchIsRejected) {
  auto bad = items_;
  bad[0].vad.pop_back();
  const TrainConfig tc = TinyTrain();
  TrainState<D> s(Tiny(), tc);
  const auto pf = PerceptualRegistry<D>::Instance().Make(tc.losses);
  EXPECT_THROW(TrainStep(s, Ptrs(bad), 1e-3, oracle_, pf), ValidationError);
}

TEST(Discriminator, FitsFrozenOracleScores) {
  const ModelConfig mc = Tiny();
  Discriminator<D> d(mc, 3);
  Adam<D> opt(d);
  const auto items = TinyItems(16, 21);
  std::vector<ag::Var<D>> refs, ests, hls;
  std::vector<double> q;
  Rng rng(4);
  for (const auto& it : items) {
    std::vector<double> est = it.target.samples;
    const double g = rng.Uniform(0, 1.5);
    for (size_t k = 0; k < est.size(); ++k) est[k] += g * (it.noisy.samples[k] - it.target.samples[k]) * 4;
    refs.push_back(WaveformVar<D>(it.target));
    ests.push_back(WaveformVar<D>(Waveform(est)));
    hls.push_back(ag::Constant(DenseAudiogramTensor<D>(it.audiogram, mc)));
    q.push_back(DefaultOracle(it.target, Waveform(est), it.audiogram));
  }
  double mse = 1;
  for (int step = 0; step < 300 && mse >= 0.01; ++step) {
    DiscriminatorUpdate(d, opt, refs, ests, hls, q, 2e-3, 5.0);
    mse = 0;
    for (size_t i = 0; i < q.size(); ++i) mse += std::pow(d(refs[i], ests[i], hls[i]).item() - q[i], 2);
    mse /= static_cast<double>(q.size());
  }
  EXPECT_LT(mse, 0.01);
}

TEST(Checkpoint, RoundTripCorruptionAndMismatch) {
  const auto dir = TempDir("ckpt");
  const TrainConfig tc = TinyTrain();
  TrainState<D> a(Tiny(), tc);
  const auto items = TinyItems(2, 3);
  TrainStep(a, Ptrs(items), 1e-3, DefaultOracle, PerceptualRegistry<D>::Instance().Make(tc.losses));
  a.step = 7;
  a.epoch = 3;
  a.batch = 1;
  a.best_oracle = 0.25;
  SaveCheckpoint(dir / "a.ckpt", a);

  TrainState<D> b(Tiny(), TinyTrain(99));
  LoadCheckpoint(dir / "a.ckpt", b);
  EXPECT_TRUE(BitEqual(Snapshot(a.g), Snapshot(b.g)));
  EXPECT_TRUE(BitEqual(Snapshot(a.d), Snapshot(b.d)));
  EXPECT_EQ(a.opt_g.first_moments()[3].vec(), b.opt_g.first_moments()[3].vec());
  EXPECT_EQ(b.opt_g.steps(), 1u);
  EXPECT_EQ(b.step, 7u);
  EXPECT_EQ(b.epoch, 3u);
  EXPECT_EQ(b.batch, 1u);
  EXPECT_EQ(b.best_oracle, 0.25);
  EXPECT_TRUE(a.rng == b.rng);
  SaveCheckpoint(dir / "b.ckpt", b);
  EXPECT_NE(ReadFile(dir / "a.ckpt"), ReadFile(dir / "b.ckpt"));  // train config differs

  std::string bytes = ReadFile(dir / "a.ckpt");
  bytes[bytes.size() / 2] ^= 0x40;
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;
  EXPECT_THROW(LoadCheckpoint(dir / "bad.ckpt", b), RuntimeFailure);
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, 30);
  EXPECT_THROW(LoadCheckpoint(dir / "short.ckpt", b), RuntimeFailure);

  ModelConfig other = Tiny();
  other.dense_depth = 3;
  TrainState<D> c(other, tc);
  EXPECT_THROW(LoadCheckpoint(dir / "a.ckpt", c), ConfigError);
  EXPECT_THROW(LoadCheckpoint(dir / "missing.ckpt", c), ValidationError);

  auto g = LoadGenerator<D>(dir / "a.ckpt");
  EXPECT_TRUE(BitEqual(Snapshot(*g), Snapshot(a.g)));
  fs::remove_all(dir);
}

TEST(Train, DeterministicLogsAndCheckpoints) {
  const auto items = TinyItems(3, 7);
  const auto d1 = TempDir("det1"), d2 = TempDir("det2");
  const auto r1 = Train<D>(items, items, Tiny(), TinyTrain(), d1);
  const auto r2 = Train<D>(items, items, Tiny(), TinyTrain(), d2);
  EXPECT_EQ(r1.steps.size(), 4u);  // 2 epochs of ceil(3 / 2) batches
  EXPECT_EQ(r1.epochs.size(), 2u);
  for (const char* f : {"steps.csv", "epochs.csv", "last.ckpt", "best.ckpt"})
    EXPECT_EQ(ReadFile(d1 / f), ReadFile(d2 / f)) << f;
  EXPECT_GE(r1.best_epoch, 1u);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Train, ResumeMidEpochMatchesUninterruptedRun) {
  const auto items = TinyItems(5, 8);
  TrainConfig tc = TinyTrain();
  tc.checkpoint_every = 2;  // step 2 falls mid epoch 1 (3 batches per epoch)
  const auto full = TempDir("full"), part = TempDir("part");
  Train<D>(items, items, Tiny(), tc, full);
  fs::copy_file(full / "steps.csv", part / "steps.csv");
  Train<D>(items, items, Tiny(), tc, part, full / "step_000002.ckpt");
  for (const char* f : {"steps.csv", "epochs.csv", "last.ckpt", "best.ckpt"})
    EXPECT_EQ(ReadFile(full / f), ReadFile(part / f)) << f;
  fs::remove_all(full);
  fs::remove_all(part);
}

TEST(Train, MaxStepsStopsAndResumes) {
  const auto items = TinyItems(4, 9);
  TrainConfig tc = TinyTrain();
  tc.max_steps = 3;
  const auto dir = TempDir("cap");
  const auto r = Train<D>(items, items, Tiny(), tc, dir);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.steps.size(), 3u);
  tc.max_steps = 0;
  const auto r2 = Train<D>(items, items, Tiny(), tc, dir, dir / "last.ckpt");
  EXPECT_EQ(r2.steps.size(), 1u);
  EXPECT_EQ(r2.steps[0].step, 4u);
  fs::remove_all(dir);
}

TEST(Ablation, GridRowsParseBackAndSingleCellMatchesTrain) {
  const auto items = TinyItems(2, 10);
  TrainConfig tc = TinyTrain();
  tc.epochs = 1;
  const auto dir = TempDir("ablate");
  const auto rep = AblateWeights<D>({0.5, 1.0}, {0.3}, items, items, Tiny(), tc, dir);
  ASSERT_EQ(rep.rows.size(), 2u);
  const auto back = AblationReport::FromCsv(ReadFile(dir / "ablation.csv"));
  ASSERT_EQ(back.rows.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.rows[i].weights.alpha, rep.rows[i].weights.alpha);
    EXPECT_EQ(back.rows[i].weights.lambda, 0.3);
    EXPECT_EQ(back.rows[i].valid.oracle, rep.rows[i].valid.oracle);
    EXPECT_TRUE(std::isfinite(back.rows[i].valid.si_snr_db));
  }
  EXPECT_EQ(rep.rows[0].weights.alpha, 0.5);
  TrainConfig one = tc;
  one.weights.alpha = 0.5;
  one.weights.lambda = 0.3;
  const auto single = Train<D>(items, items, Tiny(), one, TempDir("single"));
  EXPECT_EQ(single.epochs.back().valid.oracle, rep.rows[0].valid.oracle);
  EXPECT_EQ(single.epochs.back().valid.sdr_db, rep.rows[0].valid.sdr_db);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace hearnet
