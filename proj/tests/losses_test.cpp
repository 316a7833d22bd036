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

#include "hearnet/losses.hpp"

#include <gtest/gtest.h>

#include "hearnet/model/network.hpp"
#include "test_util.hpp"

namespace hearnet {
namespace {

using testing::GradCheck;
using testing::RandomTensor;
using V = ag::Var<double>;

V Wave(Rng& rng, size_t n, double scale = 0.3) {
  return ag::Constant(RandomTensor<double>(rng, {n}, scale));
}

V Scaled(const V& x, double a) { return ag::Constant(x.value()) * a; }

TEST(MultiResStft, IdenticalIsZero) {
  Rng rng(1);
  const V x = Wave(rng, 4000);
  EXPECT_EQ(MultiResStftLoss(x, x, LossConfig{}.resolutions).item(), 0.0);
}

TEST(MultiResStft, DoublingGivesUnitConvergenceAndBinCountLogTwo) {
  Rng rng(2);
  const V x = Wave(rng, 4000);
  const V x2 = Scaled(x, 2.0);
  const LossConfig cfg;
  double expect = 0;
  for (const auto& r : cfg.resolutions) {
    const auto [sc, mag] = StftLossTerms(x, x2, r);
    EXPECT_NEAR(sc.item(), 1.0, 1e-12);
    EXPECT_NEAR(mag.item(), static_cast<double>(r.num_bins()) * std::log(2.0), 1e-9);
    expect += 0.5 * (1.0 + r.num_bins() * std::log(2.0));
  }
  EXPECT_NEAR(MultiResStftLoss(x, x2, cfg.resolutions).item(), expect / 3, 1e-9);
}

TEST(MultiResStft, HandEvaluatedAgainstReferenceStft) {
  // Independent evaluation through the non-autograd STFT.
  Rng rng(3);
  const V x = Wave(rng, 3000), y = Wave(rng, 3000);
  const StftConfig r{256, 128};
  const auto X = Stft(Waveform(x.value().ToVector()), r);
  const auto Y = Stft(Waveform(y.value().ToVector()), r);
  double num = 0, den = 0, l1 = 0;
  for (size_t t = 0; t < X.frames(); ++t)
    for (size_t k = 0; k < X.bins(); ++k) {
      const double a = std::max(X.Magnitude(t, k), kMagnitudeFloor);
      const double b = std::max(Y.Magnitude(t, k), kMagnitudeFloor);
      num += (a - b) * (a - b);
      den += a * a;
      l1 += std::abs(std::log(a) - std::log(b));
    }
  const auto [sc, mag] = StftLossTerms(x, y, r);
  EXPECT_NEAR(sc.item(), std::sqrt(num / den), 1e-10);
  EXPECT_NEAR(mag.item(), l1 / X.frames(), 1e-8);
}

TEST(MultiResStft, InvariantToGlobalPhaseRotationOfEstimate) {
  Rng rng(4);
  const V x = Wave(rng, 4000), y = Wave(rng, 4000);
  const auto res = LossConfig{}.resolutions;
  // Negation rotates every STFT bin by pi and leaves magnitudes untouched.
  EXPECT_NEAR(MultiResStftLoss(x, y, res).item(), MultiResStftLoss(x, Scaled(y, -1.0), res).item(),
              1e-6);
}

TEST(MultiResStft, LengthMismatchIsRejected) {
  Rng rng(5);
  EXPECT_THROW(MultiResStftLoss(Wave(rng, 4000), Wave(rng, 3999), LossConfig{}.resolutions),
               ValidationError);
}

TEST(MultiResStft, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  const V x = Wave(rng, 1600);
  V y = ag::Parameter(RandomTensor<double>(rng, {1600}, 0.3));
  std::vector<V> leaves{y};
  EXPECT_LT(GradCheck(leaves, [&] { return MultiResStftLoss(x, y, LossConfig{}.resolutions); },
                      rng, 40),
            1e-4);
}

TEST(Perceptual, ZeroSymmetricAndGradient) {
  Rng rng(7);
  const V x = Wave(rng, 1600), y = Wave(rng, 1600);
  EXPECT_EQ(LogSpectralDistance(x, x).item(), 0.0);
  EXPECT_DOUBLE_EQ(LogSpectralDistance(x, y).item(), LogSpectralDistance(y, x).item());
  EXPECT_GT(LogSpectralDistance(x, y).item(), 0.0);
  V z = ag::Parameter(y.value());
  std::vector<V> leaves{z};
  EXPECT_LT(GradCheck(leaves, [&] { return LogSpectralDistance(x, z); }, rng, 40), 1e-4);
  const auto fn = PerceptualRegistry<double>::Instance().Make(LossConfig{});
  EXPECT_DOUBLE_EQ(fn(x, y).item(), LogSpectralDistance(x, y).item());
  LossConfig bad;
  bad.perceptual = "pmsqe";
  EXPECT_THROW(PerceptualRegistry<double>::Instance().Make(bad), ConfigError);
  EXPECT_THROW(LogSpectralDistance(x, Wave(rng, 1000)), ValidationError);
}

TEST(Focal, PerfectHalfAndCrossEntropyReduction) {
  const std::vector<bool> labels{true, false, true, true, false};
  V perfect = ag::Constant(Tensor<double>(Shape{5}, std::vector<double>{1, 0, 1, 1, 0}));
  EXPECT_LT(FocalVadLoss(perfect, labels, 2.0).item(), 1e-5);
  V half = ag::Constant(Tensor<double>(Shape{5}, 0.5));
  EXPECT_NEAR(FocalVadLoss(half, labels, 2.0).item(), 0.25 * std::log(2.0), 1e-12);
  EXPECT_NEAR(0.25 * std::log(2.0), 0.1733, 1e-4);
  Rng rng(8);
  Tensor<double> p(Shape{5});
  for (size_t i = 0; i < 5; ++i) p[i] = rng.Uniform(0.05, 0.95);
  double bce = 0;
  for (size_t i = 0; i < 5; ++i) bce -= labels[i] ? std::log(p[i]) : std::log(1 - p[i]);
  EXPECT_NEAR(FocalVadLoss(ag::Constant(p), labels, 0.0).item(), bce / 5, 1e-9);
  EXPECT_THROW(FocalVadLoss(half, {true, false}, 2.0), ValidationError);
  V q = ag::Parameter(p);
  std::vector<V> leaves{q};
  EXPECT_LT(GradCheck(leaves, [&] { return FocalVadLoss(q, labels, 2.0); }, rng), 1e-4);
}

TEST(Focal, DownWeightsEasyFrames) {
  const std::vector<bool> l{true};
  auto at = [&](double p, double g) {
    return FocalVadLoss(ag::Constant(Tensor<double>(Shape{1}, p)), l, g).item();
  };
  EXPECT_LT(at(0.9, 2.0) / at(0.9, 0.0), at(0.3, 2.0) / at(0.3, 0.0));
}

class GeneratorLossFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(9);
    x_ = Wave(rng, 2000);
    y_ = ag::Parameter(RandomTensor<double>(rng, {2000}, 0.3));
    probs_ = ag::Parameter(RandomTensor<double>(rng, {9}, 0.4) );
    for (size_t i = 0; i < 9; ++i) probs_.mutable_value()[i] += 0.5;
    labels_ = {true, true, false, true, false, false, true, true, false};
    d_ = ag::Parameter(Tensor<double>::Scalar(0.37));
    fn_ = PerceptualRegistry<double>::Instance().Make(cfg_);
  }
  GeneratorLoss<double> Eval(const LossWeights& w) {
    return ComputeGeneratorLoss(x_, y_, d_, probs_, labels_, w, cfg_, fn_);
  }
  LossConfig cfg_;
  V x_, y_, probs_, d_;
  std::vector<bool> labels_;
  PerceptualFn<double> fn_;
};

TEST_F(GeneratorLossFixture, PerfectCaseIsZero) {
  Tensor<double> p(Shape{9});
  for (size_t i = 0; i < 9; ++i) p[i] = labels_[i] ? 1.0 : 0.0;
  const auto r = ComputeGeneratorLoss(x_, x_, ag::Constant(Tensor<double>::Scalar(1.0)),
                                      ag::Constant(p), labels_, LossWeights{}, cfg_, fn_);
  EXPECT_LT(r.total.item(), 1e-12);
  EXPECT_EQ(r.adversarial, 0.0);
  EXPECT_EQ(r.multires, 0.0);
  EXPECT_EQ(r.perceptual, 0.0);
}

TEST_F(GeneratorLossFixture, WeightSelectionAndHandSum) {
  const auto only = Eval({0, 0, 1, 0});
  EXPECT_EQ(only.total.item(), MultiResStftLoss(x_, y_, cfg_.resolutions).item());
  const LossWeights w;
  const auto r = Eval(w);
  const double adv = std::pow(0.37 - 1, 2);
  const double lsd = LogSpectralDistance(x_, y_).item();
  const double mr = MultiResStftLoss(x_, y_, cfg_.resolutions).item();
  const double fo = FocalVadLoss(probs_, labels_, 2.0).item();
  EXPECT_NEAR(r.adversarial, adv, 1e-12);
  EXPECT_NEAR(r.total.item(), w.alpha * adv + w.lambda * lsd + w.mu * mr + w.focal_weight * fo,
              1e-9);
  EXPECT_NEAR(r.total.item(), w.alpha * r.adversarial + w.lambda * r.perceptual +
                                  w.mu * r.multires + w.focal_weight * r.focal,
              1e-9);
}

TEST_F(GeneratorLossFixture, MonotoneInEachWeight) {
  const LossWeights base;
  const double t0 = Eval(base).total.item();
  for (int k = 0; k < 4; ++k) {
    LossWeights w = base;
    double* f[] = {&w.alpha, &w.lambda, &w.mu, &w.focal_weight};
    *f[k] += 0.5;
    EXPECT_GE(Eval(w).total.item(), t0) << k;
  }
  LossWeights neg;
  neg.alpha = -1;
  EXPECT_THROW(Eval(neg), ValidationError);
}

TEST_F(GeneratorLossFixture, GradientMatchesFiniteDifferences) {
  Rng rng(10);
  std::vector<V> leaves{y_, probs_, d_};
  EXPECT_LT(GradCheck(leaves, [&] { return Eval(LossWeights{}).total; }, rng, 30), 1e-4);
}

TEST(DiscriminatorLoss, ZeroCaseHandEvaluationAndGradient) {
  const auto one = ag::Constant(Tensor<double>::Scalar(1.0));
  const auto q = ag::Constant(Tensor<double>::Scalar(0.42));
  EXPECT_EQ(DiscriminatorLoss(one, q, 0.42).item(), 0.0);
  EXPECT_EQ(DiscriminatorLoss(one, one, 1.0).item(), 0.0);
  auto cfg = ModelConfig::Tiny();
  Discriminator<double> d(cfg, 3);
  Rng rng(11);
  const V x = Wave(rng, 500), y = Wave(rng, 500);
  const auto hl = ag::Constant(DenseAudiogramTensor<double>(Audiogram::Flat(30), cfg));
  const double dc = d(x, x, hl).item(), de = d(x, y, hl).item();
  EXPECT_NEAR(DiscriminatorLoss(d(x, x, hl), d(x, y, hl), 0.3).item(),
              (dc - 1) * (dc - 1) + (de - 0.3) * (de - 0.3), 1e-12);
  // x_hat = x with oracle 1: the two terms coincide.
  EXPECT_NEAR(DiscriminatorLoss(d(x, x, hl), d(x, x, hl), 1.0).item(), 2 * (dc - 1) * (dc - 1),
              1e-12);
  EXPECT_THROW(DiscriminatorLoss(one, q, 1.5), ValidationError);
  std::vector<V> params;
  d.Visit("", [&](const std::string&, V& v, bool b) {
    if (!b) params.push_back(v);
  });
  EXPECT_LT(GradCheck(params, [&] { return DiscriminatorLoss(d(x, x, hl), d(x, y, hl), 0.3); },
                      rng, 6),
            1e-4);
}

}  // namespace
}  // namespace hearnet
