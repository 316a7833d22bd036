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

// Training objectives. Waveforms are 1-D Vars; `x` is the reference and
// `xh` the estimate throughout.

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hearnet/autograd/spectral_ops.hpp"
#include "hearnet/core/error.hpp"

namespace hearnet {

using ag::Var;

struct LossWeights {
  double alpha = 0.5;         // adversarial
  double lambda = 0.3;        // perceptual
  double mu = 1.0;            // multi-resolution STFT
  double focal_weight = 0.3;  // VAD

  void Validate() const {
    for (double w : {alpha, lambda, mu, focal_weight})
      Require(std::isfinite(w) && w >= 0, "loss weights must be finite and >= 0");
  }
};

struct LossConfig {
  std::vector<StftConfig> resolutions{{1024, 512}, {512, 256}, {256, 128}};
  StftConfig analysis{};  // resolution of the default perceptual loss
  double focal_gamma = 2.0;
  std::string perceptual = "lsd";

  void Validate() const {
    Require(!resolutions.empty(), "losses: need at least one STFT resolution");
    for (const auto& r : resolutions) r.Validate();
    analysis.Validate();
    Require(std::isfinite(focal_gamma) && focal_gamma >= 0,
            "losses: focal gamma must be >= 0");
  }
};

namespace detail {

template <class T>
void RequireSameLength(const Var<T>& x, const Var<T>& xh, const char* what) {
  Require(x.rank() == 1 && xh.rank() == 1 && x.size() == xh.size(),
          std::string(what) + ": reference and estimate lengths differ (" +
              std::to_string(x.size()) + " vs " + std::to_string(xh.size()) + ")");
}

// [T, F] magnitude floored at the global magnitude floor.
template <class T>
Var<T> FlooredMagnitude(const Var<T>& x, const StftConfig& cfg) {
  return ag::ClampMin(ag::Magnitude(ag::StftOp(x, cfg)), static_cast<T>(kMagnitudeFloor));
}

}  // namespace detail

// One resolution: spectral convergence and the log-magnitude L1 term with
// the sum over all T x F entries divided by the frame count T.
template <class T>
std::pair<Var<T>, Var<T>> StftLossTerms(const Var<T>& x, const Var<T>& xh,
                                        const StftConfig& cfg) {
  const Var<T> X = detail::FlooredMagnitude(x, cfg);
  const Var<T> Xh = detail::FlooredMagnitude(xh, cfg);
  const Var<T> sc = ag::Norm(X - Xh) / ag::Norm(X);
  const T inv_frames = T(1) / static_cast<T>(X.dim(0));
  const Var<T> mag = ag::Sum(ag::Abs(ag::Log(X) - ag::Log(Xh))) * inv_frames;
  return {sc, mag};
}

// Mean over resolutions of 0.5 * (L_sc + L_mag).
template <class T>
Var<T> MultiResStftLoss(const Var<T>& x, const Var<T>& xh,
                        const std::vector<StftConfig>& res) {
  detail::RequireSameLength(x, xh, "multires_stft_loss");
  Require(!res.empty(), "multires_stft_loss: no resolutions");
  Var<T> total;
  for (const auto& r : res) {
    const auto [sc, mag] = StftLossTerms(x, xh, r);
    const Var<T> term = (sc + mag) * T(0.5);
    total = total.defined() ? total + term : term;
  }
  return total * (T(1) / static_cast<T>(res.size()));
}

// Log-spectral distance: mean squared difference of floored log magnitudes.
template <class T>
Var<T> LogSpectralDistance(const Var<T>& x, const Var<T>& xh, const StftConfig& cfg = {}) {
  detail::RequireSameLength(x, xh, "perceptual_loss");
  const Var<T> d = ag::Log(detail::FlooredMagnitude(x, cfg)) -
                   ag::Log(detail::FlooredMagnitude(xh, cfg));
  return ag::Mean(ag::Square(d));
}

// Differentiable stand-ins for the perceptual term, selected by name.
template <class T>
using PerceptualFn = std::function<Var<T>(const Var<T>&, const Var<T>&)>;

template <class T>
class PerceptualRegistry {
 public:
  using Factory = std::function<PerceptualFn<T>(const LossConfig&)>;
  static PerceptualRegistry& Instance() {
    static PerceptualRegistry r;
    return r;
  }
  void Register(const std::string& name, Factory f) { factories_[name] = std::move(f); }
  PerceptualFn<T> Make(const LossConfig& cfg) const {
    const auto it = factories_.find(cfg.perceptual);
    if (it == factories_.end())
      throw ConfigError("perceptual loss '" + cfg.perceptual + "' is not registered");
    return it->second(cfg);
  }

 private:
  PerceptualRegistry() {
    Register("lsd", [](const LossConfig& c) -> PerceptualFn<T> {
      const StftConfig a = c.analysis;
      return [a](const Var<T>& x, const Var<T>& xh) { return LogSpectralDistance(x, xh, a); };
    });
  }
  std::map<std::string, Factory> factories_;
};

// Mean over frames of -(1 - p_t)^gamma * log(p_t), p_t the probability of the
// labelled class, clamped to [1e-7, 1 - 1e-7].
template <class T>
Var<T> FocalVadLoss(const Var<T>& probs, const std::vector<bool>& labels, double gamma) {
  Require(probs.rank() == 1 && probs.size() == labels.size(),
          "focal_vad_loss: " + std::to_string(probs.size()) + " probabilities for " +
              std::to_string(labels.size()) + " labels");
  Require(gamma >= 0, "focal_vad_loss: gamma must be >= 0");
  Tensor<T> sign(Shape{labels.size()}), base(Shape{labels.size()});
  for (size_t i = 0; i < labels.size(); ++i) {
    sign[i] = labels[i] ? T(1) : T(-1);
    base[i] = labels[i] ? T(0) : T(1);
  }
  constexpr double kEps = 1e-7;
  const Var<T> pt = ag::Clamp(probs * ag::Constant(sign) + ag::Constant(base),
                              static_cast<T>(kEps), static_cast<T>(1 - kEps));
  const Var<T> nll = ag::Neg(ag::Log(pt));
  if (gamma == 0) return ag::Mean(nll);
  const Var<T> w = ag::Pow(ag::Neg(pt) + T(1), static_cast<T>(gamma));
  return ag::Mean(w * nll);
}

template <class T>
struct GeneratorLoss {
  Var<T> total;
  double adversarial = 0, perceptual = 0, multires = 0, focal = 0;
};

// alpha * (D_fix(X, X_hat, HL) - 1)^2 + lambda * perceptual + mu * multi-res
// STFT + focal_weight * focal. `d_score` is the frozen discriminator's score
// of (x, xh); terms with zero weight are skipped entirely.
template <class T>
GeneratorLoss<T> ComputeGeneratorLoss(const Var<T>& x, const Var<T>& xh,
                                      const Var<T>& d_score, const Var<T>& vad_probs,
                                      const std::vector<bool>& vad_labels,
                                      const LossWeights& w, const LossConfig& cfg,
                                      const PerceptualFn<T>& perceptual) {
  w.Validate();
  detail::RequireSameLength(x, xh, "generator_loss");
  GeneratorLoss<T> out;
  auto add = [&](double weight, const Var<T>& term, double& slot) {
    slot = static_cast<double>(term.item());
    const Var<T> wt = term * static_cast<T>(weight);
    out.total = out.total.defined() ? out.total + wt : wt;
  };
  if (w.alpha > 0) add(w.alpha, ag::Square(d_score - T(1)), out.adversarial);
  if (w.lambda > 0) add(w.lambda, perceptual(x, xh), out.perceptual);
  if (w.mu > 0) add(w.mu, MultiResStftLoss(x, xh, cfg.resolutions), out.multires);
  if (w.focal_weight > 0)
    add(w.focal_weight, FocalVadLoss(vad_probs, vad_labels, cfg.focal_gamma), out.focal);
  if (!out.total.defined()) out.total = ag::Constant(Tensor<T>::Scalar(T(0)));
  return out;
}

// (D(X, X, HL) - 1)^2 + (D(X, X_hat, HL) - oracle)^2; the oracle score is data.
template <class T>
Var<T> DiscriminatorLoss(const Var<T>& d_clean, const Var<T>& d_enhanced, double oracle) {
  Require(oracle >= 0 && oracle <= 1, "discriminator_loss: oracle score outside [0, 1]");
  return ag::Square(d_clean - T(1)) + ag::Square(d_enhanced - static_cast<T>(oracle));
}

}  // namespace hearnet
