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

// Signal generators and a finite-difference checker shared by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "hearnet/autograd/ops.hpp"
#include "hearnet/core/rng.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet::testing {

inline Waveform Tone(double freq, double amp, size_t n, double phase = 0.0) {
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i)
    x[i] = amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) /
                              kSampleRate +
                          phase);
  return Waveform(std::move(x));
}

inline Waveform WhiteNoise(Rng& rng, double sigma, size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = sigma * rng.Normal();
  return Waveform(std::move(x));
}

inline Waveform Silence(size_t n) { return Waveform(std::vector<double>(n)); }

template <class T>
Tensor<T> RandomTensor(Rng& rng, Shape s, double scale = 1.0) {
  Tensor<T> t(std::move(s));
  for (size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<T>(scale * (2 * rng.Uniform() - 1));
  return t;
}

// Largest relative error between the analytic gradient of `f` at the leaves
// and central differences, normalized by max(|analytic|, |numeric|, floor).
// Checks at most `max_probe` randomly chosen coordinates per leaf.
inline double GradCheck(
    std::vector<ag::Var<double>>& leaves,
    const std::function<ag::Var<double>()>& f, Rng& rng, size_t max_probe = 24,
    double h = 1e-6, double floor = 1e-6, double retry_h = 0) {
  for (auto& l : leaves) l.ZeroGrad();
  ag::Var<double> loss = f();
  ag::Backward(loss);
  double worst = 0;
  for (auto& l : leaves) {
    const Tensor<double> g = l.grad();
    std::vector<size_t> idx(l.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > max_probe) {
      for (size_t i = 0; i < max_probe; ++i)
        std::swap(idx[i], idx[i + rng.Index(idx.size() - i)]);
      idx.resize(max_probe);
    }
    for (size_t i : idx) {
      double& v = l.mutable_value()[i];
      const double keep = v;
      const auto rel = [&](double step) {
        double fp, fm;
        {
          ag::NoGradGuard ng;
          v = keep + step;
          fp = f().item();
          v = keep - step;
          fm = f().item();
        }
        v = keep;
        const double num = (fp - fm) / (2 * step);
        const double den = std::max({std::abs(num), std::abs(g[i]), floor});
        return std::abs(num - g[i]) / den;
      };
      double e = rel(h);
      // A kink (PReLU at 0) closer than h to the operating point breaks the
      // central difference; a smaller step resolves it, a wrong gradient not.
      if (retry_h > 0 && e > 1e-5) e = std::min(e, rel(retry_h));
      worst = std::max(worst, e);
    }
  }
  return worst;
}

}  // namespace hearnet::testing
