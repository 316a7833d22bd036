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

// Differentiable STFT / iSTFT on the same frame grid as hearnet::Stft. The
// transforms are dense DFT matrix products so both directions are plain GEMMs.

#include <map>
#include <memory>
#include <numbers>

#include "hearnet/autograd/ops.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet::ag {

namespace detail {

template <class T>
struct DftBasis {
  RowMat<T> cos_fwd;  // [N, F]
  RowMat<T> sin_fwd;  // [N, F]
  RowMat<T> cos_inv;  // [F, N], includes 1/N and Hermitian weights
  RowMat<T> sin_inv;  // [F, N]
  std::vector<T> window;
};

template <class T>
const DftBasis<T>& GetBasis(const StftConfig& cfg) {
  thread_local std::map<size_t, std::unique_ptr<DftBasis<T>>> cache;
  auto& slot = cache[cfg.frame_len];
  if (!slot) {
    const size_t N = cfg.frame_len, F = cfg.num_bins();
    auto b = std::make_unique<DftBasis<T>>();
    b->cos_fwd.resize(N, F);
    b->sin_fwd.resize(N, F);
    b->cos_inv.resize(F, N);
    b->sin_inv.resize(F, N);
    for (size_t n = 0; n < N; ++n)
      for (size_t k = 0; k < F; ++k) {
        // Reduce k*n mod N first so the angle stays accurate.
        const double ang = 2 * std::numbers::pi *
                           static_cast<double>((k * n) % N) /
                           static_cast<double>(N);
        const double c = std::cos(ang), s = std::sin(ang);
        const double a = (k == 0 || 2 * k == N) ? 1.0 : 2.0;
        b->cos_fwd(n, k) = static_cast<T>(c);
        b->sin_fwd(n, k) = static_cast<T>(s);
        b->cos_inv(k, n) = static_cast<T>(a * c / static_cast<double>(N));
        b->sin_inv(k, n) = static_cast<T>(a * s / static_cast<double>(N));
      }
    for (double w : cfg.Window()) b->window.push_back(static_cast<T>(w));
    slot = std::move(b);
  }
  return *slot;
}

}  // namespace detail

// x [L] -> [2, T, F] (real, imag).
template <class T>
Var<T> StftOp(const Var<T>& x, const StftConfig& cfg) {
  Require(x.rank() == 1, "StftOp: expects a 1-D waveform");
  cfg.Validate();
  const size_t L = x.size(), N = cfg.frame_len, F = cfg.num_bins();
  const size_t Tn = cfg.NumFrames(L), hop = cfg.hop;
  const auto& B = detail::GetBasis<T>(cfg);
  RowMat<T> frames(Tn, N);
  const T* px = x.value().data();
  std::span<const T> xs(px, L);
  for (size_t t = 0; t < Tn; ++t)
    for (size_t n = 0; n < N; ++n)
      frames(t, n) =
          static_cast<T>(cfg.PaddedSample(xs, t * hop + n)) * B.window[n];
  Tensor<T> out(Shape{2, Tn, F});
  MatMap<T> re(out.data(), Tn, F);
  MatMap<T> im(out.data() + Tn * F, Tn, F);
  re.noalias() = frames * B.cos_fwd;
  im.noalias() = -(frames * B.sin_fwd);
  return Var<T>::MakeResult(std::move(out), {x}, [=](Node<T>& n) {
    const auto& B = detail::GetBasis<T>(cfg);
    ConstMatMap<T> gre(n.grad.data(), Tn, F);
    ConstMatMap<T> gim(n.grad.data() + Tn * F, Tn, F);
    RowMat<T> gfr = gre * B.cos_fwd.transpose() - gim * B.sin_fwd.transpose();
    T* gx = n.parents[0]->Grad().data();
    const size_t pad = cfg.pad_start();
    for (size_t t = 0; t < Tn; ++t)
      for (size_t k = 0; k < N; ++k) {
        const size_t p = t * hop + k;
        const T g = gfr(t, k) * B.window[k];
        if (p < pad)
          gx[pad - p] += g;
        else if (p - pad < L)
          gx[p - pad] += g;
      }
  });
}

// [2, T, F] -> [out_len], weighted overlap-add with squared-window
// normalization (the inverse of StftOp wherever frames overlap).
template <class T>
Var<T> IstftOp(const Var<T>& z, const StftConfig& cfg, size_t out_len) {
  Require(z.rank() == 3 && z.dim(0) == 2 && z.dim(2) == cfg.num_bins(),
          "IstftOp: expects [2, T, F] matching the StftConfig");
  const size_t Tn = z.dim(1), F = z.dim(2), N = cfg.frame_len, hop = cfg.hop;
  const size_t padded = (Tn - 1) * hop + N, pad = cfg.pad_start();
  const auto& B = detail::GetBasis<T>(cfg);
  ConstMatMap<T> re(z.value().data(), Tn, F);
  ConstMatMap<T> im(z.value().data() + Tn * F, Tn, F);
  RowMat<T> frames = re * B.cos_inv - im * B.sin_inv;
  std::vector<T> acc(padded, T{0}), norm(padded, T{0});
  for (size_t t = 0; t < Tn; ++t)
    for (size_t n = 0; n < N; ++n) {
      acc[t * hop + n] += frames(t, n) * B.window[n];
      norm[t * hop + n] += B.window[n] * B.window[n];
    }
  Tensor<T> out(Shape{out_len});
  for (size_t i = 0; i < out_len; ++i) {
    const size_t p = i + pad;
    if (p < padded && norm[p] > T(1e-10)) out[i] = acc[p] / norm[p];
  }
  return Var<T>::MakeResult(std::move(out), {z}, [=](Node<T>& n) {
    const auto& B = detail::GetBasis<T>(cfg);
    std::vector<T> gpad(padded, T{0});
    for (size_t i = 0; i < out_len; ++i) {
      const size_t p = i + pad;
      if (p < padded && norm[p] > T(1e-10)) gpad[p] = n.grad[i] / norm[p];
    }
    RowMat<T> gfr(Tn, N);
    for (size_t t = 0; t < Tn; ++t)
      for (size_t k = 0; k < N; ++k) gfr(t, k) = gpad[t * hop + k] * B.window[k];
    MatMap<T> gre(n.parents[0]->Grad().data(), Tn, F);
    MatMap<T> gim(n.parents[0]->Grad().data() + Tn * F, Tn, F);
    gre.noalias() += gfr * B.cos_inv.transpose();
    gim.noalias() -= gfr * B.sin_inv.transpose();
  });
}

}  // namespace hearnet::ag
