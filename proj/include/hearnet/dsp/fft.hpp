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

#include <complex>
#include <numbers>
#include <span>
#include <vector>

#include "hearnet/core/error.hpp"

namespace hearnet::dsp {

inline bool IsPowerOfTwo(size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 FFT. inverse=true computes the unnormalized
// inverse transform.
inline void Fft(std::span<std::complex<double>> a, bool inverse = false) {
  const size_t n = a.size();
  Require(IsPowerOfTwo(n), "Fft: length must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  // Twiddle table for this length, cached per thread.
  thread_local std::vector<std::complex<double>> table;
  thread_local size_t table_n = 0;
  if (table_n != n) {
    table.resize(n / 2);
    for (size_t j = 0; j < n / 2; ++j) {
      const double ang = -2 * std::numbers::pi * static_cast<double>(j) /
                         static_cast<double>(n);
      table[j] = {std::cos(ang), std::sin(ang)};
    }
    table_n = n;
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t step = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t j = 0; j < len / 2; ++j) {
        const auto w = inverse ? std::conj(table[j * step]) : table[j * step];
        const auto u = a[i + j];
        const auto v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

// Real input of length n -> bins 0..n/2.
inline std::vector<std::complex<double>> Rfft(std::span<const double> x) {
  std::vector<std::complex<double>> buf(x.begin(), x.end());
  Fft(buf);
  buf.resize(x.size() / 2 + 1);
  return buf;
}

// Bins 0..n/2 -> real signal of length n (normalized by 1/n). Imaginary parts
// of the DC and Nyquist bins are ignored.
inline std::vector<double> Irfft(std::span<const std::complex<double>> spec,
                                 size_t n) {
  Require(spec.size() == n / 2 + 1, "Irfft: bin count mismatch");
  std::vector<std::complex<double>> buf(n);
  buf[0] = spec[0].real();
  buf[n / 2] = spec[n / 2].real();
  for (size_t k = 1; k < n / 2; ++k) {
    buf[k] = spec[k];
    buf[n - k] = std::conj(spec[k]);
  }
  Fft(buf, true);
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i)
    out[i] = buf[i].real() / static_cast<double>(n);
  return out;
}

}  // namespace hearnet::dsp
