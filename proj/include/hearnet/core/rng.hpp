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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>

#include "hearnet/core/error.hpp"

namespace hearnet {

// Seeded generator with distributions implemented here rather than through
// <random>'s distributions, whose output is implementation-defined. That keeps
// corpora and checkpoints byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  // Independent stream for work item `index` derived from a base seed.
  static Rng Child(uint64_t seed, uint64_t index) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(index), static_cast<uint32_t>(index >> 32),
                      0x68656172u};
    Rng r;
    r.engine_.seed(seq);
    return r;
  }

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n).
  uint64_t Index(uint64_t n) {
    Require(n > 0, "Rng::Index: empty range");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Box-Muller; one value per call, no cached spare so state stays simple.
  double Normal() {
    double u1 = Uniform();
    while (u1 <= 0.0) u1 = Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  size_t Categorical(std::span<const double> probs) {
    const double u = Uniform();
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // u landed in the rounding slack above the last cumulative sum.
    for (size_t i = probs.size(); i-- > 0;)
      if (probs[i] > 0) return i;
    throw ValidationError("Rng::Categorical: all probabilities are zero");
  }

  std::string SaveState() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void LoadState(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw RuntimeFailure("Rng: malformed state string");
  }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hearnet
