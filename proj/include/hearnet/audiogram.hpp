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

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hearnet/core/error.hpp"
#include "json.hpp"

namespace hearnet {

// Standard pure-tone audiometry frequencies, Hz.
inline constexpr std::array<double, 6> kAudiometricFreqs = {
    250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0};

inline constexpr double kMinThresholdDb = -10.0;
inline constexpr double kMaxThresholdDb = 120.0;

// Hearing-loss thresholds in dB HL at kAudiometricFreqs.
class Audiogram {
 public:
  Audiogram() = default;
  explicit Audiogram(std::array<double, 6> thresholds)
      : thresholds_(thresholds) {
    Validate();
  }

  static Audiogram FromValues(std::span<const double> values) {
    Require(values.size() == 6, "audiogram: expected 6 thresholds, got " +
                                    std::to_string(values.size()));
    std::array<double, 6> a{};
    std::copy(values.begin(), values.end(), a.begin());
    return Audiogram(a);
  }

  static Audiogram Flat(double db) {
    return Audiogram({db, db, db, db, db, db});
  }

  const std::array<double, 6>& thresholds() const { return thresholds_; }
  double operator[](size_t i) const { return thresholds_[i]; }

  void Validate() const {
    for (double h : thresholds_) {
      Require(std::isfinite(h), "audiogram: non-finite threshold");
      Require(h >= kMinThresholdDb && h <= kMaxThresholdDb,
              "audiogram: threshold " + std::to_string(h) +
                  " dB HL outside [-10, 120]");
    }
  }

  bool operator==(const Audiogram&) const = default;

 private:
  std::array<double, 6> thresholds_{};
};

// One hearing-loss value per STFT bin.
struct DenseAudiogram {
  std::vector<double> values;
  std::vector<double> bin_freqs;
};

// Piecewise-linear in frequency between the audiometric knots; flat
// extrapolation below 250 Hz and above 8 kHz.
inline DenseAudiogram InterpolateAudiogram(const Audiogram& audiogram,
                                           size_t n_bins = 257,
                                           double sample_rate = 16000.0,
                                           size_t n_fft = 512) {
  audiogram.Validate();
  Require(n_fft >= 2 && n_bins == n_fft / 2 + 1,
          "interpolate_audiogram: n_bins must equal n_fft/2 + 1");
  Require(sample_rate / 2 >= kAudiometricFreqs.back(),
          "interpolate_audiogram: Nyquist frequency below 8 kHz");
  const auto& h = audiogram.thresholds();
  const auto& f = kAudiometricFreqs;
  DenseAudiogram out;
  out.values.resize(n_bins);
  out.bin_freqs.resize(n_bins);
  for (size_t k = 0; k < n_bins; ++k) {
    const double fk =
        static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
    out.bin_freqs[k] = fk;
    double v;
    if (fk <= f.front()) {
      v = h.front();
    } else if (fk >= f.back()) {
      v = h.back();
    } else {
      size_t i = 0;
      while (fk >= f[i + 1]) ++i;
      v = h[i] + (h[i + 1] - h[i]) * ((fk - f[i]) / (f[i + 1] - f[i]));
    }
    out.values[k] = v;
  }
  return out;
}

// Mean threshold at 500, 1000, 2000 and 4000 Hz.
inline double PureToneAverage(const Audiogram& a) {
  a.Validate();
  return (a[1] + a[2] + a[3] + a[4]) / 4.0;
}

enum class SeverityClass { kMild, kModerate, kSevere };

inline const char* ToString(SeverityClass s) {
  switch (s) {
    case SeverityClass::kMild:
      return "mild";
    case SeverityClass::kModerate:
      return "moderate";
    case SeverityClass::kSevere:
      return "severe";
  }
  return "?";
}

// < 40 mild, [40, 70] moderate, > 70 severe.
inline SeverityClass ClassifySeverity(double pta) {
  Require(std::isfinite(pta), "classify_severity: non-finite PTA");
  if (pta < 40.0) return SeverityClass::kMild;
  if (pta <= 70.0) return SeverityClass::kModerate;
  return SeverityClass::kSevere;
}

// {"freqs": [...], "thresholds_dB": [...]}; freqs must match the fixed set.
inline Audiogram AudiogramFromJson(const nlohmann::json& j) {
  Require(j.is_object() && j.contains("thresholds_dB"),
          "audiogram json: missing \"thresholds_dB\"");
  if (j.contains("freqs")) {
    const auto freqs = j.at("freqs").get<std::vector<double>>();
    Require(freqs.size() == kAudiometricFreqs.size() &&
                std::equal(freqs.begin(), freqs.end(), kAudiometricFreqs.begin()),
            "audiogram json: freqs must be [250, 500, 1000, 2000, 4000, 8000]");
  }
  const auto th = j.at("thresholds_dB").get<std::vector<double>>();
  return Audiogram::FromValues(th);
}

inline nlohmann::json AudiogramToJson(const Audiogram& a) {
  return {{"freqs", std::vector<double>(kAudiometricFreqs.begin(),
                                        kAudiometricFreqs.end())},
          {"thresholds_dB",
           std::vector<double>(a.thresholds().begin(), a.thresholds().end())}};
}

// Parses one 6-column CSV row of thresholds.
inline Audiogram AudiogramFromCsvRow(const std::string& line) {
  std::vector<double> v;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      size_t used = 0;
      v.push_back(std::stod(cell, &used));
    } catch (const std::exception&) {
      throw ValidationError("audiogram csv: non-numeric cell '" + cell + "'");
    }
  }
  return Audiogram::FromValues(v);
}

// Loads a collection from .json (single object or array of objects) or .csv
// (one audiogram per row; a header row starting with a letter is skipped).
inline std::vector<Audiogram> LoadAudiograms(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in || !std::filesystem::is_regular_file(path))
    throw ValidationError("cannot open audiogram file " + path.string());
  std::vector<Audiogram> out;
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("audiogram json " + path.string() + ": " + e.what());
    }
    if (j.is_array())
      for (const auto& e : j) out.push_back(AudiogramFromJson(e));
    else
      out.push_back(AudiogramFromJson(j));
  } else {
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || std::isalpha(static_cast<unsigned char>(line[0])))
        continue;
      out.push_back(AudiogramFromCsvRow(line));
    }
  }
  Require(!out.empty(), "audiogram file " + path.string() + " holds no entries");
  return out;
}

}  // namespace hearnet
