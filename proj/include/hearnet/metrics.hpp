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

// Objective metrics, the bounded quality oracle and adapters for external
// metric implementations.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hearnet/audiogram.hpp"
#include "hearnet/core/error.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet {

inline constexpr double kMetricCapDb = 60.0;

namespace detail {

inline double CappedDb(double num, double den) {
  if (num <= 0) return -kMetricCapDb;
  if (den <= 0) return kMetricCapDb;
  return std::clamp(10 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

inline void RequireMetricPair(const Waveform& ref, const Waveform& est, const char* what) {
  Require(ref.size() == est.size() && !ref.empty(),
          std::string(what) + ": reference and estimate lengths differ");
  double e = 0;
  for (double v : ref.samples) e += v * v;
  Require(e > 0, std::string(what) + ": reference is silent");
}

}  // namespace detail

// Scale-invariant SNR with mean removal, capped at +-60 dB.
inline double SiSnr(const Waveform& ref, const Waveform& est) {
  detail::RequireMetricPair(ref, est, "si_snr");
  const size_t n = ref.size();
  double mr = 0, me = 0;
  for (size_t i = 0; i < n; ++i) {
    mr += ref.samples[i];
    me += est.samples[i];
  }
  mr /= static_cast<double>(n);
  me /= static_cast<double>(n);
  double dot = 0, rr = 0;
  for (size_t i = 0; i < n; ++i) {
    const double r = ref.samples[i] - mr;
    dot += r * (est.samples[i] - me);
    rr += r * r;
  }
  Require(rr > 0, "si_snr: reference is constant");
  const double a = dot / rr;
  double st = 0, ee = 0;
  for (size_t i = 0; i < n; ++i) {
    const double s = a * (ref.samples[i] - mr);
    const double e = (est.samples[i] - me) - s;
    st += s * s;
    ee += e * e;
  }
  return detail::CappedDb(st, ee);
}

// 10 log10(|ref|^2 / |ref - est|^2), capped at +-60 dB.
inline double Sdr(const Waveform& ref, const Waveform& est) {
  detail::RequireMetricPair(ref, est, "sdr");
  double rr = 0, ee = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    rr += ref.samples[i] * ref.samples[i];
    const double e = ref.samples[i] - est.samples[i];
    ee += e * e;
  }
  return detail::CappedDb(rr, ee);
}

// Maps SI-SNR on [-10, 30] dB linearly to [0, 1]; the audiogram is accepted
// for interface parity with hearing-aware indices but unused.
inline double DefaultOracle(const Waveform& ref, const Waveform& est, const Audiogram&) {
  return std::clamp((SiSnr(ref, est) + 10.0) / 40.0, 0.0, 1.0);
}

using QualityOracle =
    std::function<double(const Waveform&, const Waveform&, const Audiogram&)>;

inline QualityOracle OracleByName(const std::string& name) {
  if (name == "default" || name == "si_snr") return DefaultOracle;
  throw ConfigError("unknown quality oracle '" + name + "'");
}

// Externally provided metrics (PESQ, STOI, HASQI, ...) registered by name.
class MetricRegistry {
 public:
  using Fn = std::function<double(const Waveform& ref, const Waveform& est,
                                  const Audiogram* audiogram)>;
  struct Entry {
    Fn fn;
    double lo, hi;
    bool serial;  // calls are serialized through a per-adapter lock
    std::shared_ptr<std::mutex> mu = std::make_shared<std::mutex>();
  };

  static MetricRegistry& Global() {
    static MetricRegistry r;
    return r;
  }

  // Valid score range for the well-known names; others must pass one.
  static std::pair<double, double> KnownRange(const std::string& name) {
    if (name == "pesq" || name == "pesq_wb" || name == "pesq_nb") return {-0.5, 4.5};
    if (name == "stoi" || name == "hasqi") return {0.0, 1.0};
    throw ConfigError("metric '" + name + "' has no known range; register it with one");
  }

  void Register(const std::string& name, Fn fn, bool serial = false) {
    const auto [lo, hi] = KnownRange(name);
    Register(name, std::move(fn), lo, hi, serial);
  }
  void Register(const std::string& name, Fn fn, double lo, double hi, bool serial = false) {
    Require(lo < hi, "metric range must be non-empty");
    std::lock_guard<std::mutex> l(mu_);
    entries_[name] = Entry{std::move(fn), lo, hi, serial};
  }
  void Unregister(const std::string& name) {
    std::lock_guard<std::mutex> l(mu_);
    entries_.erase(name);
  }
  bool Has(const std::string& name) const {
    std::lock_guard<std::mutex> l(mu_);
    return entries_.count(name) > 0;
  }

  double Evaluate(const std::string& name, const Waveform& ref, const Waveform& est,
                  const Audiogram* audiogram = nullptr) const {
    Entry e;
    {
      std::lock_guard<std::mutex> l(mu_);
      const auto it = entries_.find(name);
      if (it == entries_.end())
        throw ConfigError("metric '" + name +
                          "' is not registered; provide an external implementation");
      e = it->second;
    }
    double v;
    if (e.serial) {
      std::lock_guard<std::mutex> l(*e.mu);
      v = e.fn(ref, est, audiogram);
    } else {
      v = e.fn(ref, est, audiogram);
    }
    if (!std::isfinite(v) || v < e.lo || v > e.hi) {
      std::ostringstream os;
      os << "metric '" << name << "' returned " << v << ", outside [" << e.lo << ", "
         << e.hi << "]";
      throw RuntimeFailure(os.str());
    }
    return v;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

struct EvalRow {
  std::string id;
  double sdr_db = 0, si_snr_db = 0, oracle = 0;
  std::map<std::string, double> external;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<std::string> external_names;

  void Add(EvalRow r) { rows.push_back(std::move(r)); }

  std::map<std::string, double> Means() const {
    std::map<std::string, double> m;
    if (rows.empty()) return m;
    for (const auto& r : rows) {
      m["sdr_db"] += r.sdr_db;
      m["si_snr_db"] += r.si_snr_db;
      m["oracle"] += r.oracle;
      for (const auto& n : external_names) m[n] += r.external.at(n);
    }
    for (auto& [k, v] : m) v /= static_cast<double>(rows.size());
    return m;
  }

  std::string ToCsv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "id,sdr_db,si_snr_db,oracle";
    for (const auto& n : external_names) os << "," << n;
    os << "\n";
    for (const auto& r : rows) {
      os << r.id << "," << r.sdr_db << "," << r.si_snr_db << "," << r.oracle;
      for (const auto& n : external_names) os << "," << r.external.at(n);
      os << "\n";
    }
    const auto m = Means();
    os << "mean," << m.at("sdr_db") << "," << m.at("si_snr_db") << "," << m.at("oracle");
    for (const auto& n : external_names) os << "," << m.at(n);
    os << "\n";
    return os.str();
  }

  nlohmann::json ToJson() const {
    nlohmann::json j;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json row{{"id", r.id}, {"sdr_db", r.sdr_db}, {"si_snr_db", r.si_snr_db},
                         {"oracle", r.oracle}};
      for (const auto& [k, v] : r.external) row[k] = v;
      j["rows"].push_back(row);
    }
    j["mean"] = Means();
    j["count"] = rows.size();
    return j;
  }

  void Write(const std::filesystem::path& dir, const std::string& stem = "eval") const {
    Require(!rows.empty(), "eval report: no rows");
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / (stem + ".csv"));
    std::ofstream js(dir / (stem + ".json"));
    if (!csv || !js) throw RuntimeFailure("cannot write report into " + dir.string());
    csv << ToCsv();
    js << ToJson().dump(2) << "\n";
  }
};

// Evaluates one (reference, estimate) pair with the native metrics, the
// oracle and any requested external adapters.
inline EvalRow EvaluatePair(const std::string& id, const Waveform& ref, const Waveform& est,
                            const Audiogram& audiogram, const QualityOracle& oracle,
                            const std::vector<std::string>& external = {},
                            const MetricRegistry& reg = MetricRegistry::Global()) {
  EvalRow r;
  r.id = id;
  r.sdr_db = Sdr(ref, est);
  r.si_snr_db = SiSnr(ref, est);
  r.oracle = oracle(ref, est, audiogram);
  for (const auto& n : external) r.external[n] = reg.Evaluate(n, ref, est, &audiogram);
  return r;
}

}  // namespace hearnet
