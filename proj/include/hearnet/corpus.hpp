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

// On-disk corpus: a JSON-lines manifest next to noisy/, target/ and vad/
// trees. Paths in the manifest are relative to the manifest's directory; VAD
// sidecars hold one byte (0 or 1) per STFT frame.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "hearnet/audiogram.hpp"
#include "hearnet/core/error.hpp"
#include "hearnet/dsp/wav.hpp"
#include "hearnet/synthesis.hpp"

namespace hearnet {

struct CorpusRecord {
  std::string id;
  std::string noisy_path, target_path, vad_path;
  Audiogram audiogram;
  nlohmann::json meta = nlohmann::json::object();
};

// A record with its audio loaded.
struct CorpusItem {
  std::string id;
  Waveform noisy, target;
  Audiogram audiogram;
  std::vector<bool> vad;
};

inline nlohmann::json SynthMetaToJson(const SynthMeta& m) {
  return {{"mode", ToString(m.mode)},
          {"applied_mode", ToString(m.applied_mode)},
          {"release_fallback", m.release_fallback},
          {"speech_rms_db", m.speech_rms_db},
          {"target_level_db", m.target_level_db},
          {"gaussian_added", m.gaussian_added},
          {"gaussian_level_db", m.gaussian_level_db},
          {"snr_db", m.snr_db},
          {"activity", m.activity},
          {"speech_id", m.speech_id},
          {"speech_offset", m.speech_offset},
          {"noise_id", m.noise_id},
          {"noise_offset", m.noise_offset},
          {"audiogram_index", m.audiogram_index},
          {"crop_attempts", m.crop_attempts},
          {"clipped_samples", m.clipped_samples},
          {"seed", m.seed},
          {"index", m.index}};
}

inline void WriteVad(const std::filesystem::path& path, const std::vector<bool>& vad) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write vad file " + path.string());
  for (bool v : vad) out.put(v ? 1 : 0);
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

inline std::vector<bool> ReadVad(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || !std::filesystem::is_regular_file(path))
    throw ValidationError("cannot open vad file " + path.string());
  std::vector<bool> out;
  char c;
  while (in.get(c)) {
    Require(c == 0 || c == 1, "vad file " + path.string() + " holds a byte other than 0/1");
    out.push_back(c == 1);
  }
  Require(!out.empty(), "vad file " + path.string() + " is empty");
  return out;
}

inline std::string SampleId(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06zu", index);
  return buf;
}

// Writes the audio and sidecar of one sample under `root` and returns its
// manifest record.
inline CorpusRecord WriteSample(const std::filesystem::path& root, const std::string& id,
                                const SynthSample& s) {
  namespace fs = std::filesystem;
  for (const char* d : {"noisy", "target", "vad"}) fs::create_directories(root / d);
  CorpusRecord r;
  r.id = id;
  r.noisy_path = "noisy/" + id + ".wav";
  r.target_path = "target/" + id + ".wav";
  r.vad_path = "vad/" + id + ".vad";
  r.audiogram = s.audiogram;
  r.meta = SynthMetaToJson(s.meta);
  WriteWav(root / r.noisy_path, s.noisy);
  WriteWav(root / r.target_path, s.target);
  WriteVad(root / r.vad_path, s.vad);
  return r;
}

inline nlohmann::json CorpusRecordToJson(const CorpusRecord& r) {
  return {{"id", r.id},
          {"noisy_path", r.noisy_path},
          {"target_path", r.target_path},
          {"vad_path", r.vad_path},
          {"audiogram", AudiogramToJson(r.audiogram)},
          {"meta", r.meta}};
}

inline void WriteManifest(const std::filesystem::path& path,
                          const std::vector<CorpusRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write manifest " + path.string());
  for (const auto& r : records) out << CorpusRecordToJson(r).dump() << "\n";
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

inline std::vector<CorpusRecord> ReadManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in || !std::filesystem::is_regular_file(path))
    throw ValidationError("cannot open manifest " + path.string());
  std::vector<CorpusRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      CorpusRecord r;
      r.id = j.at("id").get<std::string>();
      r.noisy_path = j.at("noisy_path").get<std::string>();
      r.target_path = j.at("target_path").get<std::string>();
      r.vad_path = j.value("vad_path", "");
      r.audiogram = AudiogramFromJson(j.at("audiogram"));
      if (j.contains("meta")) r.meta = j.at("meta");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("manifest " + where + ": " + e.what());
    }
  }
  Require(!out.empty(), "manifest " + path.string() + " has no records");
  return out;
}

inline CorpusItem LoadCorpusItem(const std::filesystem::path& root, const CorpusRecord& r) {
  CorpusItem it;
  it.id = r.id;
  it.noisy = ReadWav(root / r.noisy_path);
  it.target = ReadWav(root / r.target_path);
  Require(it.noisy.size() == it.target.size(),
          "corpus item " + r.id + ": noisy and target lengths differ");
  it.audiogram = r.audiogram;
  if (!r.vad_path.empty()) {
    it.vad = ReadVad(root / r.vad_path);
  } else {
    it.vad = VadLabels(it.target);
  }
  return it;
}

inline std::vector<CorpusItem> LoadCorpus(const std::filesystem::path& manifest) {
  const auto root = manifest.parent_path();
  std::vector<CorpusItem> out;
  for (const auto& r : ReadManifest(manifest)) out.push_back(LoadCorpusItem(root, r));
  return out;
}

// In-memory item from a synthesized sample (skips the disk round trip).
inline CorpusItem ToCorpusItem(const std::string& id, const SynthSample& s) {
  return CorpusItem{id, s.noisy, s.target, s.audiogram, s.vad};
}

// Re-derives VAD labels whose frame count does not match `grid` (a model
// with a non-default STFT reads a corpus labelled on the detector grid).
inline size_t AlignVadToGrid(std::vector<CorpusItem>& items, const StftConfig& grid) {
  ActivityDetector det;
  det.grid = grid;
  size_t changed = 0;
  for (auto& it : items) {
    if (it.vad.size() == grid.NumFrames(it.target.size())) continue;
    it.vad = det.Labels(it.target);
    ++changed;
  }
  return changed;
}

// Every *.wav directly inside `dir`, sorted by file name; ids are the stems.
inline SourcePool LoadSourcePool(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("source directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("source directory " + dir.string() + " holds no .wav files");
  SourcePool pool;
  for (const auto& f : files) pool.Add(f.stem().string(), ReadWav(f));
  return pool;
}

inline nlohmann::json SynthConfigToJson(const SynthConfig& c) {
  return {{"duration_s", c.duration_s},
          {"mode_probs", c.mode_probs},
          {"gaussian_prob", c.gaussian_prob},
          {"snr_range", c.snr_range},
          {"seed", c.seed},
          {"min_activity", c.min_activity},
          {"ramp_s", c.ramp_s},
          {"smoothing", c.wdrc.smoothing}};
}

inline SynthConfig SynthConfigFromJson(const nlohmann::json& j) {
  SynthConfig c;
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
  };
  try {
    get("duration_s", c.duration_s);
    get("mode_probs", c.mode_probs);
    get("gaussian_prob", c.gaussian_prob);
    get("snr_range", c.snr_range);
    get("seed", c.seed);
    get("min_activity", c.min_activity);
    get("ramp_s", c.ramp_s);
    get("smoothing", c.wdrc.smoothing);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  c.Validate();
  return c;
}

struct SynthSummary {
  size_t count = 0;
  std::array<size_t, 3> modes{};  // applied modes: release, attack, bypass
  size_t release_fallbacks = 0;
  size_t gaussian = 0;
};

// Synthesizes `n` samples into `root` (audio trees plus manifest.jsonl). The
// tree is byte-identical for any worker count.
inline SynthSummary SynthesizeToDisk(const SourcePool& speech, const SourcePool& noise,
                                     const std::vector<Audiogram>& audiograms,
                                     const SynthConfig& cfg, size_t n, size_t workers,
                                     const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  std::vector<CorpusRecord> records(n);
  SynthesizeCorpus(speech, noise, audiograms, cfg, n, workers, [&](size_t i, SynthSample&& s) {
    records[i] = WriteSample(root, SampleId(i), s);
  });
  WriteManifest(root / "manifest.jsonl", records);
  SynthSummary sum;
  sum.count = n;
  for (const auto& r : records) {
    const std::string m = r.meta.at("applied_mode").get<std::string>();
    ++sum.modes[m == "release" ? 0 : m == "attack" ? 1 : 2];
    sum.release_fallbacks += r.meta.at("release_fallback").get<bool>();
    sum.gaussian += r.meta.at("gaussian_added").get<bool>();
  }
  return sum;
}

}  // namespace hearnet
