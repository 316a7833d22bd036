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

// Minimal RIFF/WAVE reader and writer: mono, 16 kHz, PCM16 or float32.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hearnet/core/error.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet {

enum class WavEncoding { kPcm16, kFloat32 };

namespace wav_detail {
inline uint32_t ReadU32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}
inline uint16_t ReadU16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}
inline void PutU32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
inline void PutU16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v));
  b.push_back(static_cast<uint8_t>(v >> 8));
}
}  // namespace wav_detail

inline Waveform DecodeWav(const std::vector<uint8_t>& bytes,
                          const std::string& name = "<memory>") {
  using namespace wav_detail;
  auto fail = [&](const std::string& why) {
    throw ValidationError("wav " + name + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail("not a RIFF/WAVE file");
  size_t pos = 12;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const uint32_t len = ReadU32(&bytes[pos + 4]);
    const uint8_t* body = &bytes[pos + 8];
    if (pos + 8 + len > bytes.size()) fail("truncated chunk");
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (len < 16) fail("short fmt chunk");
      format = ReadU16(body);
      channels = ReadU16(body + 2);
      rate = ReadU32(body + 4);
      bits = ReadU16(body + 14);
      // WAVE_FORMAT_EXTENSIBLE: the real format tag opens the subformat GUID.
      if (format == 0xFFFE && len >= 26) format = ReadU16(body + 24);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  if (!format || !data) fail("missing fmt or data chunk");
  if (channels != 1)
    fail(std::to_string(channels) + " channels; only mono is supported");
  if (rate != static_cast<uint32_t>(kSampleRate))
    fail("sample rate " + std::to_string(rate) +
         " Hz; resample to 16000 Hz before use");
  Waveform w;
  if (format == 1 && bits == 16) {
    w.samples.resize(data_len / 2);
    for (size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = static_cast<int16_t>(ReadU16(data + 2 * i)) / 32768.0;
  } else if (format == 3 && bits == 32) {
    w.samples.resize(data_len / 4);
    for (size_t i = 0; i < w.samples.size(); ++i) {
      const uint32_t u = ReadU32(data + 4 * i);
      float f;
      std::memcpy(&f, &u, 4);
      w.samples[i] = f;
    }
  } else {
    fail("unsupported encoding (format " + std::to_string(format) + ", " +
         std::to_string(bits) + " bits); use PCM16 or float32");
  }
  return w;
}

inline std::vector<uint8_t> EncodeWav(const Waveform& w,
                                      WavEncoding enc = WavEncoding::kFloat32) {
  using namespace wav_detail;
  w.Validate();
  const bool f32 = enc == WavEncoding::kFloat32;
  const uint16_t bits = f32 ? 32 : 16;
  const uint32_t data_len = static_cast<uint32_t>(w.size() * bits / 8);
  std::vector<uint8_t> b;
  b.reserve(44 + data_len);
  for (char c : std::string("RIFF")) b.push_back(static_cast<uint8_t>(c));
  PutU32(b, 36 + data_len);
  for (char c : std::string("WAVEfmt ")) b.push_back(static_cast<uint8_t>(c));
  PutU32(b, 16);
  PutU16(b, f32 ? 3 : 1);
  PutU16(b, 1);
  PutU32(b, static_cast<uint32_t>(w.sample_rate));
  PutU32(b, static_cast<uint32_t>(w.sample_rate) * bits / 8);
  PutU16(b, bits / 8);
  PutU16(b, bits);
  for (char c : std::string("data")) b.push_back(static_cast<uint8_t>(c));
  PutU32(b, data_len);
  for (double v : w.samples) {
    if (f32) {
      const float f = static_cast<float>(v);
      uint32_t u;
      std::memcpy(&u, &f, 4);
      PutU32(b, u);
    } else {
      const double c = std::clamp(v, -1.0, 32767.0 / 32768.0);
      PutU16(b, static_cast<uint16_t>(
                    static_cast<int16_t>(std::lrint(c * 32768.0))));
    }
  }
  return b;
}

inline Waveform ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || !std::filesystem::is_regular_file(path))
    throw ValidationError("cannot open wav file " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return DecodeWav(bytes, path.string());
}

inline void WriteWav(const std::filesystem::path& path, const Waveform& w,
                     WavEncoding enc = WavEncoding::kFloat32) {
  const auto bytes = EncodeWav(w, enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write wav file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeFailure("write failed for " + path.string());
}

}  // namespace hearnet
