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

#include <json.hpp>
#include <regex>
#include <string>

#include "hearnet/core/error.hpp"
#include "hearnet/dsp/spectral.hpp"

namespace hearnet {

struct ModelConfig {
  size_t channels = 48;
  size_t downsample_factor = 4;
  size_t n_blocks = 2;
  size_t heads = 4;
  size_t dense_depth = 4;
  size_t ffn_mult = 4;
  size_t conv_expansion = 2;
  size_t conv_kernel = 7;
  size_t gru_hidden = 128;
  size_t disc_hidden = 64;
  double compress = 0.3;  // power-law magnitude compression of the features
  StftConfig stft{};

  size_t bins() const { return stft.num_bins(); }
  size_t stages() const { return downsample_factor == 8 ? 3 : 2; }
  // Width after each stride-2 conv: ceil(F / 2) per stage.
  size_t reduced_bins() const {
    size_t f = bins();
    for (size_t i = 0; i < stages(); ++i) f = (f + 1) / 2;
    return f;
  }
  std::string Variant() const {
    return "C" + std::to_string(channels) + "DF" + std::to_string(downsample_factor);
  }

  void Validate() const {
    stft.Validate();
    Require(channels > 0 && heads > 0 && channels % heads == 0,
            "model: heads must divide channels");
    Require(downsample_factor == 4 || downsample_factor == 8,
            "model: downsample factor must be 4 or 8");
    Require(n_blocks >= 1 && dense_depth >= 1 && gru_hidden >= 1,
            "model: block, dense and GRU sizes must be positive");
    Require(conv_kernel % 2 == 1, "model: conformer conv kernel must be odd");
    Require(compress > 0 && compress <= 1, "model: compression in (0, 1]");
    // Sub-pixel decoding doubles then trims one bin, so every width in the
    // chain must be odd.
    size_t f = bins();
    for (size_t i = 0; i < stages(); ++i) {
      Require(f % 2 == 1 && f >= 3, "model: bin count chain must stay odd");
      f = (f + 1) / 2;
    }
  }

  // "C48DF4" style names; channels in {36, 48, 60}, factor in {4, 8}.
  static ModelConfig FromVariant(const std::string& v) {
    static const std::regex re("C(\\d+)DF(\\d+)");
    std::smatch m;
    if (!std::regex_match(v, m, re))
      throw ConfigError("model: malformed variant '" + v + "', expected e.g. C48DF4");
    ModelConfig c;
    c.channels = std::stoul(m[1]);
    c.downsample_factor = std::stoul(m[2]);
    if (c.channels != 36 && c.channels != 48 && c.channels != 60)
      throw ConfigError("model: channels must be 36, 48 or 60 in '" + v + "'");
    if (c.downsample_factor != 4 && c.downsample_factor != 8)
      throw ConfigError("model: downsample factor must be 4 or 8 in '" + v + "'");
    return c;
  }

  // C=8 on a 64-point STFT (F'=9): small enough for float64 gradient checks.
  static ModelConfig Tiny() {
    ModelConfig c;
    c.channels = 8;
    c.heads = 2;
    c.dense_depth = 2;
    c.ffn_mult = 2;
    c.conv_kernel = 3;
    c.gru_hidden = 8;
    c.disc_hidden = 8;
    c.stft = StftConfig{64, 32};
    return c;
  }
};

inline nlohmann::json ModelConfigToJson(const ModelConfig& c) {
  return {{"channels", c.channels},         {"downsample_factor", c.downsample_factor},
          {"n_blocks", c.n_blocks},         {"heads", c.heads},
          {"dense_depth", c.dense_depth},   {"ffn_mult", c.ffn_mult},
          {"conv_expansion", c.conv_expansion}, {"conv_kernel", c.conv_kernel},
          {"gru_hidden", c.gru_hidden},     {"disc_hidden", c.disc_hidden},
          {"compress", c.compress},         {"n_fft", c.stft.frame_len},
          {"hop", c.stft.hop}};
}

inline ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  ModelConfig c;
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
  };
  try {
  if (j.contains("variant")) {
    const auto v = j.at("variant").get<std::string>();
    c = v == "tiny" ? ModelConfig::Tiny() : ModelConfig::FromVariant(v);
  }
  get("channels", c.channels);
  get("downsample_factor", c.downsample_factor);
  get("n_blocks", c.n_blocks);
  get("heads", c.heads);
  get("dense_depth", c.dense_depth);
  get("ffn_mult", c.ffn_mult);
  get("conv_expansion", c.conv_expansion);
  get("conv_kernel", c.conv_kernel);
  get("gru_hidden", c.gru_hidden);
  get("disc_hidden", c.disc_hidden);
  get("compress", c.compress);
  get("n_fft", c.stft.frame_len);
  get("hop", c.stft.hop);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.Validate();
  return c;
}

}  // namespace hearnet
