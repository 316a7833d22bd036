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

// Adversarial training: per batch one discriminator step that regresses the
// quality oracle on detached estimates, then one generator step against the
// frozen discriminator. Also the checkpoint container, the epoch loop with
// validation and resume, and the loss-weight ablation harness.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hearnet/corpus.hpp"
#include "hearnet/losses.hpp"
#include "hearnet/metrics.hpp"
#include "hearnet/model/network.hpp"

namespace hearnet {

struct TrainConfig {
  double lr = 5e-4;
  double lr_decay = 0.5;
  size_t decay_every = 10;  // epochs
  size_t epochs = 25;
  size_t batch_size = 4;
  LossWeights weights;
  LossConfig losses;
  uint64_t seed = 0;
  std::string oracle = "default";
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  size_t max_steps = 0;         // stop after this many steps in total; 0 = no cap
  size_t checkpoint_every = 0;  // also write step_<n>.ckpt every n steps; 0 = off
  bool keep_epoch_checkpoints = true;

  void Validate() const {
    Require(std::isfinite(lr) && lr > 0, "train: learning rate must be positive");
    Require(lr_decay > 0 && lr_decay <= 1, "train: lr decay in (0, 1]");
    Require(decay_every >= 1, "train: decay period must be >= 1 epoch");
    Require(epochs >= 1, "train: epochs must be >= 1");
    Require(batch_size >= 1, "train: batch size must be >= 1");
    Require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0,
            "train: invalid Adam constants");
    weights.Validate();
    losses.Validate();
    OracleByName(oracle);
  }

  // Epochs count from 1.
  double LearningRate(size_t epoch) const {
    Require(epoch >= 1, "train: epochs count from 1");
    return lr * std::pow(lr_decay, static_cast<double>((epoch - 1) / decay_every));
  }
};

inline nlohmann::json TrainConfigToJson(const TrainConfig& c) {
  nlohmann::json res = nlohmann::json::array();
  for (const auto& r : c.losses.resolutions) res.push_back({r.frame_len, r.hop});
  return {{"lr", c.lr},
          {"lr_decay", c.lr_decay},
          {"decay_every", c.decay_every},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"alpha", c.weights.alpha},
          {"lambda", c.weights.lambda},
          {"mu", c.weights.mu},
          {"focal_weight", c.weights.focal_weight},
          {"focal_gamma", c.losses.focal_gamma},
          {"perceptual", c.losses.perceptual},
          {"resolutions", res},
          {"seed", c.seed},
          {"oracle", c.oracle},
          {"clip_norm", c.clip_norm},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"max_steps", c.max_steps},
          {"checkpoint_every", c.checkpoint_every},
          {"keep_epoch_checkpoints", c.keep_epoch_checkpoints}};
}

inline TrainConfig TrainConfigFromJson(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* k, auto& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
  };
  try {
    get("lr", c.lr);
    get("lr_decay", c.lr_decay);
    get("decay_every", c.decay_every);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("alpha", c.weights.alpha);
    get("lambda", c.weights.lambda);
    get("mu", c.weights.mu);
    get("focal_weight", c.weights.focal_weight);
    get("focal_gamma", c.losses.focal_gamma);
    get("perceptual", c.losses.perceptual);
    if (j.contains("resolutions")) {
      c.losses.resolutions.clear();
      for (const auto& r : j.at("resolutions"))
        c.losses.resolutions.push_back(StftConfig{r.at(0).get<size_t>(), r.at(1).get<size_t>()});
    }
    get("seed", c.seed);
    get("oracle", c.oracle);
    get("clip_norm", c.clip_norm);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("adam_eps", c.adam_eps);
    get("max_steps", c.max_steps);
    get("checkpoint_every", c.checkpoint_every);
    get("keep_epoch_checkpoints", c.keep_epoch_checkpoints);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.Validate();
  return c;
}

// Named parameter handles of a module in visiting order.
template <class T, class M>
std::vector<std::pair<std::string, Var<T>>> NamedTensors(M& m, bool include_buffers) {
  std::vector<std::pair<std::string, Var<T>>> out;
  m.Visit("", [&](const std::string& n, Var<T>& v, bool buffer) {
    if (include_buffers || !buffer) out.emplace_back(n, v);
  });
  return out;
}

// Adam with bias correction over a module's trainable parameters.
template <class T>
class Adam {
 public:
  Adam() = default;
  template <class M>
  explicit Adam(M& m, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [n, v] : NamedTensors<T>(m, false)) {
      names_.push_back(n);
      params_.push_back(v);
      m_.emplace_back(v.shape());
      v_.emplace_back(v.shape());
    }
  }

  void ZeroGrad() {
    for (auto& p : params_) p.ZeroGrad();
  }

  double GradNorm() const {
    double s = 0;
    for (const auto& p : params_)
      if (p.has_grad())
        for (T g : p.node()->grad.vec()) s += static_cast<double>(g) * g;
    return std::sqrt(s);
  }

  // Rescales gradients to global norm `max_norm` when larger; returns the
  // norm before clipping.
  double ClipGradNorm(double max_norm) {
    const double n = GradNorm();
    if (max_norm > 0 && n > max_norm) {
      const T s = static_cast<T>(max_norm / (n + 1e-12));
      for (auto& p : params_)
        if (p.has_grad())
          for (T& g : p.node()->grad.vec()) g *= s;
    }
    return n;
  }

  void Step(double lr) {
    ++t_;
    const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T step = static_cast<T>(lr / c1), ic2 = static_cast<T>(1 / c2), eps = static_cast<T>(eps_);
    for (size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) continue;
      const auto& g = params_[i].node()->grad.vec();
      auto& w = params_[i].mutable_value().vec();
      auto& m = m_[i].vec();
      auto& v = v_[i].vec();
      for (size_t k = 0; k < w.size(); ++k) {
        m[k] = b1 * m[k] + (T(1) - b1) * g[k];
        v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
        w[k] -= step * m[k] / (std::sqrt(v[k] * ic2) + eps);
      }
    }
  }

  size_t steps() const { return t_; }
  void set_steps(size_t t) { t_ = t; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  size_t t_ = 0;
  std::vector<std::string> names_;
  std::vector<Var<T>> params_;
  std::vector<Tensor<T>> m_, v_;
};

// Everything a run needs to continue bit-exactly. Optimizers alias the
// networks' parameter nodes, so the state is neither copyable nor movable.
template <class T>
struct TrainState {
  ModelConfig model;
  TrainConfig train;
  Generator<T> g;
  Discriminator<T> d;
  Adam<T> opt_g, opt_d;
  size_t epoch = 1;  // epoch in progress, from 1
  size_t batch = 0;  // next batch within the epoch
  size_t step = 0;   // completed steps
  Rng rng;
  double best_oracle = -1;
  size_t best_epoch = 0;

  TrainState(const ModelConfig& mc, const TrainConfig& tc)
      : model(mc),
        train(tc),
        g(mc, tc.seed),
        d(mc, tc.seed + 1),
        opt_g(g, tc.beta1, tc.beta2, tc.adam_eps),
        opt_d(d, tc.beta1, tc.beta2, tc.adam_eps),
        rng(tc.seed) {
    tc.Validate();
  }
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;
};

// ---------------------------------------------------------------------------
// Checkpoints: "HNETCKPT", u32 version, u64 header length, JSON header, raw
// little-endian arrays in header order, then a 64-bit FNV-1a checksum of all
// preceding bytes.

inline constexpr char kCheckpointMagic[8] = {'H', 'N', 'E', 'T', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline uint64_t Fnv1a64(const uint8_t* p, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

template <class T>
const char* DtypeName() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <class T>
struct CkptEntry {
  std::string name;
  Tensor<T>* tensor;
};

template <class T>
std::vector<CkptEntry<T>> CheckpointEntries(TrainState<T>& s) {
  std::vector<CkptEntry<T>> e;
  for (auto& [n, v] : NamedTensors<T>(s.g, true)) e.push_back({"g/" + n, &v.mutable_value()});
  for (auto& [n, v] : NamedTensors<T>(s.d, true)) e.push_back({"d/" + n, &v.mutable_value()});
  auto add_opt = [&](const char* p, Adam<T>& o) {
    for (size_t i = 0; i < o.names().size(); ++i) {
      e.push_back({std::string(p) + "/m/" + o.names()[i], &o.first_moments()[i]});
      e.push_back({std::string(p) + "/v/" + o.names()[i], &o.second_moments()[i]});
    }
  };
  add_opt("adam_g", s.opt_g);
  add_opt("adam_d", s.opt_d);
  return e;
}

template <class U>
void PutPod(std::vector<uint8_t>& b, U v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  b.insert(b.end(), p, p + sizeof(U));
}

template <class U>
U GetPod(const std::vector<uint8_t>& b, size_t& pos) {
  if (pos + sizeof(U) > b.size()) throw RuntimeFailure("checkpoint: truncated file");
  U v;
  std::memcpy(&v, b.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}

struct ParsedCheckpoint {
  nlohmann::json header;
  std::vector<uint8_t> bytes;
  size_t data_offset = 0;
};

inline ParsedCheckpoint ParseCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || !std::filesystem::is_regular_file(path))
    throw ValidationError("cannot open checkpoint " + path.string());
  ParsedCheckpoint c;
  c.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  const auto& b = c.bytes;
  const std::string where = "checkpoint " + path.string();
  if (b.size() < 8 + 4 + 8 + 8 || std::memcmp(b.data(), kCheckpointMagic, 8) != 0)
    throw RuntimeFailure(where + ": not a checkpoint file");
  size_t pos = 8;
  const auto version = GetPod<uint32_t>(b, pos);
  if (version != kCheckpointVersion)
    throw RuntimeFailure(where + ": unsupported version " + std::to_string(version));
  uint64_t stored;
  std::memcpy(&stored, b.data() + b.size() - 8, 8);
  if (Fnv1a64(b.data(), b.size() - 8) != stored)
    throw RuntimeFailure(where + ": checksum mismatch, refusing a corrupt file");
  const auto hlen = GetPod<uint64_t>(b, pos);
  if (pos + hlen > b.size() - 8) throw RuntimeFailure(where + ": truncated header");
  try {
    c.header = nlohmann::json::parse(b.begin() + static_cast<std::ptrdiff_t>(pos),
                                     b.begin() + static_cast<std::ptrdiff_t>(pos + hlen));
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure(where + ": malformed header: " + e.what());
  }
  c.data_offset = pos + hlen;
  return c;
}

// Copies the stored arrays into the named destinations; every destination
// must be present with a matching shape.
template <class T>
void RestoreTensors(const ParsedCheckpoint& c, const std::vector<CkptEntry<T>>& dst,
                    const std::string& where) {
  if (c.header.at("dtype").get<std::string>() != DtypeName<T>())
    throw ConfigError(where + ": stored precision differs from the model's");
  std::map<std::string, std::pair<Shape, size_t>> index;
  size_t off = c.data_offset;
  for (const auto& t : c.header.at("tensors")) {
    const Shape s = t.at("shape").get<Shape>();
    size_t n = 1;
    for (size_t d : s) n *= d;
    index[t.at("name").get<std::string>()] = {s, off};
    off += n * sizeof(T);
  }
  if (off != c.bytes.size() - 8) throw RuntimeFailure(where + ": data size mismatch");
  for (const auto& e : dst) {
    const auto it = index.find(e.name);
    if (it == index.end()) throw ConfigError(where + ": missing tensor " + e.name);
    if (it->second.first != e.tensor->shape())
      throw ConfigError(where + ": shape mismatch for " + e.name);
    std::memcpy(e.tensor->data(), c.bytes.data() + it->second.second, e.tensor->size() * sizeof(T));
  }
}

}  // namespace detail

template <class T>
void SaveCheckpoint(const std::filesystem::path& path, TrainState<T>& s) {
  const auto entries = detail::CheckpointEntries(s);
  nlohmann::json h;
  h["model"] = ModelConfigToJson(s.model);
  h["train"] = TrainConfigToJson(s.train);
  h["dtype"] = detail::DtypeName<T>();
  h["epoch"] = s.epoch;
  h["batch"] = s.batch;
  h["step"] = s.step;
  h["adam_g_steps"] = s.opt_g.steps();
  h["adam_d_steps"] = s.opt_d.steps();
  h["rng"] = s.rng.SaveState();
  h["best_oracle"] = s.best_oracle;
  h["best_epoch"] = s.best_epoch;
  h["tensors"] = nlohmann::json::array();
  for (const auto& e : entries)
    h["tensors"].push_back({{"name", e.name}, {"shape", e.tensor->shape()}});
  const std::string hs = h.dump();
  std::vector<uint8_t> b(kCheckpointMagic, kCheckpointMagic + 8);
  detail::PutPod(b, kCheckpointVersion);
  detail::PutPod(b, static_cast<uint64_t>(hs.size()));
  b.insert(b.end(), hs.begin(), hs.end());
  for (const auto& e : entries) {
    const auto* p = reinterpret_cast<const uint8_t*>(e.tensor->data());
    b.insert(b.end(), p, p + e.tensor->size() * sizeof(T));
  }
  detail::PutPod(b, Fnv1a64(b.data(), b.size()));
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!out) throw RuntimeFailure("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

// Restores `s` from `path`. The checkpoint's model config must equal s.model.
template <class T>
void LoadCheckpoint(const std::filesystem::path& path, TrainState<T>& s) {
  const auto c = detail::ParseCheckpoint(path);
  const std::string where = "checkpoint " + path.string();
  if (c.header.at("model") != ModelConfigToJson(s.model))
    throw ConfigError(where + ": model config does not match the checkpoint (" +
                      c.header.at("model").dump() + ")");
  detail::RestoreTensors(c, detail::CheckpointEntries(s), where);
  s.epoch = c.header.at("epoch").get<size_t>();
  s.batch = c.header.at("batch").get<size_t>();
  s.step = c.header.at("step").get<size_t>();
  s.opt_g.set_steps(c.header.at("adam_g_steps").get<size_t>());
  s.opt_d.set_steps(c.header.at("adam_d_steps").get<size_t>());
  s.rng.LoadState(c.header.at("rng").get<std::string>());
  s.best_oracle = c.header.at("best_oracle").get<double>();
  s.best_epoch = c.header.at("best_epoch").get<size_t>();
}

inline ModelConfig CheckpointModelConfig(const std::filesystem::path& path) {
  return ModelConfigFromJson(detail::ParseCheckpoint(path).header.at("model"));
}

// Generator weights only, for inference.
template <class T>
std::unique_ptr<Generator<T>> LoadGenerator(const std::filesystem::path& path) {
  const auto c = detail::ParseCheckpoint(path);
  const ModelConfig mc = ModelConfigFromJson(c.header.at("model"));
  auto g = std::make_unique<Generator<T>>(mc, 0);
  std::vector<detail::CkptEntry<T>> dst;
  for (auto& [n, v] : NamedTensors<T>(*g, true)) dst.push_back({"g/" + n, &v.mutable_value()});
  detail::RestoreTensors(c, dst, "checkpoint " + path.string());
  g->SetTraining(false);
  return g;
}

// ---------------------------------------------------------------------------

template <class T>
Var<T> WaveformVar(const Waveform& w) {
  Tensor<T> t(Shape{w.size()});
  for (size_t i = 0; i < w.size(); ++i) t[i] = static_cast<T>(w.samples[i]);
  return ag::Constant(std::move(t));
}

template <class T>
Waveform VarWaveform(const Var<T>& v) {
  std::vector<double> s(v.size());
  for (size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(v.value()[i]);
  return Waveform(std::move(s));
}

// Inference in eval mode without graph recording; same length as the input.
template <class T>
Waveform Enhance(Generator<T>& g, const Waveform& noisy, const Audiogram& a) {
  ag::NoGradGuard ng;
  g.SetTraining(false);
  const auto out = g.Forward(noisy, a);
  return VarWaveform(out.enhanced);
}

struct StepLog {
  size_t step = 0, epoch = 0;
  double lr = 0;
  double g_total = 0, adversarial = 0, perceptual = 0, multires = 0, focal = 0;
  double d_loss = 0, oracle = 0;
  double g_grad_norm = 0, d_grad_norm = 0;
};

// One discriminator update towards the oracle scores `q` of (ref, est).
template <class T>
double DiscriminatorUpdate(Discriminator<T>& d, Adam<T>& opt,
                           const std::vector<Var<T>>& refs, const std::vector<Var<T>>& ests,
                           const std::vector<Var<T>>& hls, const std::vector<double>& q,
                           double lr, double clip_norm, double* grad_norm = nullptr) {
  const size_t n = refs.size();
  Require(n > 0 && ests.size() == n && hls.size() == n && q.size() == n,
          "discriminator_update: mismatched batch");
  opt.ZeroGrad();
  Var<T> loss;
  for (size_t i = 0; i < n; ++i) {
    const Var<T> l = DiscriminatorLoss(d(refs[i], refs[i], hls[i]), d(refs[i], ests[i], hls[i]), q[i]);
    loss = loss.defined() ? loss + l : l;
  }
  loss = loss * static_cast<T>(1.0 / static_cast<double>(n));
  const double v = static_cast<double>(loss.item());
  if (!std::isfinite(v)) throw RuntimeFailure("non-finite discriminator loss");
  ag::Backward(loss);
  const double gn = opt.ClipGradNorm(clip_norm);
  if (grad_norm) *grad_norm = gn;
  opt.Step(lr);
  opt.ZeroGrad();
  return v;
}

// One discriminator step then one generator step on `batch`.
template <class T>
StepLog TrainStep(TrainState<T>& s, const std::vector<const CorpusItem*>& batch, double lr,
                  const QualityOracle& oracle, const PerceptualFn<T>& perceptual) {
  const size_t n = batch.size();
  Require(n > 0, "train_step: empty batch");
  const TrainConfig& tc = s.train;
  const ModelConfig& mc = s.model;
  std::string ids;
  for (const auto* it : batch) ids += (ids.empty() ? "" : ",") + it->id;

  s.g.SetTraining(true);
  std::vector<Audiogram> auds;
  for (const auto* it : batch) auds.push_back(it->audiogram);
  const Var<T> codes = s.g.EncodeAudiograms(ag::Constant(DenseAudiogramBatch<T>(auds, mc)));
  const size_t fr = codes.dim(1), C = codes.dim(2);

  std::vector<Var<T>> refs, ests, hls;
  std::vector<NetworkOutput<T>> outs;
  std::vector<double> q;
  for (size_t i = 0; i < n; ++i) {
    const CorpusItem& it = *batch[i];
    Require(it.noisy.size() == it.target.size(), "train_step: item " + it.id + " length mismatch");
    const Var<T> code = ag::Reshape(ag::Slice(codes, 0, i, 1), {fr, C});
    outs.push_back(s.g.Forward(WaveformVar<T>(it.noisy), code));
    Require(outs.back().vad.size() == it.vad.size(),
            "train_step: item " + it.id + " has " + std::to_string(it.vad.size()) +
                " vad labels for " + std::to_string(outs.back().vad.size()) + " frames");
    refs.push_back(WaveformVar<T>(it.target));
    hls.push_back(ag::Constant(DenseAudiogramTensor<T>(it.audiogram, mc)));
    const Waveform est = VarWaveform(outs.back().enhanced);
    for (double v : est.samples)
      if (!std::isfinite(v))
        throw RuntimeFailure("non-finite generator output for item " + it.id + " in batch [" +
                             ids + "]");
    q.push_back(oracle(it.target, est, it.audiogram));
  }

  StepLog log;
  log.lr = lr;
  log.oracle = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(n);

  // Discriminator on detached estimates; oracle scores enter as data.
  {
    std::vector<Var<T>> det;
    for (const auto& o : outs) det.push_back(o.enhanced.Detach());
    log.d_loss = DiscriminatorUpdate(s.d, s.opt_d, refs, det, hls, q, lr, tc.clip_norm,
                                     &log.d_grad_norm);
  }

  // Generator against the frozen discriminator.
  s.opt_g.ZeroGrad();
  Var<T> total;
  const auto one = ag::Constant(Tensor<T>::Scalar(T(1)));
  for (size_t i = 0; i < n; ++i) {
    const Var<T> score = tc.weights.alpha > 0 ? s.d(refs[i], outs[i].enhanced, hls[i]) : one;
    const auto gl = ComputeGeneratorLoss(refs[i], outs[i].enhanced, score, outs[i].vad,
                                         batch[i]->vad, tc.weights, tc.losses, perceptual);
    total = total.defined() ? total + gl.total : gl.total;
    log.adversarial += gl.adversarial / static_cast<double>(n);
    log.perceptual += gl.perceptual / static_cast<double>(n);
    log.multires += gl.multires / static_cast<double>(n);
    log.focal += gl.focal / static_cast<double>(n);
  }
  total = total * static_cast<T>(1.0 / static_cast<double>(n));
  log.g_total = static_cast<double>(total.item());
  if (!std::isfinite(log.g_total))
    throw RuntimeFailure("non-finite generator loss in batch [" + ids + "]");
  ag::Backward(total);
  s.opt_d.ZeroGrad();  // D_fix: its gradients are discarded
  log.g_grad_norm = s.opt_g.ClipGradNorm(tc.clip_norm);
  s.opt_g.Step(lr);
  s.opt_g.ZeroGrad();
  return log;
}

struct ValidationResult {
  double si_snr_db = 0, sdr_db = 0, oracle = 0;
};

template <class T>
ValidationResult Validate(Generator<T>& g, const std::vector<CorpusItem>& items,
                          const QualityOracle& oracle) {
  Require(!items.empty(), "validate: empty split");
  ValidationResult r;
  for (const auto& it : items) {
    const Waveform est = Enhance(g, it.noisy, it.audiogram);
    r.si_snr_db += SiSnr(it.target, est);
    r.sdr_db += Sdr(it.target, est);
    r.oracle += oracle(it.target, est, it.audiogram);
  }
  const double n = static_cast<double>(items.size());
  r.si_snr_db /= n;
  r.sdr_db /= n;
  r.oracle /= n;
  return r;
}

// Deterministic order of the training items for an epoch.
inline std::vector<size_t> EpochOrder(uint64_t seed, size_t epoch, size_t n) {
  std::vector<size_t> p(n);
  std::iota(p.begin(), p.end(), size_t{0});
  Rng r = Rng::Child(seed ^ 0x5eedf00dULL, epoch);
  for (size_t i = n; i > 1; --i) std::swap(p[i - 1], p[r.Index(i)]);
  return p;
}

struct EpochLog {
  size_t epoch = 0;
  double lr = 0, g_loss = 0;
  ValidationResult valid;
  bool best = false;
};

struct TrainResult {
  std::vector<StepLog> steps;  // steps run by this call
  std::vector<EpochLog> epochs;
  double best_oracle = -1;
  size_t best_epoch = 0;
  bool stopped_early = false;
};

namespace detail {

inline std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline constexpr const char* kStepHeader =
    "step,epoch,lr,g_total,adversarial,perceptual,multires,focal,d_loss,oracle,"
    "g_grad_norm,d_grad_norm,alpha,lambda,mu,focal_weight";
inline constexpr const char* kEpochHeader = "epoch,lr,g_loss,si_snr_db,sdr_db,oracle,best";

inline std::string StepRow(const StepLog& l, const LossWeights& w) {
  std::ostringstream os;
  os << l.step << "," << l.epoch;
  for (double v : {l.lr, l.g_total, l.adversarial, l.perceptual, l.multires, l.focal, l.d_loss,
                   l.oracle, l.g_grad_norm, l.d_grad_norm, w.alpha, w.lambda, w.mu,
                   w.focal_weight})
    os << "," << Num(v);
  return os.str();
}

inline std::string EpochRow(const EpochLog& e) {
  return std::to_string(e.epoch) + "," + Num(e.lr) + "," + Num(e.g_loss) + "," +
         Num(e.valid.si_snr_db) + "," + Num(e.valid.sdr_db) + "," + Num(e.valid.oracle) + "," +
         (e.best ? "1" : "0");
}

// Keeps the header and the rows whose first field satisfies `keep`.
template <class Keep>
void TruncateCsv(const std::filesystem::path& p, const char* header, Keep keep) {
  std::vector<std::string> rows;
  if (std::ifstream in(p); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
      if (!line.empty() && keep(std::stoull(line.substr(0, line.find(','))))) rows.push_back(line);
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + p.string());
  out << header << "\n";
  for (const auto& r : rows) out << r << "\n";
}

// Mean generator loss of `epoch` from the step log, so resumed runs report
// the same value as uninterrupted ones.
inline double EpochMeanLoss(const std::filesystem::path& steps_csv, size_t epoch) {
  std::ifstream in(steps_csv);
  std::string line;
  std::getline(in, line);
  double sum = 0;
  size_t n = 0;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string step, ep, lr, total;
    std::getline(ls, step, ',');
    std::getline(ls, ep, ',');
    std::getline(ls, lr, ',');
    std::getline(ls, total, ',');
    if (!ep.empty() && std::stoull(ep) == epoch) sum += std::stod(total), ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

inline void AppendLine(const std::filesystem::path& p, const std::string& line) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  if (!out) throw RuntimeFailure("cannot append to " + p.string());
  out << line << "\n";
}

}  // namespace detail

// Epoch loop over `train_items` with validation on `valid_items`. Writes
// steps.csv, epochs.csv, last.ckpt, best.ckpt and epoch_NNN.ckpt into
// `out_dir`. With `resume` set the run continues from that checkpoint and
// produces the same parameters and logs as an uninterrupted run.
template <class T = float>
TrainResult Train(const std::vector<CorpusItem>& train_items,
                  const std::vector<CorpusItem>& valid_items, const ModelConfig& mc,
                  const TrainConfig& tc, const std::filesystem::path& out_dir,
                  const std::filesystem::path& resume = {},
                  TrainState<T>* state_out = nullptr) {
  namespace fs = std::filesystem;
  tc.Validate();
  mc.Validate();
  Require(!train_items.empty(), "train: empty training split");
  Require(!valid_items.empty(), "train: empty validation split");
  fs::create_directories(out_dir);
  auto owned = state_out ? nullptr : std::make_unique<TrainState<T>>(mc, tc);
  TrainState<T>& s = state_out ? *state_out : *owned;
  if (!resume.empty()) LoadCheckpoint(resume, s);

  const auto steps_csv = out_dir / "steps.csv";
  const auto epochs_csv = out_dir / "epochs.csv";
  const size_t done_step = s.step, done_epoch = s.epoch;
  detail::TruncateCsv(steps_csv, detail::kStepHeader, [&](size_t v) { return v <= done_step; });
  detail::TruncateCsv(epochs_csv, detail::kEpochHeader, [&](size_t v) { return v < done_epoch; });

  const QualityOracle oracle = OracleByName(tc.oracle);
  const PerceptualFn<T> perceptual = PerceptualRegistry<T>::Instance().Make(tc.losses);
  const size_t nb = (train_items.size() + tc.batch_size - 1) / tc.batch_size;
  TrainResult res;

  for (; s.epoch <= tc.epochs; ++s.epoch, s.batch = 0) {
    const double lr = tc.LearningRate(s.epoch);
    const auto order = EpochOrder(tc.seed, s.epoch, train_items.size());
    for (; s.batch < nb; ++s.batch) {
      if (tc.max_steps && s.step >= tc.max_steps) {
        res.stopped_early = true;
        break;
      }
      std::vector<const CorpusItem*> b;
      for (size_t k = s.batch * tc.batch_size;
           k < std::min(train_items.size(), (s.batch + 1) * tc.batch_size); ++k)
        b.push_back(&train_items[order[k]]);
      StepLog l = TrainStep(s, b, lr, oracle, perceptual);
      l.step = ++s.step;
      l.epoch = s.epoch;
      detail::AppendLine(steps_csv, detail::StepRow(l, tc.weights));
      res.steps.push_back(l);
      if (tc.checkpoint_every && s.step % tc.checkpoint_every == 0) {
        ++s.batch;  // the checkpoint resumes after this batch
        char name[32];
        std::snprintf(name, sizeof(name), "step_%06zu.ckpt", s.step);
        SaveCheckpoint(out_dir / name, s);
        --s.batch;
      }
    }
    if (res.stopped_early) break;

    EpochLog e;
    e.epoch = s.epoch;
    e.lr = lr;
    e.g_loss = detail::EpochMeanLoss(steps_csv, s.epoch);
    e.valid = Validate(s.g, valid_items, oracle);
    e.best = e.valid.oracle > s.best_oracle;
    if (e.best) {
      s.best_oracle = e.valid.oracle;
      s.best_epoch = s.epoch;
    }
    detail::AppendLine(epochs_csv, detail::EpochRow(e));
    res.epochs.push_back(e);
    // Checkpoints mark the start of the next epoch.
    ++s.epoch;
    s.batch = 0;
    if (e.best) SaveCheckpoint(out_dir / "best.ckpt", s);
    if (tc.keep_epoch_checkpoints) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03zu.ckpt", e.epoch);
      SaveCheckpoint(out_dir / name, s);
    }
    SaveCheckpoint(out_dir / "last.ckpt", s);
    --s.epoch;
  }
  if (res.stopped_early) SaveCheckpoint(out_dir / "last.ckpt", s);
  res.best_oracle = s.best_oracle;
  res.best_epoch = s.best_epoch;
  return res;
}

// ---------------------------------------------------------------------------
// Loss-weight ablation: one training run per (alpha, lambda) cell.

struct AblationRow {
  LossWeights weights;
  ValidationResult valid;
  double g_loss = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;

  static constexpr const char* kHeader =
      "alpha,lambda,mu,focal_weight,si_snr_db,sdr_db,oracle,g_loss";

  std::string ToCsv() const {
    std::ostringstream os;
    os << kHeader << "\n";
    for (const auto& r : rows) {
      os << detail::Num(r.weights.alpha) << "," << detail::Num(r.weights.lambda) << ","
         << detail::Num(r.weights.mu) << "," << detail::Num(r.weights.focal_weight) << ","
         << detail::Num(r.valid.si_snr_db) << "," << detail::Num(r.valid.sdr_db) << ","
         << detail::Num(r.valid.oracle) << "," << detail::Num(r.g_loss) << "\n";
    }
    return os.str();
  }

  static AblationReport FromCsv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    Require(line == kHeader, "ablation report: unexpected header");
    AblationReport rep;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> v;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
      Require(v.size() == 8, "ablation report: expected 8 columns");
      AblationRow r;
      r.weights = {v[0], v[1], v[2], v[3]};
      r.valid = {v[4], v[5], v[6]};
      r.g_loss = v[7];
      rep.rows.push_back(r);
    }
    return rep;
  }
};

template <class T = float>
AblationReport AblateWeights(const std::vector<double>& alphas, const std::vector<double>& lambdas,
                             const std::vector<CorpusItem>& train_items,
                             const std::vector<CorpusItem>& valid_items, const ModelConfig& mc,
                             const TrainConfig& base, const std::filesystem::path& out_dir) {
  Require(!alphas.empty() && !lambdas.empty(), "ablate_weights: empty grid");
  AblationReport rep;
  for (double a : alphas)
    for (double l : lambdas) {
      TrainConfig tc = base;
      tc.weights.alpha = a;
      tc.weights.lambda = l;
      const auto dir = out_dir / ("alpha_" + detail::Num(a) + "_lambda_" + detail::Num(l));
      const auto r = Train<T>(train_items, valid_items, mc, tc, dir);
      Require(!r.epochs.empty(), "ablate_weights: a cell finished no epoch");
      rep.rows.push_back({tc.weights, r.epochs.back().valid, r.epochs.back().g_loss});
    }
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / "ablation.csv", std::ios::binary) << rep.ToCsv();
  return rep;
}

}  // namespace hearnet
