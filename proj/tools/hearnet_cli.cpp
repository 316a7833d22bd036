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

// hearnet: corpus synthesis, training, enhancement, classical compensation,
// evaluation and demo source generation.
//
// Exit codes: 0 success, 2 validation or configuration failure, 3 runtime
// failure. Failures print one JSON line {"error", "kind", "message"} to stderr.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>

#include "hearnet/hearnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hearnet {
namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct Globals {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string variant;
  size_t workers = 1;
  std::string out;
};

json LoadConfigFile(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in || !std::filesystem::is_regular_file(path))
    throw ValidationError("cannot open config file " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

json Section(const json& cfg, const char* name) {
  return cfg.contains(name) ? cfg.at(name) : json::object();
}

void RequireOut(const Globals& g) {
  if (g.out.empty()) throw ValidationError("--out is required");
}

void EchoConfig(const fs::path& path, const json& effective) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << effective.dump(2) << "\n";
}

// Next to a file output: <out>.config.json.
fs::path SideConfigPath(const fs::path& out_file) {
  return out_file.string() + ".config.json";
}

ModelConfig ResolveModel(const Globals& g, const json& cfg) {
  json m = Section(cfg, "model");
  if (!g.variant.empty()) {
    m.erase("channels");
    m.erase("downsample_factor");
    m["variant"] = g.variant;
  } else if (cfg.contains("variant") && !m.contains("variant")) {
    m["variant"] = cfg.at("variant");
  }
  return ModelConfigFromJson(m);
}

// Refuses a checkpoint whose architecture differs from the requested one.
void CheckVariant(const char* cmd, const ModelConfig& stored, const ModelConfig& wanted,
                  const std::string& ckpt) {
  if (ModelConfigToJson(stored) != ModelConfigToJson(wanted))
    throw ConfigError(std::string(cmd) + ": checkpoint " + ckpt + " holds a " + stored.Variant() +
                      " model " + ModelConfigToJson(stored).dump() + ", requested " +
                      wanted.Variant() + " " + ModelConfigToJson(wanted).dump());
}

Audiogram ResolveAudiogram(const std::string& file, const std::string& hl) {
  if (!hl.empty()) return AudiogramFromCsvRow(hl);
  if (file.empty()) throw ValidationError("pass --audiogram FILE or --hl v1,...,v6");
  const auto all = LoadAudiograms(file);
  return all.front();
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string speech, noise, audiograms;
  std::optional<long long> n;
  std::optional<double> duration;
};

int CmdSynth(const Globals& g, const SynthArgs& a) {
  RequireOut(g);
  const json cfg = LoadConfigFile(g.config_path);
  json sj = Section(cfg, "synth");
  if (g.seed) sj["seed"] = *g.seed;
  else if (cfg.contains("seed") && !sj.contains("seed")) sj["seed"] = cfg.at("seed");
  if (a.duration) sj["duration_s"] = *a.duration;
  const SynthConfig sc = SynthConfigFromJson(sj);
  long long n = a.n ? *a.n : Section(cfg, "synth").value("n", 0LL);
  if (n <= 0) throw ValidationError("synth: --n must be a positive sample count");
  for (const auto& [flag, path] : {std::pair{"--speech", a.speech}, {"--noise", a.noise},
                                   {"--audiograms", a.audiograms}})
    if (path.empty()) throw ValidationError(std::string("synth: ") + flag + " is required");
  if (!fs::exists(a.audiograms))
    throw ValidationError("synth: audiogram file " + a.audiograms + " does not exist");
  const SourcePool speech = LoadSourcePool(a.speech);
  const SourcePool noise = LoadSourcePool(a.noise);
  const auto auds = LoadAudiograms(a.audiograms);

  const fs::path out(g.out);
  const auto sum = SynthesizeToDisk(speech, noise, auds, sc, static_cast<size_t>(n), g.workers, out);
  json eff = {{"command", "synth"},
              {"synth", SynthConfigToJson(sc)},
              {"n", n},
              {"speech", a.speech},
              {"noise", a.noise},
              {"audiograms", a.audiograms}};
  EchoConfig(out / "config.json", eff);
  std::printf("synth: %zu samples; modes release=%zu attack=%zu bypass=%zu; "
              "release_fallback=%zu; gaussian=%zu\n",
              sum.count, sum.modes[0], sum.modes[1], sum.modes[2], sum.release_fallbacks,
              sum.gaussian);
  return 0;
}

struct TrainArgs {
  std::string manifest, valid_manifest, resume;
  std::optional<size_t> epochs, batch_size, max_steps;
  std::optional<double> lr;
};

int CmdTrain(const Globals& g, const TrainArgs& a) {
  RequireOut(g);
  const json cfg = LoadConfigFile(g.config_path);
  const ModelConfig mc = ResolveModel(g, cfg);
  json tj = Section(cfg, "train");
  if (g.seed) tj["seed"] = *g.seed;
  else if (cfg.contains("seed") && !tj.contains("seed")) tj["seed"] = cfg.at("seed");
  if (a.epochs) tj["epochs"] = *a.epochs;
  if (a.batch_size) tj["batch_size"] = *a.batch_size;
  if (a.max_steps) tj["max_steps"] = *a.max_steps;
  if (a.lr) tj["lr"] = *a.lr;
  const TrainConfig tc = TrainConfigFromJson(tj);
  if (a.manifest.empty()) throw ValidationError("train: --manifest is required");
  auto train_items = LoadCorpus(a.manifest);
  auto valid_items = a.valid_manifest.empty() ? train_items : LoadCorpus(a.valid_manifest);
  AlignVadToGrid(train_items, mc.stft);
  AlignVadToGrid(valid_items, mc.stft);
  if (!a.resume.empty()) CheckVariant("train", CheckpointModelConfig(a.resume), mc, a.resume);

  const fs::path out(g.out);
  fs::create_directories(out);
  EchoConfig(out / "config.json", {{"command", "train"},
                                   {"model", ModelConfigToJson(mc)},
                                   {"variant", mc.Variant()},
                                   {"train", TrainConfigToJson(tc)},
                                   {"manifest", a.manifest},
                                   {"valid_manifest", a.valid_manifest},
                                   {"resume", a.resume}});
  const auto r = Train<float>(train_items, valid_items, mc, tc, out, a.resume);
  std::printf("train: %zu steps, %zu epochs this run; best oracle %.6f at epoch %zu\n",
              r.steps.size(), r.epochs.size(), r.best_oracle, r.best_epoch);
  return 0;
}

struct EnhanceArgs {
  std::string in, audiogram, hl, checkpoint;
};

int CmdEnhance(const Globals& g, const EnhanceArgs& a) {
  RequireOut(g);
  if (a.in.empty() || a.checkpoint.empty())
    throw ValidationError("enhance: --in and --checkpoint are required");
  const Waveform x = ReadWav(a.in);
  const Audiogram hl = ResolveAudiogram(a.audiogram, a.hl);
  const ModelConfig stored = CheckpointModelConfig(a.checkpoint);
  if (!g.variant.empty()) CheckVariant("enhance", stored, ResolveModel(g, {}), a.checkpoint);
  auto gen = LoadGenerator<float>(a.checkpoint);
  const Waveform y = Enhance(*gen, x, hl);
  WriteWav(g.out, y);
  EchoConfig(SideConfigPath(g.out), {{"command", "enhance"},
                                     {"in", a.in},
                                     {"checkpoint", a.checkpoint},
                                     {"model", ModelConfigToJson(stored)},
                                     {"audiogram", AudiogramToJson(hl)}});
  return 0;
}

struct Fig6Args {
  std::string in, audiogram, hl;
  bool no_smoothing = false;
};

int CmdFig6(const Globals& g, const Fig6Args& a) {
  RequireOut(g);
  if (a.in.empty()) throw ValidationError("fig6: --in is required");
  const Waveform x = ReadWav(a.in);
  const Audiogram hl = ResolveAudiogram(a.audiogram, a.hl);
  WdrcConfig wc;
  wc.smoothing = !a.no_smoothing;
  const auto r = WdrcCompensate(x, hl, wc);
  WriteWav(g.out, r.output);
  EchoConfig(SideConfigPath(g.out), {{"command", "fig6"},
                                     {"in", a.in},
                                     {"smoothing", wc.smoothing},
                                     {"audiogram", AudiogramToJson(hl)}});
  return 0;
}

struct EvalArgs {
  std::string manifest, checkpoint, metrics;
};

int CmdEval(const Globals& g, const EvalArgs& a) {
  RequireOut(g);
  if (a.manifest.empty()) throw ValidationError("eval: --manifest is required");
  const json cfg = LoadConfigFile(g.config_path);
  const std::string oracle_name = Section(cfg, "train").value("oracle", std::string("default"));
  const QualityOracle oracle = OracleByName(oracle_name);
  std::vector<std::string> external;
  {
    std::stringstream ss(a.metrics);
    std::string m;
    while (std::getline(ss, m, ','))
      if (!m.empty()) external.push_back(m);
  }
  for (const auto& m : external)
    if (!MetricRegistry::Global().Has(m))
      throw ConfigError("eval: metric '" + m +
                        "' is not registered; provide an external implementation");
  std::unique_ptr<Generator<float>> gen;
  if (!a.checkpoint.empty()) {
    const ModelConfig stored = CheckpointModelConfig(a.checkpoint);
    if (!g.variant.empty()) CheckVariant("eval", stored, ResolveModel(g, {}), a.checkpoint);
    gen = LoadGenerator<float>(a.checkpoint);
  }
  const fs::path manifest(a.manifest);
  EvalReport rep;
  rep.external_names = external;
  for (const auto& r : ReadManifest(manifest)) {
    const CorpusItem it = LoadCorpusItem(manifest.parent_path(), r);
    const Waveform est = gen ? Enhance(*gen, it.noisy, it.audiogram) : it.noisy;
    rep.Add(EvaluatePair(it.id, it.target, est, it.audiogram, oracle, external));
  }
  const fs::path out(g.out);
  rep.Write(out, "eval");
  EchoConfig(out / "config.json", {{"command", "eval"},
                                   {"manifest", a.manifest},
                                   {"checkpoint", a.checkpoint},
                                   {"oracle", oracle_name},
                                   {"metrics", external}});
  const auto m = rep.Means();
  std::printf("eval: %zu samples; sdr %.3f dB, si_snr %.3f dB, oracle %.4f\n", rep.rows.size(),
              m.at("sdr_db"), m.at("si_snr_db"), m.at("oracle"));
  return 0;
}

struct DemoArgs {
  size_t n_speech = 8, n_noise = 8, n_audiograms = 16;
  double seconds = 8.0;
};

int CmdDemoSources(const Globals& g, const DemoArgs& a) {
  RequireOut(g);
  if (a.n_speech == 0 || a.n_noise == 0 || a.n_audiograms == 0)
    throw ValidationError("demo-sources: counts must be positive");
  if (!(a.seconds > 0)) throw ValidationError("demo-sources: --seconds must be positive");
  const uint64_t seed = g.seed.value_or(0);
  SourcePool speech, noise;
  DemoPools(seed, a.n_speech, a.n_noise, a.seconds, speech, noise);
  const fs::path out(g.out);
  fs::create_directories(out / "speech");
  fs::create_directories(out / "noise");
  for (size_t i = 0; i < speech.size(); ++i)
    WriteWav(out / "speech" / (speech.ids[i] + ".wav"), speech.waves[i]);
  for (size_t i = 0; i < noise.size(); ++i)
    WriteWav(out / "noise" / (noise.ids[i] + ".wav"), noise.waves[i]);
  json auds = json::array();
  for (const auto& a2 : DemoAudiograms(seed + 2, a.n_audiograms)) auds.push_back(AudiogramToJson(a2));
  std::ofstream(out / "audiograms.json", std::ios::binary) << auds.dump(2) << "\n";
  EchoConfig(out / "config.json", {{"command", "demo-sources"},
                                   {"seed", seed},
                                   {"n_speech", a.n_speech},
                                   {"n_noise", a.n_noise},
                                   {"n_audiograms", a.n_audiograms},
                                   {"seconds", a.seconds}});
  std::printf("demo-sources: %zu speech, %zu noise, %zu audiograms\n", speech.size(),
              noise.size(), a.n_audiograms);
  return 0;
}

int Fail(const char* kind, const std::string& msg, int code) {
  std::fprintf(stderr, "%s\n", json{{"error", code}, {"kind", kind}, {"message", msg}}.dump().c_str());
  return code;
}

int Run(int argc, char** argv) {
  CLI::App app{"hearnet: hearing-loss compensating speech enhancement"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* c) {
    c->add_option("--config", g.config_path, "JSON run config; flags override it");
    c->add_option("--seed", g.seed, "random seed");
    c->add_option("--variant", g.variant, "model variant: C{36,48,60}DF{4,8} or tiny");
    c->add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
    c->add_option("--out", g.out, "output directory or file");
  };

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "synthesize a training corpus");
  add_globals(synth);
  synth->add_option("--speech", sa.speech, "directory of speech WAVs");
  synth->add_option("--noise", sa.noise, "directory of noise WAVs");
  synth->add_option("--audiograms", sa.audiograms, "audiogram collection (.json or .csv)");
  synth->add_option("--n", sa.n, "number of samples");
  synth->add_option("--duration", sa.duration, "sample duration in seconds");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train the network on a corpus manifest");
  add_globals(train);
  train->add_option("--manifest", ta.manifest, "training manifest.jsonl");
  train->add_option("--valid-manifest", ta.valid_manifest, "validation manifest (default: training)");
  train->add_option("--resume", ta.resume, "checkpoint to continue from");
  train->add_option("--epochs", ta.epochs);
  train->add_option("--batch-size", ta.batch_size);
  train->add_option("--max-steps", ta.max_steps);
  train->add_option("--lr", ta.lr);

  EnhanceArgs ea;
  auto* enhance = app.add_subcommand("enhance", "enhance and compensate one WAV");
  add_globals(enhance);
  enhance->add_option("--in", ea.in, "input WAV (16 kHz mono)");
  enhance->add_option("--audiogram", ea.audiogram, "audiogram file (first entry is used)");
  enhance->add_option("--hl", ea.hl, "six thresholds in dB HL, comma separated");
  enhance->add_option("--checkpoint", ea.checkpoint, "trained checkpoint");

  Fig6Args fa;
  auto* fig6 = app.add_subcommand("fig6", "apply the classical WDRC-FIG6 compensator");
  add_globals(fig6);
  fig6->add_option("--in", fa.in, "input WAV (16 kHz mono)");
  fig6->add_option("--audiogram", fa.audiogram, "audiogram file (first entry is used)");
  fig6->add_option("--hl", fa.hl, "six thresholds in dB HL, comma separated");
  fig6->add_flag("--no-smoothing", fa.no_smoothing, "disable attack/release smoothing");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or the noisy input) on a manifest");
  add_globals(eval);
  eval->add_option("--manifest", va.manifest, "manifest.jsonl");
  eval->add_option("--checkpoint", va.checkpoint, "checkpoint; omitted = score the noisy input");
  eval->add_option("--metrics", va.metrics, "registered external metrics, comma separated");

  DemoArgs da;
  auto* demo = app.add_subcommand("demo-sources", "write procedural speech/noise/audiogram sources");
  add_globals(demo);
  demo->add_option("--n-speech", da.n_speech);
  demo->add_option("--n-noise", da.n_noise);
  demo->add_option("--n-audiograms", da.n_audiograms);
  demo->add_option("--seconds", da.seconds);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Fail("usage", e.what(), kExitValidation);
  }

  try {
    if (synth->parsed()) return CmdSynth(g, sa);
    if (train->parsed()) return CmdTrain(g, ta);
    if (enhance->parsed()) return CmdEnhance(g, ea);
    if (fig6->parsed()) return CmdFig6(g, fa);
    if (eval->parsed()) return CmdEval(g, va);
    if (demo->parsed()) return CmdDemoSources(g, da);
  } catch (const ValidationError& e) {
    return Fail("validation", e.what(), kExitValidation);
  } catch (const ConfigError& e) {
    return Fail("config", e.what(), kExitValidation);
  } catch (const RuntimeFailure& e) {
    return Fail("runtime", e.what(), kExitRuntime);
  } catch (const std::exception& e) {
    return Fail("runtime", e.what(), kExitRuntime);
  }
  return Fail("usage", "no command", kExitValidation);
}

}  // namespace
}  // namespace hearnet

int main(int argc, char** argv) { return hearnet::Run(argc, argv); }
