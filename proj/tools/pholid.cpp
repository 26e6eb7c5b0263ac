// Copyright 2026 The pholid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// pholid: prepare data, train, evaluate, segment and render reports.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pholid/audio.hpp"
#include "pholid/checkpoint.hpp"
#include "pholid/error.hpp"
#include "pholid/feature_io.hpp"
#include "pholid/figures.hpp"
#include "pholid/inference.hpp"
#include "pholid/metrics.hpp"
#include "pholid/synthetic.hpp"
#include "pholid/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pholid {
namespace {

std::string Now() {
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(
                                                  std::chrono::system_clock::now())));
}

fs::path OutRoot() {
  const char* env = std::getenv("PHOLID_OUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

fs::path ResolveOut(const std::string& flag, const std::string& fallback) {
  return flag.empty() ? OutRoot() / fallback : fs::path(flag);
}

void MakeDirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) Fail(ErrorCategory::kIo, fmt::format("cannot create '{}': {}", p.string(), ec.message()));
}

json ReadJsonFile(const fs::path& p) {
  std::ifstream is(p);
  if (!is) Fail(ErrorCategory::kIo, fmt::format("cannot open '{}'", p.string()));
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kFormat, fmt::format("{}: {}", p.string(), e.what()));
  }
}

void WriteJsonFile(const fs::path& p, const json& j) { WriteTextFile(p, j.dump(2) + "\n"); }

// Exclusive advisory lock held for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / "LOCK") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) Fail(ErrorCategory::kIo, fmt::format("cannot open lock file '{}'", path_.string()));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      Fail(ErrorCategory::kState,
           fmt::format("'{}' is locked by another writer", dir.string()));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::ftruncate(fd_, 0) != 0 || ::write(fd_, pid.data(), pid.size()) < 0) {
      WarnOnce("lock-pid", "could not record pid in lock file");
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

// Records a command's inputs and outputs. Every path must exist when written.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  std::optional<fs::path> checkpoint;
  std::map<std::string, fs::path> datasets;
  std::map<std::string, fs::path> artifacts;
  json metrics = json::object();
  std::string started;
  std::optional<std::uint64_t> seed;

  void Write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    auto paths = [](const std::map<std::string, fs::path>& m) {
      json o = json::object();
      for (const auto& [k, p] : m) {
        if (!fs::exists(p)) Fail(ErrorCategory::kState, fmt::format("run manifest: '{}' does not exist", p.string()));
        o[k] = fs::absolute(p).lexically_normal().string();
      }
      return o;
    };
    if (checkpoint) {
      if (!fs::exists(*checkpoint)) {
        Fail(ErrorCategory::kState, fmt::format("run manifest: '{}' does not exist", checkpoint->string()));
      }
      j["checkpoint"] = fs::absolute(*checkpoint).lexically_normal().string();
    } else {
      j["checkpoint"] = nullptr;
    }
    j["datasets"] = paths(datasets);
    j["artifacts"] = paths(artifacts);
    j["metrics"] = metrics;
    j["timestamps"] = {{"started", started}, {"finished", Now()}};
    j["seed"] = seed ? json(*seed) : json(nullptr);
    WriteJsonFile(path, j);
  }
};

std::string Lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

Matrix ReadAnyFeatures(const fs::path& p) {
  const std::string ext = Lower(p.extension().string());
  if (ext == ".npy") return ReadNpy(p);
  if (ext == ".phof") return ReadFeatureFile(p);
  Fail(ErrorCategory::kUsage, fmt::format("{}: unsupported feature file type '{}'", p.string(), ext));
}

// ---- prepare ---------------------------------------------------------------

struct SynthArgs {
  std::size_t n_utts = 300;
  std::size_t n_frames = 200;
  std::uint64_t seed = 0;
  std::uint64_t language_seed = 11;
  SyntheticDesign design;
};

void ApplySynthJson(const json& j, SynthArgs* a) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "n_utts") a->n_utts = it->get<std::size_t>();
      else if (k == "n_frames") a->n_frames = it->get<std::size_t>();
      else if (k == "seed") a->seed = it->get<std::uint64_t>();
      else if (k == "language_seed") a->language_seed = it->get<std::uint64_t>();
      else if (k == "n_languages") a->design.n_languages = it->get<std::size_t>();
      else if (k == "n_phones") a->design.n_phones = it->get<std::size_t>();
      else if (k == "dim") a->design.dim = it->get<std::size_t>();
      else if (k == "dwell_min") a->design.dwell_min = it->get<std::size_t>();
      else if (k == "dwell_max") a->design.dwell_max = it->get<std::size_t>();
      else if (k == "noise_std") a->design.noise_std = it->get<double>();
      else if (k == "phonotactic_strength") a->design.phonotactic_strength = it->get<double>();
      else if (k == "mean_scale") a->design.mean_scale = it->get<double>();
      else Fail(ErrorCategory::kConfig, fmt::format("synth config: unknown key '{}'", k));
    }
  } catch (const json::exception& e) {
    Fail(ErrorCategory::kConfig, fmt::format("synth config: {}", e.what()));
  }
}

json SynthJson(const SynthArgs& a) {
  return {{"n_utts", a.n_utts},
          {"n_frames", a.n_frames},
          {"seed", a.seed},
          {"language_seed", a.language_seed},
          {"n_languages", a.design.n_languages},
          {"n_phones", a.design.n_phones},
          {"dim", a.design.dim},
          {"dwell_min", a.design.dwell_min},
          {"dwell_max", a.design.dwell_max},
          {"noise_std", a.design.noise_std},
          {"phonotactic_strength", a.design.phonotactic_strength},
          {"mean_scale", a.design.mean_scale}};
}

void CmdPrepareSynth(const SynthArgs& a, const fs::path& out, RunManifest* run) {
  MakeDirs(out / "feats");
  const auto specs = MakeSyntheticLanguages(a.design, a.language_seed);
  const auto corpus = SynthCorpus(specs, {a.n_utts, a.n_frames, 20, a.seed});
  Manifest m;
  for (std::size_t l = 0; l < specs.size(); ++l) m.label_map.Intern(fmt::format("lang{}", l));
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus[i];
    const std::string id = fmt::format("utt{:06d}", i);
    const fs::path feats = out / "feats" / (id + ".phof");
    WriteFeatureFile(feats, u.features.frames);
    std::ostringstream phones;
    for (std::size_t j = 0; j < u.phones.size(); ++j) phones << (j ? " " : "") << u.phones[j];
    phones << '\n';
    WriteTextFile(out / "feats" / (id + ".phones"), phones.str());
    m.entries.push_back({feats, m.label_map.Name(u.label), u.features.n_frames()});
  }
  WriteManifest(out / "manifest.tsv", m);
  WriteLabelMap(out / "label_map.tsv", m.label_map);
  run->config = {{"synth", SynthJson(a)}};
  run->seed = a.seed;
  run->datasets["manifest"] = out / "manifest.tsv";
  run->artifacts["label_map"] = out / "label_map.tsv";
  run->metrics = {{"n_utterances", m.entries.size()}, {"n_classes", m.n_classes()}};
  fmt::print("wrote {} utterances, {} languages to {}\n", m.entries.size(), m.n_classes(), out.string());
}

// Input layout: <input>/<label>/<utterance>.{npy,phof}, walked in sorted order.
void CmdPrepareImport(const fs::path& input, const fs::path& out, RunManifest* run) {
  if (!fs::is_directory(input)) Fail(ErrorCategory::kIo, fmt::format("'{}' is not a directory", input.string()));
  std::vector<fs::path> dirs;
  for (const auto& d : fs::directory_iterator(input)) {
    if (d.is_directory()) dirs.push_back(d.path());
  }
  std::sort(dirs.begin(), dirs.end());
  MakeDirs(out / "feats");
  Manifest m;
  std::optional<std::size_t> dim;
  std::string first_file;
  std::map<std::string, fs::path> seen_ids;
  for (const auto& dir : dirs) {
    const std::string label = dir.filename().string();
    std::vector<fs::path> files;
    for (const auto& f : fs::directory_iterator(dir)) {
      const std::string ext = Lower(f.path().extension().string());
      if (f.is_regular_file() && (ext == ".npy" || ext == ".phof")) files.push_back(f.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const Matrix x = ReadAnyFeatures(f);
      FeatureSequence{x, f.string()}.Validate();
      const auto d = static_cast<std::size_t>(x.cols());
      if (dim && *dim != d) {
        Fail(ErrorCategory::kData, fmt::format("{}: feature dimension {} differs from {} in {}", f.string(), d,
                                               *dim, first_file));
      }
      if (!dim) first_file = f.string();
      dim = d;
      const std::string id = f.stem().string();
      if (auto it = seen_ids.find(id); it != seen_ids.end()) {
        Fail(ErrorCategory::kData,
             fmt::format("{}: utterance id '{}' already used by {}", f.string(), id, it->second.string()));
      }
      seen_ids[id] = f;
      const fs::path dst = out / "feats" / (id + ".phof");
      WriteFeatureFile(dst, x);
      m.label_map.Intern(label);
      m.entries.push_back({dst, label, static_cast<std::size_t>(x.rows())});
    }
  }
  if (m.entries.empty()) Fail(ErrorCategory::kData, fmt::format("no .npy or .phof files under '{}'", input.string()));
  WriteManifest(out / "manifest.tsv", m);
  WriteLabelMap(out / "label_map.tsv", m.label_map);
  run->config = {{"import", {{"input", fs::absolute(input).lexically_normal().string()}}}};
  run->datasets["input"] = input;
  run->datasets["manifest"] = out / "manifest.tsv";
  run->artifacts["label_map"] = out / "label_map.tsv";
  run->metrics = {{"n_utterances", m.entries.size()}, {"n_classes", m.n_classes()}, {"dim", *dim}};
  fmt::print("imported {} utterances, {} languages, F={} to {}\n", m.entries.size(), m.n_classes(), *dim,
             out.string());
}

// ---- run configuration -----------------------------------------------------

// {"model": {...}, "training": {...}, "data": {...}}. Relative data paths are
// resolved against the config file's directory. "model" may carry
// "scale": s to start from the default architecture divided by s.
struct RunConfig {
  json model = json::object();
  TrainingConfig training;
  fs::path train_manifest;
  fs::path label_map;  // optional
  TailPolicy tail = TailPolicy::kDropTail;
  std::optional<double> vad_db;
};

RunConfig LoadRunConfig(const fs::path& path) {
  const json j = ReadJsonFile(path);
  const fs::path base = fs::absolute(path).parent_path();
  RunConfig rc;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "model") rc.model = *it;
    else if (k == "training") rc.training = TrainingConfigFromJson(*it);
    else if (k == "data") {
      for (auto d = it->begin(); d != it->end(); ++d) {
        const std::string& dk = d.key();
        try {
          if (dk == "train_manifest") rc.train_manifest = base / d->get<std::string>();
          else if (dk == "label_map") rc.label_map = base / d->get<std::string>();
          else if (dk == "tail_policy") {
            const auto v = d->get<std::string>();
            if (v == "drop-tail") rc.tail = TailPolicy::kDropTail;
            else if (v == "pad") rc.tail = TailPolicy::kPad;
            else Fail(ErrorCategory::kConfig, fmt::format("data config: unknown tail_policy '{}'", v));
          } else if (dk == "vad_threshold_db") {
            if (!d->is_null()) rc.vad_db = d->get<double>();
          } else {
            Fail(ErrorCategory::kConfig, fmt::format("data config: unknown key '{}'", dk));
          }
        } catch (const json::exception& e) {
          Fail(ErrorCategory::kConfig, fmt::format("data config: {}", e.what()));
        }
      }
    } else {
      Fail(ErrorCategory::kConfig, fmt::format("{}: unknown top-level key '{}'", path.string(), k));
    }
  }
  if (rc.train_manifest.empty()) Fail(ErrorCategory::kConfig, fmt::format("{}: data.train_manifest is required", path.string()));
  return rc;
}

ModelConfig ResolveModel(const json& spec, std::size_t input_dim, std::size_t n_classes) {
  json patch = spec;
  ModelConfig base;
  if (patch.contains("scale")) {
    base = ModelConfig::Scaled(patch["scale"].get<std::size_t>(), input_dim, n_classes);
    patch.erase("scale");
  }
  for (const char* k : {"input_dim", "n_classes"}) {
    if (patch.contains(k)) {
      const auto want = std::string(k) == "input_dim" ? input_dim : n_classes;
      if (patch[k].get<std::size_t>() != want) {
        Fail(ErrorCategory::kConfig, fmt::format("model.{} = {} but the data has {}", k, patch[k].dump(), want));
      }
    }
  }
  json merged = ToJson(base);
  merged.update(patch);
  merged["input_dim"] = input_dim;
  merged["n_classes"] = n_classes;
  ModelConfig c = ModelConfigFromJson(merged);
  c.Validate();
  return c;
}

json DataJson(const RunConfig& rc) {
  json d = {{"train_manifest", rc.train_manifest.lexically_normal().string()},
            {"tail_policy", rc.tail == TailPolicy::kPad ? "pad" : "drop-tail"},
            {"vad_threshold_db", rc.vad_db ? json(*rc.vad_db) : json(nullptr)}};
  if (!rc.label_map.empty()) d["label_map"] = rc.label_map.lexically_normal().string();
  return d;
}

// ---- train ----------------------------------------------------------------

struct TrainFlags {
  std::optional<std::string> strategy;
  std::optional<double> alpha;
  std::optional<std::size_t> negatives;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> pretrain_epochs;
  std::optional<std::uint64_t> seed;
  bool resume = false;
};

std::optional<fs::path> LatestCheckpoint(const fs::path& dir) {
  std::optional<fs::path> best;
  if (!fs::is_directory(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (n.rfind("epoch-", 0) == 0 && e.path().extension() == ".phoc" && (!best || e.path() > *best)) best = e.path();
  }
  return best;
}

void CmdTrain(const fs::path& config_path, const TrainFlags& f, const fs::path& out, RunManifest* run) {
  RunConfig rc = LoadRunConfig(config_path);
  if (f.strategy) rc.training.strategy = ParseStrategy(*f.strategy);
  if (f.alpha) rc.training.alpha = *f.alpha;
  if (f.negatives) rc.training.negatives = *f.negatives;
  if (f.epochs) rc.training.total_epochs = *f.epochs;
  if (f.pretrain_epochs) rc.training.pretrain_epochs = *f.pretrain_epochs;
  if (f.seed) rc.training.seed = *f.seed;
  rc.training.Validate();

  std::optional<LabelMap> explicit_map;
  if (!rc.label_map.empty()) explicit_map = ReadLabelMap(rc.label_map);
  const Manifest manifest = LoadManifest(rc.train_manifest, explicit_map);
  if (manifest.entries.empty()) Fail(ErrorCategory::kData, "training manifest is empty");
  const std::size_t dim = ReadFeatureHeader(manifest.entries.front().feature_path).second;
  const ModelConfig model_cfg = ResolveModel(rc.model, dim, manifest.n_classes());
  const auto data = LoadSegmented(manifest, model_cfg.segment_frames, rc.tail, rc.vad_db);

  const fs::path ckpt_dir = out / "checkpoints";
  MakeDirs(ckpt_dir);
  DirLock lock(ckpt_dir);

  const json snapshot = {{"model", ToJson(model_cfg)}, {"training", ToJson(rc.training)}, {"data", DataJson(rc)}};
  TrainState state;
  const fs::path log_path = out / "train_log.tsv";
  std::vector<std::string> kept_log;
  if (f.resume) {
    const auto latest = LatestCheckpoint(ckpt_dir);
    if (!latest) Fail(ErrorCategory::kState, fmt::format("--resume: no checkpoint in '{}'", ckpt_dir.string()));
    Checkpoint ck = LoadCheckpoint(*latest, model_cfg);
    if (!(ck.training == rc.training)) {
      Fail(ErrorCategory::kConfig, fmt::format("--resume: {} was written with a different training config", latest->string()));
    }
    if (!(ck.labels == manifest.label_map)) {
      Fail(ErrorCategory::kData, fmt::format("--resume: {} has a different label map", latest->string()));
    }
    state = std::move(ck.state);
    std::ifstream is(log_path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line == FormatLogHeader()) continue;
      if (ParseStepRecord(line).step < state.step) kept_log.push_back(line);
    }
    fmt::print("resuming from {} (epoch {}, step {})\n", latest->string(), state.epoch, state.step);
  } else {
    state = InitTrainState(model_cfg, rc.training);
  }
  WriteJsonFile(out / "config.json", snapshot);

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", log_path.string()));
  log << FormatLogHeader() << '\n';
  for (const auto& l : kept_log) log << l << '\n';
  TrainHooks hooks;
  hooks.on_step = [&log](const StepRecord& r) { log << FormatStepRecord(r) << '\n'; };
  hooks.on_epoch_end = [&](const TrainState& s) {
    log.flush();
    SaveCheckpoint(ckpt_dir / fmt::format("epoch-{:03d}.phoc", s.epoch), s, rc.training, manifest.label_map);
    fmt::print("epoch {}/{} ({})\n", s.epoch, rc.training.total_epochs, PhaseName(s.phase));
  };
  hooks.failure_snapshot = out / "failure.phoc";
  state = Train(std::move(state), data, rc.training, hooks);
  log.close();

  const fs::path final_ckpt = out / "model.phoc";
  SaveCheckpoint(final_ckpt, state, rc.training, manifest.label_map);
  run->config = snapshot;
  run->checkpoint = final_ckpt;
  run->seed = rc.training.seed;
  run->datasets["train_manifest"] = rc.train_manifest;
  run->artifacts["train_log"] = log_path;
  run->artifacts["config"] = out / "config.json";
  run->metrics = {{"epochs", state.epoch}, {"steps", state.step}};
  fmt::print("wrote {}\n", final_ckpt.string());
}

// ---- evaluate / report -------------------------------------------------------

LabelMap CheckLabels(const Checkpoint& ck, const fs::path& manifest_path) {
  const fs::path sidecar = manifest_path.parent_path() / "label_map.tsv";
  if (fs::exists(sidecar)) {
    const LabelMap m = ReadLabelMap(sidecar);
    if (!(m == ck.labels)) {
      Fail(ErrorCategory::kData, fmt::format("label map {} does not match the checkpoint's", sidecar.string()));
    }
  }
  return ck.labels;
}

void WriteMetricArtifacts(const TrialSet& trials, const LabelMap& labels, const fs::path& out, RunManifest* run) {
  const MetricsReport report = BuildReport(trials, labels, 0.5);
  WriteTextFile(out / "metrics.txt", FormatReport(report));
  WriteTextFile(out / "confusion.svg", RenderConfusionSvg(Confusion(trials), labels));
  run->artifacts["metrics"] = out / "metrics.txt";
  run->artifacts["confusion"] = out / "confusion.svg";
  run->metrics = {{"n_trials", report.n_trials},
                  {"accuracy", report.accuracy},
                  {"eer_percent", report.eer_percent},
                  {"c_avg", report.c_avg}};
  fmt::print("accuracy {:.4f}  EER {:.2f}%  C_avg {:.4f}\n", report.accuracy, report.eer_percent, report.c_avg);
}

void CmdEvaluate(const fs::path& checkpoint, const fs::path& manifest_path, const fs::path& out,
                 RunManifest* run) {
  const Checkpoint ck = LoadCheckpoint(checkpoint);
  const LabelMap labels = CheckLabels(ck, manifest_path);
  const Manifest manifest = LoadManifest(manifest_path, labels);
  PhoLidModel model = ck.state.model;
  const auto data = LoadSegmented(manifest, model.config().segment_frames);
  MakeDirs(out);
  ScoreTable table;
  table.scores = ScoreUtterances(model, data);
  TrialSet trials{table.scores, {}};
  for (const auto& u : data) {
    table.utterance_ids.push_back(u.utterance_id);
    trials.labels.push_back(u.label);
  }
  WriteScoreFile(out / "scores.tsv", table);
  run->config = {{"model", ToJson(model.config())}, {"training", ToJson(ck.training)}};
  run->checkpoint = checkpoint;
  run->seed = ck.training.seed;
  run->datasets["manifest"] = manifest_path;
  run->artifacts["scores"] = out / "scores.tsv";
  WriteMetricArtifacts(trials, labels, out, run);
}

void CmdReport(const fs::path& scores, const fs::path& manifest_path, const fs::path& out, RunManifest* run) {
  const fs::path sidecar = manifest_path.parent_path() / "label_map.tsv";
  std::optional<LabelMap> explicit_map;
  if (fs::exists(sidecar)) explicit_map = ReadLabelMap(sidecar);
  const Manifest manifest = LoadManifest(manifest_path, explicit_map);
  std::map<std::string, int> label_of;
  for (const auto& e : manifest.entries) label_of[e.utterance_id()] = manifest.label_map.At(e.label);
  const ScoreTable table = ReadScoreFile(scores);
  if (static_cast<std::size_t>(table.scores.cols()) != manifest.n_classes()) {
    Fail(ErrorCategory::kData, fmt::format("{} has {} score columns but {} languages", scores.string(),
                                           table.scores.cols(), manifest.n_classes()));
  }
  TrialSet trials{table.scores, {}};
  for (const auto& id : table.utterance_ids) {
    auto it = label_of.find(id);
    if (it == label_of.end()) Fail(ErrorCategory::kData, fmt::format("utterance '{}' is not in {}", id, manifest_path.string()));
    trials.labels.push_back(it->second);
  }
  MakeDirs(out);
  run->datasets["manifest"] = manifest_path;
  run->datasets["scores"] = scores;
  WriteMetricArtifacts(trials, manifest.label_map, out, run);
}

// ---- segment ----------------------------------------------------------------

std::vector<std::size_t> ReadPhones(const fs::path& p) {
  std::ifstream is(p);
  if (!is) Fail(ErrorCategory::kIo, fmt::format("cannot open '{}'", p.string()));
  std::vector<int> phones;
  int v = 0;
  while (is >> v) phones.push_back(v);
  if (!is.eof()) Fail(ErrorCategory::kFormat, fmt::format("{}: expected integers", p.string()));
  return PhoneChangePoints(phones);
}

struct SegmentFlags {
  double threshold = 0.5;
  std::size_t merge_window = 1;
  std::size_t smooth = 1;
  std::size_t tolerance = 1;
  std::string audio;
  std::string phones;
};

void CmdSegment(const fs::path& checkpoint, const fs::path& features, const SegmentFlags& f, const fs::path& out,
                RunManifest* run) {
  const Checkpoint ck = LoadCheckpoint(checkpoint);
  PhoLidModel model = ck.state.model;
  FeatureSequence seq{ReadAnyFeatures(features), features.stem().string()};
  if (seq.dim() != model.config().input_dim) {
    Fail(ErrorCategory::kShape, fmt::format("{}: F={} but the model expects {}", features.string(), seq.dim(),
                                            model.config().input_dim));
  }
  std::optional<Spectrogram> spec;
  if (!f.audio.empty()) {
    spec = ComputeSpectrogram(ReadWav(f.audio));
    CheckFrameAlignment(*spec, seq.n_frames());
  }
  const auto utt = Partition(seq, model.config().segment_frames, TailPolicy::kPad);
  const auto z = EmbedFrames(model, utt);
  const SimilarityCurve curve = SmoothCurve(ComputeSimilarityCurve(z), f.smooth);
  const BoundarySet set = DetectBoundaries(curve, f.threshold, f.merge_window);

  MakeDirs(out);
  const std::vector<UtteranceBoundaries> rows{{seq.utterance_id, set}};
  WriteBoundaryFile(out / "boundaries.tsv", rows);
  std::ostringstream cs;
  for (std::size_t j = 0; j < curve.values.size(); ++j) cs << j << '\t' << fmt::format("{}", curve.values[j]) << '\n';
  WriteTextFile(out / "similarity.tsv", cs.str());
  SegmentationFigure fig{seq.utterance_id, curve, set, spec, std::nullopt};
  if (!spec) fig.features = seq.frames;
  WriteTextFile(out / "segmentation.svg", RenderSegmentationSvg(fig));

  run->config = {{"model", ToJson(model.config())},
                 {"segment",
                  {{"threshold", f.threshold}, {"merge_window", f.merge_window}, {"smooth", f.smooth}}}};
  run->checkpoint = checkpoint;
  run->datasets["features"] = features;
  if (!f.audio.empty()) run->datasets["audio"] = f.audio;
  run->artifacts["boundaries"] = out / "boundaries.tsv";
  run->artifacts["similarity"] = out / "similarity.tsv";
  run->artifacts["figure"] = out / "segmentation.svg";
  run->metrics = {{"n_frames", seq.n_frames()}, {"n_boundaries", set.boundaries.size()}};
  if (!f.phones.empty()) {
    const auto ref = ReadPhones(f.phones);
    const auto s = ScoreBoundaries(set.boundaries, ref, f.tolerance);
    run->datasets["phones"] = f.phones;
    run->metrics["precision"] = s.precision;
    run->metrics["recall"] = s.recall;
    run->metrics["f1"] = s.f1;
    fmt::print("precision {:.4f}  recall {:.4f}  F1 {:.4f} (tolerance {})\n", s.precision, s.recall, s.f1,
               f.tolerance);
  }
  fmt::print("{} boundaries over {} frames\n", set.boundaries.size(), seq.n_frames());
}

std::string OneLine(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int Run(int argc, char** argv) {
  CLI::App app{"pholid: phonotactic language identification toolkit"};
  app.require_subcommand(1);
  std::string out_flag;
  std::string config;

  auto* prepare = app.add_subcommand("prepare", "write feature files and a manifest");
  prepare->require_subcommand(1);
  auto* synth = prepare->add_subcommand("synth", "generate a synthetic Markov-phone corpus");
  SynthArgs synth_args;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_utts, synth_frames;
  synth->add_option("--config", config, "JSON file with a \"synth\" object");
  synth->add_option("--seed", synth_seed, "utterance sampling seed");
  synth->add_option("--n-utts", synth_utts, "number of utterances");
  synth->add_option("--n-frames", synth_frames, "frames per utterance");
  synth->add_option("--out", out_flag, "output directory");
  auto* import = prepare->add_subcommand("import", "convert <dir>/<label>/*.{npy,phof}");
  std::string input;
  import->add_option("--input", input, "input directory")->required();
  import->add_option("--out", out_flag, "output directory");

  auto* train = app.add_subcommand("train", "pretrain and train a model");
  TrainFlags tf;
  train->add_option("--config", config, "run configuration (JSON)")->required();
  train->add_option("--strategy", tf.strategy, "lid-only or multi-task");
  train->add_option("--alpha", tf.alpha, "LID weight in the multi-task objective");
  train->add_option("--M", tf.negatives, "NCE negatives per anchor");
  train->add_option("--epochs", tf.epochs, "total epochs, pretraining included");
  train->add_option("--pretrain-epochs", tf.pretrain_epochs, "pretraining epochs");
  train->add_option("--seed", tf.seed, "training seed");
  train->add_flag("--resume", tf.resume, "continue from the latest checkpoint in --out");
  train->add_option("--out", out_flag, "run directory");

  auto* evaluate = app.add_subcommand("evaluate", "score a manifest and write metrics");
  std::string checkpoint, manifest;
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evaluate->add_option("--manifest", manifest, "test manifest")->required();
  evaluate->add_option("--out", out_flag, "output directory");

  auto* segment = app.add_subcommand("segment", "detect phone boundaries in one utterance");
  SegmentFlags sf;
  std::string features;
  segment->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  segment->add_option("--features", features, "feature file (.phof or .npy)")->required();
  segment->add_option("--threshold", sf.threshold, "boundary threshold in [-1, 1]");
  segment->add_option("--merge-window", sf.merge_window, "keep only local minima within this window");
  segment->add_option("--smooth", sf.smooth, "moving-average window for the curve");
  segment->add_option("--audio", sf.audio, "16-bit PCM WAV for the spectrogram panel");
  segment->add_option("--phones", sf.phones, "reference phone sequence for scoring");
  segment->add_option("--tolerance", sf.tolerance, "boundary match tolerance in frames");
  segment->add_option("--out", out_flag, "output directory");

  auto* report = app.add_subcommand("report", "re-render metrics from a score file");
  std::string scores;
  report->add_option("--scores", scores, "score file")->required();
  report->add_option("--manifest", manifest, "manifest giving the true labels")->required();
  report->add_option("--out", out_flag, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: category=usage message=" << OneLine(e.what()) << '\n';
    return 2;
  }

  RunManifest run;
  run.started = Now();
  run.argv.assign(argv, argv + argc);
  fs::path out;
  if (*synth) {
    if (!config.empty()) {
      const json j = ReadJsonFile(config);
      if (j.contains("synth")) ApplySynthJson(j["synth"], &synth_args);
    }
    if (synth_seed) synth_args.seed = *synth_seed;
    if (synth_utts) synth_args.n_utts = *synth_utts;
    if (synth_frames) synth_args.n_frames = *synth_frames;
    out = ResolveOut(out_flag, "data");
    run.command = "prepare synth";
    CmdPrepareSynth(synth_args, out, &run);
  } else if (*import) {
    out = ResolveOut(out_flag, "data");
    run.command = "prepare import";
    CmdPrepareImport(input, out, &run);
  } else if (*train) {
    out = ResolveOut(out_flag, "train");
    MakeDirs(out);
    run.command = "train";
    CmdTrain(config, tf, out, &run);
  } else if (*evaluate) {
    out = ResolveOut(out_flag, "evaluate");
    run.command = "evaluate";
    CmdEvaluate(checkpoint, manifest, out, &run);
  } else if (*segment) {
    out = ResolveOut(out_flag, "segment");
    run.command = "segment";
    CmdSegment(checkpoint, features, sf, out, &run);
  } else if (*report) {
    out = ResolveOut(out_flag, "report");
    run.command = "report";
    CmdReport(scores, manifest, out, &run);
  }
  run.Write(out / "run_manifest.json");
  return 0;
}

}  // namespace
}  // namespace pholid

int main(int argc, char** argv) {
  try {
    return pholid::Run(argc, argv);
  } catch (const pholid::Error& e) {
    std::cerr << "error: category=" << pholid::CategoryName(e.category())
              << " message=" << pholid::OneLine(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: category=internal message=" << pholid::OneLine(e.what()) << '\n';
    return 1;
  }
}
