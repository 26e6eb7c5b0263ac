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


// Runs the pholid binary as a subprocess.

#include <fcntl.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "pholid/audio.hpp"
#include "pholid/feature_io.hpp"
#include "pholid/inference.hpp"
#include "pholid/metrics.hpp"
#include "tempdir.hpp"

namespace pholid {
namespace {

namespace fs = std::filesystem;
using testing::ReadFile;
using testing::TempDir;
using testing::WriteFile;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

Result Cli(const TempDir& dir, const std::string& args, const std::string& env = "") {
  const std::string cmd = fmt::format("cd '{}' && {} '{}' {} > cli.out 2> cli.err", dir.path().string(), env,
                                      PHOLID_CLI_PATH, args);
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = ReadFile(dir / "cli.out");
  r.err = ReadFile(dir / "cli.err");
  return r;
}

void WriteConfig(const TempDir& dir, const std::string& manifest, std::size_t epochs = 3) {
  WriteFile(dir / "cfg.json", fmt::format(R"({{
  "model": {{"scale": 16, "segment_frames": 10}},
  "training": {{"total_epochs": {}, "pretrain_epochs": 1, "warmup_epochs": 1, "batch_size": 8,
               "peak_lr": 0.001, "pretrain_lr": 0.001, "seed": 5}},
  "data": {{"train_manifest": "{}"}}
}})", epochs, manifest));
}

// Small synthetic train/test sets plus a trained multi-task model in run/.
class TrainedRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    ASSERT_EQ(Cli(*dir_, "prepare synth --n-utts 24 --n-frames 40 --seed 1 --out train").code, 0);
    ASSERT_EQ(Cli(*dir_, "prepare synth --n-utts 12 --n-frames 40 --seed 2 --out test").code, 0);
    WriteConfig(*dir_, "train/manifest.tsv");
    const Result r = Cli(*dir_, "train --config cfg.json --strategy multi-task --alpha 0.95 --M 3 --out run");
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static TempDir* dir_;
};
TempDir* TrainedRun::dir_ = nullptr;

void WriteNpy(const fs::path& p, const Matrix& m) {
  std::string header = fmt::format("{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}", m.rows(),
                                   m.cols());
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::ofstream os(p, std::ios::binary);
  os.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  os.put(static_cast<char>(len & 0xff));
  os.put(static_cast<char>(len >> 8));
  os << header;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
}

TEST(CliPrepare, SynthManifestAndByteIdenticalRerun) {
  TempDir dir;
  ASSERT_EQ(Cli(dir, "prepare synth --n-utts 300 --n-frames 30 --seed 4 --out a").code, 0);
  ASSERT_EQ(Cli(dir, "prepare synth --n-utts 300 --n-frames 30 --seed 4 --out b").code, 0);
  const Manifest m = LoadManifest(dir / "a/manifest.tsv");
  EXPECT_EQ(m.entries.size(), 300u);
  EXPECT_EQ(m.n_classes(), 3u);
  EXPECT_EQ(ReadFile(dir / "a/manifest.tsv"), ReadFile(dir / "b/manifest.tsv"));
  for (const auto& e : m.entries) {
    const std::string name = e.feature_path.filename().string();
    ASSERT_EQ(ReadFile(dir / "a/feats" / name), ReadFile(dir / "b/feats" / name)) << name;
  }
  ASSERT_EQ(Cli(dir, "prepare synth --n-utts 300 --n-frames 30 --seed 5 --out c").code, 0);
  EXPECT_NE(ReadFile(dir / "a/feats/utt000000.phof"), ReadFile(dir / "c/feats/utt000000.phof"));
  EXPECT_TRUE(fs::exists(dir / "a/run_manifest.json"));
}

TEST(CliPrepare, OutputRootFromEnvironment) {
  TempDir dir;
  const Result r = Cli(dir, "prepare synth --n-utts 3 --n-frames 20", "PHOLID_OUT_ROOT=root");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "root/data/manifest.tsv"));
}

TEST(CliPrepare, ImportAndMixedDimensionError) {
  TempDir dir;
  fs::create_directories(dir / "in/eng");
  fs::create_directories(dir / "in/fra");
  WriteNpy(dir / "in/eng/a.npy", Matrix::Constant(5, 4, 0.5));
  WriteFeatureFile(dir / "in/fra/b.phof", Matrix::Constant(7, 4, -1.0));
  Result r = Cli(dir, "prepare import --input in --out out");
  ASSERT_EQ(r.code, 0) << r.err;
  const Manifest m = LoadManifest(dir / "out/manifest.tsv");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.label_map.labels(), (std::vector<std::string>{"eng", "fra"}));
  EXPECT_EQ(ReadFeatureFile(dir / "out/feats/a.phof"), Matrix::Constant(5, 4, 0.5));

  WriteNpy(dir / "in/fra/c.npy", Matrix::Constant(3, 6, 1.0));
  r = Cli(dir, "prepare import --input in --out out2");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("category=data"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("c.npy"), std::string::npos) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(CliErrors, UsageAndCategories) {
  TempDir dir;
  Result r = Cli(dir, "train --config cfg.json --bogus");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error: category=usage message=", 0), 0u) << r.err;
  r = Cli(dir, "train --config missing.json");
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error: category=io message=", 0), 0u) << r.err;
  WriteFile(dir / "cfg.json", R"({"data": {"train_manifest": "m.tsv"}, "trainig": {}})");
  r = Cli(dir, "train --config cfg.json");
  EXPECT_NE(r.err.find("category=config"), std::string::npos) << r.err;
  EXPECT_EQ(Cli(dir, "--help").code, 0);
}

TEST_F(TrainedRun, TrainWritesCheckpointsLogAndManifest) {
  const TempDir& d = *dir_;
  for (int e = 1; e <= 3; ++e) EXPECT_TRUE(fs::exists(d / fmt::format("run/checkpoints/epoch-{:03d}.phoc", e)));
  EXPECT_FALSE(fs::exists(d / "run/checkpoints/LOCK"));
  const auto j = nlohmann::json::parse(ReadFile(d / "run/run_manifest.json"));
  EXPECT_EQ(j["command"], "train");
  EXPECT_EQ(j["seed"], 5);
  EXPECT_EQ(j["config"]["training"]["strategy"], "multi-task");
  EXPECT_EQ(j["config"]["training"]["alpha"], 0.95);
  EXPECT_EQ(j["config"]["training"]["negatives"], 3);
  EXPECT_TRUE(fs::exists(j["checkpoint"].get<std::string>()));
  for (const auto& [k, p] : j["artifacts"].items()) EXPECT_TRUE(fs::exists(p.get<std::string>())) << k;
  EXPECT_TRUE(j["timestamps"].contains("started"));
  EXPECT_TRUE(j["timestamps"].contains("finished"));
}

TEST_F(TrainedRun, ConfigSnapshotReproducesTheRun) {
  const TempDir& d = *dir_;
  const Result r = Cli(d, "train --config run/config.json --out rerun");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ReadFile(d / "run/train_log.tsv"), ReadFile(d / "rerun/train_log.tsv"));
  EXPECT_EQ(ReadFile(d / "run/model.phoc"), ReadFile(d / "rerun/model.phoc"));
}

TEST_F(TrainedRun, ResumeContinuesExactly) {
  const TempDir& d = *dir_;
  fs::remove_all(d / "resumed");
  fs::copy(d / "run", d / "resumed", fs::copy_options::recursive);
  fs::remove(d / "resumed/checkpoints/epoch-003.phoc");
  fs::remove(d / "resumed/model.phoc");
  const Result r = Cli(d, "train --config run/config.json --resume --out resumed");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 2"), std::string::npos);
  EXPECT_EQ(ReadFile(d / "run/train_log.tsv"), ReadFile(d / "resumed/train_log.tsv"));
  EXPECT_EQ(ReadFile(d / "run/model.phoc"), ReadFile(d / "resumed/model.phoc"));
  // A changed recipe cannot resume the old run.
  const Result bad = Cli(d, "train --config run/config.json --resume --alpha 0.5 --out resumed");
  EXPECT_NE(bad.err.find("category=config"), std::string::npos) << bad.err;
}

TEST_F(TrainedRun, LockedCheckpointDirectoryIsRefused) {
  const TempDir& d = *dir_;
  fs::create_directories(d / "locked/checkpoints");
  const int fd = ::open((d / "locked/checkpoints/LOCK").c_str(), O_CREAT | O_RDWR, 0644);
  ASSERT_GE(fd, 0);
  ASSERT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
  const Result r = Cli(d, "train --config cfg.json --out locked");
  ::close(fd);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("category=state"), std::string::npos) << r.err;
}

TEST_F(TrainedRun, EvaluateAndReport) {
  const TempDir& d = *dir_;
  const std::string before = ReadFile(d / "test/manifest.tsv") + ReadFile(d / "test/feats/utt000003.phof");
  Result r = Cli(d, "evaluate --checkpoint run/model.phoc --manifest test/manifest.tsv --out eval");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(before, ReadFile(d / "test/manifest.tsv") + ReadFile(d / "test/feats/utt000003.phof"));
  const ScoreTable scores = ReadScoreFile(d / "eval/scores.tsv");
  EXPECT_EQ(scores.utterance_ids.size(), 12u);
  EXPECT_EQ(scores.scores.cols(), 3);
  const std::string text = ReadFile(d / "eval/metrics.txt");
  const MetricsReport rep = ParseReport(text);
  EXPECT_EQ(FormatReport(rep), text);
  EXPECT_EQ(rep.n_trials, 12u);
  const std::string svg = ReadFile(d / "eval/confusion.svg");
  EXPECT_NE(svg.find("lang2"), std::string::npos);

  r = Cli(d, "report --scores eval/scores.tsv --manifest test/manifest.tsv --out rep");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ReadFile(d / "rep/metrics.txt"), text);
  EXPECT_EQ(ReadFile(d / "rep/confusion.svg"), svg);
}

TEST_F(TrainedRun, EvaluateRejectsLabelMapMismatch) {
  const TempDir& d = *dir_;
  fs::remove_all(d / "renamed");
  fs::copy(d / "test", d / "renamed", fs::copy_options::recursive);
  WriteFile(d / "renamed/label_map.tsv", "lang0\t0\nlang2\t1\nlang1\t2\n");
  const Result r = Cli(d, "evaluate --checkpoint run/model.phoc --manifest renamed/manifest.tsv --out e2");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("category=data"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("label map"), std::string::npos) << r.err;
}

TEST_F(TrainedRun, SegmentMarksDetectedIndices) {
  const TempDir& d = *dir_;
  Result r = Cli(d, "segment --checkpoint run/model.phoc --features test/feats/utt000001.phof --threshold 0.5 "
                    "--out seg");
  ASSERT_EQ(r.code, 0) << r.err;
  SimilarityCurve curve;
  std::istringstream is(ReadFile(d / "seg/similarity.tsv"));
  std::size_t j = 0;
  double v = 0.0;
  while (is >> j >> v) curve.values.push_back(v);
  ASSERT_EQ(curve.values.size(), 39u);
  const auto expected = DetectBoundaries(curve, 0.5).boundaries;
  const auto rows = ReadBoundaryFile(d / "seg/boundaries.tsv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].set.boundaries, expected);
  const std::string svg = ReadFile(d / "seg/segmentation.svg");
  std::size_t markers = 0;
  for (auto p = svg.find("class=\"boundary\""); p != std::string::npos; p = svg.find("class=\"boundary\"", p + 1)) {
    ++markers;
  }
  EXPECT_EQ(markers, expected.size());
  EXPECT_NE(svg.find("not a spectrum"), std::string::npos);
}

TEST_F(TrainedRun, SegmentTwoFramesAndAudioPanel) {
  const TempDir& d = *dir_;
  WriteFeatureFile(d / "two.phof", (Matrix(2, 16) << Eigen::RowVectorXd::Ones(16), -Eigen::RowVectorXd::Ones(16)).finished());
  Result r = Cli(d, "segment --checkpoint run/model.phoc --features two.phof --out seg2");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string curve = ReadFile(d / "seg2/similarity.tsv");
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 1);

  // 40 frames at 20 ms hop: 0.8 s of audio.
  Waveform w;
  for (int i = 0; i < 12800; ++i) w.samples.push_back(0.3 * std::sin(2.0 * std::numbers::pi * 440.0 * i / 16000.0));
  WriteWav(d / "ok.wav", w);
  r = Cli(d, "segment --checkpoint run/model.phoc --features test/feats/utt000002.phof --audio ok.wav --out seg3");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string svg = ReadFile(d / "seg3/segmentation.svg");
  EXPECT_NE(svg.find("spectrogram (log magnitude)"), std::string::npos);
  EXPECT_NE(svg.find("hop"), std::string::npos);

  w.samples.resize(4000);
  WriteWav(d / "short.wav", w);
  r = Cli(d, "segment --checkpoint run/model.phoc --features test/feats/utt000002.phof --audio short.wav --out seg4");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("category=data"), std::string::npos) << r.err;
}

TEST_F(TrainedRun, SegmentFindsChangePointsOnCleanInput) {
  const TempDir& d = *dir_;
  WriteFile(d / "clean.json", R"({"synth": {"noise_std": 0.0}})");
  ASSERT_EQ(Cli(d, "prepare synth --config clean.json --n-utts 3 --n-frames 60 --seed 9 --out clean").code, 0);
  const Result r = Cli(d, "segment --checkpoint run/model.phoc --features clean/feats/utt000000.phof "
                          "--phones clean/feats/utt000000.phones --threshold 0.9999 --tolerance 0 --out seg5");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(ReadFile(d / "seg5/run_manifest.json"));
  EXPECT_EQ(j["metrics"]["precision"], 1.0);
  EXPECT_EQ(j["metrics"]["recall"], 1.0);
}

}  // namespace
}  // namespace pholid
