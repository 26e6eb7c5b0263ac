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

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "pholid/error.hpp"
#include "pholid/losses.hpp"
#include "pholid/training.hpp"
#include "tempdir.hpp"

namespace pholid {
namespace {

using testing::TinyCorpus;
using testing::TinyModel;
using testing::TinyTraining;

using Snapshot = std::map<std::string, Matrix>;

Snapshot Params(const PhoLidModel& m) {
  Snapshot s;
  m.ForEachParam([&](const std::string& n, ParamGroup, const nn::Param& p) { s[n] = p.value; });
  return s;
}

std::map<std::string, ParamGroup> Groups(const PhoLidModel& m) {
  std::map<std::string, ParamGroup> g;
  m.ForEachParam([&](const std::string& n, ParamGroup grp, const nn::Param&) { g[n] = grp; });
  return g;
}

TEST(LrSchedule, DefaultRecipe) {
  TrainingConfig c;  // 13 epochs, 3 pretraining, 3 warmup, peak 1e-4
  EXPECT_EQ(LrAt(0.0, c), 0.0);
  EXPECT_EQ(LrAt(3.0, c), 1e-4);
  EXPECT_NEAR(LrAt(1.5, c), 0.5e-4, 1e-20);
  const double mid = 3.0 + (c.main_epochs() - 3.0) / 2.0;
  EXPECT_NEAR(LrAt(mid, c), 0.5e-4, 1e-18);
  EXPECT_LT(std::abs(LrAt(3.0 - 1e-12, c) - LrAt(3.0, c)), 1e-12);
  EXPECT_LT(std::abs(LrAt(3.0 + 1e-12, c) - LrAt(3.0, c)), 1e-12);
  EXPECT_LT(LrAt(static_cast<double>(c.main_epochs()), c), 1e-9);
  EXPECT_THROW(LrAt(c.main_epochs() + 0.01, c), Error);
  EXPECT_THROW(LrAt(-0.1, c), Error);
  EXPECT_EQ(PhaseLr(Phase::kPretrain, 2.5, c), 1e-4);
}

TEST(LrSchedule, MonotoneWithinPieces) {
  TrainingConfig c;
  double prev = -1;
  for (int i = 0; i <= 300; ++i) {
    const double lr = LrAt(i / 100.0, c);
    EXPECT_GE(lr, prev);
    prev = lr;
  }
  for (int i = 300; i <= 100 * static_cast<int>(c.main_epochs()); ++i) {
    const double lr = LrAt(i / 100.0, c);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(TrainingConfig, ValidationAndJson) {
  TrainingConfig c;
  EXPECT_NO_THROW(c.Validate());
  EXPECT_EQ(TrainingConfigFromJson(ToJson(c)).total_epochs, 13u);
  c.pretrain_epochs = 11;
  EXPECT_THROW(c.Validate(), Error);
  c = TrainingConfig{};
  c.alpha = 1.5;
  EXPECT_THROW(c.Validate(), Error);
  c = TrainingConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.Validate(), Error);
  EXPECT_EQ(ParseStrategy("lid-only"), Strategy::kLidOnly);
  EXPECT_EQ(ParseStrategy("multi-task"), Strategy::kMultiTask);
  EXPECT_THROW(ParseStrategy("both"), Error);
}

TEST(StepRecord, FormatParseRoundTrip) {
  StepRecord r{12, Phase::kMain, 4, 3.3e-5, 0.1234567890123, std::nullopt, 0.1234567890123};
  const auto line = FormatStepRecord(r);
  EXPECT_NE(line.find("\t-\t"), std::string::npos);
  const auto back = ParseStepRecord(line);
  EXPECT_EQ(back.step, 12u);
  EXPECT_EQ(back.lr, r.lr);
  EXPECT_EQ(back.l_lid, r.l_lid);
  EXPECT_FALSE(back.l_nce.has_value());
  EXPECT_EQ(FormatLogHeader(), "step\tphase\tepoch\tlr\tl_lid\tl_nce\tl_mul");
}

class TrainingTest : public ::testing::Test {
 protected:
  std::vector<SegmentedUtterance> data_ = TinyCorpus(12, 60, 6, 20, 3);
  ModelConfig model_ = TinyModel(6, 20);
};

TEST_F(TrainingTest, PretrainFreezesLidBranch) {
  TrainingConfig cfg = TinyTraining();
  TrainState s = InitTrainState(model_, cfg);
  const Snapshot before = Params(s.model);
  std::vector<StepRecord> log;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) { log.push_back(r); };
  s = Pretrain(std::move(s), data_, cfg, hooks);
  EXPECT_EQ(s.phase, Phase::kMain);
  EXPECT_EQ(s.epoch, 2u);
  const Snapshot after = Params(s.model);
  const auto groups = Groups(s.model);
  for (const auto& [name, value] : before) {
    if (groups.at(name) == ParamGroup::kLidBranch) EXPECT_EQ(after.at(name), value) << name;
    else if (name.find("weight") != std::string::npos) EXPECT_NE(after.at(name), value) << name;
  }
  ASSERT_EQ(log.size(), 6u);  // 12 utterances / batch 5 -> 3 steps per epoch
  for (const auto& r : log) {
    EXPECT_EQ(r.phase, Phase::kPretrain);
    EXPECT_EQ(r.lr, cfg.pretrain_lr);
    EXPECT_FALSE(r.l_lid.has_value());
    EXPECT_EQ(r.l_mul, *r.l_nce);
  }
}

TEST_F(TrainingTest, LidOnlyFreezesSegmentationHead) {
  TrainingConfig cfg = TinyTraining();
  cfg.strategy = Strategy::kLidOnly;
  TrainState s = Pretrain(InitTrainState(model_, cfg), data_, cfg);
  const Snapshot before = Params(s.model);
  s = TrainMain(std::move(s), data_, cfg);
  EXPECT_EQ(s.phase, Phase::kDone);
  const Snapshot after = Params(s.model);
  const auto groups = Groups(s.model);
  for (const auto& [name, value] : before) {
    if (groups.at(name) == ParamGroup::kSegmentationHead) EXPECT_EQ(after.at(name), value) << name;
    else if (name.find("weight") != std::string::npos) EXPECT_NE(after.at(name), value) << name;
  }
}

TEST_F(TrainingTest, AlphaOneEqualsLidOnlyBitwise) {
  TrainingConfig a = TinyTraining();
  a.strategy = Strategy::kMultiTask;
  a.alpha = 1.0;
  TrainingConfig b = a;
  b.strategy = Strategy::kLidOnly;
  std::vector<double> la, lb;
  TrainHooks ha, hb;
  ha.on_step = [&](const StepRecord& r) { la.push_back(r.l_lid.value_or(-1)); };
  hb.on_step = [&](const StepRecord& r) { lb.push_back(r.l_lid.value_or(-1)); };
  const TrainState sa = Train(InitTrainState(model_, a), data_, a, ha);
  const TrainState sb = Train(InitTrainState(model_, b), data_, b, hb);
  EXPECT_EQ(Params(sa.model), Params(sb.model));
  EXPECT_EQ(la, lb);
}

TEST_F(TrainingTest, AlphaZeroLeavesClassifierUnchanged) {
  TrainingConfig cfg = TinyTraining();
  cfg.alpha = 0.0;
  TrainState s = Pretrain(InitTrainState(model_, cfg), data_, cfg);
  const Snapshot before = Params(s.model);
  s = TrainMain(std::move(s), data_, cfg);
  const Snapshot after = Params(s.model);
  for (const auto& [name, value] : before) {
    if (name.rfind("classifier", 0) == 0) EXPECT_EQ(after.at(name), value) << name;
  }
  EXPECT_NE(after.at("encoder.conv0.weight"), before.at("encoder.conv0.weight"));
}

TEST_F(TrainingTest, MultiTaskGradientDecomposes) {
  PhoLidModel m(model_, 5);
  std::vector<const SegmentedUtterance*> batch{&data_[0], &data_[1], &data_[2]};
  std::vector<int> labels{data_[0].label, data_[1].label, data_[2].label};
  Rng rng(2);
  std::vector<std::vector<NegativeSampleSet>> negs;
  for (auto* u : batch) negs.push_back(SampleUtteranceNegatives(u->n_valid, 3, rng));
  auto grads = [&](double w_lid, double w_nce) {
    m.ZeroGrad();
    PhoLidModel::Tape tape;
    const auto out = m.Forward(std::span<const SegmentedUtterance* const>(batch), Heads::kBoth,
                               {nn::Mode::kTrain, nullptr}, &tape);
    Matrix dl;
    LidCrossEntropy(out.logits, labels, &dl, w_lid);
    std::vector<Matrix> dz(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      dz[b] = Matrix::Zero(out.embeddings[b].values.rows(), out.embeddings[b].values.cols());
      UtteranceNce(out.embeddings[b].values, negs[b], &dz[b], w_nce / batch.size());
    }
    m.Backward(tape, &dl, &dz);
    return Params([&] {
      PhoLidModel copy = m;
      copy.ForEachParam([](const std::string&, ParamGroup, nn::Param& p) { p.value = p.grad; });
      return copy;
    }());
  };
  const double alpha = 0.95;
  const auto mul = grads(alpha, 1 - alpha);
  const auto lid = grads(1, 0);
  const auto nce = grads(0, 1);
  for (const auto& [name, g] : mul) {
    const Matrix combo = alpha * lid.at(name) + (1 - alpha) * nce.at(name);
    EXPECT_LT((g - combo).norm(), 1e-5 * std::max(1e-12, g.norm()) + 1e-15) << name;
  }
}

TEST_F(TrainingTest, DeterministicTrajectory) {
  TrainingConfig cfg = TinyTraining();
  auto run = [&] {
    std::vector<std::string> lines;
    TrainHooks h;
    h.on_step = [&](const StepRecord& r) { lines.push_back(FormatStepRecord(r)); };
    Train(InitTrainState(model_, cfg), data_, cfg, h);
    return lines;
  };
  const auto a = run();
  EXPECT_EQ(a.size(), 15u);
  EXPECT_EQ(a, run());
  cfg.seed = 18;
  EXPECT_NE(a, run());
}

TEST_F(TrainingTest, LossDecreasesOnSeparableCorpus) {
  TrainingConfig cfg = TinyTraining();
  cfg.total_epochs = 12;
  cfg.pretrain_epochs = 0;
  cfg.warmup_epochs = 1;
  cfg.strategy = Strategy::kLidOnly;
  std::vector<double> per_epoch(cfg.total_epochs, 0.0);
  TrainHooks h;
  h.on_step = [&](const StepRecord& r) { per_epoch[r.epoch] += r.l_mul; };
  Train(InitTrainState(model_, cfg), data_, cfg, h);
  EXPECT_LT(per_epoch.back(), per_epoch.front());
}

TEST_F(TrainingTest, NonFiniteLossAbortsWithSnapshot) {
  testing::TempDir dir;
  TrainingConfig cfg = TinyTraining();
  TrainState s = InitTrainState(model_, cfg);
  s.model.seg_head.weight.value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainHooks h;
  h.failure_snapshot = dir / "failed.ckpt";
  try {
    Train(std::move(s), data_, cfg, h);
    FAIL() << "expected an abort";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kNumeric);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "failed.ckpt"));
}

TEST_F(TrainingTest, RejectsMismatchedData) {
  TrainingConfig cfg = TinyTraining();
  auto bad = data_;
  bad[3].label = 7;
  EXPECT_THROW(Train(InitTrainState(model_, cfg), bad, cfg), Error);
  EXPECT_THROW(Train(InitTrainState(model_, cfg), std::span<const SegmentedUtterance>(), cfg), Error);
  TrainState done = InitTrainState(model_, cfg);
  done.phase = Phase::kMain;
  EXPECT_THROW(Pretrain(std::move(done), data_, cfg), Error);
}

}  // namespace
}  // namespace pholid
