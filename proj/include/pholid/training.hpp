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

#ifndef PHOLID_TRAINING_HPP_
#define PHOLID_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pholid/data.hpp"
#include "pholid/model.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

enum class Strategy { kLidOnly, kMultiTask };
enum class Phase { kPretrain, kMain, kDone };

std::string_view StrategyName(Strategy s);
Strategy ParseStrategy(std::string_view name);
std::string_view PhaseName(Phase p);
Phase ParsePhase(std::string_view name);

struct TrainingConfig {
  std::size_t total_epochs = 13;
  std::size_t pretrain_epochs = 3;
  double pretrain_lr = 1e-4;
  double peak_lr = 1e-4;
  std::size_t warmup_epochs = 3;
  std::size_t batch_size = 128;
  double alpha = 0.95;
  std::size_t negatives = 3;  // M
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kMultiTask;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void Validate() const;
  std::size_t main_epochs() const { return total_epochs - pretrain_epochs; }
  bool operator==(const TrainingConfig&) const = default;
};

nlohmann::json ToJson(const TrainingConfig& cfg);
TrainingConfig TrainingConfigFromJson(const nlohmann::json& j);

// Main-phase learning rate at `epoch_fraction` epochs after the main phase
// began: linear warmup 0 -> peak over warmup_epochs, then cosine decay to 0
// at the end of the main phase.
double LrAt(double epoch_fraction, const TrainingConfig& cfg);

// Learning rate for either phase; the pretraining phase is constant.
double PhaseLr(Phase phase, double epoch_fraction, const TrainingConfig& cfg);

// Adam with per-tensor step counts, so tensors that join training late get
// their own bias correction.
struct AdamSlot {
  Matrix m;
  Matrix v;
  std::uint64_t steps = 0;
};

struct AdamState {
  std::vector<AdamSlot> slots;  // aligned with PhoLidModel::ForEachParam order

  static AdamState For(const PhoLidModel& model);
};

// Updates parameters of the listed groups from their accumulated gradients.
void AdamStep(PhoLidModel& model, AdamState& adam, double lr, std::span<const ParamGroup> groups,
              const TrainingConfig& cfg);

struct TrainState {
  PhoLidModel model;
  AdamState adam;
  std::size_t epoch = 0;   // completed epochs, both phases counted
  std::uint64_t step = 0;  // optimiser steps taken
  Phase phase = Phase::kPretrain;
  Rng shuffle_rng;
  Rng negative_rng;
  Rng dropout_rng;
};

TrainState InitTrainState(const ModelConfig& model_cfg, const TrainingConfig& cfg);

struct StepRecord {
  std::uint64_t step = 0;
  Phase phase = Phase::kPretrain;
  std::size_t epoch = 0;
  double lr = 0.0;
  std::optional<double> l_lid;
  std::optional<double> l_nce;
  double l_mul = 0.0;  // the objective the step minimised
};

// "step<TAB>phase<TAB>epoch<TAB>lr<TAB>l_lid<TAB>l_nce<TAB>l_mul", absent losses
// as "-", values printed round-trip exact.
std::string FormatLogHeader();
std::string FormatStepRecord(const StepRecord& r);
StepRecord ParseStepRecord(const std::string& line);

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const TrainState&)> on_epoch_end;
  std::optional<std::size_t> stop_after_epoch;  // stop once state.epoch reaches this
  std::filesystem::path failure_snapshot;        // written before a NaN abort
};

// Runs the remaining pretraining epochs (CNN + segmentation head minimise the
// utterance NCE; the LID branch is untouched) and moves to the main phase
// with fresh optimiser moments.
TrainState Pretrain(TrainState state, std::span<const SegmentedUtterance> data,
                    const TrainingConfig& cfg, const TrainHooks& hooks = {});

// Runs the remaining main-phase epochs with the configured strategy.
TrainState TrainMain(TrainState state, std::span<const SegmentedUtterance> data,
                     const TrainingConfig& cfg, const TrainHooks& hooks = {});

// Pretrain followed by TrainMain.
TrainState Train(TrainState state, std::span<const SegmentedUtterance> data,
                 const TrainingConfig& cfg, const TrainHooks& hooks = {});

// Parameter groups a phase/strategy updates.
std::vector<ParamGroup> TrainableGroups(Phase phase, Strategy strategy);

}  // namespace pholid

#endif  // PHOLID_TRAINING_HPP_
