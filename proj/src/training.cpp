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

#include "pholid/training.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "pholid/checkpoint.hpp"
#include "pholid/error.hpp"
#include "pholid/losses.hpp"

namespace pholid {

std::string_view StrategyName(Strategy s) {
  return s == Strategy::kLidOnly ? "lid-only" : "multi-task";
}

Strategy ParseStrategy(std::string_view name) {
  if (name == "lid-only") return Strategy::kLidOnly;
  if (name == "multi-task") return Strategy::kMultiTask;
  Fail(ErrorCategory::kConfig, fmt::format("unknown strategy '{}' (lid-only|multi-task)", name));
}

std::string_view PhaseName(Phase p) {
  switch (p) {
    case Phase::kPretrain: return "pretrain";
    case Phase::kMain: return "main";
    case Phase::kDone: return "done";
  }
  return "unknown";
}

Phase ParsePhase(std::string_view name) {
  if (name == "pretrain") return Phase::kPretrain;
  if (name == "main") return Phase::kMain;
  if (name == "done") return Phase::kDone;
  Fail(ErrorCategory::kFormat, fmt::format("unknown phase '{}'", name));
}

void TrainingConfig::Validate() const {
  if (total_epochs == 0) Fail(ErrorCategory::kConfig, "total_epochs must be >= 1");
  if (pretrain_epochs + warmup_epochs > total_epochs) {
    Fail(ErrorCategory::kConfig,
         fmt::format("pretrain_epochs ({}) + warmup_epochs ({}) exceed total_epochs ({})",
                     pretrain_epochs, warmup_epochs, total_epochs));
  }
  if (pretrain_epochs >= total_epochs) {
    Fail(ErrorCategory::kConfig, "need at least one main-phase epoch");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) Fail(ErrorCategory::kConfig, "alpha must lie in [0, 1]");
  if (batch_size == 0) Fail(ErrorCategory::kConfig, "batch_size must be >= 1");
  if (!(pretrain_lr >= 0.0) || !(peak_lr >= 0.0)) {
    Fail(ErrorCategory::kConfig, "learning rates must be non-negative");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    Fail(ErrorCategory::kConfig, "invalid Adam hyperparameters");
  }
}

nlohmann::json ToJson(const TrainingConfig& c) {
  return {
      {"total_epochs", c.total_epochs},   {"pretrain_epochs", c.pretrain_epochs},
      {"pretrain_lr", c.pretrain_lr},     {"peak_lr", c.peak_lr},
      {"warmup_epochs", c.warmup_epochs}, {"batch_size", c.batch_size},
      {"alpha", c.alpha},                 {"negatives", c.negatives},
      {"seed", c.seed},                   {"strategy", std::string(StrategyName(c.strategy))},
      {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
      {"adam_eps", c.adam_eps},
  };
}

TrainingConfig TrainingConfigFromJson(const nlohmann::json& j) {
  TrainingConfig c;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      if (k == "total_epochs") c.total_epochs = it->get<std::size_t>();
      else if (k == "pretrain_epochs") c.pretrain_epochs = it->get<std::size_t>();
      else if (k == "pretrain_lr") c.pretrain_lr = it->get<double>();
      else if (k == "peak_lr") c.peak_lr = it->get<double>();
      else if (k == "warmup_epochs") c.warmup_epochs = it->get<std::size_t>();
      else if (k == "batch_size") c.batch_size = it->get<std::size_t>();
      else if (k == "alpha") c.alpha = it->get<double>();
      else if (k == "negatives") c.negatives = it->get<std::size_t>();
      else if (k == "seed") c.seed = it->get<std::uint64_t>();
      else if (k == "strategy") c.strategy = ParseStrategy(it->get<std::string>());
      else if (k == "adam_beta1") c.adam_beta1 = it->get<double>();
      else if (k == "adam_beta2") c.adam_beta2 = it->get<double>();
      else if (k == "adam_eps") c.adam_eps = it->get<double>();
      else Fail(ErrorCategory::kConfig, fmt::format("training config: unknown key '{}'", k));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCategory::kConfig, fmt::format("training config: {}", e.what()));
  }
  return c;
}

double LrAt(double epoch_fraction, const TrainingConfig& cfg) {
  const auto total = static_cast<double>(cfg.main_epochs());
  if (!(epoch_fraction >= 0.0) || epoch_fraction > total) {
    Fail(ErrorCategory::kConfig,
         fmt::format("epoch fraction {} outside main phase [0, {}]", epoch_fraction, total));
  }
  const auto warmup = static_cast<double>(cfg.warmup_epochs);
  if (epoch_fraction < warmup) return cfg.peak_lr * epoch_fraction / warmup;
  if (total == warmup) return cfg.peak_lr;
  const double progress = (epoch_fraction - warmup) / (total - warmup);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double PhaseLr(Phase phase, double epoch_fraction, const TrainingConfig& cfg) {
  if (phase == Phase::kPretrain) return cfg.pretrain_lr;
  return LrAt(epoch_fraction, cfg);
}

AdamState AdamState::For(const PhoLidModel& model) {
  AdamState s;
  model.ForEachParam([&s](const std::string&, ParamGroup, const nn::Param& p) {
    s.slots.push_back({Matrix::Zero(p.value.rows(), p.value.cols()),
                       Matrix::Zero(p.value.rows(), p.value.cols()), 0});
  });
  return s;
}

void AdamStep(PhoLidModel& model, AdamState& adam, double lr, std::span<const ParamGroup> groups,
              const TrainingConfig& cfg) {
  std::size_t idx = 0;
  model.ForEachParam([&](const std::string& name, ParamGroup g, nn::Param& p) {
    if (idx >= adam.slots.size()) {
      Fail(ErrorCategory::kState, fmt::format("optimiser state missing slot for '{}'", name));
    }
    AdamSlot& s = adam.slots[idx++];
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) return;
    ++s.steps;
    s.m = cfg.adam_beta1 * s.m + (1.0 - cfg.adam_beta1) * p.grad;
    s.v = cfg.adam_beta2 * s.v + (1.0 - cfg.adam_beta2) * p.grad.cwiseProduct(p.grad);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(s.steps));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(s.steps));
    p.value.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + cfg.adam_eps);
  });
}

TrainState InitTrainState(const ModelConfig& model_cfg, const TrainingConfig& cfg) {
  cfg.Validate();
  TrainState s;
  s.model = PhoLidModel(model_cfg, cfg.seed);
  s.adam = AdamState::For(s.model);
  s.phase = cfg.pretrain_epochs > 0 ? Phase::kPretrain : Phase::kMain;
  s.shuffle_rng = MakeRng(cfg.seed, 1);
  s.negative_rng = MakeRng(cfg.seed, 2);
  s.dropout_rng = MakeRng(cfg.seed, 3);
  return s;
}

std::string FormatLogHeader() { return "step\tphase\tepoch\tlr\tl_lid\tl_nce\tl_mul"; }

std::string FormatStepRecord(const StepRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string("-"); };
  return fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}", r.step, PhaseName(r.phase), r.epoch, r.lr,
                     opt(r.l_lid), opt(r.l_nce), r.l_mul);
}

StepRecord ParseStepRecord(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> f;
  std::string item;
  while (std::getline(is, item, '\t')) f.push_back(item);
  if (f.size() != 7) Fail(ErrorCategory::kFormat, fmt::format("bad training log line '{}'", line));
  try {
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s == "-") return std::nullopt;
      return std::stod(s);
    };
    StepRecord r;
    r.step = std::stoull(f[0]);
    r.phase = ParsePhase(f[1]);
    r.epoch = std::stoull(f[2]);
    r.lr = std::stod(f[3]);
    r.l_lid = opt(f[4]);
    r.l_nce = opt(f[5]);
    r.l_mul = std::stod(f[6]);
    return r;
  } catch (const std::logic_error&) {
    Fail(ErrorCategory::kFormat, fmt::format("bad training log line '{}'", line));
  }
}

std::vector<ParamGroup> TrainableGroups(Phase phase, Strategy strategy) {
  if (phase == Phase::kPretrain) return {ParamGroup::kEncoder, ParamGroup::kSegmentationHead};
  if (strategy == Strategy::kLidOnly) return {ParamGroup::kEncoder, ParamGroup::kLidBranch};
  return {ParamGroup::kEncoder, ParamGroup::kSegmentationHead, ParamGroup::kLidBranch};
}

namespace {

void CheckData(std::span<const SegmentedUtterance> data, const TrainState& state,
               const TrainingConfig& cfg, bool need_nce) {
  if (data.empty()) Fail(ErrorCategory::kData, "no training utterances");
  const auto c = static_cast<int>(state.model.config().n_classes);
  for (const auto& u : data) {
    u.Validate(c);
    if (need_nce && u.n_valid < cfg.negatives + 3) {
      Fail(ErrorCategory::kData,
           fmt::format("utterance '{}' has {} frames; NCE with M={} needs >= {}", u.utterance_id,
                       u.n_valid, cfg.negatives, cfg.negatives + 3));
    }
  }
}

[[noreturn]] void AbortNonFinite(const TrainState& state, const TrainingConfig& cfg,
                                 const TrainHooks& hooks, const StepRecord& rec) {
  std::string where;
  if (!hooks.failure_snapshot.empty()) {
    try {
      SaveCheckpoint(hooks.failure_snapshot, state, cfg, LabelMap{});
      where = fmt::format("; snapshot at {}", hooks.failure_snapshot.string());
    } catch (const Error& e) {
      where = fmt::format("; snapshot failed: {}", e.what());
    }
  }
  Fail(ErrorCategory::kNumeric,
       fmt::format("non-finite loss at step {} ({} epoch {}): {}{}", rec.step, PhaseName(rec.phase),
                   rec.epoch, FormatStepRecord(rec), where));
}

void RunEpoch(TrainState& state, std::span<const SegmentedUtterance> data, const TrainingConfig& cfg,
              const TrainHooks& hooks) {
  const Phase phase = state.phase;
  const bool use_lid = phase == Phase::kMain;
  const bool use_nce = phase == Phase::kPretrain || cfg.strategy == Strategy::kMultiTask;
  const Heads heads = use_lid && use_nce ? Heads::kBoth : (use_lid ? Heads::kLid : Heads::kSegmentation);
  double w_lid = 0.0;
  double w_nce = 0.0;
  if (phase == Phase::kPretrain) {
    w_nce = 1.0;
  } else if (cfg.strategy == Strategy::kLidOnly) {
    w_lid = 1.0;
  } else {
    w_lid = cfg.alpha;
    w_nce = 1.0 - cfg.alpha;
  }
  const auto groups = TrainableGroups(phase, cfg.strategy);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), state.shuffle_rng);

  const std::size_t n_steps = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t phase_epoch = phase == Phase::kPretrain ? state.epoch : state.epoch - cfg.pretrain_epochs;
  for (std::size_t s = 0; s < n_steps; ++s) {
    const std::size_t begin = s * cfg.batch_size;
    const std::size_t end = std::min(begin + cfg.batch_size, data.size());
    std::vector<const SegmentedUtterance*> batch;
    std::vector<int> labels;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(&data[order[i]]);
      labels.push_back(data[order[i]].label);
    }
    const double lr = PhaseLr(phase, static_cast<double>(phase_epoch) +
                                         static_cast<double>(s) / static_cast<double>(n_steps),
                              cfg);

    PhoLidModel::Tape tape;
    const auto out = state.model.Forward(std::span<const SegmentedUtterance* const>(batch), heads,
                                         {nn::Mode::kTrain, &state.dropout_rng}, &tape);
    state.model.ZeroGrad();

    StepRecord rec;
    rec.step = state.step;
    rec.phase = phase;
    rec.epoch = state.epoch;
    rec.lr = lr;
    Matrix d_logits;
    std::vector<Matrix> d_z;
    if (use_lid) rec.l_lid = LidCrossEntropy(out.logits, labels, &d_logits, w_lid);
    if (use_nce) {
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      double total = 0.0;
      d_z.resize(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Matrix& z = out.embeddings[b].values;
        const auto negs = SampleUtteranceNegatives(static_cast<std::size_t>(z.rows()), cfg.negatives,
                                                   state.negative_rng);
        d_z[b] = Matrix::Zero(z.rows(), z.cols());
        total += UtteranceNce(z, negs, &d_z[b], w_nce * inv_b);
      }
      rec.l_nce = total * inv_b;
    }
    if (phase == Phase::kPretrain) {
      rec.l_mul = *rec.l_nce;
    } else if (cfg.strategy == Strategy::kLidOnly) {
      rec.l_mul = *rec.l_lid;
    } else {
      rec.l_mul = MultiTaskLoss(*rec.l_lid, *rec.l_nce, cfg.alpha);
    }
    if (!std::isfinite(rec.l_mul) || (rec.l_lid && !std::isfinite(*rec.l_lid)) ||
        (rec.l_nce && !std::isfinite(*rec.l_nce))) {
      AbortNonFinite(state, cfg, hooks, rec);
    }

    state.model.Backward(tape, use_lid ? &d_logits : nullptr, use_nce ? &d_z : nullptr);
    AdamStep(state.model, state.adam, lr, groups, cfg);
    ++state.step;
    if (hooks.on_step) hooks.on_step(rec);
  }
  ++state.epoch;
  if (hooks.on_epoch_end) hooks.on_epoch_end(state);
}

bool ShouldStop(const TrainState& state, const TrainHooks& hooks) {
  return hooks.stop_after_epoch && state.epoch >= *hooks.stop_after_epoch;
}

}  // namespace

TrainState Pretrain(TrainState state, std::span<const SegmentedUtterance> data,
                    const TrainingConfig& cfg, const TrainHooks& hooks) {
  cfg.Validate();
  if (state.phase != Phase::kPretrain) {
    Fail(ErrorCategory::kState, fmt::format("pretrain called in phase '{}'", PhaseName(state.phase)));
  }
  CheckData(data, state, cfg, true);
  while (state.epoch < cfg.pretrain_epochs) {
    if (ShouldStop(state, hooks)) return state;
    RunEpoch(state, data, cfg, hooks);
  }
  // The main phase restarts its schedule from zero, and its optimiser from
  // zero moments as well.
  state.adam = AdamState::For(state.model);
  state.phase = Phase::kMain;
  return state;
}

TrainState TrainMain(TrainState state, std::span<const SegmentedUtterance> data,
                     const TrainingConfig& cfg, const TrainHooks& hooks) {
  cfg.Validate();
  if (state.phase != Phase::kMain) {
    Fail(ErrorCategory::kState, fmt::format("main training called in phase '{}'", PhaseName(state.phase)));
  }
  CheckData(data, state, cfg, cfg.strategy == Strategy::kMultiTask);
  while (state.epoch < cfg.total_epochs) {
    if (ShouldStop(state, hooks)) return state;
    RunEpoch(state, data, cfg, hooks);
  }
  state.phase = Phase::kDone;
  return state;
}

TrainState Train(TrainState state, std::span<const SegmentedUtterance> data, const TrainingConfig& cfg,
                 const TrainHooks& hooks) {
  if (state.phase == Phase::kPretrain) {
    state = Pretrain(std::move(state), data, cfg, hooks);
    if (state.phase == Phase::kPretrain) return state;
  }
  if (state.phase == Phase::kMain) state = TrainMain(std::move(state), data, cfg, hooks);
  return state;
}

}  // namespace pholid
