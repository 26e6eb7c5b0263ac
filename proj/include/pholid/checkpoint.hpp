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

#ifndef PHOLID_CHECKPOINT_HPP_
#define PHOLID_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>

#include "pholid/feature_io.hpp"
#include "pholid/model.hpp"
#include "pholid/training.hpp"

namespace pholid {

// Checkpoint layout, little-endian:
//   char[4] "PHOC" | u32 version | u64 header_len | header (UTF-8 JSON)
//   | f64 payload
// The JSON header carries both configs, the label map, the scalar training
// state, generator states, and a table of {name, rows, cols, offset} for every
// tensor in the payload (parameters, buffers, optimiser moments).
inline constexpr char kCheckpointMagic[4] = {'P', 'H', 'O', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainState state;
  TrainingConfig training;
  LabelMap labels;
};

// Writes to a temporary sibling and renames, so readers never see a partial
// file.
void SaveCheckpoint(const std::filesystem::path& path, const TrainState& state,
                    const TrainingConfig& training, const LabelMap& labels);

// When `expected` is given, a checkpoint with a different ModelConfig is an
// error.
Checkpoint LoadCheckpoint(const std::filesystem::path& path,
                          const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace pholid

#endif  // PHOLID_CHECKPOINT_HPP_
