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

#ifndef PHOLID_FIGURES_HPP_
#define PHOLID_FIGURES_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pholid/audio.hpp"
#include "pholid/feature_io.hpp"
#include "pholid/inference.hpp"
#include "pholid/metrics.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

// Row-normalised confusion heatmap with language names on both axes. Each
// cell is a <rect class="cell"> carrying data-row, data-col and data-value.
std::string RenderConfusionSvg(const ConfusionMatrix& m, const LabelMap& labels,
                               const std::string& title = "confusion (row-normalised)");

struct SegmentationFigure {
  std::string utterance_id;
  SimilarityCurve curve;
  BoundarySet boundaries;
  std::optional<Spectrogram> spectrogram;  // bottom panel when present
  std::optional<Matrix> features;          // fallback bottom panel, frames x F
};

// Top panel: similarity curve, threshold line and one dashed
// <line class="boundary" data-index=...> per detected boundary. Bottom panel:
// spectrogram when given, otherwise the input feature heatmap.
std::string RenderSegmentationSvg(const SegmentationFigure& fig);

void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace pholid

#endif  // PHOLID_FIGURES_HPP_
