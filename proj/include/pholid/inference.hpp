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

#ifndef PHOLID_INFERENCE_HPP_
#define PHOLID_INFERENCE_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pholid/data.hpp"
#include "pholid/model.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

// Index of the highest score; ties go to the lowest index.
int Classify(std::span<const double> scores);
int Classify(const ScoreVector& scores);

// values[j] = cos(z_j, z_{j+1}), over the whole frame stream (segment
// borders included), clamped to [-1, 1].
struct SimilarityCurve {
  std::vector<double> values;
};

SimilarityCurve ComputeSimilarityCurve(const SegmentationFrameEmbeddings& z);

// Centred moving average; window 1 returns the curve unchanged.
SimilarityCurve SmoothCurve(const SimilarityCurve& curve, std::size_t window);

struct BoundarySet {
  std::vector<std::size_t> boundaries;  // b: frames b and b+1 differ
  double threshold = 0.0;
};

// Indices j with curve[j] < threshold. With merge_window w > 1, j is kept only
// if it is also the minimum of the curve over [j-w+1, j+w-1] (earliest index
// wins ties), so nearby dips collapse to one boundary. The result is monotone
// in the threshold for any fixed window.
BoundarySet DetectBoundaries(const SimilarityCurve& curve, double threshold,
                             std::size_t merge_window = 1);

struct BoundaryScore {
  std::size_t n_predicted = 0;
  std::size_t n_reference = 0;
  std::size_t hits = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy one-to-one matching within +/- tolerance frames.
BoundaryScore ScoreBoundaries(std::span<const std::size_t> predicted,
                              std::span<const std::size_t> reference, std::size_t tolerance = 0);

// Accumulated over several utterances.
BoundaryScore ScoreBoundaries(std::span<const BoundarySet> predicted,
                              std::span<const std::vector<std::size_t>> reference,
                              std::size_t tolerance = 0);

// Picks the threshold maximising pooled F1 over candidate midpoints of the
// observed similarity values.
double TuneThreshold(std::span<const SimilarityCurve> curves,
                     std::span<const std::vector<std::size_t>> reference, std::size_t tolerance = 0,
                     std::size_t merge_window = 1);

// Eval-mode logits for every utterance, B x C.
Matrix ScoreUtterances(PhoLidModel& model, std::span<const SegmentedUtterance> utts,
                       std::size_t batch_size = 64);

// Eval-mode segmentation-head output for one utterance's valid frames.
SegmentationFrameEmbeddings EmbedFrames(PhoLidModel& model, const SegmentedUtterance& utt);

struct ScoreTable {
  std::vector<std::string> utterance_ids;
  Matrix scores;  // N x C
};

// One line per utterance: id<TAB>logit_0<TAB>...<TAB>logit_{C-1}.
void WriteScoreFile(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable ReadScoreFile(const std::filesystem::path& path);

struct UtteranceBoundaries {
  std::string utterance_id;
  BoundarySet set;
};

// One line per utterance: id<TAB>threshold<TAB>space-separated indices.
void WriteBoundaryFile(const std::filesystem::path& path, std::span<const UtteranceBoundaries> rows);
std::vector<UtteranceBoundaries> ReadBoundaryFile(const std::filesystem::path& path);

}  // namespace pholid

#endif  // PHOLID_INFERENCE_HPP_
