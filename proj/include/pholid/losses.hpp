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

#ifndef PHOLID_LOSSES_HPP_
#define PHOLID_LOSSES_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pholid/model.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

// Cosine similarity in [-1, 1]. A zero-norm argument yields 0 (with a
// one-time warning) rather than NaN.
double CosineSim(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b);

// Negatives for one anchor frame: M distinct indices of the same utterance,
// none in {anchor-1, anchor, anchor+1}.
struct NegativeSampleSet {
  std::size_t anchor = 0;
  std::vector<std::size_t> indices;
};

// Throws kData if `neg` breaks the adjacency exclusion or leaves [0, n).
void ValidateNegatives(std::size_t n_frames, const NegativeSampleSet& neg);

// Uniform without replacement over the non-adjacent frames.
NegativeSampleSet SampleNegatives(std::size_t n_frames, std::size_t anchor, std::size_t m, Rng& rng);
NegativeSampleSet SampleNegatives(std::size_t n_frames, std::size_t anchor, std::size_t m,
                                  std::uint64_t seed);

// One set per anchor 0..n_frames-2 (every frame with a successor).
std::vector<NegativeSampleSet> SampleUtteranceNegatives(std::size_t n_frames, std::size_t m, Rng& rng);

// -log softmax over {sim(z_i, z_{i+1})} U {sim(z_i, z_j) : j in negatives},
// taking the positive's share. When `grad` is non-null, scale * dL/dz is
// added into it.
double FrameNce(const Matrix& z, const NegativeSampleSet& neg, Matrix* grad = nullptr,
                double scale = 1.0);

// Mean frame loss over all anchors of one utterance's frame stream. The
// normaliser is the anchor count n_frames - 1.
double UtteranceNce(const Matrix& z, std::span<const NegativeSampleSet> negatives,
                    Matrix* grad = nullptr, double scale = 1.0);
double UtteranceNce(const SegmentationFrameEmbeddings& z, std::size_t m, std::uint64_t seed);

// Mean over the batch of -log softmax(scores_b)[labels_b]. scores is B x C.
double LidCrossEntropy(const Matrix& scores, std::span<const int> labels, Matrix* grad = nullptr,
                       double scale = 1.0);

// alpha * l_lid + (1 - alpha) * l_nce, alpha in [0, 1].
double MultiTaskLoss(double l_lid, double l_nce, double alpha);

}  // namespace pholid

#endif  // PHOLID_LOSSES_HPP_
