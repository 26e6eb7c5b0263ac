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

#ifndef PHOLID_DATA_HPP_
#define PHOLID_DATA_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "pholid/tensor.hpp"

namespace pholid {

// Frame-level features of one utterance, N_frames x F, at a fixed hop.
struct FeatureSequence {
  Matrix frames;
  std::string utterance_id;

  std::size_t n_frames() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }

  // Throws kData unless N_frames >= 1, F >= 1 and every value is finite.
  void Validate() const;
};

enum class TailPolicy {
  kDropTail,  // T = floor(N / K); trailing frames discarded.
  kPad,       // T = ceil(N / K); the last segment is zero-padded.
};

// An utterance cut into T segments of K frames. `frames` holds the T*K rows
// segment-major; rows at or after `n_valid` are zero padding.
struct SegmentedUtterance {
  Matrix frames;
  std::size_t n_segments = 0;
  std::size_t segment_frames = 0;
  std::size_t n_valid = 0;
  int label = -1;
  std::string utterance_id;

  std::size_t dim() const { return static_cast<std::size_t>(frames.cols()); }
  bool padded() const { return n_valid < n_segments * segment_frames; }

  // Rows [t*K, (t+1)*K) of `frames`.
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> segment(std::size_t t) const;

  // The first `n_valid` rows, i.e. the frame stream without padding.
  Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> valid_frames() const;

  std::vector<bool> frame_mask() const;

  void Validate(int n_classes = -1) const;
};

SegmentedUtterance Partition(const FeatureSequence& seq, std::size_t segment_frames,
                             TailPolicy policy = TailPolicy::kDropTail);

// Concatenates the segments back into a (T*K) x F frame matrix.
Matrix Flatten(const SegmentedUtterance& utt);

// Keeps frames whose log energy, 10*log10(mean(x^2)), lies within
// `threshold_db` of the loudest frame. Always keeps at least that frame.
FeatureSequence EnergyVad(const FeatureSequence& seq, double threshold_db);

}  // namespace pholid

#endif  // PHOLID_DATA_HPP_
