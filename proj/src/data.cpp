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

#include "pholid/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "pholid/error.hpp"

namespace pholid {

void FeatureSequence::Validate() const {
  if (frames.rows() < 1) {
    Fail(ErrorCategory::kData, fmt::format("utterance '{}' has no frames", utterance_id));
  }
  if (frames.cols() < 1) {
    Fail(ErrorCategory::kData,
         fmt::format("utterance '{}' has zero feature dimension", utterance_id));
  }
  if (!frames.allFinite()) {
    Fail(ErrorCategory::kData,
         fmt::format("utterance '{}' contains non-finite values", utterance_id));
  }
}

Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> SegmentedUtterance::segment(std::size_t t) const {
  const auto k = static_cast<Eigen::Index>(segment_frames);
  return frames.middleRows(static_cast<Eigen::Index>(t) * k, k);
}

Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true> SegmentedUtterance::valid_frames() const {
  return frames.topRows(static_cast<Eigen::Index>(n_valid));
}

std::vector<bool> SegmentedUtterance::frame_mask() const {
  std::vector<bool> mask(n_segments * segment_frames, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n_valid), true);
  return mask;
}

void SegmentedUtterance::Validate(int n_classes) const {
  if (n_segments < 1 || segment_frames < 1) {
    Fail(ErrorCategory::kData, fmt::format("utterance '{}' has no segments", utterance_id));
  }
  if (static_cast<std::size_t>(frames.rows()) != n_segments * segment_frames) {
    Fail(ErrorCategory::kShape,
         fmt::format("utterance '{}': {} rows for T={} K={}", utterance_id, frames.rows(),
                     n_segments, segment_frames));
  }
  if (n_valid <= (n_segments - 1) * segment_frames || n_valid > n_segments * segment_frames) {
    Fail(ErrorCategory::kShape,
         fmt::format("utterance '{}': {} valid frames inconsistent with T={} K={}",
                     utterance_id, n_valid, n_segments, segment_frames));
  }
  if (!frames.allFinite()) {
    Fail(ErrorCategory::kData,
         fmt::format("utterance '{}' contains non-finite values", utterance_id));
  }
  if (n_classes >= 0 && (label < 0 || label >= n_classes)) {
    Fail(ErrorCategory::kData, fmt::format("utterance '{}': label {} outside [0, {})",
                                           utterance_id, label, n_classes));
  }
}

SegmentedUtterance Partition(const FeatureSequence& seq, std::size_t segment_frames,
                             TailPolicy policy) {
  if (seq.frames.rows() == 0) {
    Fail(ErrorCategory::kData, fmt::format("utterance '{}' is empty", seq.utterance_id));
  }
  if (segment_frames < 2) {
    Fail(ErrorCategory::kConfig, fmt::format("segment length must be >= 2, got {}",
                                             segment_frames));
  }
  seq.Validate();
  const std::size_t n = seq.n_frames();
  const std::size_t k = segment_frames;
  SegmentedUtterance out;
  out.segment_frames = k;
  out.utterance_id = seq.utterance_id;
  if (policy == TailPolicy::kDropTail) {
    if (n < k) {
      Fail(ErrorCategory::kData,
           fmt::format("utterance too short: '{}' has {} frames, segment length {}",
                       seq.utterance_id, n, k));
    }
    out.n_segments = n / k;
    out.n_valid = out.n_segments * k;
    out.frames = seq.frames.topRows(static_cast<Eigen::Index>(out.n_valid));
  } else {
    out.n_segments = (n + k - 1) / k;
    out.n_valid = n;
    out.frames = Matrix::Zero(static_cast<Eigen::Index>(out.n_segments * k),
                              seq.frames.cols());
    out.frames.topRows(static_cast<Eigen::Index>(n)) = seq.frames;
  }
  return out;
}

Matrix Flatten(const SegmentedUtterance& utt) { return utt.frames; }

FeatureSequence EnergyVad(const FeatureSequence& seq, double threshold_db) {
  seq.Validate();
  if (threshold_db < 0.0) {
    Fail(ErrorCategory::kConfig, "VAD threshold must be non-negative dB");
  }
  const Eigen::Index n = seq.frames.rows();
  std::vector<double> energy(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    energy[static_cast<std::size_t>(i)] =
        10.0 * std::log10(seq.frames.row(i).squaredNorm() /
                              static_cast<double>(seq.frames.cols()) + 1e-10);
  }
  const double loudest = *std::max_element(energy.begin(), energy.end());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (energy[static_cast<std::size_t>(i)] >= loudest - threshold_db) keep.push_back(i);
  }
  FeatureSequence out;
  out.utterance_id = seq.utterance_id;
  out.frames.resize(static_cast<Eigen::Index>(keep.size()), seq.frames.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.frames.row(static_cast<Eigen::Index>(r)) = seq.frames.row(keep[r]);
  }
  return out;
}

}  // namespace pholid
