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

#ifndef PHOLID_TESTS_FIXTURES_HPP_
#define PHOLID_TESTS_FIXTURES_HPP_

#include <vector>

#include "pholid/data.hpp"
#include "pholid/model.hpp"
#include "pholid/synthetic.hpp"
#include "pholid/training.hpp"

namespace pholid::testing {

// A small labelled synthetic corpus, already segmented.
inline std::vector<SegmentedUtterance> TinyCorpus(std::size_t n_utts, std::size_t n_frames,
                                                  std::size_t dim, std::size_t k, std::uint64_t seed) {
  SyntheticDesign d;
  d.dim = dim;
  const auto specs = MakeSyntheticLanguages(d, seed);
  std::vector<SegmentedUtterance> out;
  for (const auto& u : SynthCorpus(specs, {n_utts, n_frames, k, seed})) {
    auto s = Partition(u.features, k);
    s.label = u.label;
    out.push_back(std::move(s));
  }
  return out;
}

inline ModelConfig TinyModel(std::size_t dim, std::size_t k) {
  ModelConfig c = ModelConfig::Scaled(16, dim, 3);
  c.segment_frames = k;
  return c;
}

inline TrainingConfig TinyTraining() {
  TrainingConfig t;
  t.total_epochs = 5;
  t.pretrain_epochs = 2;
  t.warmup_epochs = 1;
  t.batch_size = 5;
  t.peak_lr = 1e-3;
  t.pretrain_lr = 1e-3;
  t.seed = 17;
  return t;
}

}  // namespace pholid::testing

#endif  // PHOLID_TESTS_FIXTURES_HPP_
