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

#ifndef PHOLID_SYNTHETIC_HPP_
#define PHOLID_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pholid/data.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

// A toy "language": a Markov chain over latent phones, each phone emitting
// its mean vector plus isotropic Gaussian noise for a random dwell time.
struct SyntheticLanguageSpec {
  std::size_t n_phones = 0;
  Matrix phone_means;  // n_phones x F
  Matrix transition;   // n_phones x n_phones, row-stochastic
  std::size_t dwell_min = 2;
  std::size_t dwell_max = 4;
  double noise_std = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(phone_means.cols()); }
  void Validate() const;
};

struct SyntheticUtterance {
  FeatureSequence features;
  int label = -1;
  std::vector<int> phones;  // latent phone per frame
};

struct SynthOptions {
  std::size_t n_utts = 0;
  std::size_t n_frames = 0;
  std::size_t segment_frames = 20;
  std::uint64_t seed = 0;
};

// Utterance i belongs to language i % specs.size(). Each utterance draws from
// its own generator derived from (seed, i), so output is order-independent
// and reproducible.
std::vector<SyntheticUtterance> SynthCorpus(std::span<const SyntheticLanguageSpec> specs,
                                            const SynthOptions& options);

// Recipe for a family of languages sharing one phone inventory and differing
// only in phonotactics. Each language's transition matrix mixes a uniform
// no-self-loop chain with a language-specific derangement:
//   P_L = (1 - strength) * U + strength * Pi_L
// Both terms are doubly stochastic, so every language has the same uniform
// phone unigram distribution; only phone order tells them apart.
struct SyntheticDesign {
  std::size_t n_languages = 3;
  std::size_t n_phones = 8;
  std::size_t dim = 16;
  std::size_t dwell_min = 2;
  std::size_t dwell_max = 5;
  double noise_std = 0.5;
  double phonotactic_strength = 0.8;
  double mean_scale = 1.0;
};

std::vector<SyntheticLanguageSpec> MakeSyntheticLanguages(const SyntheticDesign& design,
                                                          std::uint64_t seed);

// Frame indices j with phones[j] != phones[j + 1].
std::vector<std::size_t> PhoneChangePoints(std::span<const int> phones);

}  // namespace pholid

#endif  // PHOLID_SYNTHETIC_HPP_
