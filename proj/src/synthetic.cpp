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

#include "pholid/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pholid/error.hpp"

namespace pholid {

void SyntheticLanguageSpec::Validate() const {
  if (n_phones < 1 || static_cast<std::size_t>(phone_means.rows()) != n_phones ||
      phone_means.cols() < 1) {
    Fail(ErrorCategory::kConfig, "phone_means must be n_phones x F with F >= 1");
  }
  if (transition.rows() != phone_means.rows() || transition.cols() != phone_means.rows()) {
    Fail(ErrorCategory::kConfig, "transition must be n_phones x n_phones");
  }
  for (Eigen::Index r = 0; r < transition.rows(); ++r) {
    if ((transition.row(r).array() < 0.0).any()) {
      Fail(ErrorCategory::kConfig, fmt::format("transition row {} has negative entries", r));
    }
    const double sum = transition.row(r).sum();
    if (std::abs(sum - 1.0) > 1e-9) {
      Fail(ErrorCategory::kConfig,
           fmt::format("transition row {} sums to {:.12g}, not 1", r, sum));
    }
  }
  if (dwell_min < 2 || dwell_max < dwell_min) {
    Fail(ErrorCategory::kConfig, "dwell range must satisfy 2 <= min <= max");
  }
  if (!(noise_std >= 0.0)) Fail(ErrorCategory::kConfig, "noise_std must be >= 0");
}

std::vector<SyntheticUtterance> SynthCorpus(std::span<const SyntheticLanguageSpec> specs,
                                            const SynthOptions& options) {
  if (specs.size() < 2) Fail(ErrorCategory::kConfig, "need at least 2 language specs");
  for (const auto& s : specs) s.Validate();
  const std::size_t dim = specs[0].dim();
  for (const auto& s : specs) {
    if (s.dim() != dim) Fail(ErrorCategory::kConfig, "language specs disagree on F");
  }
  if (options.n_frames < options.segment_frames || options.n_frames < 2) {
    Fail(ErrorCategory::kConfig,
         fmt::format("n_frames {} shorter than segment length {}", options.n_frames,
                     options.segment_frames));
  }

  std::vector<SyntheticUtterance> out(options.n_utts);
  for (std::size_t u = 0; u < options.n_utts; ++u) {
    const std::size_t lang = u % specs.size();
    const auto& spec = specs[lang];
    Rng rng = MakeRng(options.seed, u);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> dwell(spec.dwell_min, spec.dwell_max);
    std::uniform_int_distribution<int> initial(0, static_cast<int>(spec.n_phones) - 1);

    SyntheticUtterance& utt = out[u];
    utt.label = static_cast<int>(lang);
    utt.features.utterance_id = fmt::format("synth_{:05d}", u);
    utt.features.frames.resize(static_cast<Eigen::Index>(options.n_frames),
                               static_cast<Eigen::Index>(dim));
    utt.phones.resize(options.n_frames);

    int phone = initial(rng);
    std::size_t t = 0;
    while (t < options.n_frames) {
      const std::size_t len = std::min(dwell(rng), options.n_frames - t);
      for (std::size_t k = 0; k < len; ++k, ++t) {
        auto row = utt.features.frames.row(static_cast<Eigen::Index>(t));
        row = spec.phone_means.row(phone);
        if (spec.noise_std > 0.0) {
          for (Eigen::Index c = 0; c < row.size(); ++c) row(c) += spec.noise_std * noise(rng);
        }
        utt.phones[t] = phone;
      }
      const auto probs = spec.transition.row(phone);
      std::discrete_distribution<int> next(probs.data(), probs.data() + probs.size());
      phone = next(rng);
    }
  }
  return out;
}

std::vector<SyntheticLanguageSpec> MakeSyntheticLanguages(const SyntheticDesign& design,
                                                          std::uint64_t seed) {
  if (design.n_languages < 2) Fail(ErrorCategory::kConfig, "need at least 2 languages");
  if (design.n_phones < 2) Fail(ErrorCategory::kConfig, "need at least 2 phones");
  if (design.phonotactic_strength < 0.0 || design.phonotactic_strength > 1.0) {
    Fail(ErrorCategory::kConfig, "phonotactic_strength must lie in [0, 1]");
  }
  Rng rng = MakeRng(seed, 0x5eed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto p = static_cast<Eigen::Index>(design.n_phones);

  Matrix means(p, static_cast<Eigen::Index>(design.dim));
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = design.mean_scale * gauss(rng);

  Matrix uniform = Matrix::Constant(p, p, 1.0 / static_cast<double>(p - 1));
  uniform.diagonal().setZero();

  std::vector<SyntheticLanguageSpec> specs;
  for (std::size_t l = 0; l < design.n_languages; ++l) {
    // Rejection-sample a derangement so the preferred successor is never the
    // phone itself.
    std::vector<int> perm(design.n_phones);
    bool has_fixed_point = true;
    while (has_fixed_point) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      has_fixed_point = false;
      for (std::size_t i = 0; i < perm.size(); ++i) has_fixed_point |= perm[i] == static_cast<int>(i);
    }
    Matrix pi = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) pi(i, perm[static_cast<std::size_t>(i)]) = 1.0;

    SyntheticLanguageSpec spec;
    spec.n_phones = design.n_phones;
    spec.phone_means = means;
    spec.transition = (1.0 - design.phonotactic_strength) * uniform + design.phonotactic_strength * pi;
    // Renormalise against rounding so rows sum to 1 within 1e-12.
    for (Eigen::Index r = 0; r < p; ++r) spec.transition.row(r) /= spec.transition.row(r).sum();
    spec.dwell_min = design.dwell_min;
    spec.dwell_max = design.dwell_max;
    spec.noise_std = design.noise_std;
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::vector<std::size_t> PhoneChangePoints(std::span<const int> phones) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j + 1 < phones.size(); ++j) {
    if (phones[j] != phones[j + 1]) out.push_back(j);
  }
  return out;
}

}  // namespace pholid
