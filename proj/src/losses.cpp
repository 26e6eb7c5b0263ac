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

#include "pholid/losses.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "pholid/error.hpp"

namespace pholid {
namespace {

// Cosine similarity plus optional gradients w.r.t. both arguments.
double CosineWithGrad(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b,
                      RowVector* da, RowVector* db) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    WarnOnce("cosine-zero-norm", "cosine similarity of a zero-norm embedding treated as 0");
    if (da) da->setZero(a.size());
    if (db) db->setZero(b.size());
    return 0.0;
  }
  const double c = a.dot(b) / (na * nb);
  if (da) *da = b / (na * nb) - (c / (na * na)) * a;
  if (db) *db = a / (na * nb) - (c / (nb * nb)) * b;
  return c;
}

}  // namespace

double CosineSim(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  if (a.size() != b.size()) Fail(ErrorCategory::kShape, "cosine similarity of unequal lengths");
  return std::clamp(CosineWithGrad(a, b, nullptr, nullptr), -1.0, 1.0);
}

void ValidateNegatives(std::size_t n_frames, const NegativeSampleSet& neg) {
  const std::size_t i = neg.anchor;
  if (i + 1 >= n_frames) {
    Fail(ErrorCategory::kData, fmt::format("anchor {} has no successor in {} frames", i, n_frames));
  }
  std::unordered_set<std::size_t> seen;
  for (auto j : neg.indices) {
    if (j >= n_frames) {
      Fail(ErrorCategory::kData, fmt::format("negative index {} outside {} frames", j, n_frames));
    }
    if (j + 1 == i || j == i || j == i + 1) {
      Fail(ErrorCategory::kData,
           fmt::format("negative index {} is adjacent to anchor {}", j, i));
    }
    if (!seen.insert(j).second) {
      Fail(ErrorCategory::kData, fmt::format("duplicate negative index {}", j));
    }
  }
}

NegativeSampleSet SampleNegatives(std::size_t n_frames, std::size_t anchor, std::size_t m, Rng& rng) {
  if (n_frames < m + 3) {
    Fail(ErrorCategory::kData,
         fmt::format("{} frames cannot supply {} non-adjacent negatives", n_frames, m));
  }
  if (anchor >= n_frames) Fail(ErrorCategory::kData, "anchor outside the utterance");
  auto excluded = [anchor](std::size_t j) { return j + 1 == anchor || j == anchor || j == anchor + 1; };
  NegativeSampleSet out;
  out.anchor = anchor;
  out.indices.reserve(m);
  std::size_t n_candidates = 0;
  for (std::size_t j = (anchor > 0 ? anchor - 1 : 0); j <= anchor + 1 && j < n_frames; ++j) ++n_candidates;
  n_candidates = n_frames - n_candidates;
  if (2 * m <= n_candidates) {
    // Sequential rejection: each accepted draw is uniform over what remains.
    std::uniform_int_distribution<std::size_t> pick(0, n_frames - 1);
    while (out.indices.size() < m) {
      const std::size_t j = pick(rng);
      if (excluded(j)) continue;
      if (std::find(out.indices.begin(), out.indices.end(), j) != out.indices.end()) continue;
      out.indices.push_back(j);
    }
  } else {
    std::vector<std::size_t> pool;
    pool.reserve(n_candidates);
    for (std::size_t j = 0; j < n_frames; ++j) {
      if (!excluded(j)) pool.push_back(j);
    }
    for (std::size_t s = 0; s < m; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
      std::swap(pool[s], pool[pick(rng)]);
      out.indices.push_back(pool[s]);
    }
  }
  return out;
}

NegativeSampleSet SampleNegatives(std::size_t n_frames, std::size_t anchor, std::size_t m,
                                  std::uint64_t seed) {
  Rng rng = MakeRng(seed, 0);
  return SampleNegatives(n_frames, anchor, m, rng);
}

std::vector<NegativeSampleSet> SampleUtteranceNegatives(std::size_t n_frames, std::size_t m, Rng& rng) {
  if (n_frames < m + 3) {
    Fail(ErrorCategory::kData,
         fmt::format("utterance of {} frames too short for {} negatives", n_frames, m));
  }
  std::vector<NegativeSampleSet> out;
  out.reserve(n_frames - 1);
  for (std::size_t i = 0; i + 1 < n_frames; ++i) out.push_back(SampleNegatives(n_frames, i, m, rng));
  return out;
}

double FrameNce(const Matrix& z, const NegativeSampleSet& neg, Matrix* grad, double scale) {
  const auto n = static_cast<std::size_t>(z.rows());
  ValidateNegatives(n, neg);
  const auto i = static_cast<Eigen::Index>(neg.anchor);
  const std::size_t n_cand = neg.indices.size() + 1;
  std::vector<Eigen::Index> cand(n_cand);
  cand[0] = i + 1;
  for (std::size_t j = 0; j < neg.indices.size(); ++j) cand[j + 1] = static_cast<Eigen::Index>(neg.indices[j]);

  std::vector<double> sim(n_cand);
  std::vector<RowVector> d_anchor(grad ? n_cand : 0), d_cand(grad ? n_cand : 0);
  for (std::size_t j = 0; j < n_cand; ++j) {
    sim[j] = CosineWithGrad(z.row(i), z.row(cand[j]), grad ? &d_anchor[j] : nullptr,
                            grad ? &d_cand[j] : nullptr);
  }
  const double smax = *std::max_element(sim.begin(), sim.end());
  double denom = 0.0;
  for (double s : sim) denom += std::exp(s - smax);
  const double loss = -(sim[0] - smax) + std::log(denom);

  if (grad) {
    if (grad->rows() != z.rows() || grad->cols() != z.cols()) grad->setZero(z.rows(), z.cols());
    for (std::size_t j = 0; j < n_cand; ++j) {
      const double p = std::exp(sim[j] - smax) / denom;
      const double dl_ds = scale * (p - (j == 0 ? 1.0 : 0.0));
      grad->row(i) += dl_ds * d_anchor[j];
      grad->row(cand[j]) += dl_ds * d_cand[j];
    }
  }
  return loss;
}

double UtteranceNce(const Matrix& z, std::span<const NegativeSampleSet> negatives, Matrix* grad,
                    double scale) {
  const auto n = static_cast<std::size_t>(z.rows());
  if (n < 2 || negatives.size() != n - 1) {
    Fail(ErrorCategory::kShape,
         fmt::format("utterance NCE needs one negative set per anchor ({}), got {}",
                     n < 2 ? 0 : n - 1, negatives.size()));
  }
  const double inv = 1.0 / static_cast<double>(negatives.size());
  double total = 0.0;
  for (std::size_t a = 0; a < negatives.size(); ++a) {
    if (negatives[a].anchor != a) {
      Fail(ErrorCategory::kData, fmt::format("negative set {} is for anchor {}", a, negatives[a].anchor));
    }
    total += FrameNce(z, negatives[a], grad, scale * inv);
  }
  return total * inv;
}

double UtteranceNce(const SegmentationFrameEmbeddings& z, std::size_t m, std::uint64_t seed) {
  Rng rng = MakeRng(seed, 0);
  const auto negs = SampleUtteranceNegatives(static_cast<std::size_t>(z.values.rows()), m, rng);
  return UtteranceNce(z.values, negs);
}

double LidCrossEntropy(const Matrix& scores, std::span<const int> labels, Matrix* grad,
                       double scale) {
  if (scores.rows() == 0 || static_cast<std::size_t>(scores.rows()) != labels.size()) {
    Fail(ErrorCategory::kShape, fmt::format("cross-entropy: {} score rows for {} labels",
                                            scores.rows(), labels.size()));
  }
  const Eigen::Index c = scores.cols();
  if (grad) grad->setZero(scores.rows(), c);
  const double inv_b = 1.0 / static_cast<double>(scores.rows());
  double total = 0.0;
  for (Eigen::Index b = 0; b < scores.rows(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= c) {
      Fail(ErrorCategory::kData, fmt::format("label {} out of range for {} classes", y, c));
    }
    const double mx = scores.row(b).maxCoeff();
    const RowVector e = (scores.row(b).array() - mx).exp().matrix();
    const double denom = e.sum();
    total += -(scores(b, y) - mx) + std::log(denom);
    if (grad) {
      grad->row(b) = (scale * inv_b / denom) * e;
      (*grad)(b, y) -= scale * inv_b;
    }
  }
  return total * inv_b;
}

double MultiTaskLoss(double l_lid, double l_nce, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    Fail(ErrorCategory::kConfig, fmt::format("alpha {} outside [0, 1]", alpha));
  }
  return alpha * l_lid + (1.0 - alpha) * l_nce;
}

}  // namespace pholid
