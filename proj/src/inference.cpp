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

#include "pholid/inference.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "pholid/error.hpp"
#include "pholid/losses.hpp"

namespace pholid {

int Classify(std::span<const double> scores) {
  if (scores.empty()) Fail(ErrorCategory::kShape, "cannot classify an empty score vector");
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return static_cast<int>(best);
}

int Classify(const ScoreVector& scores) {
  return Classify(std::span<const double>(scores.values.data(),
                                          static_cast<std::size_t>(scores.values.size())));
}

SimilarityCurve ComputeSimilarityCurve(const SegmentationFrameEmbeddings& z) {
  const Eigen::Index n = z.values.rows();
  if (n < 2) Fail(ErrorCategory::kShape, "similarity curve needs at least 2 frames");
  SimilarityCurve c;
  c.values.resize(static_cast<std::size_t>(n - 1));
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    c.values[static_cast<std::size_t>(j)] = CosineSim(z.values.row(j), z.values.row(j + 1));
  }
  return c;
}

SimilarityCurve SmoothCurve(const SimilarityCurve& curve, std::size_t window) {
  if (window <= 1) return curve;
  const std::size_t n = curve.values.size();
  const std::size_t half = window / 2;
  SimilarityCurve out;
  out.values.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t lo = j >= half ? j - half : 0;
    const std::size_t hi = std::min(n - 1, j + (window - 1 - half));
    double sum = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) sum += curve.values[k];
    out.values[j] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

BoundarySet DetectBoundaries(const SimilarityCurve& curve, double threshold, std::size_t merge_window) {
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    Fail(ErrorCategory::kConfig, fmt::format("boundary threshold {} outside [-1, 1]", threshold));
  }
  BoundarySet out;
  out.threshold = threshold;
  const auto& v = curve.values;
  const std::size_t w = std::max<std::size_t>(1, merge_window);
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (!(v[j] < threshold)) continue;
    bool is_min = true;
    if (w > 1) {
      const std::size_t lo = j >= w - 1 ? j - (w - 1) : 0;
      const std::size_t hi = std::min(v.size() - 1, j + (w - 1));
      for (std::size_t k = lo; k <= hi && is_min; ++k) {
        if (v[k] < v[j] || (v[k] == v[j] && k < j)) is_min = false;
      }
    }
    if (is_min) out.boundaries.push_back(j);
  }
  return out;
}

namespace {

std::size_t MatchBoundaries(std::span<const std::size_t> predicted, std::span<const std::size_t> reference,
                            std::size_t tolerance) {
  std::vector<bool> used(reference.size(), false);
  std::size_t hits = 0;
  for (auto p : predicted) {
    std::size_t best = reference.size();
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t r = 0; r < reference.size(); ++r) {
      if (used[r]) continue;
      const std::size_t d = p > reference[r] ? p - reference[r] : reference[r] - p;
      if (d <= tolerance && d < best_dist) {
        best = r;
        best_dist = d;
      }
    }
    if (best < reference.size()) {
      used[best] = true;
      ++hits;
    }
  }
  return hits;
}

void Finish(BoundaryScore* s) {
  s->precision = s->n_predicted ? static_cast<double>(s->hits) / static_cast<double>(s->n_predicted) : 0.0;
  s->recall = s->n_reference ? static_cast<double>(s->hits) / static_cast<double>(s->n_reference) : 0.0;
  s->f1 = s->precision + s->recall > 0.0 ? 2.0 * s->precision * s->recall / (s->precision + s->recall) : 0.0;
}

}  // namespace

BoundaryScore ScoreBoundaries(std::span<const std::size_t> predicted,
                              std::span<const std::size_t> reference, std::size_t tolerance) {
  BoundaryScore s;
  s.n_predicted = predicted.size();
  s.n_reference = reference.size();
  s.hits = MatchBoundaries(predicted, reference, tolerance);
  Finish(&s);
  return s;
}

BoundaryScore ScoreBoundaries(std::span<const BoundarySet> predicted,
                              std::span<const std::vector<std::size_t>> reference, std::size_t tolerance) {
  if (predicted.size() != reference.size()) {
    Fail(ErrorCategory::kShape, "boundary scoring: prediction/reference count mismatch");
  }
  BoundaryScore s;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    s.n_predicted += predicted[i].boundaries.size();
    s.n_reference += reference[i].size();
    s.hits += MatchBoundaries(predicted[i].boundaries, reference[i], tolerance);
  }
  Finish(&s);
  return s;
}

double TuneThreshold(std::span<const SimilarityCurve> curves,
                     std::span<const std::vector<std::size_t>> reference, std::size_t tolerance,
                     std::size_t merge_window) {
  std::set<double> values;
  for (const auto& c : curves) values.insert(c.values.begin(), c.values.end());
  if (values.empty()) Fail(ErrorCategory::kData, "threshold tuning needs a non-empty curve");
  std::vector<double> candidates;
  double prev = *values.begin();
  for (double v : values) {
    if (v != prev) candidates.push_back(0.5 * (prev + v));
    prev = v;
  }
  candidates.push_back(std::min(1.0, std::nextafter(*values.rbegin(), 2.0)));
  double best_t = candidates.front();
  double best_f1 = -1.0;
  std::vector<BoundarySet> pred(curves.size());
  for (double t : candidates) {
    for (std::size_t i = 0; i < curves.size(); ++i) pred[i] = DetectBoundaries(curves[i], t, merge_window);
    const double f1 = ScoreBoundaries(pred, reference, tolerance).f1;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

Matrix ScoreUtterances(PhoLidModel& model, std::span<const SegmentedUtterance> utts,
                       std::size_t batch_size) {
  Matrix out(static_cast<Eigen::Index>(utts.size()), static_cast<Eigen::Index>(model.config().n_classes));
  for (std::size_t begin = 0; begin < utts.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, utts.size() - begin);
    const auto res = model.Forward(utts.subspan(begin, n), Heads::kLid, {nn::Mode::kEval, nullptr}, nullptr);
    out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(n)) = res.logits;
  }
  return out;
}

SegmentationFrameEmbeddings EmbedFrames(PhoLidModel& model, const SegmentedUtterance& utt) {
  auto res = model.Forward(std::span(&utt, 1), Heads::kSegmentation, {nn::Mode::kEval, nullptr}, nullptr);
  return std::move(res.embeddings.front());
}

void WriteScoreFile(const std::filesystem::path& path, const ScoreTable& table) {
  if (static_cast<std::size_t>(table.scores.rows()) != table.utterance_ids.size()) {
    Fail(ErrorCategory::kShape, "score table: id/row count mismatch");
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", path.string()));
  for (std::size_t i = 0; i < table.utterance_ids.size(); ++i) {
    os << table.utterance_ids[i];
    for (Eigen::Index c = 0; c < table.scores.cols(); ++c) {
      os << '\t' << fmt::format("{}", table.scores(static_cast<Eigen::Index>(i), c));
    }
    os << '\n';
  }
}

ScoreTable ReadScoreFile(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) Fail(ErrorCategory::kIo, fmt::format("cannot open '{}'", path.string()));
  ScoreTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::getline(ls, field, '\t');
    t.utterance_ids.push_back(field);
    std::vector<double> row;
    while (std::getline(ls, field, '\t')) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(field, &pos));
        if (pos != field.size()) throw std::invalid_argument(field);
      } catch (const std::logic_error&) {
        Fail(ErrorCategory::kFormat, fmt::format("{}: line {}: bad score '{}'", path.string(), lineno, field));
      }
    }
    if (row.empty() || (!rows.empty() && row.size() != rows.front().size())) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: line {}: inconsistent score count", path.string(), lineno));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) Fail(ErrorCategory::kData, fmt::format("{}: empty score file", path.string()));
  t.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      t.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return t;
}

void WriteBoundaryFile(const std::filesystem::path& path, std::span<const UtteranceBoundaries> rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) Fail(ErrorCategory::kIo, fmt::format("cannot write '{}'", path.string()));
  for (const auto& r : rows) {
    os << r.utterance_id << '\t' << fmt::format("{}", r.set.threshold) << '\t';
    for (std::size_t i = 0; i < r.set.boundaries.size(); ++i) {
      if (i) os << ' ';
      os << r.set.boundaries[i];
    }
    os << '\n';
  }
}

std::vector<UtteranceBoundaries> ReadBoundaryFile(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) Fail(ErrorCategory::kIo, fmt::format("cannot open '{}'", path.string()));
  std::vector<UtteranceBoundaries> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    UtteranceBoundaries row;
    std::string thr, idx;
    if (!std::getline(ls, row.utterance_id, '\t') || !std::getline(ls, thr, '\t')) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: line {}: malformed boundary line", path.string(), lineno));
    }
    std::getline(ls, idx);
    try {
      row.set.threshold = std::stod(thr);
      std::istringstream is2(idx);
      std::size_t b = 0;
      while (is2 >> b) row.set.boundaries.push_back(b);
    } catch (const std::logic_error&) {
      Fail(ErrorCategory::kFormat, fmt::format("{}: line {}: malformed boundary line", path.string(), lineno));
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace pholid
