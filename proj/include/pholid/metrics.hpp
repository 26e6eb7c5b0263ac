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

#ifndef PHOLID_METRICS_HPP_
#define PHOLID_METRICS_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pholid/feature_io.hpp"
#include "pholid/tensor.hpp"

namespace pholid {

struct TrialSet {
  Matrix scores;            // N x C
  std::vector<int> labels;  // N

  std::size_t n_trials() const { return labels.size(); }
  std::size_t n_classes() const { return static_cast<std::size_t>(scores.cols()); }
  void Validate() const;
};

struct ConfusionMatrix {
  // counts[true][predicted]
  std::vector<std::vector<std::size_t>> counts;

  std::size_t size() const { return counts.size(); }
  std::size_t trace() const;
  std::vector<std::vector<double>> RowNormalized() const;
};

double Accuracy(const TrialSet& t);

// EER of a single detector from target / non-target scores. Operating points
// are taken at every observed score (accept when score >= threshold); the
// result is interpolated linearly on the segment where the miss rate first
// meets the false-alarm rate.
double Eer(std::span<const double> target, std::span<const double> nontarget);

// Every trial contributes one target score (its true language) and C-1
// non-target scores, all pooled into one detector.
double PooledEer(const TrialSet& t);

struct CavgResult {
  double c_avg = 0.0;
  std::vector<double> p_miss;     // per target language
  Matrix p_fa;                    // p_fa(L, L'): L' trials accepted as L; diagonal 0
  std::vector<double> mean_p_fa;  // per L, averaged over L' != L
};

// Closed-set average detection cost with C_miss = C_fa = 1. Decisions are
// argmax by default; with per-language thresholds, trial u is accepted as L
// when scores(u, L) >= thresholds[L].
CavgResult ComputeCavg(const TrialSet& t, double p_target = 0.5,
                       const std::optional<std::vector<double>>& thresholds = std::nullopt);
double CAvg(const TrialSet& t, double p_target = 0.5);

ConfusionMatrix Confusion(const TrialSet& t);

struct ReportRow {
  std::string label;
  std::size_t n_trials = 0;
  double p_miss = 0.0;
  double p_fa = 0.0;

  bool operator==(const ReportRow&) const = default;
};

struct MetricsReport {
  std::size_t n_trials = 0;
  std::size_t n_languages = 0;
  double accuracy = 0.0;
  double eer_percent = 0.0;
  double c_avg = 0.0;
  double p_target = 0.5;
  std::string decision = "argmax";
  std::vector<ReportRow> rows;

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport BuildReport(const TrialSet& t, const LabelMap& labels, double p_target = 0.5);

// Tab-separated "key<TAB>value" lines followed by one "class" line per
// language. Values are printed round-trip exact.
std::string FormatReport(const MetricsReport& report);
MetricsReport ParseReport(const std::string& text);

}  // namespace pholid

#endif  // PHOLID_METRICS_HPP_
