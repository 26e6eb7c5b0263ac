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

#include "pholid/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <sstream>

#include "pholid/error.hpp"
#include "pholid/inference.hpp"

namespace pholid {

void TrialSet::Validate() const {
  if (labels.empty()) Fail(ErrorCategory::kData, "trial set is empty");
  if (static_cast<std::size_t>(scores.rows()) != labels.size()) {
    Fail(ErrorCategory::kShape, fmt::format("trial set: {} score rows for {} labels", scores.rows(),
                                            labels.size()));
  }
  if (scores.cols() < 1) Fail(ErrorCategory::kShape, "trial set has no languages");
  if (!scores.allFinite()) Fail(ErrorCategory::kData, "trial set has non-finite scores");
  for (int y : labels) {
    if (y < 0 || y >= scores.cols()) {
      Fail(ErrorCategory::kData, fmt::format("trial label {} outside [0, {})", y, scores.cols()));
    }
  }
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

std::vector<std::vector<double>> ConfusionMatrix::RowNormalized() const {
  std::vector<std::vector<double>> out(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::size_t total = 0;
    for (auto v : counts[i]) total += v;
    out[i].resize(counts[i].size(), 0.0);
    if (total == 0) continue;
    for (std::size_t j = 0; j < counts[i].size(); ++j) {
      out[i][j] = static_cast<double>(counts[i][j]) / static_cast<double>(total);
    }
  }
  return out;
}

namespace {

std::vector<int> Decisions(const TrialSet& t) {
  std::vector<int> pred(t.n_trials());
  for (std::size_t i = 0; i < t.n_trials(); ++i) {
    const auto row = t.scores.row(static_cast<Eigen::Index>(i));
    pred[i] = Classify(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return pred;
}

}  // namespace

double Accuracy(const TrialSet& t) {
  t.Validate();
  const auto pred = Decisions(t);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == t.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

double Eer(std::span<const double> target, std::span<const double> nontarget) {
  if (target.empty() || nontarget.empty()) {
    Fail(ErrorCategory::kData, "EER needs both target and non-target trials");
  }
  std::vector<double> tar(target.begin(), target.end());
  std::vector<double> non(nontarget.begin(), nontarget.end());
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  thresholds.reserve(tar.size() + non.size());
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());
  std::size_t ti = 0;  // targets below the current threshold
  std::size_t ni = 0;  // non-targets below the current threshold
  double prev_miss = 0.0;
  double prev_fa = 1.0;
  for (std::size_t k = 0; k <= thresholds.size(); ++k) {
    double miss = 1.0;
    double fa = 0.0;
    if (k < thresholds.size()) {
      const double th = thresholds[k];
      while (ti < tar.size() && tar[ti] < th) ++ti;
      while (ni < non.size() && non[ni] < th) ++ni;
      miss = static_cast<double>(ti) / nt;
      fa = static_cast<double>(non.size() - ni) / nn;
    }
    if (miss >= fa) {
      if (k == 0) return miss;
      const double d0 = prev_fa - prev_miss;
      const double d1 = miss - fa;
      const double s = d0 / (d0 + d1);
      return prev_miss + s * (miss - prev_miss);
    }
    prev_miss = miss;
    prev_fa = fa;
  }
  return 1.0;  // unreachable: the +inf threshold always has miss = 1, fa = 0
}

double PooledEer(const TrialSet& t) {
  t.Validate();
  if (t.n_classes() < 2) Fail(ErrorCategory::kData, "pooled EER needs at least 2 languages");
  std::vector<double> tar, non;
  for (std::size_t i = 0; i < t.n_trials(); ++i) {
    for (std::size_t c = 0; c < t.n_classes(); ++c) {
      const double s = t.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      (static_cast<int>(c) == t.labels[i] ? tar : non).push_back(s);
    }
  }
  return Eer(tar, non);
}

CavgResult ComputeCavg(const TrialSet& t, double p_target,
                       const std::optional<std::vector<double>>& thresholds) {
  t.Validate();
  if (!(p_target >= 0.0 && p_target <= 1.0)) Fail(ErrorCategory::kConfig, "p_target outside [0, 1]");
  const std::size_t c = t.n_classes();
  if (c < 2) Fail(ErrorCategory::kData, "C_avg needs at least 2 languages");
  if (thresholds && thresholds->size() != c) {
    Fail(ErrorCategory::kShape, "C_avg: need one threshold per language");
  }
  std::vector<std::size_t> n_per(c, 0);
  for (int y : t.labels) ++n_per[static_cast<std::size_t>(y)];
  std::vector<std::size_t> absent;
  for (std::size_t l = 0; l < c; ++l) {
    if (n_per[l] == 0) absent.push_back(l);
  }
  if (!absent.empty()) {
    Fail(ErrorCategory::kData, fmt::format("C_avg: languages without trials: {}", fmt::join(absent, ", ")));
  }

  const auto pred = Decisions(t);
  auto accepted = [&](std::size_t utt, std::size_t lang) {
    if (thresholds) {
      return t.scores(static_cast<Eigen::Index>(utt), static_cast<Eigen::Index>(lang)) >= (*thresholds)[lang];
    }
    return pred[utt] == static_cast<int>(lang);
  };

  CavgResult r;
  r.p_miss.assign(c, 0.0);
  r.p_fa = Matrix::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c));
  for (std::size_t u = 0; u < t.n_trials(); ++u) {
    const auto y = static_cast<std::size_t>(t.labels[u]);
    for (std::size_t l = 0; l < c; ++l) {
      const bool acc = accepted(u, l);
      if (l == y && !acc) r.p_miss[l] += 1.0;
      if (l != y && acc) r.p_fa(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(y)) += 1.0;
    }
  }
  r.mean_p_fa.assign(c, 0.0);
  double total = 0.0;
  for (std::size_t l = 0; l < c; ++l) {
    r.p_miss[l] /= static_cast<double>(n_per[l]);
    double fa_sum = 0.0;
    for (std::size_t m = 0; m < c; ++m) {
      if (m == l) continue;
      auto& v = r.p_fa(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m));
      v /= static_cast<double>(n_per[m]);
      fa_sum += v;
    }
    r.mean_p_fa[l] = fa_sum / static_cast<double>(c - 1);
    total += p_target * r.p_miss[l] + (1.0 - p_target) * r.mean_p_fa[l];
  }
  r.c_avg = total / static_cast<double>(c);
  return r;
}

double CAvg(const TrialSet& t, double p_target) { return ComputeCavg(t, p_target).c_avg; }

ConfusionMatrix Confusion(const TrialSet& t) {
  t.Validate();
  const std::size_t c = t.n_classes();
  ConfusionMatrix m;
  m.counts.assign(c, std::vector<std::size_t>(c, 0));
  const auto pred = Decisions(t);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++m.counts[static_cast<std::size_t>(t.labels[i])][static_cast<std::size_t>(pred[i])];
  }
  return m;
}

MetricsReport BuildReport(const TrialSet& t, const LabelMap& labels, double p_target) {
  t.Validate();
  if (labels.size() != t.n_classes()) {
    Fail(ErrorCategory::kData, fmt::format("report: {} labels for {} score columns", labels.size(),
                                           t.n_classes()));
  }
  const auto cavg = ComputeCavg(t, p_target);
  MetricsReport r;
  r.n_trials = t.n_trials();
  r.n_languages = t.n_classes();
  r.accuracy = Accuracy(t);
  r.eer_percent = 100.0 * PooledEer(t);
  r.c_avg = cavg.c_avg;
  r.p_target = p_target;
  std::vector<std::size_t> n_per(t.n_classes(), 0);
  for (int y : t.labels) ++n_per[static_cast<std::size_t>(y)];
  for (std::size_t l = 0; l < t.n_classes(); ++l) {
    r.rows.push_back({labels.Name(static_cast<int>(l)), n_per[l], cavg.p_miss[l], cavg.mean_p_fa[l]});
  }
  return r;
}

std::string FormatReport(const MetricsReport& r) {
  std::string s = "# pholid metrics report v1\n";
  s += fmt::format("n_trials\t{}\n", r.n_trials);
  s += fmt::format("n_languages\t{}\n", r.n_languages);
  s += fmt::format("accuracy\t{}\n", r.accuracy);
  s += fmt::format("eer_percent\t{}\n", r.eer_percent);
  s += fmt::format("c_avg\t{}\n", r.c_avg);
  s += fmt::format("p_target\t{}\n", r.p_target);
  s += fmt::format("decision\t{}\n", r.decision);
  s += "# class\tlabel\tn_trials\tp_miss\tp_fa\n";
  for (const auto& row : r.rows) {
    s += fmt::format("class\t{}\t{}\t{}\t{}\n", row.label, row.n_trials, row.p_miss, row.p_fa);
  }
  return s;
}

MetricsReport ParseReport(const std::string& text) {
  MetricsReport r;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> f;
      std::istringstream ls(line);
      std::string item;
      while (std::getline(ls, item, '\t')) f.push_back(item);
      if (f.size() < 2) throw std::invalid_argument(line);
      const auto& key = f[0];
      if (key == "class") {
        if (f.size() != 5) throw std::invalid_argument(line);
        r.rows.push_back({f[1], std::stoull(f[2]), std::stod(f[3]), std::stod(f[4])});
      } else if (key == "n_trials") {
        r.n_trials = std::stoull(f[1]);
      } else if (key == "n_languages") {
        r.n_languages = std::stoull(f[1]);
      } else if (key == "accuracy") {
        r.accuracy = std::stod(f[1]);
      } else if (key == "eer_percent") {
        r.eer_percent = std::stod(f[1]);
      } else if (key == "c_avg") {
        r.c_avg = std::stod(f[1]);
      } else if (key == "p_target") {
        r.p_target = std::stod(f[1]);
      } else if (key == "decision") {
        r.decision = f[1];
      } else {
        throw std::invalid_argument(line);
      }
    }
  } catch (const std::logic_error&) {
    Fail(ErrorCategory::kFormat, fmt::format("metrics report line {}: malformed", lineno));
  }
  return r;
}

}  // namespace pholid
