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

#ifndef PHOLID_TESTS_CHECKS_HPP_
#define PHOLID_TESTS_CHECKS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pholid::testing {

struct GradResult {
  std::string name;  // "<operation>/<tensor>"
  double rel_error = 0.0;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;

  // Some gradients vanish identically (a bias feeding batch norm, the key
  // bias under softmax); for those only round-off is left to compare.
  bool vanishing() const { return analytic_norm < 1e-10 && numeric_norm < 1e-6; }
  bool ok(double tol = 1e-4) const { return vanishing() || rel_error < tol; }
};

// Analytic vs central-difference gradients for every layer, model stage and
// loss, on small random instances.
std::vector<GradResult> RunGradientChecks(std::uint64_t seed);

struct OracleResult {
  std::string name;
  std::size_t instances = 0;
  double max_abs_diff = 0.0;
};

// Library losses against the loop oracles on random tiny instances
// (T <= 2, K <= 6, G <= 4, C <= 4).
std::vector<OracleResult> RunLossOracles(std::size_t instances, std::uint64_t seed);

// Library metrics against brute force on random sets of <= 10 trials, with
// heavy score ties.
std::vector<OracleResult> RunMetricOracles(std::size_t instances, std::uint64_t seed);

}  // namespace pholid::testing

#endif  // PHOLID_TESTS_CHECKS_HPP_
