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

#ifndef PHOLID_ERROR_HPP_
#define PHOLID_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace pholid {

// Coarse error classes. The CLI prints the category as the machine-parseable
// part of its one-line error report.
enum class ErrorCategory {
  kUsage,
  kIo,
  kFormat,
  kData,
  kConfig,
  kShape,
  kNumeric,
  kState,
};

std::string_view CategoryName(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] void Fail(ErrorCategory category, const std::string& message);

// Prints a warning to stderr. Repeated messages with the same key are
// printed only once per process.
void WarnOnce(std::string_view key, std::string_view message);

}  // namespace pholid

#endif  // PHOLID_ERROR_HPP_
