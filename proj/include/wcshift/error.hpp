// Copyright 2026 The wcshift Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace wcshift {

// Broad failure categories. The CLI maps each to a distinct exit code.
enum class ErrorCategory { kConfig, kData, kNumerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define WCSHIFT_DEFINE_ERROR(Name, Category)                     \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what)                       \
        : Error(ErrorCategory::Category, what) {}                \
  };

WCSHIFT_DEFINE_ERROR(ArgumentError, kConfig)
WCSHIFT_DEFINE_ERROR(ConfigError, kConfig)
WCSHIFT_DEFINE_ERROR(SchemaError, kData)
WCSHIFT_DEFINE_ERROR(ParseError, kData)
WCSHIFT_DEFINE_ERROR(EmptyCohortError, kData)
WCSHIFT_DEFINE_ERROR(LookupError, kData)
WCSHIFT_DEFINE_ERROR(FileError, kData)
WCSHIFT_DEFINE_ERROR(InfeasibleOffsetError, kNumerical)
WCSHIFT_DEFINE_ERROR(SizeError, kNumerical)
WCSHIFT_DEFINE_ERROR(NormalizationError, kNumerical)

#undef WCSHIFT_DEFINE_ERROR

}  // namespace wcshift
