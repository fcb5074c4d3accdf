// Copyright 2026 The pmrate Authors
//
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

namespace pmrate {

/// Bad or inconsistent configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or missing input data. Maps to CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Petri net that violates a structural requirement (e.g. final marking
/// unreachable). Treated as a data error by the CLI.
class ModelError : public DataError {
 public:
  using DataError::DataError;
};

/// Alignment search ran out of its expansion budget. Maps to exit code 4.
class BudgetExceeded : public std::runtime_error {
 public:
  BudgetExceeded(const std::string& what, double lower_bound)
      : std::runtime_error(what), lower_bound_(lower_bound) {}

  /// Best proven lower bound on the optimal alignment cost.
  double lower_bound() const noexcept { return lower_bound_; }

 private:
  double lower_bound_;
};

}  // namespace pmrate
