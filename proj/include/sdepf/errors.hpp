// Copyright 2026 The sdepf Authors.
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

namespace sdepf {

/// A simulated path or a drift evaluation produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, int dimension, double time)
      : std::runtime_error(what), dimension_(dimension), time_(time) {}

  /// 0-based state dimension that first went non-finite.
  int dimension() const { return dimension_; }
  /// Time at which the failure was detected (NaN when not applicable).
  double time() const { return time_; }

 private:
  int dimension_;
  double time_;
};

/// Every particle weight collapsed to zero; the filter cannot continue.
class WeightCollapseError : public std::runtime_error {
 public:
  explicit WeightCollapseError(const std::string& what, double time = 0.0)
      : std::runtime_error(what), time_(time) {}

  double time() const { return time_; }

 private:
  double time_;
};

/// A grid update produced a non-finite log-density entry.
class GridNumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps a failure inside a filter run with the observation index it hit.
class FilterError : public std::runtime_error {
 public:
  FilterError(const std::string& what, int observation_index)
      : std::runtime_error(what), observation_index_(observation_index) {}

  int observation_index() const { return observation_index_; }

 private:
  int observation_index_;
};

}  // namespace sdepf
