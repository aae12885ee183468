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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sdepf/errors.hpp"
#include "sdepf/random.hpp"

namespace sdepf {

enum class ResampleScheme { systematic, multinomial };

/// Converts log-weights to normalized probabilities: exp(lw - max) / sum.
/// Throws WeightCollapseError when no weight survives (all -inf or NaN).
inline Eigen::VectorXd normalize_log_weights(const Eigen::VectorXd& log_weights) {
  const double max_lw = log_weights.maxCoeff();
  if (!std::isfinite(max_lw))
    throw WeightCollapseError("normalize_log_weights: total weight collapse (no finite log-weight)");
  Eigen::VectorXd w(log_weights.size());
  // Scalar std::exp so that -inf maps to an exact zero (Eigen's vectorized
  // exp clamps it to a denormal instead).
  for (int i = 0; i < log_weights.size(); ++i) w(i) = std::exp(log_weights(i) - max_lw);
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw WeightCollapseError("normalize_log_weights: weights sum to zero");
  return w / total;
}

/// Effective sample size 1 / sum(w^2) of a normalized weight vector.
inline double effective_sample_size(const Eigen::VectorXd& probs) {
  return 1.0 / probs.squaredNorm();
}

/// Systematic (stratified, single-uniform) resampling. The count of ancestor
/// j is always floor(N*w_j) or ceil(N*w_j).
inline std::vector<int> systematic_resample(const Eigen::VectorXd& probs, RngStream& rng) {
  const int n = static_cast<int>(probs.size());
  std::vector<int> idx(static_cast<std::size_t>(n));
  const double u0 = rng.uniform() / n;
  double cum = probs(0);
  int j = 0;
  for (int p = 0; p < n; ++p) {
    const double u = u0 + static_cast<double>(p) / n;
    while (u > cum && j + 1 < n) cum += probs(++j);
    idx[static_cast<std::size_t>(p)] = j;
  }
  return idx;
}

/// N iid categorical draws; expected count of ancestor j is N*w_j.
inline std::vector<int> multinomial_resample(const Eigen::VectorXd& probs, RngStream& rng) {
  const int n = static_cast<int>(probs.size());
  Eigen::VectorXd cdf(n);
  double cum = 0.0;
  for (int j = 0; j < n; ++j) {
    cum += probs(j);
    cdf(j) = cum;
  }
  cdf(n - 1) = 1.0;
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) {
    const double u = rng.uniform();
    const double* begin = cdf.data();
    const double* pos = std::lower_bound(begin, begin + n, u);
    idx[static_cast<std::size_t>(p)] = static_cast<int>(pos - begin);
  }
  return idx;
}

inline std::vector<int> resample(ResampleScheme scheme, const Eigen::VectorXd& probs, RngStream& rng) {
  return scheme == ResampleScheme::systematic ? systematic_resample(probs, rng)
                                              : multinomial_resample(probs, rng);
}

}  // namespace sdepf
