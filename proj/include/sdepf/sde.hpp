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
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdepf/errors.hpp"
#include "sdepf/random.hpp"

namespace sdepf {

/// Closed parameter (or state prior) interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Per-dimension drift f_i(theta_i, x).
using DriftFn = std::function<double(double, const Eigen::Ref<const Eigen::VectorXd>&)>;

/// Diagonal-noise SDE family:
///
///   dX_i(t) = f_i(theta_i, X(t)) dt + sigma_i dB_i(t),   i = 0..n-1,
///
/// with one scalar parameter theta_i per dimension, a uniform prior on each
/// theta_i over `param_support[i]`, and (optionally) independent uniform
/// priors on the initial state over `state_prior`.
struct SdeModel {
  int n = 0;
  std::vector<DriftFn> drift;
  Eigen::VectorXd sigma;
  std::vector<Interval> param_support;
  std::vector<Interval> state_prior;  // may be empty when callers supply x0

  SdeModel() = default;
  SdeModel(int dim, std::vector<DriftFn> f, Eigen::VectorXd s, std::vector<Interval> support,
           std::vector<Interval> x0_prior = {})
      : n(dim),
        drift(std::move(f)),
        sigma(std::move(s)),
        param_support(std::move(support)),
        state_prior(std::move(x0_prior)) {
    validate();
  }

  void validate() const {
    if (n < 1) throw std::invalid_argument("SdeModel: state dimension must be >= 1");
    if (static_cast<int>(drift.size()) != n)
      throw std::invalid_argument("SdeModel: expected one drift function per dimension");
    if (sigma.size() != n) throw std::invalid_argument("SdeModel: sigma must have length n");
    for (int i = 0; i < n; ++i) {
      if (!(sigma(i) >= 0.0))
        throw std::invalid_argument("SdeModel: sigma[" + std::to_string(i) + "] must be >= 0");
    }
    if (static_cast<int>(param_support.size()) != n)
      throw std::invalid_argument("SdeModel: expected one parameter support per dimension");
    for (const Interval& iv : param_support) {
      if (!(iv.lo < iv.hi))
        throw std::invalid_argument("SdeModel: parameter support intervals must satisfy lo < hi");
    }
    if (!state_prior.empty() && static_cast<int>(state_prior.size()) != n)
      throw std::invalid_argument("SdeModel: state prior must be empty or have length n");
    for (const Interval& iv : state_prior) {
      if (!(iv.lo < iv.hi))
        throw std::invalid_argument("SdeModel: state prior intervals must satisfy lo < hi");
    }
  }
};

/// One simulated inner path over [t0, t1]: column k of `states` is the state
/// at time t0 + k*dt (the final step may be shorter so that t1 is hit
/// exactly). Increments dX are differences of consecutive columns.
struct PathSegment {
  double t0 = 0.0;
  double t1 = 0.0;
  double dt = 0.0;                // nominal inner step
  Eigen::MatrixXd states;         // n x (steps + 1)

  int step_count() const { return static_cast<int>(states.cols()) - 1; }

  /// Length of inner step k (equals dt except possibly for the last step).
  double step_length(int k) const {
    const int steps = step_count();
    if (k < steps - 1) return dt;
    return t1 - (t0 + (steps - 1) * dt);
  }

  Eigen::VectorXd initial_state() const { return states.col(0); }
  Eigen::VectorXd final_state() const { return states.col(states.cols() - 1); }
};

/// Evaluates f_i(theta_i, x). Throws on a bad index or a non-finite result.
inline double drift_eval(const SdeModel& model, int i, double theta_i,
                         const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (i < 0 || i >= model.n) throw std::out_of_range("drift_eval: dimension index out of range");
  const double f = model.drift[static_cast<std::size_t>(i)](theta_i, x);
  if (!std::isfinite(f)) {
    throw DivergenceError("drift_eval: non-finite drift in dimension " + std::to_string(i), i,
                          std::numeric_limits<double>::quiet_NaN());
  }
  return f;
}

/// One Euler-Maruyama step: x'_i = x_i + f_i(theta_i, x) dt + sigma_i sqrt(dt) g_i,
/// with `gauss` a caller-supplied vector of standard-normal draws.
inline Eigen::VectorXd em_step(const SdeModel& model, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& theta, double dt,
                               const Eigen::VectorXd& gauss) {
  if (!(dt > 0.0)) throw std::invalid_argument("em_step: dt must be positive");
  const double sqrt_dt = std::sqrt(dt);
  Eigen::VectorXd out(model.n);
  for (int i = 0; i < model.n; ++i) {
    const double f = model.drift[static_cast<std::size_t>(i)](theta(i), x);
    out(i) = x(i) + f * dt + model.sigma(i) * sqrt_dt * gauss(i);
    if (!std::isfinite(out(i))) {
      throw DivergenceError(
          "em_step: non-finite state in dimension " + std::to_string(i) + " (dt=" + std::to_string(dt) + ")",
          i, std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

namespace detail {

// Number of inner steps covering (t1 - t0) with nominal step dt: all full
// steps of length dt plus one shorter final step when needed. A small guard
// keeps 0.05/0.001-style ratios from producing a spurious extra step.
inline int inner_step_count(double t0, double t1, double dt) {
  const double ratio = (t1 - t0) / dt;
  int steps = static_cast<int>(std::ceil(ratio - 1e-9));
  return steps < 1 ? 1 : steps;
}

}  // namespace detail

/// Simulates the model over [t0, t1] with fixed theta, drawing one fresh
/// standard normal per (step, dimension), and returns the full inner path.
inline PathSegment simulate_interval(const SdeModel& model, const Eigen::VectorXd& x0,
                                     const Eigen::VectorXd& theta, double t0, double t1, double dt,
                                     RngStream& rng) {
  if (!(t1 > t0)) throw std::invalid_argument("simulate_interval: t1 must exceed t0");
  if (!(dt > 0.0)) throw std::invalid_argument("simulate_interval: dt must be positive");
  const int steps = detail::inner_step_count(t0, t1, dt);

  PathSegment seg;
  seg.t0 = t0;
  seg.t1 = t1;
  seg.dt = dt;
  seg.states.resize(model.n, steps + 1);
  seg.states.col(0) = x0;

  for (int k = 0; k < steps; ++k) {
    const double h = (k < steps - 1) ? dt : t1 - (t0 + k * dt);
    const double sqrt_h = std::sqrt(h);
    const auto x = seg.states.col(k);
    for (int i = 0; i < model.n; ++i) {
      const double f = model.drift[static_cast<std::size_t>(i)](theta(i), x);
      const double next = x(i) + f * h + model.sigma(i) * sqrt_h * rng.normal();
      if (!std::isfinite(next)) {
        throw DivergenceError("simulate_interval: path diverged in dimension " + std::to_string(i) +
                                  " at t=" + std::to_string(t0 + k * dt + h),
                              i, t0 + k * dt + h);
      }
      seg.states(i, k + 1) = next;
    }
  }
  return seg;
}

/// Same dynamics and draw order as simulate_interval, but returns only the
/// state at t1. Used by the filters that never revisit the inner path.
inline Eigen::VectorXd em_endpoint(const SdeModel& model, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& theta, double t0, double t1, double dt,
                                   RngStream& rng) {
  if (!(t1 > t0)) throw std::invalid_argument("em_endpoint: t1 must exceed t0");
  if (!(dt > 0.0)) throw std::invalid_argument("em_endpoint: dt must be positive");
  const int steps = detail::inner_step_count(t0, t1, dt);
  Eigen::VectorXd x = x0;
  Eigen::VectorXd next(model.n);
  for (int k = 0; k < steps; ++k) {
    const double h = (k < steps - 1) ? dt : t1 - (t0 + k * dt);
    const double sqrt_h = std::sqrt(h);
    for (int i = 0; i < model.n; ++i) {
      const double f = model.drift[static_cast<std::size_t>(i)](theta(i), x);
      next(i) = x(i) + f * h + model.sigma(i) * sqrt_h * rng.normal();
      if (!std::isfinite(next(i))) {
        throw DivergenceError("em_endpoint: path diverged in dimension " + std::to_string(i) +
                                  " at t=" + std::to_string(t0 + k * dt + h),
                              i, t0 + k * dt + h);
      }
    }
    x.swap(next);
  }
  return x;
}

}  // namespace sdepf
