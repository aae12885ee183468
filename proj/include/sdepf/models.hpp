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
#include <stdexcept>
#include <string>

#include "sdepf/observation.hpp"
#include "sdepf/sde.hpp"

namespace sdepf {

/// Stochastic Lorenz-63 system with one unknown parameter per dimension:
///
///   dX1 = -theta1 (X1 - X2) dt            + sigma dB1
///   dX2 = (theta2 X1 - X2 - X1 X3) dt     + sigma dB2
///   dX3 = (X1 X2 - theta3 X3) dt          + sigma dB3
///
/// with uniform priors theta1 ~ U(5,20), theta2 ~ U(18,50), theta3 ~ U(1,8)
/// and initial-state priors X1(0), X2(0) ~ U(-9,-3), X3(0) ~ U(20,28).
inline SdeModel lorenz63_model(double sigma = 1.0) {
  using Ref = const Eigen::Ref<const Eigen::VectorXd>&;
  std::vector<DriftFn> drift{
      [](double th, Ref x) { return -th * (x(0) - x(1)); },
      [](double th, Ref x) { return th * x(0) - x(1) - x(0) * x(2); },
      [](double th, Ref x) { return x(0) * x(1) - th * x(2); },
  };
  Eigen::VectorXd s = Eigen::VectorXd::Constant(3, sigma);
  std::vector<Interval> theta_prior{{5.0, 20.0}, {18.0, 50.0}, {1.0, 8.0}};
  std::vector<Interval> x0_prior{{-9.0, -3.0}, {-9.0, -3.0}, {20.0, 28.0}};
  return SdeModel(3, std::move(drift), std::move(s), std::move(theta_prior), std::move(x0_prior));
}

/// Observation model of the Lorenz-63 experiment: Y = (X1, X3) + W with
/// W standard Gaussian (noise scale = identity by default).
inline ObservationModel lorenz63_observation(double noise_scale = 1.0, std::vector<double> obs_times = {}) {
  ObsFn h = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd y(2);
    y << x(0), x(2);
    return y;
  };
  return ObservationModel(std::move(h), 2, noise_scale * Eigen::MatrixXd::Identity(2, 2),
                          std::move(obs_times));
}

/// Scalar Ornstein-Uhlenbeck model dX = -theta X dt + sigma dB with a uniform
/// prior on theta and (optionally) on X(0).
inline SdeModel scalar_ou_model(Interval theta_prior, double sigma, Interval x0_prior) {
  using Ref = const Eigen::Ref<const Eigen::VectorXd>&;
  std::vector<DriftFn> drift{[](double th, Ref x) { return -th * x(0); }};
  Eigen::VectorXd s(1);
  s << sigma;
  return SdeModel(1, std::move(drift), std::move(s), {theta_prior}, {x0_prior});
}

/// Direct scalar observation Y = X + r W.
inline ObservationModel scalar_direct_observation(double r, std::vector<double> obs_times = {}) {
  ObsFn h = [](const Eigen::VectorXd& x) { return x; };
  Eigen::MatrixXd scale(1, 1);
  scale << r;
  return ObservationModel(std::move(h), 1, scale, std::move(obs_times));
}

}  // namespace sdepf
