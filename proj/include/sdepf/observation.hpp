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

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sdepf/random.hpp"

namespace sdepf {

/// Measurement map h: R^n -> R^m.
using ObsFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// One measurement Y(t).
struct ObservationRecord {
  double t = 0.0;
  Eigen::VectorXd y;
};

/// Discrete-time measurement model
///
///   Y(t_k) = h(X(t_k)) + noise_scale * W(t_k),   W(t_k) ~ N(0, I_m),
///
/// so the effective noise covariance is noise_scale * noise_scale^T. The
/// covariance, its Cholesky factor and the Gaussian normalization constant
/// are derived once at construction. A singular covariance is rejected here
/// (not at call time) unless `allow_singular_noise` is set, in which case the
/// model can generate observations but cannot evaluate likelihoods.
class ObservationModel {
 public:
  ObservationModel(ObsFn h, int m, Eigen::MatrixXd noise_scale, std::vector<double> obs_times = {},
                   bool allow_singular_noise = false)
      : h_(std::move(h)), m_(m), noise_scale_(std::move(noise_scale)), obs_times_(std::move(obs_times)) {
    if (m_ < 1) throw std::invalid_argument("ObservationModel: m must be >= 1");
    if (noise_scale_.rows() != m_ || noise_scale_.cols() != m_)
      throw std::invalid_argument("ObservationModel: noise_scale must be m x m");
    for (std::size_t k = 0; k < obs_times_.size(); ++k) {
      if (!(obs_times_[k] > 0.0) || (k > 0 && !(obs_times_[k] > obs_times_[k - 1])))
        throw std::invalid_argument("ObservationModel: obs_times must be strictly increasing and > 0");
    }
    covariance_ = noise_scale_ * noise_scale_.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(covariance_);
    const Eigen::MatrixXd lower = llt.matrixL();
    // Rounding can turn an exact rank deficiency into a tiny positive pivot,
    // so singularity is judged relative to the largest pivot.
    const bool spd = llt.info() == Eigen::Success &&
                     lower.diagonal().minCoeff() > 1e-7 * lower.diagonal().maxCoeff();
    if (spd) {
      chol_lower_ = lower;
      double log_det = 0.0;
      for (int i = 0; i < m_; ++i) log_det += 2.0 * std::log(chol_lower_(i, i));
      log_norm_const_ = -0.5 * m_ * std::log(2.0 * M_PI) - 0.5 * log_det;
      spd_ = true;
    } else if (!allow_singular_noise) {
      throw std::invalid_argument(
          "ObservationModel: noise covariance is singular; pass allow_singular_noise to build a "
          "generative-only model");
    }
  }

  int m() const { return m_; }
  const Eigen::MatrixXd& noise_scale() const { return noise_scale_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const std::vector<double>& obs_times() const { return obs_times_; }
  bool has_likelihood() const { return spd_; }

  Eigen::VectorXd h(const Eigen::VectorXd& x) const { return h_(x); }

 private:
  ObsFn h_;
  int m_;
  Eigen::MatrixXd noise_scale_;
  std::vector<double> obs_times_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd chol_lower_;
  double log_norm_const_ = 0.0;
  bool spd_ = false;

  friend double log_likelihood(const ObservationModel&, const Eigen::VectorXd&, const Eigen::VectorXd&);
};

/// Draws Y = h(x) + noise_scale * w with w a fresh standard-normal vector.
inline Eigen::VectorXd observe(const ObservationModel& model, const Eigen::VectorXd& x, RngStream& rng) {
  Eigen::VectorXd w(model.m());
  for (int i = 0; i < model.m(); ++i) w(i) = rng.normal();
  return model.h(x) + model.noise_scale() * w;
}

/// log N(y; h(x), noise_scale * noise_scale^T). A non-finite residual is
/// treated as an impossible observation and yields -infinity.
inline double log_likelihood(const ObservationModel& model, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& x) {
  if (!model.has_likelihood())
    throw std::logic_error("log_likelihood: model was built with a singular noise covariance");
  Eigen::VectorXd r = y - model.h(x);
  if (!r.allFinite()) return -std::numeric_limits<double>::infinity();
  model.chol_lower_.triangularView<Eigen::Lower>().solveInPlace(r);
  return model.log_norm_const_ - 0.5 * r.squaredNorm();
}

}  // namespace sdepf
