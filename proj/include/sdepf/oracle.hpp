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

// Independent exact references the particle filters are tested against: a
// linear Kalman filter with exact interval discretization, a brute-force
// joint (theta, x) grid filter for one-dimensional models, and the
// closed-form parameter posterior for drifts linear in theta. They live in
// the library (not in test code) so the CLI can expose them for verification
// runs.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "sdepf/observation.hpp"
#include "sdepf/param_grid.hpp"
#include "sdepf/sde.hpp"

namespace sdepf {

/// Linear-Gaussian SDE dX = A X dt + diag(sigma) dB observed as
/// y = H x + v, v ~ N(0, R), with Gaussian prior N(prior_mean, prior_cov).
struct LinearGaussianModel {
  Eigen::MatrixXd A;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd H;
  Eigen::MatrixXd R;
  Eigen::VectorXd prior_mean;
  Eigen::MatrixXd prior_cov;
};

struct KalmanEstimate {
  double t = 0.0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Exact discretization of the linear SDE over a step of length delta:
/// transition matrix F = exp(A delta) and process covariance
/// Q = integral_0^delta exp(A s) diag(sigma^2) exp(A^T s) ds, computed with
/// the Van Loan block-exponential.
inline void discretize_linear_sde(const Eigen::MatrixXd& A, const Eigen::VectorXd& sigma, double delta,
                                  Eigen::MatrixXd& F, Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(A.rows());
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  block.topLeftCorner(n, n) = A;
  block.topRightCorner(n, n) = sigma.cwiseProduct(sigma).asDiagonal();
  block.bottomRightCorner(n, n) = -A.transpose();
  const Eigen::MatrixXd e = (block * delta).exp();
  F = e.topLeftCorner(n, n);
  Q = e.topRightCorner(n, n) * F.transpose();
  Q = 0.5 * (Q + Q.transpose());
}

/// Exact conditional means/covariances at every observation time.
inline std::vector<KalmanEstimate> kalman_filter(const LinearGaussianModel& model,
                                                 const std::vector<ObservationRecord>& observations) {
  Eigen::VectorXd mean = model.prior_mean;
  Eigen::MatrixXd cov = model.prior_cov;
  double t = 0.0;
  std::vector<KalmanEstimate> out;
  out.reserve(observations.size());
  const int n = static_cast<int>(model.A.rows());
  for (const auto& obs : observations) {
    if (!(obs.t > t)) throw std::invalid_argument("kalman_filter: observations must be strictly increasing");
    Eigen::MatrixXd F(n, n), Q(n, n);
    discretize_linear_sde(model.A, model.sigma, obs.t - t, F, Q);
    mean = F * mean;
    cov = F * cov * F.transpose() + Q;

    const Eigen::MatrixXd S = model.H * cov * model.H.transpose() + model.R;
    const Eigen::MatrixXd K = S.ldlt().solve(model.H * cov).transpose();
    mean += K * (obs.y - model.H * mean);
    cov = cov - K * model.H * cov;
    cov = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.eigenvalues().minCoeff() < -1e-9 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw std::runtime_error("kalman_filter: posterior covariance lost positive semidefiniteness");
    t = obs.t;
    out.push_back({t, mean, cov});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force joint grid filter (1-D state, one parameter)
// ---------------------------------------------------------------------------

/// Joint posterior table over (theta, x): entry (a, b) is the probability of
/// the cell around (theta_a, x_b); the whole table sums to 1.
struct JointGridPosterior {
  double t = 0.0;
  Eigen::VectorXd theta_nodes;
  Eigen::VectorXd x_nodes;
  Eigen::MatrixXd mass;  // G_theta x G_x

  Eigen::VectorXd theta_marginal() const { return mass.rowwise().sum(); }
  Eigen::VectorXd x_marginal() const { return mass.colwise().sum(); }
};

/// Discretized prediction/correction recursion for a one-dimensional model
/// with one unknown parameter. The transition kernel is the one-step
/// Euler-Maruyama Gaussian applied `ceil((t_k - t_{k-1})/dt)` times per
/// observation interval, binned on the x grid (tail mass folded into the edge
/// cells). Theta is static, so each theta row evolves independently.
inline std::vector<JointGridPosterior> grid_joint_filter(const SdeModel& model,
                                                         const ObservationModel& obs_model,
                                                         const ParameterGrid& theta_prior,
                                                         const Eigen::VectorXd& x_nodes,
                                                         const Eigen::VectorXd& x_prior_mass,
                                                         const std::vector<ObservationRecord>& observations,
                                                         double dt) {
  if (model.n != 1) throw std::invalid_argument("grid_joint_filter: model must be one-dimensional");
  if (!(dt > 0.0)) throw std::invalid_argument("grid_joint_filter: dt must be positive");
  const int gt = theta_prior.size();
  const int gx = static_cast<int>(x_nodes.size());
  if (x_prior_mass.size() != gx)
    throw std::invalid_argument("grid_joint_filter: x prior mass must match x nodes");
  const double dx = gx > 1 ? x_nodes(1) - x_nodes(0) : 1.0;
  const double sigma = model.sigma(0);
  const double step_sd = sigma * std::sqrt(dt);

  // Joint prior: product of the theta cell masses and the x masses.
  Eigen::MatrixXd mass(gt, gx);
  const Eigen::VectorXd theta_mass = theta_prior.probabilities();
  for (int a = 0; a < gt; ++a) mass.row(a) = theta_mass(a) * x_prior_mass.transpose();
  mass /= mass.sum();

  // Per-theta transition matrix for one inner step: T(b, b') = P(x' in cell
  // b' | x = node b, theta_a). Time-homogeneous, so built once per theta.
  std::vector<Eigen::MatrixXd> kernels;
  kernels.reserve(static_cast<std::size_t>(gt));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int a = 0; a < gt; ++a) {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(gx, gx);
    for (int b = 0; b < gx; ++b) {
      Eigen::VectorXd x(1);
      x(0) = x_nodes(b);
      const double m = x_nodes(b) + model.drift[0](theta_prior.node(a), x) * dt;
      if (step_sd == 0.0) {
        int target = 0;
        (x_nodes.array() - m).abs().minCoeff(&target);
        T(b, target) = 1.0;
        continue;
      }
      double prev_cdf = 0.0;
      for (int bp = 0; bp < gx; ++bp) {
        const double edge = x_nodes(bp) + 0.5 * dx;
        const double cdf = bp + 1 < gx ? 0.5 * std::erfc(-(edge - m) / step_sd * inv_sqrt2) : 1.0;
        T(b, bp) = cdf - prev_cdf;
        prev_cdf = cdf;
      }
    }
    kernels.push_back(std::move(T));
  }

  std::vector<JointGridPosterior> out;
  out.reserve(observations.size());
  double t = 0.0;
  for (const auto& obs : observations) {
    if (!(obs.t > t)) throw std::invalid_argument("grid_joint_filter: observations must be strictly increasing");
    const int steps = detail::inner_step_count(t, obs.t, dt);
    for (int a = 0; a < gt; ++a) {
      Eigen::VectorXd row = mass.row(a).transpose();
      for (int s = 0; s < steps; ++s) row = kernels[static_cast<std::size_t>(a)].transpose() * row;
      mass.row(a) = row.transpose();
    }
    // Correction: multiply by the observation likelihood in x, renormalize.
    Eigen::VectorXd lik(gx);
    for (int b = 0; b < gx; ++b) {
      Eigen::VectorXd x(1);
      x(0) = x_nodes(b);
      lik(b) = std::exp(log_likelihood(obs_model, obs.y, x));
    }
    mass = mass.array().rowwise() * lik.transpose().array();
    const double total = mass.sum();
    if (!(total > 0.0)) throw WeightCollapseError("grid_joint_filter: posterior mass vanished", obs.t);
    mass /= total;
    t = obs.t;
    out.push_back({t, theta_prior.nodes(), x_nodes, mass});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Conjugate parameter posterior for drifts linear in theta
// ---------------------------------------------------------------------------

/// Gaussian-in-theta posterior truncated to the prior support. `flat` marks
/// the no-information case (the prior is returned unchanged).
struct TruncatedGaussian {
  double mean = 0.0;
  double sd = 0.0;
  Interval support;
  bool flat = false;
};

/// For a drift f(theta, x) = theta * g(x), the exponent accumulated along a
/// recorded path is (theta/sigma^2) sum g(x_k) dx - (theta^2/2 sigma^2)
/// sum g(x_k)^2 dt, which is Gaussian in theta with precision
/// sum g^2 dt / sigma^2 and mean sum g dx / sum g^2 dt.
inline TruncatedGaussian conjugate_posterior(const PathSegment& path,
                                             const std::function<double(double)>& g, double sigma,
                                             const Interval& support) {
  if (!(sigma > 0.0)) throw std::invalid_argument("conjugate_posterior: sigma must be positive");
  double sum_g_dx = 0.0;
  double sum_g2_dt = 0.0;
  for (int k = 0; k < path.step_count(); ++k) {
    const double xk = path.states(0, k);
    const double dx = path.states(0, k + 1) - xk;
    const double gk = g(xk);
    sum_g_dx += gk * dx;
    sum_g2_dt += gk * gk * path.step_length(k);
  }
  TruncatedGaussian post;
  post.support = support;
  if (sum_g2_dt == 0.0) {
    post.flat = true;
    return post;
  }
  post.mean = sum_g_dx / sum_g2_dt;
  post.sd = sigma / std::sqrt(sum_g2_dt);
  return post;
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Cell masses of a truncated Gaussian on the same cell partition a
/// ParameterGrid uses (half cells at the support endpoints), normalized to 1.
inline Eigen::VectorXd truncated_gaussian_cell_masses(const TruncatedGaussian& post,
                                                      const Eigen::VectorXd& nodes) {
  const int g = static_cast<int>(nodes.size());
  Eigen::VectorXd masses(g);
  if (post.flat || g == 1) {
    if (g == 1) {
      masses(0) = 1.0;
      return masses;
    }
    const double w = nodes(1) - nodes(0);
    for (int i = 0; i < g; ++i) masses(i) = (i == 0 || i == g - 1) ? 0.5 * w : w;
    return masses / masses.sum();
  }
  const double w = nodes(1) - nodes(0);
  for (int i = 0; i < g; ++i) {
    const double lo = std::max(post.support.lo, nodes(i) - 0.5 * w);
    const double hi = std::min(post.support.hi, nodes(i) + 0.5 * w);
    masses(i) = normal_cdf((hi - post.mean) / post.sd) - normal_cdf((lo - post.mean) / post.sd);
  }
  const double total = masses.sum();
  if (!(total > 0.0))
    throw std::runtime_error("truncated_gaussian_cell_masses: posterior mass underflowed on the support");
  return masses / total;
}

/// Total-variation distance between two probability vectors on the same cells.
inline double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

}  // namespace sdepf
