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
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdepf/errors.hpp"
#include "sdepf/random.hpp"
#include "sdepf/sde.hpp"

namespace sdepf {

/// Discrete log-domain density of one conditional parameter marginal,
/// rho_{Theta_i | X}(t, .), on a uniform grid over the prior support.
///
/// The grid accumulates, along a simulated state path, the Ito-integral
/// exponent
///
///   sum_k f_i(theta, x(s_k)) / sigma_i^2 * [dx_i(s_k) - f_i(theta, x(s_k))/2 * dt_k],
///
/// evaluated at the left endpoint of every inner step. Accumulation is raw
/// (never rescaled); the max-normalization required of `log_density` is kept
/// as a separate offset so that updating over [t0,t1] and then [t1,t2]
/// produces bit-identical sums to one update over the concatenated segment.
///
/// Cells tile the support exactly: interior nodes own a cell of the full
/// spacing, the two endpoint nodes own half cells. Cell probabilities are
/// therefore trapezoid-weighted, and sampling a uniform grid reproduces the
/// uniform prior exactly.
class ParameterGrid {
 public:
  /// Uniform prior over `support` on G >= 2 equispaced nodes.
  static ParameterGrid uniform(Interval support, int num_nodes) {
    if (num_nodes < 2) throw std::invalid_argument("ParameterGrid::uniform: need at least 2 nodes");
    if (!(support.lo < support.hi))
      throw std::invalid_argument("ParameterGrid::uniform: empty support interval");
    ParameterGrid g;
    auto nodes = std::make_shared<Eigen::VectorXd>(
        Eigen::VectorXd::LinSpaced(num_nodes, support.lo, support.hi));
    g.nodes_ = std::move(nodes);
    g.cell_width_ = support.width() / (num_nodes - 1);
    g.raw_log_ = Eigen::VectorXd::Zero(num_nodes);
    g.offset_ = 0.0;
    return g;
  }

  /// Point mass at a known parameter value (zero-width cell).
  static ParameterGrid degenerate(double theta) {
    ParameterGrid g;
    auto nodes = std::make_shared<Eigen::VectorXd>(1);
    (*nodes)(0) = theta;
    g.nodes_ = std::move(nodes);
    g.cell_width_ = 0.0;
    g.raw_log_ = Eigen::VectorXd::Zero(1);
    g.offset_ = 0.0;
    return g;
  }

  int size() const { return static_cast<int>(nodes_->size()); }
  double node(int g) const { return (*nodes_)(g); }
  const Eigen::VectorXd& nodes() const { return *nodes_; }
  double cell_width() const { return cell_width_; }
  double support_lo() const { return (*nodes_)(0); }
  double support_hi() const { return (*nodes_)(nodes_->size() - 1); }

  /// Max-normalized log-density at node g (the max over nodes is exactly 0).
  double log_density(int g) const { return raw_log_(g) - offset_; }

  Eigen::VectorXd log_density() const { return raw_log_.array() - offset_; }

  /// Width of the cell owned by node g (half cells at the endpoints).
  double cell_measure(int g) const {
    if (size() == 1) return 1.0;
    return (g == 0 || g == size() - 1) ? 0.5 * cell_width_ : cell_width_;
  }

  /// Cell probabilities: measure-weighted exp(log_density), normalized to 1.
  Eigen::VectorXd probabilities() const {
    const int n = size();
    Eigen::VectorXd p(n);
    for (int g = 0; g < n; ++g) p(g) = cell_measure(g) * std::exp(raw_log_(g) - offset_);
    const double total = p.sum();
    if (!(total > 0.0) || !std::isfinite(total))
      throw GridNumericsError("ParameterGrid: cell-weighted density sum is not positive and finite");
    return p / total;
  }

  /// Accumulates the Zakai exponent for dimension `dim` of `model` along the
  /// inner steps of `seg`, then refreshes the max-normalization offset.
  /// Nodes are unchanged. Throws GridNumericsError naming the node and step
  /// if an increment is non-finite.
  void zakai_update(const SdeModel& model, int dim, const PathSegment& seg) {
    if (dim < 0 || dim >= model.n)
      throw std::out_of_range("zakai_update: dimension index out of range");
    const double sigma = model.sigma(dim);
    if (!(sigma > 0.0))
      throw std::invalid_argument("zakai_update: sigma must be positive for updated dimensions");
    const double inv_s2 = 1.0 / (sigma * sigma);
    const DriftFn& f = model.drift[static_cast<std::size_t>(dim)];
    const int n_nodes = size();
    const int steps = seg.step_count();
    const double* nodes = nodes_->data();
    double* raw = raw_log_.data();

    for (int k = 0; k < steps; ++k) {
      const auto x = seg.states.col(k);
      const double dx = seg.states(dim, k + 1) - seg.states(dim, k);
      const double h = seg.step_length(k);
      const double a = dx * inv_s2;
      const double b = 0.5 * h * inv_s2;
      for (int g = 0; g < n_nodes; ++g) {
        const double fg = f(nodes[g], x);
        const double inc = fg * a - fg * fg * b;
        if (!std::isfinite(inc)) {
          throw GridNumericsError("zakai_update: non-finite exponent at node " + std::to_string(g) +
                                  " (theta=" + std::to_string(nodes[g]) + ", step " + std::to_string(k) +
                                  ")");
        }
        raw[g] += inc;
      }
    }
    offset_ = raw_log_.maxCoeff();
  }

  /// Draws one theta: picks a node by cell probability, then jitters
  /// uniformly within the node's cell (truncated at the support edges).
  double sample(RngStream& rng) const {
    const int n = size();
    if (n == 1) return (*nodes_)(0);
    const double u = rng.uniform();
    const Eigen::VectorXd p = probabilities();
    double cum = 0.0;
    int g = n - 1;
    for (int j = 0; j < n; ++j) {
      cum += p(j);
      if (u <= cum) {
        g = j;
        break;
      }
    }
    const double lo = std::max(support_lo(), (*nodes_)(g) - 0.5 * cell_width_);
    const double hi = std::min(support_hi(), (*nodes_)(g) + 0.5 * cell_width_);
    return lo + (hi - lo) * rng.uniform();
  }

  struct Moments {
    double mean = 0.0;
    double std = 0.0;
  };

  /// Cell-probability-weighted mean and standard deviation over nodes.
  Moments moments() const {
    const Eigen::VectorXd p = probabilities();
    const double mean = p.dot(*nodes_);
    double var = 0.0;
    for (int g = 0; g < size(); ++g) {
      const double d = (*nodes_)(g) - mean;
      var += p(g) * d * d;
    }
    return {mean, std::sqrt(std::max(0.0, var))};
  }

 private:
  ParameterGrid() = default;

  std::shared_ptr<const Eigen::VectorXd> nodes_;  // shared across particle copies
  Eigen::VectorXd raw_log_;
  double offset_ = 0.0;
  double cell_width_ = 0.0;
};

/// The factorized conditional parameter posterior: one independent grid per
/// parameter dimension (no cross-dimension coupling is ever stored).
struct MarginalSet {
  std::vector<ParameterGrid> grids;

  int dims() const { return static_cast<int>(grids.size()); }

  /// Uniform priors over the model's parameter supports.
  static MarginalSet uniform_priors(const SdeModel& model, int nodes_per_dim) {
    MarginalSet ms;
    ms.grids.reserve(static_cast<std::size_t>(model.n));
    for (int i = 0; i < model.n; ++i)
      ms.grids.push_back(ParameterGrid::uniform(model.param_support[static_cast<std::size_t>(i)], nodes_per_dim));
    return ms;
  }

  /// Draws each theta_i independently from its marginal.
  Eigen::VectorXd sample(RngStream& rng) const {
    Eigen::VectorXd theta(dims());
    for (int i = 0; i < dims(); ++i) theta(i) = grids[static_cast<std::size_t>(i)].sample(rng);
    return theta;
  }
};

}  // namespace sdepf
