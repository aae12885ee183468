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
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdepf/errors.hpp"
#include "sdepf/observation.hpp"
#include "sdepf/parallel.hpp"
#include "sdepf/param_grid.hpp"
#include "sdepf/random.hpp"
#include "sdepf/resampling.hpp"
#include "sdepf/sde.hpp"

namespace sdepf {

enum class FilterKind { bpf, rpf, npf, rbpf };

inline const char* to_string(FilterKind k) {
  switch (k) {
    case FilterKind::bpf: return "bpf";
    case FilterKind::rpf: return "rpf";
    case FilterKind::npf: return "npf";
    case FilterKind::rbpf: return "rbpf";
  }
  return "?";
}

inline FilterKind filter_kind_from_string(const std::string& s) {
  if (s == "bpf") return FilterKind::bpf;
  if (s == "rpf") return FilterKind::rpf;
  if (s == "npf") return FilterKind::npf;
  if (s == "rbpf") return FilterKind::rbpf;
  throw std::invalid_argument("unknown filter kind: " + s);
}

struct FilterConfig {
  int particles = 1000;           // N
  int inner_particles = 0;        // M for the NPF; 0 means M = N
  double jitter = 0.0;            // artificial-noise intensity c (RPF/NPF)
  int grid_nodes = 100;           // G, nodes per parameter grid (RB-PF)
  double dt = 1e-3;               // inner Euler-Maruyama step
  ResampleScheme scheme = ResampleScheme::systematic;
  // Resampling fires at every observation by default; when set, it fires
  // only while ESS < ess_threshold * N.
  std::optional<double> ess_threshold;
  int threads = 1;
  // Pins every particle (and every grid) to a known parameter vector.
  std::optional<Eigen::VectorXd> fixed_theta;
  // Emit the mixture parameter marginal (per dimension) in each summary.
  bool keep_param_marginals = false;

  int inner() const { return inner_particles > 0 ? inner_particles : particles; }
};

/// Weighted-ensemble snapshot emitted at each observation time.
struct PosteriorSummary {
  double t = 0.0;
  Eigen::VectorXd state_mean, state_std;
  Eigen::VectorXd param_mean, param_std;
  double ess = 0.0;
  // Distinct parameter vectors in the outgoing ensemble; -1 when the filter
  // does not carry parameter particles (RB-PF).
  int distinct_theta = -1;
  // Optional per-dimension parameter marginal (RB-PF mixture cell masses).
  std::vector<Eigen::VectorXd> param_marginal;
};

struct BpfParticle {
  Eigen::VectorXd theta;
  Eigen::VectorXd x;
};

struct NpfParticle {
  Eigen::VectorXd theta;
  Eigen::MatrixXd inner;  // n x M inner state particles
};

struct RbpfParticle {
  Eigen::VectorXd x;
  MarginalSet marginals;
};

template <class Particle>
struct Ensemble {
  double t = 0.0;
  std::vector<Particle> particles;
  Eigen::VectorXd log_weights;  // normalized log-probabilities; zeros right after a resample

  int size() const { return static_cast<int>(particles.size()); }
};

using BpfEnsemble = Ensemble<BpfParticle>;
using NpfEnsemble = Ensemble<NpfParticle>;
using RbpfEnsemble = Ensemble<RbpfParticle>;

namespace detail {

// Substream tags; every randomized stage of a step owns its own child key so
// draw counts in one stage never shift another.
inline constexpr std::uint64_t kInitTag = 1;
inline constexpr std::uint64_t kPropTag = 2;
inline constexpr std::uint64_t kResampleTag = 3;
inline constexpr std::uint64_t kJitterTag = 4;

inline double uniform_in(const Interval& iv, RngStream& rng) {
  return iv.lo + iv.width() * rng.uniform();
}

template <class Particle, class Getter>
void weighted_moments(const std::vector<Particle>& particles, const Eigen::VectorXd& probs, int dim,
                      Getter&& get, Eigen::VectorXd& mean, Eigen::VectorXd& std_dev) {
  mean = Eigen::VectorXd::Zero(dim);
  for (std::size_t j = 0; j < particles.size(); ++j) mean += probs(static_cast<int>(j)) * get(particles[j]);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  for (std::size_t j = 0; j < particles.size(); ++j) {
    const Eigen::VectorXd d = get(particles[j]) - mean;
    var += probs(static_cast<int>(j)) * d.cwiseProduct(d);
  }
  std_dev = var.cwiseMax(0.0).cwiseSqrt();
}

template <class Particle, class Getter>
int distinct_theta_count(const std::vector<Particle>& particles, Getter&& get) {
  const int n = static_cast<int>(particles.size());
  if (n == 0) return 0;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](int a, int b) {
    const Eigen::VectorXd& ta = get(particles[static_cast<std::size_t>(a)]);
    const Eigen::VectorXd& tb = get(particles[static_cast<std::size_t>(b)]);
    return std::lexicographical_compare(ta.data(), ta.data() + ta.size(), tb.data(), tb.data() + tb.size());
  };
  std::sort(order.begin(), order.end(), less);
  int distinct = 1;
  for (int j = 1; j < n; ++j) {
    if (less(order[static_cast<std::size_t>(j - 1)], order[static_cast<std::size_t>(j)])) ++distinct;
  }
  return distinct;
}

template <class Particle>
void gather(std::vector<Particle>& particles, const std::vector<int>& ancestors) {
  std::vector<Particle> next;
  next.reserve(particles.size());
  for (int a : ancestors) next.push_back(particles[static_cast<std::size_t>(a)]);
  particles.swap(next);
}

inline void gather_inner(Eigen::MatrixXd& states, const std::vector<int>& ancestors) {
  Eigen::MatrixXd next(states.rows(), states.cols());
  for (std::size_t l = 0; l < ancestors.size(); ++l)
    next.col(static_cast<int>(l)) = states.col(ancestors[l]);
  states.swap(next);
}

// Normalizes carried + fresh log-weights; rethrows a collapse with the
// observation time attached.
inline Eigen::VectorXd normalized_step_weights(const Eigen::VectorXd& carried,
                                               const Eigen::VectorXd& fresh, double t) {
  try {
    return normalize_log_weights(carried + fresh);
  } catch (const WeightCollapseError&) {
    throw WeightCollapseError("total weight collapse at t=" + std::to_string(t), t);
  }
}

// Resample-every-step unless an ESS threshold says otherwise.
inline bool should_resample(const FilterConfig& cfg, double ess, int n) {
  if (!cfg.ess_threshold) return true;
  return ess < *cfg.ess_threshold * n;
}

template <class Particle>
void finish_step(Ensemble<Particle>& ens, const FilterConfig& cfg, const Eigen::VectorXd& probs,
                 double ess, const RngStream& step_rng) {
  if (should_resample(cfg, ess, ens.size())) {
    RngStream r = step_rng.child(kResampleTag);
    gather(ens.particles, resample(cfg.scheme, probs, r));
    ens.log_weights.setZero();
  } else {
    ens.log_weights = probs.array().log();
  }
}

// Redraws a truncated N(0, c I) perturbation until theta stays in the box.
inline void jitter_theta(Eigen::VectorXd& theta, const std::vector<Interval>& box, double c,
                         RngStream& rng) {
  const double sd = std::sqrt(c);
  const int n = static_cast<int>(theta.size());
  Eigen::VectorXd candidate(n);
  for (long attempt = 0; attempt < 1000000; ++attempt) {
    bool inside = true;
    for (int i = 0; i < n; ++i) {
      candidate(i) = theta(i) + sd * rng.normal();
      if (!box[static_cast<std::size_t>(i)].contains(candidate(i))) inside = false;
    }
    if (inside) {
      theta = candidate;
      return;
    }
  }
  throw std::invalid_argument("jitter_theta: rejection sampling exceeded 1e6 draws; jitter intensity "
                              "too large for the parameter box");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Initialization from the model priors
// ---------------------------------------------------------------------------

inline void require_state_prior(const SdeModel& model) {
  if (model.state_prior.empty())
    throw std::invalid_argument("filter init: model has no state prior; construct the ensemble directly");
}

inline void require_valid(const FilterConfig& cfg) {
  if (cfg.particles < 1) throw std::invalid_argument("FilterConfig: particles must be >= 1");
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("FilterConfig: dt must be positive");
  if (cfg.jitter < 0.0) throw std::invalid_argument("FilterConfig: jitter must be >= 0");
  if (cfg.grid_nodes < 1) throw std::invalid_argument("FilterConfig: grid_nodes must be >= 1");
}

inline Eigen::VectorXd sample_state_prior(const SdeModel& model, RngStream& rng) {
  Eigen::VectorXd x(model.n);
  for (int i = 0; i < model.n; ++i) x(i) = detail::uniform_in(model.state_prior[static_cast<std::size_t>(i)], rng);
  return x;
}

inline Eigen::VectorXd sample_theta_prior(const SdeModel& model, const FilterConfig& cfg, RngStream& rng) {
  if (cfg.fixed_theta) return *cfg.fixed_theta;
  Eigen::VectorXd theta(model.n);
  for (int i = 0; i < model.n; ++i)
    theta(i) = detail::uniform_in(model.param_support[static_cast<std::size_t>(i)], rng);
  return theta;
}

inline BpfEnsemble bpf_init(const SdeModel& model, const FilterConfig& cfg, const RngStream& root) {
  require_valid(cfg);
  require_state_prior(model);
  BpfEnsemble ens;
  ens.t = 0.0;
  ens.particles.resize(static_cast<std::size_t>(cfg.particles));
  ens.log_weights = Eigen::VectorXd::Zero(cfg.particles);
  for (int j = 0; j < cfg.particles; ++j) {
    RngStream r = root.child(detail::kInitTag, static_cast<std::uint64_t>(j));
    auto& p = ens.particles[static_cast<std::size_t>(j)];
    p.theta = sample_theta_prior(model, cfg, r);
    p.x = sample_state_prior(model, r);
  }
  return ens;
}

inline NpfEnsemble npf_init(const SdeModel& model, const FilterConfig& cfg, const RngStream& root) {
  require_valid(cfg);
  require_state_prior(model);
  NpfEnsemble ens;
  ens.t = 0.0;
  ens.particles.resize(static_cast<std::size_t>(cfg.particles));
  ens.log_weights = Eigen::VectorXd::Zero(cfg.particles);
  const int m = cfg.inner();
  for (int j = 0; j < cfg.particles; ++j) {
    RngStream r = root.child(detail::kInitTag, static_cast<std::uint64_t>(j));
    auto& p = ens.particles[static_cast<std::size_t>(j)];
    p.theta = sample_theta_prior(model, cfg, r);
    p.inner.resize(model.n, m);
    for (int l = 0; l < m; ++l) p.inner.col(l) = sample_state_prior(model, r);
  }
  return ens;
}

inline RbpfEnsemble rbpf_init(const SdeModel& model, const FilterConfig& cfg, const RngStream& root) {
  require_valid(cfg);
  require_state_prior(model);
  RbpfEnsemble ens;
  ens.t = 0.0;
  ens.particles.resize(static_cast<std::size_t>(cfg.particles));
  ens.log_weights = Eigen::VectorXd::Zero(cfg.particles);
  MarginalSet prototype;
  if (cfg.fixed_theta) {
    for (int i = 0; i < model.n; ++i) prototype.grids.push_back(ParameterGrid::degenerate((*cfg.fixed_theta)(i)));
  } else {
    prototype = MarginalSet::uniform_priors(model, cfg.grid_nodes);
  }
  for (int j = 0; j < cfg.particles; ++j) {
    RngStream r = root.child(detail::kInitTag, static_cast<std::uint64_t>(j));
    auto& p = ens.particles[static_cast<std::size_t>(j)];
    p.x = sample_state_prior(model, r);
    p.marginals = prototype;
  }
  return ens;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

inline PosteriorSummary summarize_bpf(const BpfEnsemble& ens, const Eigen::VectorXd& probs, double t) {
  PosteriorSummary s;
  s.t = t;
  detail::weighted_moments(ens.particles, probs, static_cast<int>(ens.particles[0].x.size()),
                           [](const BpfParticle& p) -> const Eigen::VectorXd& { return p.x; }, s.state_mean,
                           s.state_std);
  detail::weighted_moments(ens.particles, probs, static_cast<int>(ens.particles[0].theta.size()),
                           [](const BpfParticle& p) -> const Eigen::VectorXd& { return p.theta; },
                           s.param_mean, s.param_std);
  s.ess = effective_sample_size(probs);
  return s;
}

inline PosteriorSummary summarize_rbpf(const RbpfEnsemble& ens, const Eigen::VectorXd& probs, double t,
                                       bool keep_marginals) {
  PosteriorSummary s;
  s.t = t;
  const int n = static_cast<int>(ens.particles[0].x.size());
  detail::weighted_moments(ens.particles, probs, n,
                           [](const RbpfParticle& p) -> const Eigen::VectorXd& { return p.x; }, s.state_mean,
                           s.state_std);
  // Parameter moments come from the weighted mixture of per-particle grids
  // (law of total variance across particles and grid cells).
  const int d = ens.particles[0].marginals.dims();
  s.param_mean = Eigen::VectorXd::Zero(d);
  s.param_std = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < ens.size(); ++j) {
    const double w = probs(j);
    if (w == 0.0) continue;
    for (int i = 0; i < d; ++i) {
      const auto m = ens.particles[static_cast<std::size_t>(j)].marginals.grids[static_cast<std::size_t>(i)].moments();
      s.param_mean(i) += w * m.mean;
      second(i) += w * (m.std * m.std + m.mean * m.mean);
    }
  }
  for (int i = 0; i < d; ++i)
    s.param_std(i) = std::sqrt(std::max(0.0, second(i) - s.param_mean(i) * s.param_mean(i)));
  s.ess = effective_sample_size(probs);
  if (keep_marginals) {
    s.param_marginal.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      const auto& g0 = ens.particles[0].marginals.grids[static_cast<std::size_t>(i)];
      Eigen::VectorXd mix = Eigen::VectorXd::Zero(g0.size());
      for (int j = 0; j < ens.size(); ++j) {
        if (probs(j) == 0.0) continue;
        mix += probs(j) *
               ens.particles[static_cast<std::size_t>(j)].marginals.grids[static_cast<std::size_t>(i)].probabilities();
      }
      s.param_marginal[static_cast<std::size_t>(i)] = mix;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Filter steps (one observation each)
// ---------------------------------------------------------------------------

/// Bootstrap step: propagate with each particle's own fixed theta, weight by
/// the observation likelihood, summarize the weighted ensemble, resample.
inline PosteriorSummary bpf_step(BpfEnsemble& ens, const ObservationRecord& obs, const SdeModel& model,
                                 const ObservationModel& obs_model, const FilterConfig& cfg,
                                 const RngStream& step_rng) {
  if (!(obs.t > ens.t)) throw std::invalid_argument("bpf_step: observation time must exceed ensemble time");
  const int n = ens.size();
  Eigen::VectorXd fresh(n);
  parallel_for(n, cfg.threads, [&](int j) {
    RngStream r = step_rng.child(detail::kPropTag, static_cast<std::uint64_t>(j));
    auto& p = ens.particles[static_cast<std::size_t>(j)];
    p.x = em_endpoint(model, p.x, p.theta, ens.t, obs.t, cfg.dt, r);
    fresh(j) = log_likelihood(obs_model, obs.y, p.x);
  });
  const Eigen::VectorXd probs = detail::normalized_step_weights(ens.log_weights, fresh, obs.t);
  PosteriorSummary summary = summarize_bpf(ens, probs, obs.t);
  detail::finish_step(ens, cfg, probs, summary.ess, step_rng);
  ens.t = obs.t;
  summary.distinct_theta =
      detail::distinct_theta_count(ens.particles, [](const BpfParticle& p) -> const Eigen::VectorXd& { return p.theta; });
  return summary;
}

/// Regularized step: a bootstrap step followed by truncated Gaussian jitter
/// N(0, c I) on every parameter particle (redrawn until inside the box).
inline PosteriorSummary rpf_step(BpfEnsemble& ens, const ObservationRecord& obs, const SdeModel& model,
                                 const ObservationModel& obs_model, const FilterConfig& cfg,
                                 const RngStream& step_rng) {
  PosteriorSummary summary = bpf_step(ens, obs, model, obs_model, cfg, step_rng);
  if (cfg.jitter > 0.0) {
    parallel_for(ens.size(), cfg.threads, [&](int j) {
      RngStream r = step_rng.child(detail::kJitterTag, static_cast<std::uint64_t>(j));
      detail::jitter_theta(ens.particles[static_cast<std::size_t>(j)].theta, model.param_support, cfg.jitter, r);
    });
    summary.distinct_theta = detail::distinct_theta_count(
        ens.particles, [](const BpfParticle& p) -> const Eigen::VectorXd& { return p.theta; });
  }
  return summary;
}

/// Nested step: per outer particle, one inner bootstrap step over its M state
/// particles; the outer weight is the sum of inner weights; the outer layer
/// then resamples and jitters theta like the RPF.
inline PosteriorSummary npf_step(NpfEnsemble& ens, const ObservationRecord& obs, const SdeModel& model,
                                 const ObservationModel& obs_model, const FilterConfig& cfg,
                                 const RngStream& step_rng) {
  if (!(obs.t > ens.t)) throw std::invalid_argument("npf_step: observation time must exceed ensemble time");
  const int n = ens.size();
  const int m = static_cast<int>(ens.particles[0].inner.cols());
  const int dim = static_cast<int>(ens.particles[0].inner.rows());
  Eigen::VectorXd fresh(n);
  Eigen::MatrixXd inner_mean(dim, n);
  Eigen::MatrixXd inner_second(dim, n);
  parallel_for(n, cfg.threads, [&](int j) {
    RngStream r = step_rng.child(detail::kPropTag, static_cast<std::uint64_t>(j));
    auto& p = ens.particles[static_cast<std::size_t>(j)];
    Eigen::VectorXd inner_lw(m);
    for (int l = 0; l < m; ++l) {
      p.inner.col(l) = em_endpoint(model, p.inner.col(l), p.theta, ens.t, obs.t, cfg.dt, r);
      inner_lw(l) = log_likelihood(obs_model, obs.y, p.inner.col(l));
    }
    const double max_lw = inner_lw.maxCoeff();
    if (!std::isfinite(max_lw)) {
      // Inner layer collapsed; the outer weight removes this particle.
      fresh(j) = -std::numeric_limits<double>::infinity();
      inner_mean.col(j) = p.inner.rowwise().mean();
      inner_second.col(j) = p.inner.cwiseProduct(p.inner).rowwise().mean();
      return;
    }
    const Eigen::VectorXd v = (inner_lw.array() - max_lw).exp();
    const double total = v.sum();
    fresh(j) = max_lw + std::log(total);  // log sum of inner weights
    const Eigen::VectorXd vn = v / total;
    inner_mean.col(j) = p.inner * vn;
    inner_second.col(j) = p.inner.cwiseProduct(p.inner) * vn;
    detail::gather_inner(p.inner, resample(cfg.scheme, vn, r));
  });
  const Eigen::VectorXd probs = detail::normalized_step_weights(ens.log_weights, fresh, obs.t);

  PosteriorSummary summary;
  summary.t = obs.t;
  summary.state_mean = inner_mean * probs;
  Eigen::VectorXd second = inner_second * probs;
  summary.state_std =
      (second - summary.state_mean.cwiseProduct(summary.state_mean)).cwiseMax(0.0).cwiseSqrt();
  detail::weighted_moments(ens.particles, probs, static_cast<int>(ens.particles[0].theta.size()),
                           [](const NpfParticle& p) -> const Eigen::VectorXd& { return p.theta; },
                           summary.param_mean, summary.param_std);
  summary.ess = effective_sample_size(probs);

  detail::finish_step(ens, cfg, probs, summary.ess, step_rng);
  ens.t = obs.t;
  if (cfg.jitter > 0.0) {
    parallel_for(ens.size(), cfg.threads, [&](int j) {
      RngStream r = step_rng.child(detail::kJitterTag, static_cast<std::uint64_t>(j));
      detail::jitter_theta(ens.particles[static_cast<std::size_t>(j)].theta, model.param_support, cfg.jitter, r);
    });
  }
  summary.distinct_theta = detail::distinct_theta_count(
      ens.particles, [](const NpfParticle& p) -> const Eigen::VectorXd& { return p.theta; });
  return summary;
}

/// Rao-Blackwellized step: per particle, draw theta from the particle's grid
/// marginals, simulate the state path with it, push every grid through the
/// Zakai exponent along that path, then weight at the observation. Particles
/// and their grids are resampled jointly.
inline PosteriorSummary rbpf_step(RbpfEnsemble& ens, const ObservationRecord& obs, const SdeModel& model,
                                  const ObservationModel& obs_model, const FilterConfig& cfg,
                                  const RngStream& step_rng) {
  if (!(obs.t > ens.t)) throw std::invalid_argument("rbpf_step: observation time must exceed ensemble time");
  const int n = ens.size();
  Eigen::VectorXd fresh(n);
  parallel_for(n, cfg.threads, [&](int j) {
    RngStream r = step_rng.child(detail::kPropTag, static_cast<std::uint64_t>(j));
    auto& p = ens.particles[static_cast<std::size_t>(j)];
    const Eigen::VectorXd theta = p.marginals.sample(r);
    const PathSegment seg = simulate_interval(model, p.x, theta, ens.t, obs.t, cfg.dt, r);
    try {
      for (int i = 0; i < model.n; ++i) p.marginals.grids[static_cast<std::size_t>(i)].zakai_update(model, i, seg);
    } catch (const GridNumericsError& e) {
      throw GridNumericsError(std::string(e.what()) + " (particle " + std::to_string(j) + ")");
    }
    p.x = seg.final_state();
    fresh(j) = log_likelihood(obs_model, obs.y, p.x);
  });
  const Eigen::VectorXd probs = detail::normalized_step_weights(ens.log_weights, fresh, obs.t);
  PosteriorSummary summary = summarize_rbpf(ens, probs, obs.t, cfg.keep_param_marginals);
  detail::finish_step(ens, cfg, probs, summary.ess, step_rng);
  ens.t = obs.t;
  return summary;
}

// ---------------------------------------------------------------------------
// Whole-stream runs
// ---------------------------------------------------------------------------

inline void require_sorted(const std::vector<ObservationRecord>& observations) {
  double prev = 0.0;
  for (const auto& o : observations) {
    if (!(o.t > prev)) throw std::invalid_argument("run_filter: observations must be strictly increasing in time");
    prev = o.t;
  }
}

template <class Particle>
PosteriorSummary prior_summary(const Ensemble<Particle>& ens, const FilterConfig& cfg);

template <>
inline PosteriorSummary prior_summary<BpfParticle>(const BpfEnsemble& ens, const FilterConfig&) {
  const Eigen::VectorXd probs = Eigen::VectorXd::Constant(ens.size(), 1.0 / ens.size());
  PosteriorSummary s = summarize_bpf(ens, probs, 0.0);
  s.distinct_theta =
      detail::distinct_theta_count(ens.particles, [](const BpfParticle& p) -> const Eigen::VectorXd& { return p.theta; });
  return s;
}

template <>
inline PosteriorSummary prior_summary<NpfParticle>(const NpfEnsemble& ens, const FilterConfig&) {
  const Eigen::VectorXd probs = Eigen::VectorXd::Constant(ens.size(), 1.0 / ens.size());
  PosteriorSummary s;
  s.t = 0.0;
  const int dim = static_cast<int>(ens.particles[0].inner.rows());
  Eigen::MatrixXd mean(dim, ens.size());
  Eigen::MatrixXd second(dim, ens.size());
  for (int j = 0; j < ens.size(); ++j) {
    const auto& inner = ens.particles[static_cast<std::size_t>(j)].inner;
    mean.col(j) = inner.rowwise().mean();
    second.col(j) = inner.cwiseProduct(inner).rowwise().mean();
  }
  s.state_mean = mean * probs;
  s.state_std = (second * probs - s.state_mean.cwiseProduct(s.state_mean)).cwiseMax(0.0).cwiseSqrt();
  detail::weighted_moments(ens.particles, probs, static_cast<int>(ens.particles[0].theta.size()),
                           [](const NpfParticle& p) -> const Eigen::VectorXd& { return p.theta; }, s.param_mean,
                           s.param_std);
  s.ess = static_cast<double>(ens.size());
  s.distinct_theta =
      detail::distinct_theta_count(ens.particles, [](const NpfParticle& p) -> const Eigen::VectorXd& { return p.theta; });
  return s;
}

template <>
inline PosteriorSummary prior_summary<RbpfParticle>(const RbpfEnsemble& ens, const FilterConfig& cfg) {
  const Eigen::VectorXd probs = Eigen::VectorXd::Constant(ens.size(), 1.0 / ens.size());
  return summarize_rbpf(ens, probs, 0.0, cfg.keep_param_marginals);
}

template <class Particle, class StepFn>
std::vector<PosteriorSummary> fold_steps(Ensemble<Particle>& ens, const FilterConfig& cfg,
                                         const std::vector<ObservationRecord>& observations,
                                         const RngStream& root, StepFn&& step) {
  require_sorted(observations);
  std::vector<PosteriorSummary> out;
  out.reserve(observations.size() + 1);
  out.push_back(prior_summary<Particle>(ens, cfg));
  for (std::size_t k = 0; k < observations.size(); ++k) {
    RngStream step_rng = root.child(1000 + k);
    try {
      out.push_back(step(ens, observations[k], step_rng));
    } catch (const std::exception& e) {
      throw FilterError("filter failed at observation index " + std::to_string(k) +
                            " (t=" + std::to_string(observations[k].t) + "): " + e.what(),
                        static_cast<int>(k));
    }
  }
  return out;
}

struct BpfRun {
  BpfEnsemble ensemble;
  std::vector<PosteriorSummary> summaries;
};

struct NpfRun {
  NpfEnsemble ensemble;
  std::vector<PosteriorSummary> summaries;
};

struct RbpfRun {
  RbpfEnsemble ensemble;
  std::vector<PosteriorSummary> summaries;
};

inline BpfRun run_bpf(const SdeModel& model, const ObservationModel& obs_model, const FilterConfig& cfg,
                      const std::vector<ObservationRecord>& observations, std::uint64_t seed) {
  RngStream root(seed);
  BpfRun run{bpf_init(model, cfg, root), {}};
  run.summaries = fold_steps(run.ensemble, cfg, observations, root,
                             [&](BpfEnsemble& e, const ObservationRecord& o, const RngStream& r) {
                               return bpf_step(e, o, model, obs_model, cfg, r);
                             });
  return run;
}

inline BpfRun run_rpf(const SdeModel& model, const ObservationModel& obs_model, const FilterConfig& cfg,
                      const std::vector<ObservationRecord>& observations, std::uint64_t seed) {
  RngStream root(seed);
  BpfRun run{bpf_init(model, cfg, root), {}};
  run.summaries = fold_steps(run.ensemble, cfg, observations, root,
                             [&](BpfEnsemble& e, const ObservationRecord& o, const RngStream& r) {
                               return rpf_step(e, o, model, obs_model, cfg, r);
                             });
  return run;
}

inline NpfRun run_npf(const SdeModel& model, const ObservationModel& obs_model, const FilterConfig& cfg,
                      const std::vector<ObservationRecord>& observations, std::uint64_t seed) {
  RngStream root(seed);
  NpfRun run{npf_init(model, cfg, root), {}};
  run.summaries = fold_steps(run.ensemble, cfg, observations, root,
                             [&](NpfEnsemble& e, const ObservationRecord& o, const RngStream& r) {
                               return npf_step(e, o, model, obs_model, cfg, r);
                             });
  return run;
}

inline RbpfRun run_rbpf(const SdeModel& model, const ObservationModel& obs_model, const FilterConfig& cfg,
                        const std::vector<ObservationRecord>& observations, std::uint64_t seed) {
  RngStream root(seed);
  RbpfRun run{rbpf_init(model, cfg, root), {}};
  run.summaries = fold_steps(run.ensemble, cfg, observations, root,
                             [&](RbpfEnsemble& e, const ObservationRecord& o, const RngStream& r) {
                               return rbpf_step(e, o, model, obs_model, cfg, r);
                             });
  return run;
}

/// Runs the requested filter end to end and returns one summary per
/// observation, preceded by the prior summary at t = 0.
inline std::vector<PosteriorSummary> run_filter(FilterKind kind, const SdeModel& model,
                                                const ObservationModel& obs_model, const FilterConfig& cfg,
                                                const std::vector<ObservationRecord>& observations,
                                                std::uint64_t seed) {
  switch (kind) {
    case FilterKind::bpf: return run_bpf(model, obs_model, cfg, observations, seed).summaries;
    case FilterKind::rpf: return run_rpf(model, obs_model, cfg, observations, seed).summaries;
    case FilterKind::npf: return run_npf(model, obs_model, cfg, observations, seed).summaries;
    case FilterKind::rbpf: return run_rbpf(model, obs_model, cfg, observations, seed).summaries;
  }
  throw std::invalid_argument("run_filter: unknown filter kind");
}

}  // namespace sdepf
