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

// Benchmark CLI: simulate synthetic truth/observations, run one of the four
// filters over them, compare several filters on shared observations, or run
// the exact reference solvers. See README.md for file formats.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "sdepf/sdepf.hpp"

namespace {

struct Overrides {
  std::optional<std::string> filter;
  std::optional<int> particles;
  std::optional<int> inner;
  std::optional<double> jitter;
  std::optional<int> grid;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> obs;
  std::optional<std::string> out;
};

sdepf::ExperimentConfig resolve(const std::string& config_path, const Overrides& o) {
  sdepf::ExperimentConfig cfg =
      config_path.empty() ? sdepf::ExperimentConfig{} : sdepf::parse_config_file(config_path);
  if (o.filter) cfg.filter = *o.filter;
  if (o.particles) cfg.particles = *o.particles;
  if (o.inner) cfg.inner = *o.inner;
  if (o.jitter) cfg.jitter = *o.jitter;
  if (o.grid) cfg.grid = *o.grid;
  if (o.dt) cfg.dt = *o.dt;
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.obs) cfg.obs_dir = *o.obs;
  if (o.out) cfg.out_dir = *o.out;
  return cfg;
}

int run_oracle(const std::string& which, const sdepf::ExperimentConfig& cfg) {
  using namespace sdepf;
  if (cfg.model != "ou")
    throw std::invalid_argument("oracle: only the ou model has exact references (set model = ou)");
  if (cfg.obs_dir.empty()) throw std::invalid_argument("oracle: config needs an observations directory");
  if (cfg.out_dir.empty()) throw std::invalid_argument("oracle: config needs an output directory");
  const auto observations = read_observations_csv(std::filesystem::path(cfg.obs_dir) / "observations.csv");
  const SdeModel model = build_model(cfg);
  std::filesystem::create_directories(cfg.out_dir);

  if (which == "kalman") {
    // Known-theta linear filter; the initial uniform prior is matched by a
    // Gaussian with the same mean and variance.
    const double theta = config_vector(cfg.true_theta, default_true_theta(cfg, 1), "true_theta", 1)(0);
    LinearGaussianModel lgm;
    lgm.A = Eigen::MatrixXd::Constant(1, 1, -theta);
    lgm.sigma = model.sigma;
    lgm.H = Eigen::MatrixXd::Identity(1, 1);
    lgm.R = obs_noise_matrix(cfg, 1);
    lgm.R = lgm.R * lgm.R.transpose();
    const Interval prior = model.state_prior[0];
    lgm.prior_mean = Eigen::VectorXd::Constant(1, prior.midpoint());
    lgm.prior_cov = Eigen::MatrixXd::Constant(1, 1, prior.width() * prior.width() / 12.0);
    const auto estimates = kalman_filter(lgm, observations);
    auto out = std::ofstream(std::filesystem::path(cfg.out_dir) / "kalman.csv");
    out << "t,mean,var\n";
    for (const auto& e : estimates)
      out << e.t << "," << e.mean(0) << "," << e.cov(0, 0) << "\n";
    std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "kalman.csv").string() << "\n";
    return 0;
  }

  // gridjoint: brute-force joint (theta, x) posterior on a coarse grid.
  const ObservationModel obs_model = build_obs_model(cfg);
  const ParameterGrid theta_prior = ParameterGrid::uniform(model.param_support[0], cfg.grid);
  const Interval x_prior = model.state_prior[0];
  const int gx = cfg.grid;
  const double pad = 3.0 * std::max(1.0, x_prior.width());
  const Eigen::VectorXd x_nodes =
      Eigen::VectorXd::LinSpaced(gx, x_prior.lo - pad, x_prior.hi + pad);
  Eigen::VectorXd x_mass = Eigen::VectorXd::Zero(gx);
  for (int b = 0; b < gx; ++b)
    if (x_prior.contains(x_nodes(b))) x_mass(b) = 1.0;
  x_mass /= x_mass.sum();
  const auto posterior = grid_joint_filter(model, obs_model, theta_prior, x_nodes, x_mass, observations, cfg.dt);
  auto out = std::ofstream(std::filesystem::path(cfg.out_dir) / "gridjoint.csv");
  out << "t,theta_mean,x_mean\n";
  for (const auto& p : posterior) {
    const Eigen::VectorXd tm = p.theta_marginal();
    const Eigen::VectorXd xm = p.x_marginal();
    out << p.t << "," << tm.dot(p.theta_nodes) << "," << xm.dot(p.x_nodes) << "\n";
  }
  const auto& fin = posterior.back();
  auto jout = std::ofstream(std::filesystem::path(cfg.out_dir) / "gridjoint_final.csv");
  jout << "theta,x,mass\n";
  for (int a = 0; a < fin.mass.rows(); ++a)
    for (int b = 0; b < fin.mass.cols(); ++b)
      jout << fin.theta_nodes(a) << "," << fin.x_nodes(b) << "," << fin.mass(a, b) << "\n";
  std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "gridjoint.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint parameter-state filtering benchmarks for SDEs"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;

  auto add_common = [&](CLI::App* cmd, bool need_config) {
    auto* opt = cmd->add_option("--config", config_path, "config file (key = value lines)");
    if (need_config) opt->required();
    cmd->add_option("--seed", [&o](const CLI::results_t& r) {
      o.seed = std::stoull(r.at(0));
      return true;
    }, "RNG seed (overrides config)");
    cmd->add_option("--threads", [&o](const CLI::results_t& r) {
      o.threads = std::stoi(r.at(0));
      return true;
    }, "worker threads for particle propagation");
    cmd->add_option("--out", [&o](const CLI::results_t& r) {
      o.out = r.at(0);
      return true;
    }, "output directory");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate truth and observations");
  add_common(simulate, true);

  auto* run = app.add_subcommand("run", "run a filter against recorded observations");
  add_common(run, true);
  run->add_option("--filter", [&o](const CLI::results_t& r) { o.filter = r.at(0); return true; },
                  "bpf | rpf | npf | rbpf");
  run->add_option("--particles", [&o](const CLI::results_t& r) { o.particles = std::stoi(r.at(0)); return true; },
                  "particle count N");
  run->add_option("--inner", [&o](const CLI::results_t& r) { o.inner = std::stoi(r.at(0)); return true; },
                  "inner particle count M (npf)");
  run->add_option("--jitter", [&o](const CLI::results_t& r) { o.jitter = std::stod(r.at(0)); return true; },
                  "artificial noise intensity c (rpf/npf)");
  run->add_option("--grid", [&o](const CLI::results_t& r) { o.grid = std::stoi(r.at(0)); return true; },
                  "grid nodes per parameter G (rbpf)");
  run->add_option("--dt", [&o](const CLI::results_t& r) { o.dt = std::stod(r.at(0)); return true; },
                  "inner integration step");
  run->add_option("--obs", [&o](const CLI::results_t& r) { o.obs = r.at(0); return true; },
                  "directory containing observations.csv");

  auto* compare = app.add_subcommand("compare", "run several filters on shared observations");
  std::string manifest_path;
  compare->add_option("--manifest", manifest_path, "comparison manifest")->required();
  compare->add_option("--out", [&o](const CLI::results_t& r) { o.out = r.at(0); return true; },
                      "output directory (overrides manifest)");

  auto* oracle = app.add_subcommand("oracle", "run an exact reference solver");
  std::string oracle_kind;
  oracle->add_option("kind", oracle_kind, "kalman | gridjoint")->required();
  add_common(oracle, true);
  oracle->add_option("--obs", [&o](const CLI::results_t& r) { o.obs = r.at(0); return true; },
                     "directory containing observations.csv");
  oracle->add_option("--grid", [&o](const CLI::results_t& r) { o.grid = std::stoi(r.at(0)); return true; },
                     "grid nodes per axis");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const auto cfg = resolve(config_path, o);
      const auto truth = sdepf::run_simulate(cfg);
      std::cout << "wrote " << truth.observations.size() << " observations to " << cfg.out_dir << "\n";
      return 0;
    }
    if (run->parsed()) {
      const auto cfg = resolve(config_path, o);
      const auto result = sdepf::run_experiment(cfg);
      if (!result.ok) {
        std::cerr << "filter failed: " << result.error << "\n";
        return 1;
      }
      std::cout << "wrote posterior.csv and summary.json to " << cfg.out_dir << " ("
                << result.wall_time_s << " s)\n";
      return 0;
    }
    if (compare->parsed()) {
      auto manifest = sdepf::parse_comparison_manifest(manifest_path);
      if (o.out) manifest.out_dir = *o.out;
      const auto rows = sdepf::compare_filters(manifest);
      std::cout << "wrote " << rows.size() << " rows to "
                << (std::filesystem::path(manifest.out_dir) / "comparison.csv").string() << "\n";
      for (const auto& r : rows)
        if (!r.ok) return 1;
      return 0;
    }
    if (oracle->parsed()) {
      return run_oracle(oracle_kind, resolve(config_path, o));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
