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
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdepf/filters.hpp"
#include "sdepf/models.hpp"
#include "sdepf/observation.hpp"
#include "sdepf/oracle.hpp"
#include "sdepf/random.hpp"
#include "sdepf/sde.hpp"

namespace sdepf {

/// Fully resolved experiment description. Values come from a plain-text
/// key = value config file; command-line flags override file values.
struct ExperimentConfig {
  std::string model = "lorenz63";  // lorenz63 | ou
  double model_sigma = 1.0;
  std::vector<Interval> theta_prior;  // empty -> model default
  std::vector<Interval> x0_prior;     // empty -> model default
  std::vector<double> true_theta;     // empty -> model default
  std::vector<double> true_x0;        // empty -> model default
  double obs_start = 0.05;
  double obs_step = 0.05;
  double obs_end = 10.0;
  std::vector<double> obs_noise = {1.0};  // scalar -> s*I, list -> diagonal
  std::string filter = "rbpf";
  int particles = 2000;
  int inner = 0;
  double jitter = 0.0;
  int grid = 100;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string obs_dir;
  std::string out_dir;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: cannot parse number '" + s + "' for key '" + key + "'");
  }
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) out.push_back(parse_double(part, key));
  return out;
}

// Intervals are written lo:hi and separated by commas, e.g. 5:20, 18:50, 1:8.
inline std::vector<Interval> parse_intervals(const std::string& s, const std::string& key) {
  std::vector<Interval> out;
  for (const auto& part : split(s, ',')) {
    const auto bounds = split(part, ':');
    if (bounds.size() != 2)
      throw std::invalid_argument("config: interval '" + part + "' for key '" + key + "' must be lo:hi");
    out.push_back({parse_double(bounds[0], key), parse_double(bounds[1], key)});
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Applies one key = value assignment to the config. Shared by the file
/// parser and the comparison manifest's inline overrides.
inline void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model") cfg.model = value;
  else if (key == "sigma") cfg.model_sigma = detail::parse_double(value, key);
  else if (key == "theta_prior") cfg.theta_prior = detail::parse_intervals(value, key);
  else if (key == "x0_prior") cfg.x0_prior = detail::parse_intervals(value, key);
  else if (key == "true_theta") cfg.true_theta = detail::parse_double_list(value, key);
  else if (key == "true_x0") cfg.true_x0 = detail::parse_double_list(value, key);
  else if (key == "obs_start") cfg.obs_start = detail::parse_double(value, key);
  else if (key == "obs_step") cfg.obs_step = detail::parse_double(value, key);
  else if (key == "obs_end") cfg.obs_end = detail::parse_double(value, key);
  else if (key == "obs_noise") cfg.obs_noise = detail::parse_double_list(value, key);
  else if (key == "filter") cfg.filter = value;
  else if (key == "particles") cfg.particles = static_cast<int>(detail::parse_double(value, key));
  else if (key == "inner") cfg.inner = static_cast<int>(detail::parse_double(value, key));
  else if (key == "jitter") cfg.jitter = detail::parse_double(value, key);
  else if (key == "grid") cfg.grid = static_cast<int>(detail::parse_double(value, key));
  else if (key == "dt") cfg.dt = detail::parse_double(value, key);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_double(value, key));
  else if (key == "threads") cfg.threads = static_cast<int>(detail::parse_double(value, key));
  else if (key == "obs") cfg.obs_dir = value;
  else if (key == "out") cfg.out_dir = value;
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_entry(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

/// Builds the SDE model the config names, applying prior/sigma overrides.
inline SdeModel build_model(const ExperimentConfig& cfg) {
  SdeModel model;
  if (cfg.model == "lorenz63") {
    model = lorenz63_model(cfg.model_sigma);
  } else if (cfg.model == "ou") {
    model = scalar_ou_model({0.25, 2.25}, cfg.model_sigma, {-1.0, 2.0});
  } else {
    throw std::invalid_argument("config: unknown model '" + cfg.model + "' (expected lorenz63 or ou)");
  }
  if (!cfg.theta_prior.empty()) {
    if (static_cast<int>(cfg.theta_prior.size()) != model.n)
      throw std::invalid_argument("config: theta_prior must list one interval per dimension");
    model.param_support = cfg.theta_prior;
  }
  if (!cfg.x0_prior.empty()) {
    if (static_cast<int>(cfg.x0_prior.size()) != model.n)
      throw std::invalid_argument("config: x0_prior must list one interval per dimension");
    model.state_prior = cfg.x0_prior;
  }
  model.validate();
  return model;
}

inline Eigen::MatrixXd obs_noise_matrix(const ExperimentConfig& cfg, int m) {
  if (cfg.obs_noise.size() == 1) return cfg.obs_noise[0] * Eigen::MatrixXd::Identity(m, m);
  if (static_cast<int>(cfg.obs_noise.size()) != m)
    throw std::invalid_argument("config: obs_noise must be a scalar or one entry per observed dimension");
  Eigen::VectorXd d(m);
  for (int i = 0; i < m; ++i) d(i) = cfg.obs_noise[static_cast<std::size_t>(i)];
  return Eigen::MatrixXd(d.asDiagonal());
}

inline ObservationModel build_obs_model(const ExperimentConfig& cfg, bool allow_singular = false) {
  if (cfg.model == "lorenz63") {
    ObsFn h = [](const Eigen::VectorXd& x) {
      Eigen::VectorXd y(2);
      y << x(0), x(2);
      return y;
    };
    return ObservationModel(std::move(h), 2, obs_noise_matrix(cfg, 2), {}, allow_singular);
  }
  ObsFn h = [](const Eigen::VectorXd& x) { return x; };
  return ObservationModel(std::move(h), 1, obs_noise_matrix(cfg, 1), {}, allow_singular);
}

inline std::vector<double> observation_schedule(const ExperimentConfig& cfg) {
  if (!(cfg.obs_step > 0.0) || !(cfg.obs_start > 0.0) || !(cfg.obs_end >= cfg.obs_start))
    throw std::invalid_argument("config: observation schedule requires 0 < obs_start <= obs_end, obs_step > 0");
  std::vector<double> times;
  for (int k = 0;; ++k) {
    const double t = cfg.obs_start + k * cfg.obs_step;
    if (t > cfg.obs_end + 1e-9 * cfg.obs_step) break;
    times.push_back(t);
  }
  return times;
}

inline Eigen::VectorXd config_vector(const std::vector<double>& values, const Eigen::VectorXd& fallback,
                                     const std::string& key, int n) {
  if (values.empty()) return fallback;
  if (static_cast<int>(values.size()) != n)
    throw std::invalid_argument("config: " + key + " must list one value per dimension");
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = values[static_cast<std::size_t>(i)];
  return v;
}

inline Eigen::VectorXd default_true_theta(const ExperimentConfig& cfg, int n) {
  if (cfg.model == "lorenz63") {
    Eigen::VectorXd v(3);
    v << 10.0, 28.0, 8.0 / 3.0;
    return v;
  }
  return Eigen::VectorXd::Constant(n, 1.0);
}

inline Eigen::VectorXd default_true_x0(const ExperimentConfig& cfg, int n) {
  if (cfg.model == "lorenz63") {
    Eigen::VectorXd v(3);
    v << -6.0, -5.0, 24.5;
    return v;
  }
  return Eigen::VectorXd::Constant(n, 1.0);
}

// ---------------------------------------------------------------------------
// Artifact files
// ---------------------------------------------------------------------------

struct TruthResult {
  std::vector<double> times;  // t0 = 0 plus every observation time
  Eigen::MatrixXd states;     // n x times.size()
  std::vector<ObservationRecord> observations;
};

/// Simulates one truth path from the configured initial state and parameters
/// and observes it on the configured schedule. Deterministic given the seed.
inline TruthResult simulate_truth(const ExperimentConfig& cfg) {
  const SdeModel model = build_model(cfg);
  const ObservationModel obs_model = build_obs_model(cfg, /*allow_singular=*/true);
  const std::vector<double> schedule = observation_schedule(cfg);
  const Eigen::VectorXd theta = config_vector(cfg.true_theta, default_true_theta(cfg, model.n), "true_theta", model.n);
  const Eigen::VectorXd x0 = config_vector(cfg.true_x0, default_true_x0(cfg, model.n), "true_x0", model.n);

  RngStream root(cfg.seed);
  RngStream path_rng = root.child(100);
  RngStream noise_rng = root.child(101);

  TruthResult out;
  out.times.reserve(schedule.size() + 1);
  out.states.resize(model.n, static_cast<int>(schedule.size()) + 1);
  out.times.push_back(0.0);
  out.states.col(0) = x0;

  Eigen::VectorXd x = x0;
  double t = 0.0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    x = em_endpoint(model, x, theta, t, schedule[k], cfg.dt, path_rng);
    t = schedule[k];
    out.times.push_back(t);
    out.states.col(static_cast<int>(k) + 1) = x;
    out.observations.push_back({t, observe(obs_model, x, noise_rng)});
  }
  return out;
}

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  return out;
}

}  // namespace detail

inline void write_truth_csv(const std::filesystem::path& path, const TruthResult& truth) {
  auto out = detail::open_for_write(path);
  const int n = static_cast<int>(truth.states.rows());
  out << "t";
  for (int i = 0; i < n; ++i) out << ",x" << (i + 1);
  out << "\n";
  for (std::size_t k = 0; k < truth.times.size(); ++k) {
    out << detail::format_double(truth.times[k]);
    for (int i = 0; i < n; ++i) out << "," << detail::format_double(truth.states(i, static_cast<int>(k)));
    out << "\n";
  }
}

inline void write_observations_csv(const std::filesystem::path& path,
                                   const std::vector<ObservationRecord>& observations) {
  auto out = detail::open_for_write(path);
  const int m = observations.empty() ? 0 : static_cast<int>(observations.front().y.size());
  out << "t";
  for (int i = 0; i < m; ++i) out << ",y" << (i + 1);
  out << "\n";
  for (const auto& o : observations) {
    out << detail::format_double(o.t);
    for (int i = 0; i < m; ++i) out << "," << detail::format_double(o.y(i));
    out << "\n";
  }
}

inline std::vector<ObservationRecord> read_observations_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observations file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty observations file: " + path.string());
  std::vector<ObservationRecord> out;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto parts = detail::split(line, ',');
    if (parts.size() < 2) throw std::runtime_error("malformed observation row in " + path.string());
    ObservationRecord rec;
    rec.t = detail::parse_double(parts[0], "t");
    rec.y.resize(static_cast<int>(parts.size()) - 1);
    for (std::size_t i = 1; i < parts.size(); ++i)
      rec.y(static_cast<int>(i) - 1) = detail::parse_double(parts[i], "y");
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<Eigen::VectorXd> read_truth_csv(const std::filesystem::path& path,
                                                   std::vector<double>& times) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty truth file: " + path.string());
  std::vector<Eigen::VectorXd> states;
  times.clear();
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto parts = detail::split(line, ',');
    times.push_back(detail::parse_double(parts[0], "t"));
    Eigen::VectorXd x(static_cast<int>(parts.size()) - 1);
    for (std::size_t i = 1; i < parts.size(); ++i)
      x(static_cast<int>(i) - 1) = detail::parse_double(parts[i], "x");
    states.push_back(std::move(x));
  }
  return states;
}

/// posterior.csv: t, ess, per-dimension state mean/std, per-dimension
/// parameter mean/std. The first row is the prior summary at t = 0.
inline void write_posterior_csv(const std::filesystem::path& path,
                                const std::vector<PosteriorSummary>& summaries) {
  auto out = detail::open_for_write(path);
  if (summaries.empty()) throw std::invalid_argument("write_posterior_csv: no summaries");
  const int n = static_cast<int>(summaries.front().state_mean.size());
  const int d = static_cast<int>(summaries.front().param_mean.size());
  out << "t,ess";
  for (int i = 0; i < n; ++i) out << ",x" << (i + 1) << "_mean,x" << (i + 1) << "_std";
  for (int i = 0; i < d; ++i) out << ",theta" << (i + 1) << "_mean,theta" << (i + 1) << "_std";
  out << "\n";
  for (const auto& s : summaries) {
    out << detail::format_double(s.t) << "," << detail::format_double(s.ess);
    for (int i = 0; i < n; ++i)
      out << "," << detail::format_double(s.state_mean(i)) << "," << detail::format_double(s.state_std(i));
    for (int i = 0; i < d; ++i)
      out << "," << detail::format_double(s.param_mean(i)) << "," << detail::format_double(s.param_std(i));
    out << "\n";
  }
}

inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["model"] = cfg.model;
  j["sigma"] = cfg.model_sigma;
  auto intervals = [](const std::vector<Interval>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& iv : v) a.push_back({iv.lo, iv.hi});
    return a;
  };
  j["theta_prior"] = intervals(cfg.theta_prior);
  j["x0_prior"] = intervals(cfg.x0_prior);
  j["true_theta"] = cfg.true_theta;
  j["true_x0"] = cfg.true_x0;
  j["obs_start"] = cfg.obs_start;
  j["obs_step"] = cfg.obs_step;
  j["obs_end"] = cfg.obs_end;
  j["obs_noise"] = cfg.obs_noise;
  j["filter"] = cfg.filter;
  j["particles"] = cfg.particles;
  j["inner"] = cfg.inner;
  j["jitter"] = cfg.jitter;
  j["grid"] = cfg.grid;
  j["dt"] = cfg.dt;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["obs"] = cfg.obs_dir;
  j["out"] = cfg.out_dir;
  return j;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

struct RunResult {
  bool ok = false;
  std::string error;
  std::vector<PosteriorSummary> summaries;
  double wall_time_s = 0.0;
};

inline FilterConfig filter_config_from(const ExperimentConfig& cfg) {
  FilterConfig fc;
  fc.particles = cfg.particles;
  fc.inner_particles = cfg.inner;
  fc.jitter = cfg.jitter;
  fc.grid_nodes = cfg.grid;
  fc.dt = cfg.dt;
  fc.threads = cfg.threads;
  return fc;
}

/// marginals.csv: final-time mixture parameter marginals on the grid nodes
/// (RB-PF only): dim, node, mass.
inline void write_marginals_csv(const std::filesystem::path& path, const SdeModel& model,
                                const PosteriorSummary& final_summary, int grid_nodes) {
  if (final_summary.param_marginal.empty()) return;
  auto out = detail::open_for_write(path);
  out << "dim,theta,mass\n";
  for (std::size_t i = 0; i < final_summary.param_marginal.size(); ++i) {
    const Interval support = model.param_support[i];
    const Eigen::VectorXd nodes = Eigen::VectorXd::LinSpaced(grid_nodes, support.lo, support.hi);
    const Eigen::VectorXd& mass = final_summary.param_marginal[i];
    for (int g = 0; g < mass.size(); ++g) {
      out << (i + 1) << "," << detail::format_double(nodes(g)) << "," << detail::format_double(mass(g))
          << "\n";
    }
  }
}

/// Runs the configured filter against observations already on disk and writes
/// posterior.csv and summary.json into cfg.out_dir. Returns ok = false (after
/// recording the failure in summary.json) when the filter aborts.
inline RunResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.obs_dir.empty()) throw std::invalid_argument("run_experiment: config needs an observations directory");
  if (cfg.out_dir.empty()) throw std::invalid_argument("run_experiment: config needs an output directory");
  const SdeModel model = build_model(cfg);
  const ObservationModel obs_model = build_obs_model(cfg);
  const auto observations = read_observations_csv(std::filesystem::path(cfg.obs_dir) / "observations.csv");
  const FilterKind kind = filter_kind_from_string(cfg.filter);
  FilterConfig fc = filter_config_from(cfg);
  fc.keep_param_marginals = kind == FilterKind::rbpf;

  std::filesystem::create_directories(cfg.out_dir);
  RunResult result;
  const auto t_begin = std::chrono::steady_clock::now();
  try {
    result.summaries = run_filter(kind, model, obs_model, fc, observations, cfg.seed);
    result.ok = true;
  } catch (const FilterError& e) {
    result.error = e.what();
  }
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

  nlohmann::json summary;
  summary["status"] = result.ok ? "ok" : "failed";
  if (!result.ok) summary["error"] = result.error;
  summary["config"] = config_json(cfg);
  summary["observations"] = observations.size();
  summary["wall_time_s"] = result.wall_time_s;
  if (result.ok) {
    const PosteriorSummary& last = result.summaries.back();
    nlohmann::json fin;
    fin["t"] = last.t;
    fin["state_mean"] = std::vector<double>(last.state_mean.data(), last.state_mean.data() + last.state_mean.size());
    fin["state_std"] = std::vector<double>(last.state_std.data(), last.state_std.data() + last.state_std.size());
    fin["param_mean"] = std::vector<double>(last.param_mean.data(), last.param_mean.data() + last.param_mean.size());
    fin["param_std"] = std::vector<double>(last.param_std.data(), last.param_std.data() + last.param_std.size());
    fin["ess"] = last.ess;
    if (last.distinct_theta >= 0) fin["distinct_theta"] = last.distinct_theta;
    summary["final"] = fin;
    write_posterior_csv(std::filesystem::path(cfg.out_dir) / "posterior.csv", result.summaries);
    write_marginals_csv(std::filesystem::path(cfg.out_dir) / "marginals.csv", model, last, fc.grid_nodes);
  }
  auto out = detail::open_for_write(std::filesystem::path(cfg.out_dir) / "summary.json");
  out << summary.dump(2) << "\n";
  return result;
}

/// simulate: writes truth.csv and observations.csv for the configured model.
inline TruthResult run_simulate(const ExperimentConfig& cfg) {
  if (cfg.out_dir.empty()) throw std::invalid_argument("simulate: config needs an output directory");
  const TruthResult truth = simulate_truth(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  write_truth_csv(std::filesystem::path(cfg.out_dir) / "truth.csv", truth);
  write_observations_csv(std::filesystem::path(cfg.out_dir) / "observations.csv", truth.observations);
  return truth;
}

// ---------------------------------------------------------------------------
// Filter comparison (shared observations, matched compute)
// ---------------------------------------------------------------------------

struct ComparisonEntry {
  ExperimentConfig config;
};

struct ComparisonManifest {
  std::string obs_dir;
  std::string out_dir;
  ExperimentConfig base;
  std::vector<ComparisonEntry> entries;
};

/// Manifest format: the usual config keys apply to every run; each
/// `run = <filter> [key=value ...]` line adds one run, and a comma list in a
/// value (e.g. jitter=0,1e-4,1e-3) sweeps that key over several runs.
inline ComparisonManifest parse_comparison_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  ComparisonManifest manifest;
  std::vector<std::string> run_lines;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "run") {
      run_lines.push_back(value);
    } else if (key == "config") {
      manifest.base = parse_config_file(value);
    } else {
      apply_config_entry(manifest.base, key, value);
    }
  }
  manifest.obs_dir = manifest.base.obs_dir;
  manifest.out_dir = manifest.base.out_dir;
  if (run_lines.empty()) throw std::invalid_argument("manifest: no run lines");
  if (manifest.obs_dir.empty()) throw std::invalid_argument("manifest: missing obs directory");

  for (const auto& rl : run_lines) {
    std::stringstream ss(rl);
    std::string token;
    ss >> token;
    ExperimentConfig cfg = manifest.base;
    cfg.filter = token;
    filter_kind_from_string(token);  // validate
    std::vector<ExperimentConfig> expanded{cfg};
    while (ss >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("manifest: run override '" + token + "' must be key=value");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      if (key == "obs")
        throw std::invalid_argument("manifest: runs must share the manifest's observations");
      const auto sweep = detail::split(value, ',');
      std::vector<ExperimentConfig> next;
      for (const auto& base : expanded) {
        for (const auto& v : sweep) {
          ExperimentConfig c = base;
          apply_config_entry(c, key, v);
          next.push_back(std::move(c));
        }
      }
      expanded.swap(next);
    }
    for (auto& c : expanded) manifest.entries.push_back({std::move(c)});
  }
  return manifest;
}

struct ComparisonRow {
  std::string filter;
  int particles = 0;
  int inner = 0;
  double jitter = 0.0;
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  bool ok = false;
  Eigen::VectorXd truth;
  Eigen::VectorXd mean;
  Eigen::VectorXd std_dev;
  int distinct_theta = -1;

  bool all_within_one_std() const {
    for (int i = 0; i < truth.size(); ++i)
      if (std::abs(mean(i) - truth(i)) > std_dev(i)) return false;
    return true;
  }
};

inline void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows) {
  auto out = detail::open_for_write(path);
  const int d = rows.empty() ? 0 : static_cast<int>(rows.front().truth.size());
  out << "filter,particles,inner,jitter,seed,ok,wall_time_s";
  for (int i = 0; i < d; ++i) {
    out << ",theta" << (i + 1) << "_true,theta" << (i + 1) << "_mean,theta" << (i + 1) << "_std,theta"
        << (i + 1) << "_abs_err";
  }
  out << ",all_within_one_std,distinct_theta\n";
  for (const auto& r : rows) {
    out << r.filter << "," << r.particles << "," << r.inner << "," << detail::format_double(r.jitter) << ","
        << r.seed << "," << (r.ok ? 1 : 0) << "," << detail::format_double(r.wall_time_s);
    for (int i = 0; i < d; ++i) {
      out << "," << detail::format_double(r.truth(i)) << "," << detail::format_double(r.mean(i)) << ","
          << detail::format_double(r.std_dev(i)) << ","
          << detail::format_double(std::abs(r.mean(i) - r.truth(i)));
    }
    out << "," << (r.all_within_one_std() ? 1 : 0) << "," << r.distinct_theta << "\n";
  }
}

/// Runs every manifest entry against the shared observations and writes
/// comparison.csv: per run, the final-time parameter estimates, their
/// absolute errors against the configured truth, the one-std coverage flag
/// and the wall time.
inline std::vector<ComparisonRow> compare_filters(const ComparisonManifest& manifest) {
  if (manifest.out_dir.empty()) throw std::invalid_argument("compare: manifest needs an out directory");
  const auto observations =
      read_observations_csv(std::filesystem::path(manifest.obs_dir) / "observations.csv");
  std::vector<ComparisonRow> rows;
  for (const auto& entry : manifest.entries) {
    const ExperimentConfig& cfg = entry.config;
    const SdeModel model = build_model(cfg);
    const ObservationModel obs_model = build_obs_model(cfg);
    const FilterKind kind = filter_kind_from_string(cfg.filter);
    const FilterConfig fc = filter_config_from(cfg);

    ComparisonRow row;
    row.filter = cfg.filter;
    row.particles = cfg.particles;
    row.inner = kind == FilterKind::npf ? fc.inner() : 0;
    row.jitter = cfg.jitter;
    row.seed = cfg.seed;
    row.truth = config_vector(cfg.true_theta, default_true_theta(cfg, model.n), "true_theta", model.n);
    const auto t_begin = std::chrono::steady_clock::now();
    try {
      const auto summaries = run_filter(kind, model, obs_model, fc, observations, cfg.seed);
      const PosteriorSummary& last = summaries.back();
      row.mean = last.param_mean;
      row.std_dev = last.param_std;
      row.distinct_theta = last.distinct_theta;
      row.ok = true;
    } catch (const FilterError&) {
      row.mean = Eigen::VectorXd::Constant(model.n, std::numeric_limits<double>::quiet_NaN());
      row.std_dev = row.mean;
    }
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    rows.push_back(std::move(row));
  }
  std::filesystem::create_directories(manifest.out_dir);
  write_comparison_csv(std::filesystem::path(manifest.out_dir) / "comparison.csv", rows);
  return rows;
}

}  // namespace sdepf
