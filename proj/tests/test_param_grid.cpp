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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "sdepf/models.hpp"
#include "sdepf/oracle.hpp"
#include "sdepf/param_grid.hpp"

using namespace sdepf;
using Ref = const Eigen::Ref<const Eigen::VectorXd>&;

namespace {

PathSegment make_segment(double t0, double t1, double dt, const std::vector<double>& xs) {
  PathSegment seg;
  seg.t0 = t0;
  seg.t1 = t1;
  seg.dt = dt;
  seg.states.resize(1, static_cast<int>(xs.size()));
  for (std::size_t k = 0; k < xs.size(); ++k) seg.states(0, static_cast<int>(k)) = xs[k];
  return seg;
}

SdeModel one_dim_model(DriftFn f, double sigma, Interval support = {0.0, 1.0}) {
  std::vector<DriftFn> drift{std::move(f)};
  Eigen::VectorXd s(1);
  s << sigma;
  return SdeModel(1, std::move(drift), std::move(s), {support});
}

// Piecewise-constant density of a grid at theta (cells are node +- w/2,
// truncated at the support).
double grid_density(const ParameterGrid& grid, const Eigen::VectorXd& probs, double theta) {
  const double w = grid.cell_width();
  int g = static_cast<int>(std::lround((theta - grid.support_lo()) / w));
  g = std::clamp(g, 0, grid.size() - 1);
  return probs(g) / grid.cell_measure(g);
}

// Total variation between the piecewise-constant densities of two grids over
// the shared support, integrated over the union cell partition.
double piecewise_tv(const ParameterGrid& a, const ParameterGrid& b) {
  const Eigen::VectorXd pa = a.probabilities();
  const Eigen::VectorXd pb = b.probabilities();
  std::vector<double> edges{a.support_lo(), a.support_hi()};
  for (int g = 0; g < a.size(); ++g) edges.push_back(a.node(g) + 0.5 * a.cell_width());
  for (int g = 0; g < b.size(); ++g) edges.push_back(b.node(g) + 0.5 * b.cell_width());
  std::sort(edges.begin(), edges.end());
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double lo = std::max(edges[i], a.support_lo());
    const double hi = std::min(edges[i + 1], a.support_hi());
    if (hi <= lo) continue;
    const double mid = 0.5 * (lo + hi);
    tv += 0.5 * std::abs(grid_density(a, pa, mid) - grid_density(b, pb, mid)) * (hi - lo);
  }
  return tv;
}

}  // namespace

TEST_CASE("uniform grid over [5,20] with 4 nodes") {
  const ParameterGrid g = ParameterGrid::uniform({5.0, 20.0}, 4);
  CHECK(g.size() == 4);
  CHECK(g.node(0) == 5.0);
  CHECK(g.node(1) == 10.0);
  CHECK(g.node(2) == 15.0);
  CHECK(g.node(3) == 20.0);
  for (int i = 0; i < 4; ++i) CHECK(g.log_density(i) == 0.0);
  CHECK(g.cell_width() == 5.0);
}

TEST_CASE("uniform grid mean sits at the support midpoint") {
  for (int nodes : {2, 3, 10, 101}) {
    const ParameterGrid g = ParameterGrid::uniform({18.0, 50.0}, nodes);
    const auto m = g.moments();
    CHECK(std::abs(m.mean - 34.0) <= 0.5 * g.cell_width());
    CHECK(m.mean == doctest::Approx(34.0).epsilon(1e-12));
  }
}

TEST_CASE("two-node grid uses exactly the endpoints") {
  const ParameterGrid g = ParameterGrid::uniform({1.25, 7.5}, 2);
  CHECK(g.node(0) == 1.25);
  CHECK(g.node(1) == 7.5);
}

TEST_CASE("grid construction rejects bad input") {
  CHECK_THROWS_AS(ParameterGrid::uniform({1.0, 2.0}, 1), std::invalid_argument);
  CHECK_THROWS_AS(ParameterGrid::uniform({2.0, 2.0}, 4), std::invalid_argument);
  CHECK_THROWS_AS(ParameterGrid::uniform({3.0, 2.0}, 4), std::invalid_argument);
}

TEST_CASE("zakai update with zero drift leaves the log-density untouched") {
  const SdeModel model = one_dim_model([](double, Ref) { return 0.0; }, 1.0);
  ParameterGrid g = ParameterGrid::uniform({0.0, 1.0}, 17);
  const PathSegment seg = make_segment(0.0, 0.3, 0.1, {1.0, 1.5, 0.7, 2.0});
  const Eigen::VectorXd before = g.log_density();
  g.zakai_update(model, 0, seg);
  CHECK(g.log_density() == before);
}

TEST_CASE("theta-independent drift cancels out of the normalized density") {
  // Perturb the grid with a theta-dependent update first, then verify a
  // theta-free drift changes nothing after normalization.
  const SdeModel dependent = one_dim_model([](double th, Ref x) { return -th * x(0); }, 0.7);
  const SdeModel constant = one_dim_model([](double, Ref x) { return std::sin(x(0)) + 2.0; }, 0.7);
  ParameterGrid g = ParameterGrid::uniform({0.2, 2.2}, 33);
  const PathSegment warp = make_segment(0.0, 0.2, 0.1, {1.0, 0.8, 0.9});
  g.zakai_update(dependent, 0, warp);
  const Eigen::VectorXd before = g.probabilities();
  const PathSegment seg = make_segment(0.2, 0.5, 0.1, {0.9, 1.4, 1.1, 1.3});
  g.zakai_update(constant, 0, seg);
  const Eigen::VectorXd after = g.probabilities();
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zakai posterior matches the conjugate closed form on an OU path") {
  const double sigma = 0.5;
  const Interval support{0.0, 3.0};
  const SdeModel model = scalar_ou_model(support, sigma, {0.5, 1.5});
  Eigen::VectorXd x0(1), theta(1);
  x0 << 1.0;
  theta << 1.5;
  RngStream rng(314);
  const PathSegment path = simulate_interval(model, x0, theta, 0.0, 5.0, 1e-3, rng);

  ParameterGrid grid = ParameterGrid::uniform(support, 400);
  grid.zakai_update(model, 0, path);

  const TruncatedGaussian post = conjugate_posterior(path, [](double x) { return -x; }, sigma, support);
  CHECK_FALSE(post.flat);
  CHECK(post.mean == doctest::Approx(1.5).epsilon(0.5));  // near the true parameter
  const Eigen::VectorXd oracle_masses = truncated_gaussian_cell_masses(post, grid.nodes());
  const double tv = total_variation(grid.probabilities(), oracle_masses);
  CHECK(tv <= 1e-3);
}

TEST_CASE("conjugate-oracle equivalence holds for several drifts linear in theta") {
  RngStream root(2718);
  const Interval support{-1.0, 2.0};
  const std::vector<std::function<double(double)>> gs = {
      [](double x) { return x; },
      [](double x) { return std::sin(x); },
      [](double x) { return x * x - 0.5; },
  };
  for (std::size_t which = 0; which < gs.size(); ++which) {
    const auto& g = gs[which];
    const double sigma = 0.8;
    const SdeModel model = one_dim_model([g](double th, Ref x) { return th * g(x(0)); }, sigma, support);
    Eigen::VectorXd x0(1), theta(1);
    x0 << 0.7;
    theta << 0.5;
    RngStream rng = root.child(which);
    const PathSegment path = simulate_interval(model, x0, theta, 0.0, 2.0, 1e-3, rng);
    ParameterGrid grid = ParameterGrid::uniform(support, 400);
    grid.zakai_update(model, 0, path);
    const TruncatedGaussian post = conjugate_posterior(path, g, sigma, support);
    const Eigen::VectorXd oracle_masses = truncated_gaussian_cell_masses(post, grid.nodes());
    CHECK(total_variation(grid.probabilities(), oracle_masses) <= 1e-3);
  }
}

TEST_CASE("updating over two adjoining segments is bit-identical to one update") {
  // Binary step size keeps the split point exactly on the inner grid.
  const double dt = 0x1.0p-10;
  const int steps = 200, split = 100;
  const SdeModel model = one_dim_model([](double th, Ref x) { return -th * x(0); }, 0.6, {0.0, 2.0});
  Eigen::VectorXd x0(1), theta(1);
  x0 << 1.2;
  theta << 0.9;
  RngStream rng(99);
  const PathSegment full = simulate_interval(model, x0, theta, 0.0, steps * dt, dt, rng);
  REQUIRE(full.step_count() == steps);

  PathSegment first = make_segment(0.0, split * dt, dt, {});
  first.states = full.states.leftCols(split + 1);
  PathSegment second = make_segment(split * dt, steps * dt, dt, {});
  second.states = full.states.rightCols(steps - split + 1);

  ParameterGrid one = ParameterGrid::uniform({0.0, 2.0}, 129);
  ParameterGrid two = one;
  one.zakai_update(model, 0, full);
  two.zakai_update(model, 0, first);
  two.zakai_update(model, 0, second);
  CHECK(one.log_density() == two.log_density());
  CHECK(one.probabilities() == two.probabilities());
}

TEST_CASE("doubling the grid converges to the fine-grid posterior") {
  const double sigma = 0.5;
  const Interval support{0.0, 3.0};
  const SdeModel model = scalar_ou_model(support, sigma, {0.5, 1.5});
  Eigen::VectorXd x0(1), theta(1);
  x0 << 1.0;
  theta << 1.2;
  RngStream rng(41);
  const PathSegment path = simulate_interval(model, x0, theta, 0.0, 3.0, 1e-3, rng);

  ParameterGrid reference = ParameterGrid::uniform(support, 3200);
  reference.zakai_update(model, 0, path);

  double prev_tv = std::numeric_limits<double>::infinity();
  for (int nodes : {50, 100, 200, 400, 800}) {
    ParameterGrid g = ParameterGrid::uniform(support, nodes);
    g.zakai_update(model, 0, path);
    const double tv = piecewise_tv(g, reference);
    CHECK(tv < prev_tv);
    prev_tv = tv;
  }
}

TEST_CASE("sampling a degenerate grid returns its node") {
  const ParameterGrid g = ParameterGrid::degenerate(2.5);
  RngStream rng(1);
  for (int i = 0; i < 100; ++i) CHECK(g.sample(rng) == 2.5);
  const auto m = g.moments();
  CHECK(m.mean == 2.5);
  CHECK(m.std == 0.0);
}

TEST_CASE("an overwhelming update turns the grid into a point mass") {
  const SdeModel model = one_dim_model([](double th, Ref) { return th; }, 1.0);
  ParameterGrid g = ParameterGrid::uniform({0.0, 1.0}, 5);
  // Exponent ~ 1e4 * theta: every node except theta = 1 underflows to zero.
  const PathSegment seg = make_segment(0.0, 1e-3, 1e-3, {0.0, 10000.0});
  g.zakai_update(model, 0, seg);
  const Eigen::VectorXd p = g.probabilities();
  CHECK(p(4) == 1.0);
  CHECK(p.head(4).cwiseAbs().maxCoeff() == 0.0);
  RngStream rng(6);
  for (int i = 0; i < 200; ++i) CHECK(g.sample(rng) >= 1.0 - 0.5 * g.cell_width());
  const auto m = g.moments();
  CHECK(m.mean == 1.0);
  CHECK(m.std == 0.0);
}

TEST_CASE("sampling a uniform grid reproduces the uniform prior (KS test)") {
  const Interval support{2.0, 5.0};
  const ParameterGrid g = ParameterGrid::uniform(support, 100);
  RngStream rng(2025);
  const int n = 100000;
  std::vector<double> draws(n);
  for (int i = 0; i < n; ++i) {
    const double v = g.sample(rng);
    CHECK(v >= support.lo);
    CHECK(v <= support.hi);
    draws[static_cast<std::size_t>(i)] = v;
  }
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double f = (draws[static_cast<std::size_t>(i)] - support.lo) / support.width();
    ks = std::max(ks, std::abs((i + 1.0) / n - f));
    ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
  }
  CHECK(ks < 1.628 / std::sqrt(static_cast<double>(n)));  // alpha = 0.01
}

TEST_CASE("two-node grid with masses (2/3, 1/3) is sampled in proportion") {
  const SdeModel model = one_dim_model([](double th, Ref) { return th; }, 1.0);
  ParameterGrid g = ParameterGrid::uniform({0.0, 1.0}, 2);
  // exponent(theta) = theta * dx - theta^2 * dt / 2; dx chosen so that
  // exponent(1) = -ln 2, i.e. node 0 carries twice the density of node 1.
  const double dx = 0.05 - std::log(2.0);
  const PathSegment seg = make_segment(0.0, 0.1, 0.1, {0.0, dx});
  g.zakai_update(model, 0, seg);
  const Eigen::VectorXd p = g.probabilities();
  CHECK(p(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  RngStream rng(512);
  const int n = 100000;
  int low_cell = 0;
  for (int i = 0; i < n; ++i)
    if (g.sample(rng) < 0.5) ++low_cell;
  const double freq = static_cast<double>(low_cell) / n;
  const double sd = std::sqrt((2.0 / 3.0) * (1.0 / 3.0) / n);
  CHECK(std::abs(freq - 2.0 / 3.0) < 3.0 * sd);
}

TEST_CASE("moments of a symmetric two-point grid") {
  const ParameterGrid g = ParameterGrid::uniform({1.0, 3.0}, 2);
  CHECK(g.moments().mean == 2.0);
}

TEST_CASE("moments of a uniform grid over [1,8]") {
  const ParameterGrid g = ParameterGrid::uniform({1.0, 8.0}, 100);
  const auto m = g.moments();
  CHECK(std::abs(m.mean - 4.5) <= 0.5 * g.cell_width());
  CHECK(std::abs(m.std - std::sqrt(49.0 / 12.0)) <= g.cell_width());
}

TEST_CASE("normalization pipeline stays consistent under random updates") {
  RngStream root(777);
  for (int trial = 0; trial < 1000; ++trial) {
    RngStream rng = root.child(static_cast<std::uint64_t>(trial));
    const double lo = 4.0 * rng.normal();
    const Interval support{lo, lo + 0.5 + 3.0 * rng.uniform()};
    const int nodes = 2 + static_cast<int>(rng.uniform() * 63);
    const double sigma = 0.3 + rng.uniform();
    const SdeModel model = one_dim_model([](double th, Ref x) { return th * x(0); }, sigma, support);
    ParameterGrid g = ParameterGrid::uniform(support, nodes);
    const int updates = 1 + static_cast<int>(rng.uniform() * 3);
    double t = 0.0;
    for (int u = 0; u < updates; ++u) {
      std::vector<double> xs(4);
      xs[0] = rng.normal();
      for (int k = 1; k < 4; ++k) xs[static_cast<std::size_t>(k)] = xs[static_cast<std::size_t>(k - 1)] + 0.3 * rng.normal();
      g.zakai_update(model, 0, make_segment(t, t + 0.3, 0.1, xs));
      t += 0.3;
    }
    const Eigen::VectorXd p = g.probabilities();
    CHECK(std::abs(p.sum() - 1.0) < 1e-10);
    CHECK(g.log_density().maxCoeff() == 0.0);
    // Converting cell probabilities back to a density integrates to one.
    double integral = 0.0;
    for (int i = 0; i < g.size(); ++i) integral += p(i);
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("zakai update error paths") {
  const SdeModel model = one_dim_model([](double th, Ref) { return 1.0 / (th - 0.5); }, 1.0);
  ParameterGrid g = ParameterGrid::uniform({0.0, 1.0}, 3);  // middle node is exactly 0.5
  const PathSegment seg = make_segment(0.0, 0.1, 0.1, {0.0, 0.1});
  CHECK_THROWS_AS(g.zakai_update(model, 0, seg), GridNumericsError);
  try {
    ParameterGrid g2 = ParameterGrid::uniform({0.0, 1.0}, 3);
    g2.zakai_update(model, 0, seg);
  } catch (const GridNumericsError& e) {
    const std::string what = e.what();
    CHECK(what.find("node 1") != std::string::npos);
    CHECK(what.find("step 0") != std::string::npos);
  }

  const SdeModel fine = one_dim_model([](double, Ref) { return 0.0; }, 1.0);
  ParameterGrid g3 = ParameterGrid::uniform({0.0, 1.0}, 3);
  CHECK_THROWS_AS(g3.zakai_update(fine, 2, seg), std::out_of_range);

  std::vector<DriftFn> drift{[](double, Ref) { return 0.0; }};
  const SdeModel zero_sigma(1, std::move(drift), Eigen::VectorXd::Zero(1), {{0.0, 1.0}});
  ParameterGrid g4 = ParameterGrid::uniform({0.0, 1.0}, 3);
  CHECK_THROWS_AS(g4.zakai_update(zero_sigma, 0, seg), std::invalid_argument);
}

TEST_CASE("marginal set samples every dimension from its own grid") {
  const SdeModel lorenz = lorenz63_model();
  const MarginalSet ms = MarginalSet::uniform_priors(lorenz, 25);
  CHECK(ms.dims() == 3);
  RngStream rng(88);
  for (int i = 0; i < 500; ++i) {
    const Eigen::VectorXd theta = ms.sample(rng);
    CHECK(theta(0) >= 5.0);
    CHECK(theta(0) <= 20.0);
    CHECK(theta(1) >= 18.0);
    CHECK(theta(1) <= 50.0);
    CHECK(theta(2) >= 1.0);
    CHECK(theta(2) <= 8.0);
  }
}
