#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <utility>

#include "gman/errors.hpp"
#include "gman/extgnan.hpp"
#include "gman/random.hpp"
#include "oracles.hpp"

using namespace gman;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Mlp identity_1d() {
  Mlp p;
  p.activation = p.output_activation = Activation::identity;
  p.weights = {MatrixXd::Identity(1, 1)};
  p.biases = {VectorXd::Zero(1)};
  return p;
}

ExtGnanParams random_params(const FeaturePartition& features, Rng& rng) {
  ExtGnanParams p = extgnan_init(features, rng.next(), ArchConfig{2, 6});
  for (auto& a : collect_arrays(p))
    for (double& v : a.values) v += rng.uniform(-0.3, 0.3);
  return p;
}

Trajectory random_trajectory(Rng& rng, Index d, Index n) {
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  for (Index k = 0; k < n; ++k) {
    t.push_back(rng.uniform(-2.0, 2.0));
    std::vector<double> row;
    for (Index f = 0; f < d; ++f) row.push_back(rng.uniform(-1.5, 1.5));
    x.push_back(row);
  }
  return make_trajectory("g", t, x);
}

// Every partition of {0..d-1} into blocks, d <= 2.
std::vector<FeaturePartition> all_partitions(Index d) {
  if (d == 1) return {{{0}}};
  return {{{0}, {1}}, {{1}, {0}}, {{0, 1}}};
}

}  // namespace

TEST_CASE("node_repr: single node with unit distance and identity shape") {
  const FeaturePartition features{{0}, {1}};
  const auto g = make_trajectory("g", {0.0}, {{2.0, 3.0}});
  const auto p = passthrough_params(features);
  const VectorXd h = node_repr(g, 0, p, features);
  CHECK(h(0) == 2.0);
  CHECK(h(1) == 3.0);
  CHECK(graph_repr(g, p, features) == h);
}

TEST_CASE("node_repr: constant distance collapses to the feature sum") {
  const FeaturePartition features{{0}, {1}};
  const auto g = make_trajectory("g", {0.0, 1.0}, {{1.0, 2.0}, {4.0, -1.0}});
  const auto p = passthrough_params(features);
  for (Index j = 0; j < 2; ++j) {
    const VectorXd h = node_repr(g, j, p, features);
    CHECK(h(0) == 5.0);
    CHECK(h(1) == 1.0);
  }
  const VectorXd r = graph_repr(g, p, features);
  CHECK(r(0) == 10.0);
  CHECK(r(1) == 2.0);
}

TEST_CASE("node_repr: identity distance weights by signed elapsed time") {
  const FeaturePartition features{{0}};
  ExtGnanParams p{identity_1d(), {identity_1d()}};
  const auto g = make_trajectory("g", {0.0, 2.0}, {{5.0}, {1.0}});
  // node 0 is (t=0, x=5): rho(0) * 5 + rho(2) * 1
  CHECK(node_repr(g, 0, p, features)(0) == 2.0);
  // node 1 is (t=2, x=1): rho(-2) * 5 + rho(0) * 1
  CHECK(node_repr(g, 1, p, features)(0) == -10.0);
}

TEST_CASE("node_repr: errors") {
  const FeaturePartition features{{0}, {1}};
  const auto p = passthrough_params(features);
  const auto g = make_trajectory("g", {0.0}, {{1.0, 2.0}});
  CHECK_THROWS_AS(node_repr(g, 1, p, features), ValidationError);
  CHECK_THROWS_AS(node_repr(g, -1, p, features), ValidationError);
  const auto wide = make_trajectory("g", {0.0}, {{1.0, 2.0, 3.0}});
  CHECK_THROWS_AS(graph_repr(wide, p, features), ValidationError);
  CHECK_THROWS_AS(graph_repr(g, p, FeaturePartition{{0, 1}}), ValidationError);
}

TEST_CASE("xor gadget reproduces the truth table exactly") {
  const FeaturePartition features{{0, 1}};
  const auto p = xor_gadget_params();
  for (const auto& [x1, x2] : oracle::kXorInputs) {
    const auto g = make_trajectory("g", {0.0}, {{double(x1), double(x2)}});
    const double sum = graph_repr(g, p, features).sum();
    CHECK(sum == double(x1 + x2 - 2 * x1 * x2));
  }
}

TEST_CASE("matches the double-loop formula on every small graph shape") {
  Rng rng(17);
  double worst = 0.0;
  for (Index d = 1; d <= 2; ++d)
    for (const auto& features : all_partitions(d))
      for (Index n = 1; n <= 3; ++n)
        for (int rep = 0; rep < 20; ++rep) {
          const auto p = random_params(features, rng);
          const auto g = random_trajectory(rng, d, n);
          for (Index j = 0; j < n; ++j) {
            const VectorXd h = node_repr(g, j, p, features);
            const auto ref = oracle::node_repr_loop(g, j, p, features);
            for (Index c = 0; c < d; ++c)
              worst = std::max(worst, std::abs(h(c) - ref[std::size_t(c)]) / std::max(1.0, std::abs(ref[std::size_t(c)])));
          }
          const VectorXd r = graph_repr(g, p, features);
          const auto ref = oracle::graph_repr_loop(g, p, features);
          for (Index c = 0; c < d; ++c)
            worst = std::max(worst, std::abs(r(c) - ref[std::size_t(c)]) / std::max(1.0, std::abs(ref[std::size_t(c)])));
        }
  CHECK(worst <= 1e-12);
}

TEST_CASE("graph_repr equals the sum of node_repr outputs") {
  Rng rng(3);
  const FeaturePartition features{{1}, {0, 2}};
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_params(features, rng);
    const auto g = random_trajectory(rng, 3, 1 + Index(rng.below(6)));
    VectorXd total = VectorXd::Zero(3);
    for (Index j = 0; j < g.num_nodes(); ++j) total += node_repr(g, j, p, features);
    const VectorXd r = graph_repr(g, p, features);
    CHECK((r - total).norm() <= 1e-12 * std::max(1.0, total.norm()));
  }
}

TEST_CASE("block separability: features outside a block never move it") {
  Rng rng(8);
  const FeaturePartition features{{0, 2}, {1}};
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_params(features, rng);
    const auto g = random_trajectory(rng, 3, 4);
    Trajectory h = g;
    for (Index w = 0; w < h.num_nodes(); ++w) h.features(1, w) += rng.uniform(-3, 3);
    // Layout puts F_0 = {0, 2} in rows 0..1 and F_1 = {1} in row 2.
    const MatrixXd a = node_reprs(g, p, features), b = node_reprs(h, p, features);
    CHECK(a.topRows(2) == b.topRows(2));
    CHECK(a.row(2) != b.row(2));
  }
}

TEST_CASE("graph_repr is bit-identical under node permutation") {
  Rng rng(21);
  const FeaturePartition features{{0}, {1}};
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_params(features, rng);
    const Index n = 1 + Index(rng.below(6));
    std::vector<double> t;
    std::vector<std::vector<double>> x;
    for (Index k = 0; k < n; ++k) {
      t.push_back(double(rng.below(3)));  // repeated timestamps on purpose
      x.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937(unsigned(rep)));
    std::vector<double> t2;
    std::vector<std::vector<double>> x2;
    for (auto k : order) {
      t2.push_back(t[k]);
      x2.push_back(x[k]);
    }
    const VectorXd a = graph_repr(make_trajectory("g", t, x), p, features);
    const VectorXd b = graph_repr(make_trajectory("g", t2, x2), p, features);
    CHECK(a == b);
  }
}

TEST_CASE("time shift leaves representations unchanged") {
  Rng rng(33);
  const FeaturePartition features{{0, 1}};
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_params(features, rng);
    // Dyadic times and integer shifts keep every delta exact.
    std::vector<double> t, shifted;
    std::vector<std::vector<double>> x;
    const double c = double(int(rng.below(200)) - 100);
    for (int k = 0; k < 4; ++k) {
      t.push_back(double(rng.below(64)) / 8.0);
      shifted.push_back(t.back() + c);
      x.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    CHECK(node_reprs(make_trajectory("g", t, x), p, features) ==
          node_reprs(make_trajectory("g", shifted, x), p, features));

    // Arbitrary reals: equal up to rounding of the shifted timestamps.
    std::vector<double> t3, s3;
    for (int k = 0; k < 4; ++k) {
      t3.push_back(rng.uniform(0, 5));
      s3.push_back(t3.back() + 0.1234567);
    }
    const MatrixXd a = node_reprs(make_trajectory("g", t3, x), p, features);
    const MatrixXd b = node_reprs(make_trajectory("g", s3, x), p, features);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("trace agrees with node_reprs and its backward matches finite differences") {
  Rng rng(44);
  const FeaturePartition features{{0}, {1, 2}};
  for (int rep = 0; rep < 10; ++rep) {
    const auto p = random_params(features, rng);
    const auto g = random_trajectory(rng, 3, 1 + Index(rng.below(4)));
    const auto trace = extgnan_trace(g, p, features);
    CHECK(trace.node_reprs == node_reprs(g, p, features));

    VectorXd up(3);
    for (Index i = 0; i < 3; ++i) up(i) = rng.uniform(-1, 1);
    ExtGnanParams grads = p.zeros_like();
    extgnan_backward(trace, p, features, up, grads);

    auto objective = [&](const ExtGnanParams& q) { return graph_repr(g, q, features).dot(up); };
    ExtGnanParams probe = p;
    double worst = 0.0;
    std::vector<ArrayView<double>> probe_views = collect_arrays(probe, "");
    const std::vector<ArrayView<const double>> grad_views = collect_arrays(std::as_const(grads), "");
    for (std::size_t a = 0; a < probe_views.size(); ++a)
      for (std::size_t i = 0; i < probe_views[a].values.size(); ++i) {
        double& slot = probe_views[a].values[i];
        const double saved = slot;
        slot = saved + 1e-5;
        const double up_val = objective(probe);
        slot = saved - 1e-5;
        const double down_val = objective(probe);
        slot = saved;
        const double numeric = (up_val - down_val) / 2e-5;
        const double analytic = grad_views[a].values[i];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
      }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("extgnan_init: shapes, determinism, compatibility") {
  const FeaturePartition features{{0, 2}, {1}};
  const auto p = extgnan_init(features, 5);
  CHECK(p.psi.size() == 2);
  CHECK(p.psi[0].input_dim() == 2);
  CHECK(p.psi[1].output_dim() == 1);
  CHECK(p.rho.num_layers() == std::size_t(kDefaultHiddenLayers + 1));
  CHECK(p == extgnan_init(features, 5));
  CHECK_FALSE(p == extgnan_init(features, 6));
  CHECK_NOTHROW(check_compatible(p, features));
  CHECK_THROWS_AS(check_compatible(p, FeaturePartition{{0, 1, 2}}), ValidationError);
  // rho(0) == 1 at init, so a graph of equal timestamps is not silenced.
  CHECK(mlp_eval(p.rho, Eigen::MatrixXd::Zero(1, 1))(0, 0) == 1.0);
}
