#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gman/data.hpp"
#include "gman/errors.hpp"
#include "oracles.hpp"

using namespace gman;

namespace {

bool has_violation(const std::vector<Violation>& v, Violation::Kind kind, const std::string& locus) {
  for (const auto& x : v)
    if (x.kind == kind && x.locus == locus) return true;
  return false;
}

TrajectorySet one_graph_sample(std::string id, std::vector<std::vector<double>> x) {
  std::vector<double> t;
  for (std::size_t k = 0; k < x.size(); ++k) t.push_back(double(k));
  return make_trajectory_set(std::move(id), 0, {make_trajectory("g", t, x)});
}

}  // namespace

TEST_CASE("time_delta is signed") {
  CHECK(time_delta(2.0, 0.0) == 2.0);
  CHECK(time_delta(0.0, 3.5) == -3.5);
  const auto g = make_trajectory("hr", {0.0, 1.25}, {{1.0}, {2.0}});
  CHECK(time_delta(g, 1, 1) == 0.0);
  CHECK(time_delta(g, 0, 1) == -1.25);
}

TEST_CASE("make_trajectory: validation") {
  CHECK_THROWS_AS(make_trajectory("a", {}, {}), ValidationError);
  CHECK_THROWS_AS(make_trajectory("a", {0.0, 1.0}, {{1.0}}), ValidationError);
  CHECK_THROWS_AS(make_trajectory("a", {0.0, 1.0}, {{1.0}, {1.0, 2.0}}), ValidationError);
  CHECK_THROWS_AS(make_trajectory("a", {std::nan("")}, {{1.0}}), ValidationError);
  CHECK_THROWS_AS(make_trajectory("a", {0.0}, {{INFINITY}}), ValidationError);
  CHECK_THROWS_AS(make_trajectory("a", {0.0}, {{}}), ValidationError);
}

TEST_CASE("make_trajectory: canonical order makes storage permutation independent") {
  const auto a = make_trajectory("a", {2.0, 0.0, 1.0, 1.0}, {{3.0}, {1.0}, {5.0}, {2.0}});
  const auto b = make_trajectory("a", {1.0, 1.0, 0.0, 2.0}, {{2.0}, {5.0}, {1.0}, {3.0}});
  CHECK(a == b);
  CHECK(a.times(0) == 0.0);
  CHECK(a.times(3) == 2.0);
  CHECK(a.features(0, 1) == 2.0);  // tie at t = 1 broken by feature value
  CHECK(a.features(0, 2) == 5.0);
}

TEST_CASE("make_static_trajectory is a single node at zero") {
  const auto s = make_static_trajectory("static", {0.5, -1.0});
  CHECK(s.num_nodes() == 1);
  CHECK(s.times(0) == 0.0);
  CHECK(s.feature_dim() == 2);
}

TEST_CASE("make_trajectory_set: sorting, uniqueness, dimension") {
  auto x = make_trajectory("x", {0.0}, {{1.0}});
  auto a = make_trajectory("a", {0.0}, {{2.0}});
  const auto s = make_trajectory_set("s", 1, {x, a});
  CHECK(s.trajectories[0].channel_id == "a");
  CHECK(s.find("x") != nullptr);
  CHECK(s.find("missing") == nullptr);
  CHECK(make_trajectory_set("s", 1, {a, x}) == s);

  CHECK_THROWS_AS(make_trajectory_set("s", 1, {a, a}), ValidationError);
  CHECK_THROWS_AS(make_trajectory_set("s", 1, {a, make_trajectory("b", {0.0}, {{1.0, 2.0}})}), ValidationError);
  CHECK_THROWS_AS(make_trajectory_set("s", 2, {a}), ValidationError);
  CHECK_THROWS_AS(make_trajectory_set("s", 1, {}), ValidationError);
  CHECK_NOTHROW(make_trajectory_set("s", std::nullopt, {a}));
}

TEST_CASE("validate_partition: documented cases") {
  PartitionSpec ok{{{0}, {1}}, {{"hr"}}};
  CHECK(validate_partition(ok, 2, {"hr"}).empty());

  PartitionSpec overlap{{{0}, {0, 1}}, {{"hr"}}};
  const auto v = validate_partition(overlap, 2, {"hr"});
  CHECK(has_violation(v, Violation::Kind::feature_overlap, "0"));

  PartitionSpec gap{{{0}}, {{"hr"}}};
  CHECK(has_violation(validate_partition(gap, 1, {"hr", "bp"}), Violation::Kind::channel_gap, "bp"));

  CHECK(has_violation(validate_partition({{{0}, {}}, {{"a"}}}, 1, {"a"}), Violation::Kind::empty_feature_subset, "feature_subsets[1]"));
  CHECK(has_violation(validate_partition({{{0, 2}}, {{"a"}}}, 1, {"a"}), Violation::Kind::feature_out_of_range, "2"));
  CHECK(has_violation(validate_partition({{{0}}, {{"a"}}}, 2, {"a"}), Violation::Kind::feature_gap, "1"));
  CHECK(has_violation(validate_partition({{{0}}, {{"a"}, {"a", "b"}}}, 1, {"a"}), Violation::Kind::channel_overlap, "a"));
  CHECK_FALSE(validate_partition({{{0}}, {{"a"}, {}}}, 1, {"a"}).empty());

  // channels listed but absent from the data are fine
  CHECK(validate_partition({{{0}}, {{"a"}, {"b", "c"}}}, 1, {"a"}).empty());

  CHECK_THROWS_AS(require_valid_partition(overlap, 2, {"hr"}), ValidationError);
  CHECK_NOTHROW(require_valid_partition(ok, 2, {"hr"}));
}

TEST_CASE("validate_partition: singleton_partition is valid") {
  const auto p = singleton_partition(3, {"b", "a"});
  CHECK(p.feature_subsets.size() == 3);
  CHECK(p.graph_subsets.size() == 2);
  CHECK(validate_partition(p, 3, {"a", "b"}).empty());
  CHECK(p.subset_of("a").has_value());
  CHECK_FALSE(p.subset_of("z").has_value());
}

TEST_CASE("validate_partition agrees with a brute-force checker on feature covers") {
  // Every list of up to three subsets of {0..d}, where index d is out of range.
  for (Index d = 1; d <= 4; ++d) {
    const int universe = int(d) + 1;
    const int masks = 1 << universe;
    for (int count = 1; count <= 3; ++count) {
      const int total = int(std::pow(masks, count));
      for (int code = 0; code < total; ++code) {
        PartitionSpec spec;
        spec.graph_subsets = {{"a"}};
        int c = code;
        for (int s = 0; s < count; ++s, c /= masks) {
          std::vector<Index> subset;
          for (int i = 0; i < universe; ++i)
            if ((c % masks) & (1 << i)) subset.push_back(i);
          spec.feature_subsets.push_back(subset);
        }
        const bool expected = oracle::partition_ok(spec, d, {"a"});
        REQUIRE(validate_partition(spec, d, {"a"}).empty() == expected);
      }
    }
  }
}

TEST_CASE("validate_partition agrees with a brute-force checker on channel covers") {
  const std::vector<std::string> names{"a", "b", "c"};
  for (int data_mask = 0; data_mask < 8; ++data_mask) {
    std::set<std::string> channels;
    for (int i = 0; i < 3; ++i)
      if (data_mask & (1 << i)) channels.insert(names[std::size_t(i)]);
    for (int count = 1; count <= 3; ++count) {
      const int total = 1 << (3 * count);
      for (int code = 0; code < total; ++code) {
        PartitionSpec spec;
        spec.feature_subsets = {{0}};
        for (int s = 0; s < count; ++s) {
          std::vector<std::string> subset;
          for (int i = 0; i < 3; ++i)
            if ((code >> (3 * s)) & (1 << i)) subset.push_back(names[std::size_t(i)]);
          spec.graph_subsets.push_back(subset);
        }
        const bool expected = oracle::partition_ok(spec, 1, channels);
        REQUIRE(validate_partition(spec, 1, channels).empty() == expected);
      }
    }
  }
}

TEST_CASE("normalize: two-point column") {
  Dataset ds;
  ds.feature_dim = 1;
  ds.samples = {one_graph_sample("s", {{1.0}, {3.0}})};
  const Dataset n = normalize(ds);
  CHECK(n.normalization.mean(0) == 2.0);
  CHECK(n.normalization.stddev(0) == 1.0);
  CHECK(n.samples[0].trajectories[0].features(0, 0) == -1.0);
  CHECK(n.samples[0].trajectories[0].features(0, 1) == 1.0);
  CHECK(n.samples[0].trajectories[0].times == ds.samples[0].trajectories[0].times);
}

TEST_CASE("normalize: standardized column unchanged") {
  Dataset ds;
  ds.feature_dim = 1;
  ds.samples = {one_graph_sample("s", {{-1.0}, {1.0}, {-1.0}, {1.0}})};
  const Dataset n = normalize(ds);
  const auto& a = ds.samples[0].trajectories[0].features;
  const auto& b = n.samples[0].trajectories[0].features;
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("normalize: constant column floors std and warns") {
  Dataset ds;
  ds.feature_dim = 2;
  ds.samples = {one_graph_sample("s", {{4.0, 1.0}, {4.0, 2.0}})};
  const Dataset n = normalize(ds);
  CHECK(n.normalization.stddev(0) == kStdFloor);
  CHECK(n.normalization.warnings.size() == 1);
  CHECK(n.samples[0].trajectories[0].features.row(0).isZero(0));
}

TEST_CASE("normalize: statistics from a training split apply to other data") {
  Dataset train;
  train.feature_dim = 1;
  train.samples = {one_graph_sample("t", {{0.0}, {2.0}})};
  const auto stats = fit_normalization(train.samples, 1);
  Dataset other;
  other.feature_dim = 1;
  other.samples = {one_graph_sample("o", {{5.0}})};
  CHECK(normalize(other, stats).samples[0].trajectories[0].features(0, 0) == 4.0);
}

TEST_CASE("validate_dataset") {
  Dataset ds;
  ds.feature_dim = 1;
  ds.samples = {one_graph_sample("s", {{1.0}}), one_graph_sample("s", {{2.0}})};
  CHECK_THROWS_AS(validate_dataset(ds), ValidationError);
  ds.samples[1].set_id = "t";
  CHECK_NOTHROW(validate_dataset(ds));
  ds.feature_dim = 2;
  CHECK_THROWS_AS(validate_dataset(ds), ValidationError);
}
