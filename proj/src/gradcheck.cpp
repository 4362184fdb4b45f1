#include "gman/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gman/random.hpp"
#include "gman/training.hpp"

namespace gman {

GradcheckCase random_gradcheck_case(std::uint64_t seed) {
  Rng rng(seed);
  GradcheckCase c;
  const auto d = static_cast<Index>(1 + rng.below(3));
  const auto channels = 1 + rng.below(3);

  // Random feature partition: shuffle indices, cut into blocks.
  std::vector<Index> idx(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) idx[static_cast<std::size_t>(k)] = k;
  for (std::size_t k = idx.size(); k > 1; --k) std::swap(idx[k - 1], idx[rng.below(k)]);
  std::vector<Index> block;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    block.push_back(idx[k]);
    if (k + 1 == idx.size() || rng.uniform() < 0.5) {
      c.partition.feature_subsets.push_back(block);
      block.clear();
    }
  }

  std::vector<std::string> names;
  for (std::uint64_t k = 0; k < channels; ++k) names.push_back("c" + std::to_string(k));
  std::vector<std::string> group;
  for (std::size_t k = 0; k < names.size(); ++k) {
    group.push_back(names[k]);
    if (k + 1 == names.size() || rng.uniform() < 0.5) {
      c.partition.graph_subsets.push_back(group);
      group.clear();
    }
  }

  std::vector<Trajectory> graphs;
  for (const auto& name : names) {
    const auto n = 1 + rng.below(4);
    std::vector<double> times;
    std::vector<std::vector<double>> x;
    for (std::uint64_t k = 0; k < n; ++k) {
      times.push_back(rng.uniform(0.0, 3.0));
      std::vector<double> row;
      for (Index f = 0; f < d; ++f) row.push_back(rng.uniform(-1.0, 1.0));
      x.push_back(std::move(row));
    }
    graphs.push_back(make_trajectory(name, times, x));
  }
  c.label = static_cast<int>(rng.below(2));
  c.sample = make_trajectory_set("gradcheck_" + std::to_string(seed), c.label, std::move(graphs));

  c.params = gman_init(c.partition, derive_seed(seed, 1), ArchConfig{2, 5});
  for_each_array(c.params, "", [&](const std::string&, std::span<double> v) {
    for (double& x : v) x = rng.uniform(-0.8, 0.8);
  });
  return c;
}

GradcheckResult check_gradients(const GradcheckCase& c, double step) {
  const auto analytic = flatten(backward_sample(c.sample, c.label, c.params, c.partition).grads);
  std::vector<double> theta = flatten(c.params);
  GmanParams probe = c.params;
  auto loss_at = [&](const std::vector<double>& values) {
    unflatten(values, probe);
    return bce_with_logits(gman_score(c.sample, probe, c.partition), c.label);
  };

  std::vector<std::string> names;
  for_each_array(c.params, "", [&](const std::string& name, std::span<const double> v) {
    names.insert(names.end(), v.size(), name);
  });

  GradcheckResult r;
  r.num_params = theta.size();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + step;
    const double up = loss_at(theta);
    theta[k] = saved - step;
    const double down = loss_at(theta);
    theta[k] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), kGradcheckFloor});
    const double err = std::abs(analytic[k] - numeric) / denom;
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_array = names[k];
    }
  }
  return r;
}

}  // namespace gman
