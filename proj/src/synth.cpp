#include "gman/synth.hpp"

#include "gman/errors.hpp"
#include "gman/random.hpp"

namespace gman {

namespace {

const int kXorInputs[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};

std::string xor_id(const char* prefix, int k) {
  return std::string(prefix) + std::to_string(kXorInputs[k][0]) + std::to_string(kXorInputs[k][1]);
}

std::vector<std::string> sparse_channels(const SparseTrajOptions& o) {
  std::vector<std::string> out{"a", "b"};
  for (int k = 1; k <= o.distractor_channels; ++k) out.push_back("n" + std::to_string(k));
  if (o.static_channel) out.push_back("static");
  return out;
}

}  // namespace

Dataset synth_feature_xor() {
  Dataset d;
  d.feature_dim = 2;
  for (int k = 0; k < 4; ++k) {
    const auto [x1, x2] = kXorInputs[k];
    d.samples.push_back(make_trajectory_set(
        xor_id("fx_", k), x1 ^ x2,
        {make_trajectory("g", std::vector<double>{0.0}, {{double(x1), double(x2)}})}));
  }
  return d;
}

Dataset synth_set_xor() {
  Dataset d;
  d.feature_dim = 1;
  for (int k = 0; k < 4; ++k) {
    const auto [x1, x2] = kXorInputs[k];
    d.samples.push_back(make_trajectory_set(xor_id("sx_", k), x1 ^ x2,
                                            {make_trajectory("g1", std::vector<double>{0.0}, {{double(x1)}}),
                                             make_trajectory("g2", std::vector<double>{0.0}, {{double(x2)}})}));
  }
  return d;
}

void validate(const SparseTrajOptions& o) {
  if (o.samples < 0) throw ValidationError("sparse_traj: samples must be >= 0");
  if (o.distractor_channels < 0) throw ValidationError("sparse_traj: distractor_channels must be >= 0");
  if (o.max_nodes < 1) throw ValidationError("sparse_traj: max_nodes must be >= 1");
  if (!(o.sparsity >= 0.0 && o.sparsity < 1.0)) throw ValidationError("sparse_traj: sparsity must lie in [0, 1)");
  if (!(o.horizon > 0.0)) throw ValidationError("sparse_traj: horizon must be positive");
  if (!(o.noise >= 0.0)) throw ValidationError("sparse_traj: noise must be >= 0");
}

Dataset synth_sparse_traj(const SparseTrajOptions& o) {
  validate(o);
  Rng rng(o.seed);
  Dataset d;
  d.feature_dim = 2;
  auto draw_channel = [&](const std::string& name, bool force_present) -> std::optional<Trajectory> {
    const double level = rng.normal();
    std::vector<double> times;
    std::vector<std::vector<double>> x;
    for (int slot = 0; slot < o.max_nodes; ++slot) {
      const bool observed = rng.uniform() >= o.sparsity;
      const double t = rng.uniform(0.0, o.horizon);
      const double value = level + o.noise * rng.normal();
      const double clutter = rng.normal();
      if (observed || (force_present && slot + 1 == o.max_nodes && times.empty())) {
        times.push_back(t);
        x.push_back({value, clutter});
      }
    }
    if (times.empty()) return std::nullopt;
    return make_trajectory(name, times, x);
  };

  for (int s = 0; s < o.samples; ++s) {
    std::vector<Trajectory> graphs;
    Trajectory a = *draw_channel("a", true);
    Trajectory b = *draw_channel("b", true);
    const double mean_a = a.features.row(0).mean();
    const double mean_b = b.features.row(0).mean();
    graphs.push_back(std::move(a));
    graphs.push_back(std::move(b));
    for (int k = 1; k <= o.distractor_channels; ++k) {
      const bool present = rng.uniform() >= o.sparsity;
      auto g = draw_channel("n" + std::to_string(k), false);
      if (present && g) graphs.push_back(std::move(*g));
    }
    if (o.static_channel) graphs.push_back(make_static_trajectory("static", {rng.normal(), rng.normal()}));
    d.samples.push_back(make_trajectory_set("st_" + std::to_string(s), mean_a * mean_b > 0.0 ? 1 : 0, std::move(graphs)));
  }
  return d;
}

std::string sparse_traj_rule() {
  return "label = 1 iff mean(a.x[0]) * mean(b.x[0]) > 0, means over the observed nodes of channels a and b";
}

nlohmann::ordered_json sparse_traj_meta(const SparseTrajOptions& o) {
  return {{"task", "sparse_traj"},
          {"label_rule", sparse_traj_rule()},
          {"samples", o.samples},
          {"distractor_channels", o.distractor_channels},
          {"static_channel", o.static_channel},
          {"max_nodes", o.max_nodes},
          {"sparsity", o.sparsity},
          {"horizon", o.horizon},
          {"noise", o.noise},
          {"seed", o.seed}};
}

PartitionSpec sparse_traj_grouped_partition(const SparseTrajOptions& o) {
  PartitionSpec p;
  p.feature_subsets = {{0}, {1}};
  p.graph_subsets.push_back({"a", "b"});
  for (const auto& ch : sparse_channels(o))
    if (ch != "a" && ch != "b") p.graph_subsets.push_back({ch});
  return p;
}

PartitionSpec sparse_traj_singleton_partition(const SparseTrajOptions& o) {
  return singleton_partition(2, sparse_channels(o));
}

}  // namespace gman
