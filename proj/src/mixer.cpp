#include "gman/mixer.hpp"

#include "gman/errors.hpp"
#include "gman/random.hpp"

namespace gman {

GmanParams GmanParams::zeros_like() const {
  GmanParams z;
  for (const auto& s : subsets) {
    SubsetParams zs{s.encoder.zeros_like(), std::nullopt, std::nullopt};
    if (s.deepset_f) zs.deepset_f = s.deepset_f->zeros_like();
    if (s.deepset_g) zs.deepset_g = s.deepset_g->zeros_like();
    z.subsets.push_back(std::move(zs));
  }
  return z;
}

bool GmanParams::same_shape(const GmanParams& other) const {
  if (subsets.size() != other.subsets.size()) return false;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    const auto& a = subsets[i];
    const auto& b = other.subsets[i];
    if (!a.encoder.same_shape(b.encoder)) return false;
    if (a.deepset_f.has_value() != b.deepset_f.has_value() || a.deepset_g.has_value() != b.deepset_g.has_value())
      return false;
    if (a.deepset_f && !a.deepset_f->same_shape(*b.deepset_f)) return false;
    if (a.deepset_g && !a.deepset_g->same_shape(*b.deepset_g)) return false;
  }
  return true;
}

bool GmanParams::all_finite() const {
  bool ok = true;
  for_each_array(*this, "", [&](const std::string&, std::span<const double> v) {
    for (double x : v) ok = ok && std::isfinite(x);
  });
  return ok;
}

GmanParams& GmanParams::operator+=(const GmanParams& other) {
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    subsets[i].encoder += other.subsets[i].encoder;
    if (subsets[i].deepset_f) *subsets[i].deepset_f += *other.subsets[i].deepset_f;
    if (subsets[i].deepset_g) *subsets[i].deepset_g += *other.subsets[i].deepset_g;
  }
  return *this;
}

GmanParams& GmanParams::operator*=(double s) {
  for (auto& sub : subsets) {
    sub.encoder *= s;
    if (sub.deepset_f) *sub.deepset_f *= s;
    if (sub.deepset_g) *sub.deepset_g *= s;
  }
  return *this;
}

std::vector<double> flatten(const GmanParams& params) {
  std::vector<double> out;
  for_each_array(params, "", [&](const std::string&, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); });
  return out;
}

void unflatten(std::span<const double> values, GmanParams& params) {
  std::size_t pos = 0;
  for_each_array(params, "", [&](const std::string& name, std::span<double> v) {
    if (pos + v.size() > values.size()) throw ValidationError("unflatten: too few values for " + name);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), v.size(), v.begin());
    pos += v.size();
  });
  if (pos != values.size()) throw ValidationError("unflatten: too many values");
}

GmanParams gman_init(const PartitionSpec& partition, std::uint64_t seed, const ArchConfig& arch) {
  const Index d = partition_dim(partition.feature_subsets);
  GmanParams p;
  for (std::size_t i = 0; i < partition.num_graph_subsets(); ++i) {
    const std::uint64_t base = derive_seed(seed, i);
    SubsetParams s{extgnan_init(partition.feature_subsets, derive_seed(base, 0), arch), std::nullopt, std::nullopt};
    if (partition.is_multi(i)) {
      s.deepset_f = mlp_init(default_mlp_spec(d, d, derive_seed(base, 1), arch.hidden_layers, arch.hidden_width));
      s.deepset_g = mlp_init(default_mlp_spec(d, d, derive_seed(base, 2), arch.hidden_layers, arch.hidden_width));
    }
    p.subsets.push_back(std::move(s));
  }
  return p;
}

void check_compatible(const GmanParams& params, const PartitionSpec& partition) {
  if (params.subsets.size() != partition.num_graph_subsets())
    throw ValidationError("model has " + std::to_string(params.subsets.size()) + " subsets, partition has " +
                          std::to_string(partition.num_graph_subsets()));
  const Index d = partition_dim(partition.feature_subsets);
  for (std::size_t i = 0; i < params.subsets.size(); ++i) {
    const auto& s = params.subsets[i];
    check_compatible(s.encoder, partition.feature_subsets);
    if (partition.is_multi(i) != s.is_multi() || s.deepset_f.has_value() != s.deepset_g.has_value())
      throw ValidationError("subset " + std::to_string(i) + ": DeepSet parameters must be present exactly when the "
                            "subset lists more than one channel");
    if (s.is_multi()) {
      for (const Mlp* net : {&*s.deepset_f, &*s.deepset_g})
        if (net->input_dim() != d || net->output_dim() != d)
          throw ValidationError("subset " + std::to_string(i) + ": DeepSet networks must map R^" + std::to_string(d) +
                                " -> R^" + std::to_string(d));
    }
  }
}

std::vector<std::vector<const Trajectory*>> route(const TrajectorySet& sample, const PartitionSpec& partition) {
  std::vector<std::vector<const Trajectory*>> out(partition.num_graph_subsets());
  for (const auto& g : sample.trajectories) {
    const auto subset = partition.subset_of(g.channel_id);
    if (!subset)
      throw ValidationError("sample '" + sample.set_id + "': channel '" + g.channel_id +
                            "' is not assigned to any graph subset");
    out[*subset].push_back(&g);
  }
  return out;
}

namespace {

void check_routing(std::span<const Trajectory* const> graphs, const PartitionSpec& partition, std::size_t subset) {
  if (subset >= partition.num_graph_subsets())
    throw ValidationError("routing: subset index " + std::to_string(subset) + " out of range");
  for (const Trajectory* g : graphs)
    if (partition.subset_of(g->channel_id) != subset)
      throw ValidationError("routing: channel '" + g->channel_id + "' does not belong to subset " +
                            std::to_string(subset));
  if (!partition.is_multi(subset) && graphs.size() > 1)
    throw ValidationError("routing: singleton subset " + std::to_string(subset) + " received " +
                          std::to_string(graphs.size()) + " graphs");
}

SubsetTrace subset_trace(std::span<const Trajectory* const> graphs, const SubsetParams& params,
                         const PartitionSpec& partition, std::size_t subset) {
  check_routing(graphs, partition, subset);
  const Index d = partition_dim(partition.feature_subsets);
  SubsetTrace t;
  t.graphs.assign(graphs.begin(), graphs.end());
  for (const Trajectory* g : graphs) t.encoders.push_back(extgnan_trace(*g, params.encoder, partition.feature_subsets));

  if (!params.is_multi()) {
    t.output = t.encoders.empty() ? Eigen::VectorXd::Zero(d) : t.encoders.front().graph_repr;
    return t;
  }
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(d);
  if (!t.encoders.empty()) {
    Eigen::MatrixXd reps(d, static_cast<Index>(t.encoders.size()));
    for (std::size_t k = 0; k < t.encoders.size(); ++k) reps.col(static_cast<Index>(k)) = t.encoders[k].graph_repr;
    auto f = mlp_forward(*params.deepset_f, reps);
    pooled = f.output.rowwise().sum();
    t.f_tape = std::move(f.tape);
  }
  auto g = mlp_forward(*params.deepset_g, Eigen::MatrixXd(pooled));
  t.output = g.output.col(0);
  t.g_tape = std::move(g.tape);
  return t;
}

}  // namespace

Eigen::VectorXd subset_repr(std::span<const Trajectory* const> graphs, const SubsetParams& params,
                            const PartitionSpec& partition, std::size_t subset) {
  return subset_trace(graphs, params, partition, subset).output;
}

ScoreTrace score_trace(const TrajectorySet& sample, const GmanParams& params, const PartitionSpec& partition) {
  check_compatible(params, partition);
  const auto routed = route(sample, partition);
  ScoreTrace t;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(partition_dim(partition.feature_subsets));
  for (std::size_t i = 0; i < routed.size(); ++i) {
    t.subsets.push_back(subset_trace(routed[i], params.subsets[i], partition, i));
    total += t.subsets.back().output;
  }
  t.score = total.sum();
  if (!std::isfinite(t.score)) throw NumericError("sample '" + sample.set_id + "': non-finite score");
  return t;
}

double gman_score(const TrajectorySet& sample, const GmanParams& params, const PartitionSpec& partition) {
  return score_trace(sample, params, partition).score;
}

void score_backward(const ScoreTrace& trace, const GmanParams& params, const PartitionSpec& partition,
                    double d_score, GmanParams& grads) {
  const Index d = partition_dim(partition.feature_subsets);
  const Eigen::VectorXd upstream = Eigen::VectorXd::Constant(d, d_score);
  for (std::size_t i = 0; i < trace.subsets.size(); ++i) {
    const auto& st = trace.subsets[i];
    const auto& sp = params.subsets[i];
    auto& sg = grads.subsets[i];
    if (!sp.is_multi()) {
      if (!st.encoders.empty()) extgnan_backward(st.encoders.front(), sp.encoder, partition.feature_subsets, upstream, sg.encoder);
      continue;
    }
    auto g_back = mlp_backward(*sp.deepset_g, st.g_tape, Eigen::MatrixXd(upstream));
    *sg.deepset_g += g_back.params;
    if (st.encoders.empty()) continue;
    const auto m = static_cast<Index>(st.encoders.size());
    auto f_back = mlp_backward(*sp.deepset_f, st.f_tape, Eigen::MatrixXd(g_back.input_gradient.replicate(1, m)));
    *sg.deepset_f += f_back.params;
    for (Index k = 0; k < m; ++k)
      extgnan_backward(st.encoders[static_cast<std::size_t>(k)], sp.encoder, partition.feature_subsets,
                       f_back.input_gradient.col(k), sg.encoder);
  }
}

GmanParams set_xor_gadget_params() {
  const FeaturePartition features{{0}};
  SubsetParams s{passthrough_params(features), std::nullopt, std::nullopt};

  Mlp f;
  f.activation = Activation::identity;
  f.output_activation = Activation::identity;
  f.weights = {Eigen::MatrixXd::Identity(1, 1)};
  f.biases = {Eigen::VectorXd::Zero(1)};
  s.deepset_f = f;

  // hidden: [relu(s), relu(s - 1)]; output: h1 - 2 h2
  Mlp g;
  g.activation = Activation::relu;
  g.output_activation = Activation::identity;
  Eigen::MatrixXd w1(2, 1);
  w1 << 1, 1;
  Eigen::VectorXd b1(2);
  b1 << 0, -1;
  Eigen::MatrixXd w2(1, 2);
  w2 << 1, -2;
  g.weights = {w1, w2};
  g.biases = {b1, Eigen::VectorXd::Zero(1)};
  s.deepset_g = g;

  GmanParams p;
  p.subsets.push_back(std::move(s));
  return p;
}

PartitionSpec set_xor_grouped_partition() { return PartitionSpec{{{0}}, {{"g1", "g2"}}}; }

}  // namespace gman
