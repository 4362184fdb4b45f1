#include "gman/extgnan.hpp"

#include <numeric>

#include "gman/errors.hpp"
#include "gman/random.hpp"

namespace gman {

namespace {

Mlp single_layer(Eigen::MatrixXd w, Eigen::VectorXd b) {
  Mlp p;
  p.activation = Activation::identity;
  p.output_activation = Activation::identity;
  p.weights.push_back(std::move(w));
  p.biases.push_back(std::move(b));
  return p;
}

Mlp constant_one() { return single_layer(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1)); }

Eigen::MatrixXd gather_block(const Eigen::MatrixXd& x, const std::vector<Index>& block) {
  return x(block, Eigen::all);
}

}  // namespace

ExtGnanParams ExtGnanParams::zeros_like() const {
  ExtGnanParams z{rho.zeros_like(), {}};
  for (const auto& p : psi) z.psi.push_back(p.zeros_like());
  return z;
}

bool ExtGnanParams::same_shape(const ExtGnanParams& other) const {
  if (!rho.same_shape(other.rho) || psi.size() != other.psi.size()) return false;
  for (std::size_t l = 0; l < psi.size(); ++l)
    if (!psi[l].same_shape(other.psi[l])) return false;
  return true;
}

ExtGnanParams& ExtGnanParams::operator+=(const ExtGnanParams& other) {
  rho += other.rho;
  for (std::size_t l = 0; l < psi.size(); ++l) psi[l] += other.psi[l];
  return *this;
}

ExtGnanParams& ExtGnanParams::operator*=(double s) {
  rho *= s;
  for (auto& p : psi) p *= s;
  return *this;
}

ExtGnanParams extgnan_init(const FeaturePartition& features, std::uint64_t seed, const ArchConfig& arch) {
  ExtGnanParams p;
  p.rho = mlp_init(default_mlp_spec(1, 1, derive_seed(seed, 0), arch.hidden_layers, arch.hidden_width));
  // rho starts at 1 + (net with zero biases). With rho(0) = 0 a graph of
  // equal timestamps has zero representation, and a DeepSet fed only zeros
  // sits on every relu kink with no gradient to leave it.
  p.rho.biases.back().setOnes();
  for (std::size_t l = 0; l < features.size(); ++l) {
    const auto width = static_cast<Index>(features[l].size());
    p.psi.push_back(
        mlp_init(default_mlp_spec(width, width, derive_seed(seed, l + 1), arch.hidden_layers, arch.hidden_width)));
  }
  return p;
}

Index partition_dim(const FeaturePartition& features) {
  return std::accumulate(features.begin(), features.end(), Index{0},
                         [](Index acc, const auto& block) { return acc + static_cast<Index>(block.size()); });
}

void check_compatible(const ExtGnanParams& params, const FeaturePartition& features) {
  if (params.rho.input_dim() != 1 || params.rho.output_dim() != 1)
    throw ValidationError("extgnan: rho must map R -> R");
  if (params.psi.size() != features.size())
    throw ValidationError("extgnan: " + std::to_string(params.psi.size()) + " shape networks for " +
                          std::to_string(features.size()) + " feature subsets");
  for (std::size_t l = 0; l < features.size(); ++l) {
    const auto width = static_cast<Index>(features[l].size());
    if (params.psi[l].input_dim() != width || params.psi[l].output_dim() != width)
      throw ValidationError("extgnan: shape network " + std::to_string(l) + " does not map R^" +
                            std::to_string(width) + " -> R^" + std::to_string(width));
  }
}

namespace {

// Column (w + j * n) holds t_w - t_j, matching the column-major layout of an
// (n x n) matrix indexed (w, j).
Eigen::MatrixXd pairwise_deltas(const Trajectory& g) {
  const Index n = g.num_nodes();
  Eigen::MatrixXd deltas(1, n * n);
  for (Index j = 0; j < n; ++j)
    for (Index w = 0; w < n; ++w) deltas(0, w + j * n) = time_delta(g, w, j);
  return deltas;
}

void check_trajectory(const Trajectory& g, const FeaturePartition& features) {
  if (g.feature_dim() != partition_dim(features))
    throw ValidationError("extgnan: trajectory '" + g.channel_id + "' has " + std::to_string(g.feature_dim()) +
                          " features, partition covers " + std::to_string(partition_dim(features)));
}

}  // namespace

ExtGnanTrace extgnan_trace(const Trajectory& g, const ExtGnanParams& params, const FeaturePartition& features) {
  check_compatible(params, features);
  check_trajectory(g, features);
  const Index n = g.num_nodes();
  ExtGnanTrace t;
  auto rho = mlp_forward(params.rho, pairwise_deltas(g));
  t.distance_weight = rho.output.reshaped(n, n);
  t.rho_tape = std::move(rho.tape);

  t.shape_out.resize(g.feature_dim(), n);
  Index row = 0;
  for (std::size_t l = 0; l < features.size(); ++l) {
    auto psi = mlp_forward(params.psi[l], gather_block(g.features, features[l]));
    const auto width = static_cast<Index>(features[l].size());
    t.shape_out.middleRows(row, width) = psi.output;
    t.psi_tapes.push_back(std::move(psi.tape));
    row += width;
  }
  t.node_reprs = t.shape_out * t.distance_weight;
  t.graph_repr = t.node_reprs.rowwise().sum();
  return t;
}

void extgnan_backward(const ExtGnanTrace& trace, const ExtGnanParams& params, const FeaturePartition& features,
                      const Eigen::VectorXd& upstream, ExtGnanParams& grads) {
  const Index n = trace.distance_weight.rows();
  if (upstream.size() != trace.shape_out.rows()) throw ValidationError("extgnan backward: upstream size mismatch");
  // graph_repr = shape_out * distance_weight * 1
  const Eigen::VectorXd node_weight = trace.distance_weight.rowwise().sum();      // per source node w
  const Eigen::RowVectorXd source_grad = upstream.transpose() * trace.shape_out;  // d loss / d rho(w, .)

  Eigen::MatrixXd rho_upstream = source_grad.transpose().replicate(1, n).reshaped(1, n * n);
  grads.rho += mlp_backward(params.rho, trace.rho_tape, rho_upstream).params;

  Index row = 0;
  for (std::size_t l = 0; l < features.size(); ++l) {
    const auto width = static_cast<Index>(features[l].size());
    const Eigen::MatrixXd psi_upstream = upstream.segment(row, width) * node_weight.transpose();
    grads.psi[l] += mlp_backward(params.psi[l], trace.psi_tapes[l], psi_upstream).params;
    row += width;
  }
}

Eigen::MatrixXd node_reprs(const Trajectory& g, const ExtGnanParams& params, const FeaturePartition& features) {
  check_compatible(params, features);
  check_trajectory(g, features);
  const Index n = g.num_nodes();
  const Eigen::MatrixXd weight = mlp_eval(params.rho, pairwise_deltas(g)).reshaped(n, n);
  Eigen::MatrixXd shape_out(g.feature_dim(), n);
  Index row = 0;
  for (std::size_t l = 0; l < features.size(); ++l) {
    const auto width = static_cast<Index>(features[l].size());
    shape_out.middleRows(row, width) = mlp_eval(params.psi[l], gather_block(g.features, features[l]));
    row += width;
  }
  return shape_out * weight;
}

Eigen::VectorXd node_repr(const Trajectory& g, Index j, const ExtGnanParams& params,
                          const FeaturePartition& features) {
  if (j < 0 || j >= g.num_nodes())
    throw ValidationError("extgnan: node index " + std::to_string(j) + " out of range for trajectory '" +
                          g.channel_id + "'");
  return node_reprs(g, params, features).col(j);
}

Eigen::VectorXd graph_repr(const Trajectory& g, const ExtGnanParams& params, const FeaturePartition& features) {
  return node_reprs(g, params, features).rowwise().sum();
}

ExtGnanParams xor_gadget_params() {
  ExtGnanParams p;
  p.rho = constant_one();

  // hidden: [relu(x1), relu(x2), relu(x1 + x2 - 1)]; output: [h1 - h3, h2 - h3]
  Mlp psi;
  psi.activation = Activation::relu;
  psi.output_activation = Activation::identity;
  Eigen::MatrixXd w1(3, 2);
  w1 << 1, 0,
        0, 1,
        1, 1;
  Eigen::VectorXd b1(3);
  b1 << 0, 0, -1;
  Eigen::MatrixXd w2(2, 3);
  w2 << 1, 0, -1,
        0, 1, -1;
  psi.weights = {w1, w2};
  psi.biases = {b1, Eigen::VectorXd::Zero(2)};
  p.psi.push_back(std::move(psi));
  return p;
}

ExtGnanParams passthrough_params(const FeaturePartition& features) {
  ExtGnanParams p;
  p.rho = constant_one();
  for (const auto& block : features) {
    const auto width = static_cast<Index>(block.size());
    p.psi.push_back(single_layer(Eigen::MatrixXd::Identity(width, width), Eigen::VectorXd::Zero(width)));
  }
  return p;
}

}  // namespace gman
