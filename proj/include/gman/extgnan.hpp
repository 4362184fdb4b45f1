#pragma once

// Distance-weighted additive encoder for a single trajectory.
//
// For a feature partition {F_l} the representation of node j is
//
//   [h_j]_{F_l} = sum_{w in V} rho(t_w - t_j) * psi_l([x_w]_{F_l})
//
// with one scalar distance network rho shared by all blocks and one shape
// network psi_l : R^{|F_l|} -> R^{|F_l|} per block. The sum runs over every
// node, including w = j. Blocks are laid out in partition order, so h_j has
// the entries of F_0 first, then F_1, and so on. The graph representation is
// the sum of its node representations.

#include <concepts>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gman/data.hpp"
#include "gman/nn.hpp"

namespace gman {

struct ExtGnanParams {
  Mlp rho;               // R -> R
  std::vector<Mlp> psi;  // psi[l] : R^{|F_l|} -> R^{|F_l|}

  ExtGnanParams zeros_like() const;
  bool same_shape(const ExtGnanParams& other) const;
  ExtGnanParams& operator+=(const ExtGnanParams& other);
  ExtGnanParams& operator*=(double s);
  friend bool operator==(const ExtGnanParams&, const ExtGnanParams&) = default;
};

template <typename Params, typename Visitor>
  requires std::same_as<std::remove_const_t<Params>, ExtGnanParams>
void for_each_array(Params& p, const std::string& prefix, Visitor&& visit) {
  for_each_array(p.rho, prefix + "rho.", visit);
  for (std::size_t l = 0; l < p.psi.size(); ++l)
    for_each_array(p.psi[l], prefix + "psi[" + std::to_string(l) + "].", visit);
}

struct ArchConfig {
  int hidden_layers = kDefaultHiddenLayers;
  int hidden_width = kDefaultHiddenWidth;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Default-architecture networks; every network gets its own derived seed.
ExtGnanParams extgnan_init(const FeaturePartition& features, std::uint64_t seed, const ArchConfig& arch = {});

/// Throws ValidationError unless rho is scalar-to-scalar and psi matches the
/// feature partition block for block.
void check_compatible(const ExtGnanParams& params, const FeaturePartition& features);

/// Total dimension covered by the partition (sum of block sizes).
Index partition_dim(const FeaturePartition& features);

/// Every node representation as the columns of a (d x n) matrix.
Eigen::MatrixXd node_reprs(const Trajectory& g, const ExtGnanParams& params, const FeaturePartition& features);

Eigen::VectorXd node_repr(const Trajectory& g, Index j, const ExtGnanParams& params,
                          const FeaturePartition& features);

Eigen::VectorXd graph_repr(const Trajectory& g, const ExtGnanParams& params, const FeaturePartition& features);

/// Forward record for one trajectory, enough for the reverse pass and for
/// attribution.
struct ExtGnanTrace {
  Eigen::MatrixXd distance_weight;  // (n x n), entry (w, j) = rho(t_w - t_j)
  Eigen::MatrixXd shape_out;        // (d x n), column w = stacked psi_l([x_w]_{F_l})
  Eigen::MatrixXd node_reprs;       // (d x n) = shape_out * distance_weight
  Eigen::VectorXd graph_repr;
  MlpTape<double> rho_tape;
  std::vector<MlpTape<double>> psi_tapes;
};

ExtGnanTrace extgnan_trace(const Trajectory& g, const ExtGnanParams& params, const FeaturePartition& features);

/// Accumulates into `grads` the gradient of <graph_repr, upstream>.
void extgnan_backward(const ExtGnanTrace& trace, const ExtGnanParams& params, const FeaturePartition& features,
                      const Eigen::VectorXd& upstream, ExtGnanParams& grads);

/// Hand-set parameters for a single two-feature block F = {0, 1} whose shape
/// network satisfies sum(psi(x1, x2)) = x1 + x2 - 2 x1 x2 exactly on {0,1}^2,
/// with rho == 1. psi is x -> [x1 - r, x2 - r] where r = relu(x1 + x2 - 1).
ExtGnanParams xor_gadget_params();

/// rho == 1 and psi == identity for every block: each node contributes its
/// raw features to every node representation.
ExtGnanParams passthrough_params(const FeaturePartition& features);

}  // namespace gman
