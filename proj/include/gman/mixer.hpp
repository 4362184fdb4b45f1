#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gman/data.hpp"
#include "gman/extgnan.hpp"
#include "gman/nn.hpp"

namespace gman {

/// Parameters for one graph subset. All graphs routed to the subset share
/// `encoder`. Multi-graph subsets mix their graph representations through a
/// DeepSet g(sum_l f(h_l)) with f, g : R^d -> R^d.
struct SubsetParams {
  ExtGnanParams encoder;
  std::optional<Mlp> deepset_f;
  std::optional<Mlp> deepset_g;

  bool is_multi() const { return deepset_f.has_value(); }
  friend bool operator==(const SubsetParams&, const SubsetParams&) = default;
};

struct GmanParams {
  std::vector<SubsetParams> subsets;

  GmanParams zeros_like() const;
  bool same_shape(const GmanParams& other) const;
  bool all_finite() const;
  GmanParams& operator+=(const GmanParams& other);
  GmanParams& operator*=(double s);
  friend bool operator==(const GmanParams&, const GmanParams&) = default;
};

template <typename Params, typename Visitor>
  requires std::same_as<std::remove_const_t<Params>, GmanParams>
void for_each_array(Params& p, const std::string& prefix, Visitor&& visit) {
  for (std::size_t i = 0; i < p.subsets.size(); ++i) {
    auto& s = p.subsets[i];
    const std::string base = prefix + "subset[" + std::to_string(i) + "].";
    for_each_array(s.encoder, base, visit);
    if (s.deepset_f) for_each_array(*s.deepset_f, base + "deepset_f.", visit);
    if (s.deepset_g) for_each_array(*s.deepset_g, base + "deepset_g.", visit);
  }
}

/// Flattens every parameter array in visiting order.
std::vector<double> flatten(const GmanParams& params);
void unflatten(std::span<const double> values, GmanParams& params);

/// Fresh default-architecture model for a validated partition.
GmanParams gman_init(const PartitionSpec& partition, std::uint64_t seed, const ArchConfig& arch = {});

/// Throws ValidationError when the parameter layout does not match the
/// partition (subset count, multi/singleton kinds, network shapes).
void check_compatible(const GmanParams& params, const PartitionSpec& partition);

/// The graphs of `sample` assigned to each graph subset, in channel order.
/// Throws ValidationError when a channel belongs to no subset.
std::vector<std::vector<const Trajectory*>> route(const TrajectorySet& sample, const PartitionSpec& partition);

/// Representation of graph subset `subset` from the graphs of that subset
/// present in one sample.
///
/// A singleton subset returns the encoder's graph representation of its one
/// graph, or zero when the channel is missing. A multi-graph subset returns
/// g(sum f(h)) over the graphs present; with none present that is g(0).
Eigen::VectorXd subset_repr(std::span<const Trajectory* const> graphs, const SubsetParams& params,
                            const PartitionSpec& partition, std::size_t subset);

/// Sum over entries of the sum over subsets of every subset representation.
double gman_score(const TrajectorySet& sample, const GmanParams& params, const PartitionSpec& partition);

inline double predict_proba(double score) {
  // 1 / (1 + e^{-s}) without overflow for large |s|
  if (score >= 0) return 1.0 / (1.0 + std::exp(-score));
  const double e = std::exp(score);
  return e / (1.0 + e);
}

inline constexpr double kDefaultThreshold = 0.5;

/// A probability equal to the threshold counts as positive.
inline int predict_label(double probability, double threshold = kDefaultThreshold) {
  return probability >= threshold ? 1 : 0;
}

/// Forward record of one sample, kept for the reverse pass.
struct SubsetTrace {
  std::vector<const Trajectory*> graphs;
  std::vector<ExtGnanTrace> encoders;
  MlpTape<double> f_tape;  // multi subsets only
  MlpTape<double> g_tape;
  Eigen::VectorXd output;
};

struct ScoreTrace {
  std::vector<SubsetTrace> subsets;
  double score = 0.0;
};

ScoreTrace score_trace(const TrajectorySet& sample, const GmanParams& params, const PartitionSpec& partition);

/// Accumulates into `grads` the gradient of d_score * gman_score.
void score_backward(const ScoreTrace& trace, const GmanParams& params, const PartitionSpec& partition,
                    double d_score, GmanParams& grads);

/// Hand-set parameters for two single-feature graphs grouped in one subset:
/// the encoder passes the feature through, f is the identity and g realizes
/// s(2 - s) exactly on {0, 1, 2} as s - 2 relu(s - 1).
GmanParams set_xor_gadget_params();

/// Partition matching set_xor_gadget_params(): one feature, channels
/// "g1" and "g2" grouped.
PartitionSpec set_xor_grouped_partition();

}  // namespace gman
