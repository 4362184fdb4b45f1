#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gman {

using Eigen::Index;

/// One channel's timestamped node sequence, treated as a directed path graph.
///
/// Node k has timestamp times[k] and feature vector features.col(k). Values
/// built through make_trajectory() are canonical: nodes are sorted by
/// timestamp, ties broken by lexicographic feature order, so any permutation
/// of the same nodes produces bit-identical storage.
struct Trajectory {
  std::string channel_id;
  Eigen::VectorXd times;
  Eigen::MatrixXd features;  // d x n

  Index num_nodes() const { return times.size(); }
  Index feature_dim() const { return features.rows(); }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.channel_id == b.channel_id && a.times.size() == b.times.size() && a.times == b.times &&
           a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
           a.features == b.features;
  }
};

/// Validates and canonicalizes. Throws ValidationError on empty input,
/// ragged feature vectors or non-finite values.
Trajectory make_trajectory(std::string channel_id, const std::vector<double>& times,
                           const std::vector<std::vector<double>>& features);
Trajectory make_trajectory_from_matrix(std::string channel_id, Eigen::VectorXd times, Eigen::MatrixXd features);

/// Static covariates enter the model as a single node at t = 0.
Trajectory make_static_trajectory(std::string channel_id, const std::vector<double>& features);

/// Signed elapsed time t_w - t_j between two nodes of one trajectory.
inline double time_delta(double t_w, double t_j) { return t_w - t_j; }
inline double time_delta(const Trajectory& g, Index w, Index j) { return time_delta(g.times(w), g.times(j)); }

/// A labeled sample: a set of trajectories with unique channel ids, stored
/// sorted by channel id.
struct TrajectorySet {
  std::string set_id;
  std::optional<int> label;  // 0 or 1; absent for unlabeled prediction input
  std::vector<Trajectory> trajectories;

  Index feature_dim() const { return trajectories.empty() ? 0 : trajectories.front().feature_dim(); }
  const Trajectory* find(const std::string& channel) const;

  friend bool operator==(const TrajectorySet&, const TrajectorySet&) = default;
};

TrajectorySet make_trajectory_set(std::string set_id, std::optional<int> label, std::vector<Trajectory> trajectories);

using FeaturePartition = std::vector<std::vector<Index>>;
using GraphPartition = std::vector<std::vector<std::string>>;

/// Disjoint feature subsets {F_l} and disjoint channel subsets {S_i}.
///
/// A graph subset listing more than one channel is a multi-graph subset and
/// mixes its graphs through a DeepSet; its capacity is fixed here, not by
/// how many of its channels a given sample happens to contain.
struct PartitionSpec {
  FeaturePartition feature_subsets;
  GraphPartition graph_subsets;

  std::size_t num_graph_subsets() const { return graph_subsets.size(); }
  bool is_multi(std::size_t subset) const { return graph_subsets.at(subset).size() > 1; }
  std::optional<std::size_t> subset_of(const std::string& channel) const;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

/// Each feature index in its own subset; each channel in its own subset.
PartitionSpec singleton_partition(Index feature_dim, const std::vector<std::string>& channels);

struct Violation {
  enum class Kind {
    empty_feature_subset,
    feature_out_of_range,
    feature_overlap,
    feature_gap,
    empty_graph_subset,
    channel_overlap,
    channel_gap,
  };
  Kind kind;
  std::string locus;  // offending index or channel
  std::string message;
};

const char* to_string(Violation::Kind kind);

/// Every violation of the partition against a feature dimension and the set
/// of channels that occur in the data. Empty result means valid.
std::vector<Violation> validate_partition(const PartitionSpec& spec, Index feature_dim,
                                          const std::set<std::string>& channels);

/// Throws ValidationError listing every violation, if any.
void require_valid_partition(const PartitionSpec& spec, Index feature_dim, const std::set<std::string>& channels);

struct NormalizationStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<std::string> warnings;

  bool empty() const { return mean.size() == 0; }
};

inline constexpr double kStdFloor = 1e-8;

/// Per-feature mean and population standard deviation over every node of
/// every trajectory. std values below kStdFloor are floored and noted.
NormalizationStats fit_normalization(std::span<const TrajectorySet> samples, Index feature_dim);

struct Dataset {
  std::vector<TrajectorySet> samples;
  Index feature_dim = 0;
  NormalizationStats normalization;  // empty until normalize() is applied

  std::set<std::string> channels() const;
  bool operator==(const Dataset& other) const {
    return feature_dim == other.feature_dim && samples == other.samples;
  }
};

/// Checks every sample has `feature_dim` features and unique set ids.
void validate_dataset(const Dataset& dataset);

/// z-scores every feature with the given statistics; timestamps untouched.
Dataset normalize(Dataset dataset, const NormalizationStats& stats);

/// Fits statistics on `dataset` itself, then applies them.
Dataset normalize(Dataset dataset);

}  // namespace gman
