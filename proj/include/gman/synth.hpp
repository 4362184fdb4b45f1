#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "gman/data.hpp"

namespace gman {

/// Four single-node graphs on channel "g" with x in {0,1}^2 and label
/// x1 XOR x2, in the order (0,0), (0,1), (1,0), (1,1).
Dataset synth_feature_xor();

/// Four samples of two single-node graphs "g1" and "g2", each carrying one
/// binary feature; label x1 XOR x2. Same input order as synth_feature_xor().
Dataset synth_set_xor();

struct SparseTrajOptions {
  int samples = 2500;
  int distractor_channels = 1;  // channels "n1", "n2", ... that carry no signal
  bool static_channel = true;   // single-node "static" channel at t = 0
  int max_nodes = 8;            // observation slots per channel
  double sparsity = 0.5;        // probability each slot (and each distractor channel) is missing
  double horizon = 48.0;        // timestamps uniform on [0, horizon)
  double noise = 0.5;           // per-observation noise around the channel level
  std::uint64_t seed = 0;
};

void validate(const SparseTrajOptions& options);

/// Irregularly sampled two-feature trajectories whose label needs
/// cross-channel interaction.
///
/// Signal channels "a" and "b" are always present with at least one node.
/// Each channel draws a level mu ~ N(0, 1); feature 0 of every node is
/// mu + noise * N(0, 1) and feature 1 is N(0, 1) clutter. The label is 1 when
/// the time-averages of feature 0 over the observed nodes of "a" and "b"
/// have the same sign, i.e. mean_a * mean_b > 0. No additive function of the
/// individual channels can express that rule.
Dataset synth_sparse_traj(const SparseTrajOptions& options);

/// Header written as the "_meta" line of generated datasets.
nlohmann::ordered_json sparse_traj_meta(const SparseTrajOptions& options);
std::string sparse_traj_rule();

/// Grouped partition for synth_sparse_traj: {"a", "b"} mixed through a
/// DeepSet, every other channel on its own, every feature on its own.
PartitionSpec sparse_traj_grouped_partition(const SparseTrajOptions& options);
PartitionSpec sparse_traj_singleton_partition(const SparseTrajOptions& options);

}  // namespace gman
