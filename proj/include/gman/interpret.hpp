#pragma once

// Score-space attributions. Contributions are entry sums of representations,
// so they add up to the raw (pre-link) score:
//
//   score = sum over singleton-subset graphs of their graph totals
//         + sum over multi-graph subsets of their set totals.
//
// Node- and graph-level attribution is only defined for graphs in singleton
// subsets; a graph that is mixed non-linearly with others through a DeepSet
// only has the set-level total.

#include <string>
#include <vector>

#include "gman/data.hpp"
#include "gman/mixer.hpp"

namespace gman {

struct GraphAttribution {
  std::size_t subset = 0;
  std::string channel;
  std::vector<double> node_times;
  /// Target view: entry sum of each node's representation h_j.
  std::vector<double> node_contributions;
  /// Source view (extension): the credit each node w sends out,
  /// sum_j rho(t_w - t_j) * sum(psi(x_w)). Sums to the same total.
  std::vector<double> source_contributions;
  double total = 0.0;
};

struct SetAttribution {
  std::size_t subset = 0;
  std::vector<std::string> channels_present;
  double contribution = 0.0;
};

struct AttributionReport {
  std::string set_id;
  std::vector<GraphAttribution> graphs;
  std::vector<SetAttribution> sets;
  double raw_score = 0.0;
  double completeness_residual = 0.0;
};

inline constexpr double kCompletenessTolerance = 1e-9;

double node_contribution(const TrajectorySet& sample, const std::string& channel, Index node,
                         const GmanParams& params, const PartitionSpec& partition);

double graph_contribution(const TrajectorySet& sample, const std::string& channel, const GmanParams& params,
                          const PartitionSpec& partition);

double set_contribution(const TrajectorySet& sample, std::size_t subset, const GmanParams& params,
                        const PartitionSpec& partition);

AttributionReport build_report(const TrajectorySet& sample, const GmanParams& params, const PartitionSpec& partition);

}  // namespace gman
