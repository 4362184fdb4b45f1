#include "gman/interpret.hpp"

#include <cmath>

#include "gman/errors.hpp"

namespace gman {

namespace {

struct EligibleGraph {
  std::size_t subset;
  const Trajectory* graph;
};

EligibleGraph require_node_eligible(const TrajectorySet& sample, const std::string& channel,
                                    const PartitionSpec& partition) {
  const auto subset = partition.subset_of(channel);
  if (!subset) throw ValidationError("channel '" + channel + "' is not assigned to any graph subset");
  if (partition.is_multi(*subset))
    throw EligibilityError("channel '" + channel + "' belongs to multi-graph subset " + std::to_string(*subset) +
                           "; only the set-level contribution of that subset is defined");
  const Trajectory* g = sample.find(channel);
  if (g == nullptr) throw ValidationError("sample '" + sample.set_id + "' has no channel '" + channel + "'");
  return {*subset, g};
}

GraphAttribution attribute_graph(const Trajectory& g, std::size_t subset, const GmanParams& params,
                                 const PartitionSpec& partition) {
  const auto trace = extgnan_trace(g, params.subsets[subset].encoder, partition.feature_subsets);
  const Eigen::RowVectorXd target = trace.node_reprs.colwise().sum();
  const Eigen::VectorXd outgoing = trace.distance_weight.rowwise().sum();
  const Eigen::RowVectorXd source = trace.shape_out.colwise().sum().cwiseProduct(outgoing.transpose());

  GraphAttribution a;
  a.subset = subset;
  a.channel = g.channel_id;
  a.node_times.assign(g.times.begin(), g.times.end());
  a.node_contributions.assign(target.begin(), target.end());
  a.source_contributions.assign(source.begin(), source.end());
  a.total = trace.graph_repr.sum();
  return a;
}

}  // namespace

double node_contribution(const TrajectorySet& sample, const std::string& channel, Index node,
                         const GmanParams& params, const PartitionSpec& partition) {
  check_compatible(params, partition);
  const auto [subset, g] = require_node_eligible(sample, channel, partition);
  return node_repr(*g, node, params.subsets[subset].encoder, partition.feature_subsets).sum();
}

double graph_contribution(const TrajectorySet& sample, const std::string& channel, const GmanParams& params,
                          const PartitionSpec& partition) {
  check_compatible(params, partition);
  const auto [subset, g] = require_node_eligible(sample, channel, partition);
  const Eigen::MatrixXd reps = node_reprs(*g, params.subsets[subset].encoder, partition.feature_subsets);
  return reps.colwise().sum().sum();
}

double set_contribution(const TrajectorySet& sample, std::size_t subset, const GmanParams& params,
                        const PartitionSpec& partition) {
  check_compatible(params, partition);
  if (subset >= partition.num_graph_subsets())
    throw ValidationError("subset index " + std::to_string(subset) + " out of range");
  if (!partition.is_multi(subset))
    throw EligibilityError("subset " + std::to_string(subset) +
                           " holds a single channel; use graph_contribution for its graph");
  const auto routed = route(sample, partition);
  return subset_repr(routed[subset], params.subsets[subset], partition, subset).sum();
}

AttributionReport build_report(const TrajectorySet& sample, const GmanParams& params, const PartitionSpec& partition) {
  check_compatible(params, partition);
  const auto routed = route(sample, partition);
  AttributionReport r;
  r.set_id = sample.set_id;
  double explained = 0.0;
  for (std::size_t i = 0; i < routed.size(); ++i) {
    if (partition.is_multi(i)) {
      SetAttribution s;
      s.subset = i;
      for (const Trajectory* g : routed[i]) s.channels_present.push_back(g->channel_id);
      s.contribution = subset_repr(routed[i], params.subsets[i], partition, i).sum();
      explained += s.contribution;
      r.sets.push_back(std::move(s));
    } else if (!routed[i].empty()) {
      r.graphs.push_back(attribute_graph(*routed[i].front(), i, params, partition));
      explained += r.graphs.back().total;
    }
  }
  r.raw_score = gman_score(sample, params, partition);
  r.completeness_residual = std::abs(r.raw_score - explained);
  return r;
}

}  // namespace gman
