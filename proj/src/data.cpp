#include "gman/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "gman/errors.hpp"

namespace gman {

namespace {

void canonicalize(Trajectory& g) {
  const Index n = g.num_nodes();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (g.times(a) != g.times(b)) return g.times(a) < g.times(b);
    const auto ca = g.features.col(a);
    const auto cb = g.features.col(b);
    return std::lexicographical_compare(ca.begin(), ca.end(), cb.begin(), cb.end());
  });
  Eigen::VectorXd times(n);
  Eigen::MatrixXd features(g.features.rows(), n);
  for (Index k = 0; k < n; ++k) {
    times(k) = g.times(order[static_cast<std::size_t>(k)]);
    features.col(k) = g.features.col(order[static_cast<std::size_t>(k)]);
  }
  g.times = std::move(times);
  g.features = std::move(features);
}

}  // namespace

Trajectory make_trajectory_from_matrix(std::string channel_id, Eigen::VectorXd times, Eigen::MatrixXd features) {
  if (times.size() == 0) throw ValidationError("trajectory '" + channel_id + "' has no nodes");
  if (features.cols() != times.size())
    throw ValidationError("trajectory '" + channel_id + "': feature column count does not match node count");
  if (features.rows() == 0) throw ValidationError("trajectory '" + channel_id + "' has zero-length feature vectors");
  if (!times.allFinite()) throw ValidationError("trajectory '" + channel_id + "' has non-finite timestamps");
  if (!features.allFinite()) throw ValidationError("trajectory '" + channel_id + "' has non-finite features");
  Trajectory g{std::move(channel_id), std::move(times), std::move(features)};
  canonicalize(g);
  return g;
}

Trajectory make_trajectory(std::string channel_id, const std::vector<double>& times,
                           const std::vector<std::vector<double>>& features) {
  if (times.size() != features.size())
    throw ValidationError("trajectory '" + channel_id + "': " + std::to_string(times.size()) + " timestamps but " +
                          std::to_string(features.size()) + " feature vectors");
  if (times.empty()) throw ValidationError("trajectory '" + channel_id + "' has no nodes");
  const auto d = static_cast<Index>(features.front().size());
  const auto n = static_cast<Index>(times.size());
  Eigen::MatrixXd x(d, n);
  for (Index k = 0; k < n; ++k) {
    const auto& row = features[static_cast<std::size_t>(k)];
    if (static_cast<Index>(row.size()) != d)
      throw ValidationError("trajectory '" + channel_id + "': ragged feature vectors (node " + std::to_string(k) +
                            " has " + std::to_string(row.size()) + ", expected " + std::to_string(d) + ")");
    for (Index c = 0; c < d; ++c) x(c, k) = row[static_cast<std::size_t>(c)];
  }
  return make_trajectory_from_matrix(std::move(channel_id), Eigen::Map<const Eigen::VectorXd>(times.data(), n), std::move(x));
}

Trajectory make_static_trajectory(std::string channel_id, const std::vector<double>& features) {
  return make_trajectory(std::move(channel_id), std::vector<double>{0.0}, {features});
}

const Trajectory* TrajectorySet::find(const std::string& channel) const {
  auto it = std::lower_bound(trajectories.begin(), trajectories.end(), channel,
                             [](const Trajectory& g, const std::string& c) { return g.channel_id < c; });
  return it != trajectories.end() && it->channel_id == channel ? &*it : nullptr;
}

TrajectorySet make_trajectory_set(std::string set_id, std::optional<int> label,
                                  std::vector<Trajectory> trajectories) {
  if (trajectories.empty()) throw ValidationError("sample '" + set_id + "' has no trajectories");
  if (label && *label != 0 && *label != 1)
    throw ValidationError("sample '" + set_id + "': label must be 0 or 1, got " + std::to_string(*label));
  std::sort(trajectories.begin(), trajectories.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.channel_id < b.channel_id; });
  const Index d = trajectories.front().feature_dim();
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    if (trajectories[k].feature_dim() != d)
      throw ValidationError("sample '" + set_id + "': channel '" + trajectories[k].channel_id + "' has " +
                            std::to_string(trajectories[k].feature_dim()) + " features, expected " +
                            std::to_string(d));
    if (k > 0 && trajectories[k].channel_id == trajectories[k - 1].channel_id)
      throw ValidationError("sample '" + set_id + "': duplicate channel '" + trajectories[k].channel_id + "'");
  }
  return TrajectorySet{std::move(set_id), label, std::move(trajectories)};
}

std::optional<std::size_t> PartitionSpec::subset_of(const std::string& channel) const {
  for (std::size_t i = 0; i < graph_subsets.size(); ++i)
    if (std::find(graph_subsets[i].begin(), graph_subsets[i].end(), channel) != graph_subsets[i].end()) return i;
  return std::nullopt;
}

PartitionSpec singleton_partition(Index feature_dim, const std::vector<std::string>& channels) {
  PartitionSpec p;
  for (Index c = 0; c < feature_dim; ++c) p.feature_subsets.push_back({c});
  for (const auto& ch : channels) p.graph_subsets.push_back({ch});
  return p;
}

const char* to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::empty_feature_subset: return "empty_feature_subset";
    case Violation::Kind::feature_out_of_range: return "feature_out_of_range";
    case Violation::Kind::feature_overlap: return "feature_overlap";
    case Violation::Kind::feature_gap: return "feature_gap";
    case Violation::Kind::empty_graph_subset: return "empty_graph_subset";
    case Violation::Kind::channel_overlap: return "channel_overlap";
    case Violation::Kind::channel_gap: return "channel_gap";
  }
  return "?";
}

std::vector<Violation> validate_partition(const PartitionSpec& spec, Index feature_dim,
                                          const std::set<std::string>& channels) {
  using K = Violation::Kind;
  std::vector<Violation> out;

  std::vector<int> hits(static_cast<std::size_t>(std::max<Index>(feature_dim, 0)), 0);
  for (std::size_t l = 0; l < spec.feature_subsets.size(); ++l) {
    const auto& subset = spec.feature_subsets[l];
    if (subset.empty())
      out.push_back({K::empty_feature_subset, "feature_subsets[" + std::to_string(l) + "]",
                     "feature subset " + std::to_string(l) + " is empty"});
    for (Index idx : subset) {
      if (idx < 0 || idx >= feature_dim) {
        out.push_back({K::feature_out_of_range, std::to_string(idx),
                       "feature index " + std::to_string(idx) + " in subset " + std::to_string(l) +
                           " is outside [0, " + std::to_string(feature_dim) + ")"});
        continue;
      }
      if (++hits[static_cast<std::size_t>(idx)] == 2)
        out.push_back({K::feature_overlap, std::to_string(idx),
                       "feature index " + std::to_string(idx) + " appears in more than one subset"});
    }
  }
  for (Index idx = 0; idx < feature_dim; ++idx)
    if (hits[static_cast<std::size_t>(idx)] == 0)
      out.push_back({K::feature_gap, std::to_string(idx),
                     "feature index " + std::to_string(idx) + " is not covered by any subset"});

  std::map<std::string, int> seen;
  for (std::size_t i = 0; i < spec.graph_subsets.size(); ++i) {
    const auto& subset = spec.graph_subsets[i];
    if (subset.empty())
      out.push_back({K::empty_graph_subset, "graph_subsets[" + std::to_string(i) + "]",
                     "graph subset " + std::to_string(i) + " is empty"});
    for (const auto& ch : subset)
      if (++seen[ch] == 2)
        out.push_back({K::channel_overlap, ch, "channel '" + ch + "' appears in more than one graph subset"});
  }
  for (const auto& ch : channels)
    if (!seen.contains(ch))
      out.push_back({K::channel_gap, ch, "channel '" + ch + "' is not assigned to any graph subset"});
  return out;
}

void require_valid_partition(const PartitionSpec& spec, Index feature_dim, const std::set<std::string>& channels) {
  const auto violations = validate_partition(spec, feature_dim, channels);
  if (violations.empty()) return;
  std::string msg = "invalid partition";
  for (const auto& v : violations) msg += "\n  " + std::string(to_string(v.kind)) + " " + v.locus + ": " + v.message;
  throw ValidationError(msg);
}

NormalizationStats fit_normalization(std::span<const TrajectorySet> samples, Index feature_dim) {
  NormalizationStats stats;
  stats.mean = Eigen::VectorXd::Zero(feature_dim);
  stats.stddev = Eigen::VectorXd::Zero(feature_dim);
  double count = 0.0;
  for (const auto& s : samples)
    for (const auto& g : s.trajectories) {
      stats.mean += g.features.rowwise().sum();
      count += static_cast<double>(g.num_nodes());
    }
  if (count == 0.0) throw ValidationError("cannot fit normalization on an empty split");
  stats.mean /= count;
  for (const auto& s : samples)
    for (const auto& g : s.trajectories)
      stats.stddev += (g.features.colwise() - stats.mean).rowwise().squaredNorm();
  stats.stddev = (stats.stddev / count).cwiseSqrt();
  for (Index c = 0; c < feature_dim; ++c) {
    if (stats.stddev(c) < kStdFloor) {
      stats.stddev(c) = kStdFloor;
      stats.warnings.push_back("feature " + std::to_string(c) + " is constant; std floored at 1e-8");
    }
  }
  return stats;
}

std::set<std::string> Dataset::channels() const {
  std::set<std::string> out;
  for (const auto& s : samples)
    for (const auto& g : s.trajectories) out.insert(g.channel_id);
  return out;
}

void validate_dataset(const Dataset& dataset) {
  std::set<std::string> ids;
  for (const auto& s : dataset.samples) {
    if (s.feature_dim() != dataset.feature_dim)
      throw ValidationError("sample '" + s.set_id + "' has " + std::to_string(s.feature_dim()) +
                            " features, dataset expects " + std::to_string(dataset.feature_dim));
    if (!ids.insert(s.set_id).second) throw ValidationError("duplicate set_id '" + s.set_id + "'");
  }
}

Dataset normalize(Dataset dataset, const NormalizationStats& stats) {
  if (stats.mean.size() != dataset.feature_dim || stats.stddev.size() != dataset.feature_dim)
    throw ValidationError("normalization statistics do not match the dataset feature dimension");
  for (auto& s : dataset.samples)
    for (auto& g : s.trajectories) {
      g.features = ((g.features.colwise() - stats.mean).array().colwise() / stats.stddev.array()).matrix();
      // Rounding can merge distinct feature values; restore canonical order.
      g = make_trajectory_from_matrix(std::move(g.channel_id), std::move(g.times), std::move(g.features));
    }
  dataset.normalization = stats;
  return dataset;
}

Dataset normalize(Dataset dataset) {
  auto stats = fit_normalization(dataset.samples, dataset.feature_dim);
  return normalize(std::move(dataset), stats);
}

}  // namespace gman
