#pragma once

// End-to-end gradient verification by central differences on the loss,
// computed only through the forward scoring path.

#include <cstdint>
#include <string>

#include "gman/data.hpp"
#include "gman/mixer.hpp"

namespace gman {

struct GradcheckCase {
  TrajectorySet sample;
  int label = 0;
  PartitionSpec partition;
  GmanParams params;
};

/// A random toy model and sample: 1-3 channels, 1-4 nodes per channel,
/// 1-3 features, random feature and graph partitions (some subsets
/// multi-graph), small networks with every parameter (biases included)
/// drawn uniformly so no unit sits exactly on a relu kink.
GradcheckCase random_gradcheck_case(std::uint64_t seed);

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::string worst_array;
  std::size_t num_params = 0;
};

inline constexpr double kGradcheckStep = 1e-5;
/// Denominator floor: relative error is |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradcheckFloor = 1e-6;

GradcheckResult check_gradients(const GradcheckCase& c, double step = kGradcheckStep);

}  // namespace gman
