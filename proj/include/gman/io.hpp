#pragma once

// File formats.
//
// Dataset (JSONL): one sample per line,
//   {"set_id": "...", "label": 0|1, "graphs": [{"channel": "...", "nodes": [{"t": 0.5, "x": [..]}, ..]}, ..]}
// "label" may be omitted for unlabeled data. A line holding a single "_meta"
// object is a header (generator settings and label rule) and is skipped by
// the sample reader. Blank lines are ignored.
//
// Partition (JSON): {"feature_subsets": [[0], [1, 2]], "graph_subsets": [["hr"], ["bp", "spo2"]]}
//
// Checkpoint (JSON): every parameter stored as hexadecimal floating-point
// text ("0x1.8p+1"), so load(save(m)) is bit-identical.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gman/data.hpp"
#include "gman/interpret.hpp"
#include "gman/mixer.hpp"
#include "gman/training.hpp"

namespace gman {

using json = nlohmann::ordered_json;

inline constexpr int kCheckpointFormatVersion = 1;

std::string hex_double(double v);
double parse_hex_double(const std::string& s);

struct DatasetFile {
  Dataset dataset;
  std::optional<json> meta;
};

/// Throws FormatError with "<source>:<line>: ..." on any malformed record:
/// invalid JSON (including NaN/Infinity literals), ragged feature vectors,
/// duplicate channels, empty trajectories, mismatched feature dimensions.
DatasetFile read_dataset(std::istream& in, const std::string& source = "<stream>");
DatasetFile read_dataset_file(const std::string& path);

void write_dataset(std::ostream& out, const Dataset& dataset, const std::optional<json>& meta = std::nullopt);
void write_dataset_file(const std::string& path, const Dataset& dataset, const std::optional<json>& meta = std::nullopt);

json sample_to_json(const TrajectorySet& sample);
TrajectorySet sample_from_json(const json& j);

json partition_to_json(const PartitionSpec& p);
PartitionSpec partition_from_json(const json& j);
PartitionSpec read_partition_file(const std::string& path);

/// Unknown keys are rejected so typos do not silently fall back to defaults.
json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);

json mlp_to_json(const Mlp& m);
Mlp mlp_from_json(const json& j);

json params_to_json(const GmanParams& p);
GmanParams params_from_json(const json& j);

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  Index feature_dim = 0;
  PartitionSpec partition;
  GmanParams params;
  TrainConfig config;
  NormalizationStats normalization;  // empty when data was used raw
};

void save_checkpoint(std::ostream& out, const Checkpoint& c);
void save_checkpoint_file(const std::string& path, const Checkpoint& c);
/// Rejects any format_version other than kCheckpointFormatVersion.
Checkpoint load_checkpoint(std::istream& in, const std::string& source = "<stream>");
Checkpoint load_checkpoint_file(const std::string& path);

json epoch_record_to_json(const EpochRecord& r);
void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log);

json report_to_json(const AttributionReport& r);

/// Horizontal bar chart of the report's graph and set totals.
std::string report_to_svg(const AttributionReport& r);

}  // namespace gman
