#include "gman/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "gman/errors.hpp"

namespace gman {

std::string hex_double(double v) {
  if (!std::isfinite(v)) throw NumericError("cannot encode non-finite value");
  char buf[64];
  const bool negative = std::signbit(v);
  const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(v), std::chars_format::hex);
  return std::string(negative ? "-0x" : "0x") + std::string(buf, res.ptr);
}

double parse_hex_double(const std::string& s) {
  std::string_view body(s);
  bool negative = false;
  if (!body.empty() && body.front() == '-') {
    negative = true;
    body.remove_prefix(1);
  }
  if (body.size() < 3 || body.substr(0, 2) != "0x") throw FormatError("expected hex float, got '" + s + "'");
  body.remove_prefix(2);
  double v = 0.0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), v, std::chars_format::hex);
  if (res.ec != std::errc{} || res.ptr != body.data() + body.size())
    throw FormatError("malformed hex float '" + s + "'");
  return negative ? -v : v;
}

// --------------------------------------------------------------------------
// Dataset

json sample_to_json(const TrajectorySet& sample) {
  json j;
  j["set_id"] = sample.set_id;
  if (sample.label) j["label"] = *sample.label;
  json graphs = json::array();
  for (const auto& g : sample.trajectories) {
    json nodes = json::array();
    for (Index k = 0; k < g.num_nodes(); ++k) {
      json x = json::array();
      for (Index c = 0; c < g.feature_dim(); ++c) x.push_back(g.features(c, k));
      nodes.push_back(json{{"t", g.times(k)}, {"x", std::move(x)}});
    }
    graphs.push_back(json{{"channel", g.channel_id}, {"nodes", std::move(nodes)}});
  }
  j["graphs"] = std::move(graphs);
  return j;
}

namespace {

double finite_number(const json& v, const char* what) {
  if (!v.is_number()) throw FormatError(std::string(what) + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw FormatError(std::string(what) + " must be finite");
  return d;
}

}  // namespace

TrajectorySet sample_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("sample must be a JSON object");
  if (!j.contains("set_id") || !j["set_id"].is_string()) throw FormatError("sample needs a string 'set_id'");
  std::optional<int> label;
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_number_integer()) throw FormatError("label must be 0 or 1");
    label = j["label"].get<int>();
  }
  if (!j.contains("graphs") || !j["graphs"].is_array()) throw FormatError("sample needs a 'graphs' array");
  std::vector<Trajectory> graphs;
  for (const auto& g : j["graphs"]) {
    if (!g.contains("channel") || !g["channel"].is_string()) throw FormatError("graph needs a string 'channel'");
    if (!g.contains("nodes") || !g["nodes"].is_array()) throw FormatError("graph needs a 'nodes' array");
    std::vector<double> times;
    std::vector<std::vector<double>> features;
    for (const auto& n : g["nodes"]) {
      if (!n.contains("t") || !n.contains("x") || !n["x"].is_array()) throw FormatError("node needs 't' and 'x'");
      times.push_back(finite_number(n["t"], "node time"));
      std::vector<double> x;
      for (const auto& v : n["x"]) x.push_back(finite_number(v, "feature value"));
      features.push_back(std::move(x));
    }
    graphs.push_back(make_trajectory(g["channel"].get<std::string>(), times, features));
  }
  return make_trajectory_set(j["set_id"].get<std::string>(), label, std::move(graphs));
}

DatasetFile read_dataset(std::istream& in, const std::string& source) {
  DatasetFile out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.is_object() && j.size() == 1 && j.contains("_meta")) {
        out.meta = j["_meta"];
        continue;
      }
      TrajectorySet s = sample_from_json(j);
      if (out.dataset.samples.empty()) out.dataset.feature_dim = s.feature_dim();
      if (s.feature_dim() != out.dataset.feature_dim)
        throw FormatError("sample has " + std::to_string(s.feature_dim()) + " features, earlier samples have " +
                          std::to_string(out.dataset.feature_dim));
      for (const auto& prev : out.dataset.samples)
        if (prev.set_id == s.set_id) throw FormatError("duplicate set_id '" + s.set_id + "'");
      out.dataset.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
    } catch (const Error& e) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

DatasetFile read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open dataset '" + path + "'");
  return read_dataset(in, path);
}

void write_dataset(std::ostream& out, const Dataset& dataset, const std::optional<json>& meta) {
  if (meta) out << json{{"_meta", *meta}}.dump() << '\n';
  for (const auto& s : dataset.samples) out << sample_to_json(s).dump() << '\n';
}

void write_dataset_file(const std::string& path, const Dataset& dataset, const std::optional<json>& meta) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  write_dataset(out, dataset, meta);
}

// --------------------------------------------------------------------------
// Partition and config

json partition_to_json(const PartitionSpec& p) {
  return json{{"feature_subsets", p.feature_subsets}, {"graph_subsets", p.graph_subsets}};
}

PartitionSpec partition_from_json(const json& j) {
  try {
    PartitionSpec p;
    p.feature_subsets = j.at("feature_subsets").get<FeaturePartition>();
    p.graph_subsets = j.at("graph_subsets").get<GraphPartition>();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(std::string("partition: ") + e.what());
  }
}

PartitionSpec read_partition_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open partition '" + path + "'");
  try {
    return partition_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw FormatError(path + ": invalid JSON: " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"max_epochs", c.max_epochs},
              {"batch_size", c.batch_size},
              {"max_learning_rate", c.max_learning_rate},
              {"min_learning_rate", c.min_learning_rate},
              {"scheduler_factor", c.scheduler_factor},
              {"scheduler_patience", c.scheduler_patience},
              {"weight_decay", c.weight_decay},
              {"seed", c.seed},
              {"metric", to_string(c.metric)},
              {"early_stop_patience", c.early_stop_patience},
              {"hidden_layers", c.arch.hidden_layers},
              {"hidden_width", c.arch.hidden_width}};
}

TrainConfig train_config_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("train config must be a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "max_epochs") c.max_epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "max_learning_rate") c.max_learning_rate = v.get<double>();
      else if (key == "min_learning_rate") c.min_learning_rate = v.get<double>();
      else if (key == "scheduler_factor") c.scheduler_factor = v.get<double>();
      else if (key == "scheduler_patience") c.scheduler_patience = v.get<int>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "metric") c.metric = selection_metric_from_string(v.get<std::string>());
      else if (key == "early_stop_patience") c.early_stop_patience = v.get<int>();
      else if (key == "hidden_layers") c.arch.hidden_layers = v.get<int>();
      else if (key == "hidden_width") c.arch.hidden_width = v.get<int>();
      else if (key == "val_fraction") continue;  // consumed by the CLI
      else throw FormatError("unknown train config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  validate(c);
  return c;
}

// --------------------------------------------------------------------------
// Parameters

namespace {

json hex_array(const double* data, Index n) {
  json a = json::array();
  for (Index k = 0; k < n; ++k) a.push_back(hex_double(data[k]));
  return a;
}

void read_hex_array(const json& a, double* data, Index n, const std::string& what) {
  if (!a.is_array() || static_cast<Index>(a.size()) != n)
    throw FormatError(what + ": expected " + std::to_string(n) + " values");
  for (Index k = 0; k < n; ++k) data[k] = parse_hex_double(a[static_cast<std::size_t>(k)].get<std::string>());
}

json hex_vector(const Eigen::VectorXd& v) { return hex_array(v.data(), v.size()); }

Eigen::VectorXd vector_from_hex(const json& a, const std::string& what) {
  if (!a.is_array()) throw FormatError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Index>(a.size()));
  read_hex_array(a, v.data(), v.size(), what);
  return v;
}

}  // namespace

json mlp_to_json(const Mlp& m) {
  json layers = json::array();
  for (std::size_t k = 0; k < m.num_layers(); ++k) {
    // weights stored row-major for readability
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = m.weights[k];
    layers.push_back(json{{"rows", w.rows()},
                          {"cols", w.cols()},
                          {"weights", hex_array(w.data(), w.size())},
                          {"bias", hex_vector(m.biases[k])}});
  }
  return json{{"activation", to_string(m.activation)},
              {"output_activation", to_string(m.output_activation)},
              {"layers", std::move(layers)}};
}

Mlp mlp_from_json(const json& j) {
  Mlp m;
  m.activation = activation_from_string(j.at("activation").get<std::string>());
  m.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  Index prev = -1;
  for (const auto& layer : j.at("layers")) {
    const auto rows = layer.at("rows").get<Index>();
    const auto cols = layer.at("cols").get<Index>();
    if (rows <= 0 || cols <= 0 || (prev >= 0 && cols != prev)) throw FormatError("network layer shapes do not chain");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(rows, cols);
    read_hex_array(layer.at("weights"), w.data(), w.size(), "layer weights");
    m.weights.emplace_back(w);
    m.biases.push_back(vector_from_hex(layer.at("bias"), "layer bias"));
    if (m.biases.back().size() != rows) throw FormatError("bias length does not match layer width");
    prev = rows;
  }
  if (m.weights.empty()) throw FormatError("network has no layers");
  return m;
}

json params_to_json(const GmanParams& p) {
  json subsets = json::array();
  for (const auto& s : p.subsets) {
    json psi = json::array();
    for (const auto& net : s.encoder.psi) psi.push_back(mlp_to_json(net));
    subsets.push_back(json{{"encoder", {{"rho", mlp_to_json(s.encoder.rho)}, {"psi", std::move(psi)}}},
                           {"deepset_f", s.deepset_f ? mlp_to_json(*s.deepset_f) : json(nullptr)},
                           {"deepset_g", s.deepset_g ? mlp_to_json(*s.deepset_g) : json(nullptr)}});
  }
  return subsets;
}

GmanParams params_from_json(const json& j) {
  GmanParams p;
  for (const auto& s : j) {
    SubsetParams sp;
    sp.encoder.rho = mlp_from_json(s.at("encoder").at("rho"));
    for (const auto& net : s.at("encoder").at("psi")) sp.encoder.psi.push_back(mlp_from_json(net));
    if (!s.at("deepset_f").is_null()) sp.deepset_f = mlp_from_json(s["deepset_f"]);
    if (!s.at("deepset_g").is_null()) sp.deepset_g = mlp_from_json(s["deepset_g"]);
    p.subsets.push_back(std::move(sp));
  }
  return p;
}

// --------------------------------------------------------------------------
// Checkpoint

void save_checkpoint(std::ostream& out, const Checkpoint& c) {
  json j;
  j["format_version"] = c.format_version;
  j["feature_dim"] = c.feature_dim;
  j["partition"] = partition_to_json(c.partition);
  j["train_config"] = train_config_to_json(c.config);
  if (c.normalization.empty()) {
    j["normalization"] = nullptr;
  } else {
    j["normalization"] = {{"mean", hex_vector(c.normalization.mean)}, {"stddev", hex_vector(c.normalization.stddev)}};
  }
  j["params"] = params_to_json(c.params);
  out << j.dump(1) << '\n';
}

void save_checkpoint_file(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write checkpoint '" + path + "'");
  save_checkpoint(out, c);
}

Checkpoint load_checkpoint(std::istream& in, const std::string& source) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(source + ": invalid JSON: " + e.what());
  }
  try {
    Checkpoint c;
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion)
      throw FormatError("checkpoint format_version " + std::to_string(c.format_version) +
                        " is not supported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    c.feature_dim = j.at("feature_dim").get<Index>();
    c.partition = partition_from_json(j.at("partition"));
    c.config = train_config_from_json(j.at("train_config"));
    if (!j.at("normalization").is_null()) {
      c.normalization.mean = vector_from_hex(j["normalization"].at("mean"), "normalization mean");
      c.normalization.stddev = vector_from_hex(j["normalization"].at("stddev"), "normalization stddev");
    }
    c.params = params_from_json(j.at("params"));
    check_compatible(c.params, c.partition);
    if (partition_dim(c.partition.feature_subsets) != c.feature_dim)
      throw FormatError("checkpoint partition does not cover feature_dim");
    return c;
  } catch (const json::exception& e) {
    throw FormatError(source + ": " + e.what());
  } catch (const Error& e) {
    throw FormatError(source + ": " + e.what());
  }
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in, path);
}

// --------------------------------------------------------------------------
// Logs and reports

json epoch_record_to_json(const EpochRecord& r) {
  return json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"train_accuracy", r.train_accuracy},
              {"val_loss", r.val_loss},
              {"val_auroc", r.val_auroc ? json(*r.val_auroc) : json(nullptr)},
              {"val_metric", r.val_metric},
              {"lr", r.lr}};
}

void write_training_log(std::ostream& out, const std::vector<EpochRecord>& log) {
  for (const auto& r : log) out << epoch_record_to_json(r).dump() << '\n';
}

json report_to_json(const AttributionReport& r) {
  json graphs = json::array();
  for (const auto& g : r.graphs) {
    graphs.push_back(json{{"subset", g.subset},
                          {"channel", g.channel},
                          {"node_times", g.node_times},
                          {"node_contributions", g.node_contributions},
                          {"source_contributions", g.source_contributions},
                          {"total", g.total}});
  }
  json sets = json::array();
  for (const auto& s : r.sets)
    sets.push_back(json{{"subset", s.subset}, {"channels_present", s.channels_present}, {"contribution", s.contribution}});
  return json{{"set_id", r.set_id},
              {"raw_score", r.raw_score},
              {"probability", predict_proba(r.raw_score)},
              {"graphs", std::move(graphs)},
              {"sets", std::move(sets)},
              {"completeness_residual", r.completeness_residual}};
}

namespace {

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string report_to_svg(const AttributionReport& r) {
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& g : r.graphs) bars.emplace_back(g.channel, g.total);
  for (const auto& s : r.sets) {
    std::string label = "{";
    for (std::size_t k = 0; k < s.channels_present.size(); ++k) label += (k ? "," : "") + s.channels_present[k];
    bars.emplace_back(label + "}", s.contribution);
  }
  double extent = 1e-12;
  for (const auto& [_, v] : bars) extent = std::max(extent, std::abs(v));

  constexpr int kBar = 22;
  constexpr int kLabel = 160;
  constexpr int kHalf = 220;
  const int height = 40 + kBar * static_cast<int>(bars.size());
  const int axis = kLabel + kHalf;
  std::ostringstream svg;
  svg << std::setprecision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabel + 2 * kHalf + 80 << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"4\" y=\"16\">" << xml_escape(r.set_id) << "  score " << r.raw_score << "</text>\n";
  svg << "<line x1=\"" << axis << "\" y1=\"24\" x2=\"" << axis << "\" y2=\"" << height - 8
      << "\" stroke=\"#444\"/>\n";
  int y = 28;
  for (const auto& [label, v] : bars) {
    const double w = kHalf * std::abs(v) / extent;
    const double x = v >= 0 ? axis : axis - w;
    svg << "<text x=\"4\" y=\"" << y + 14 << "\">" << xml_escape(label) << "</text>\n";
    svg << "<rect x=\"" << x << "\" y=\"" << y + 3 << "\" width=\"" << w << "\" height=\"" << kBar - 6
        << "\" fill=\"" << (v >= 0 ? "#c0392b" : "#2471a3") << "\"/>\n";
    svg << "<text x=\"" << kLabel + 2 * kHalf + 8 << "\" y=\"" << y + 14 << "\">" << v << "</text>\n";
    y += kBar;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace gman
