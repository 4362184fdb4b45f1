#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "gman/errors.hpp"
#include "gman/io.hpp"
#include "gman/random.hpp"
#include "gman/synth.hpp"

using namespace gman;

namespace {

DatasetFile parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in, "mem");
}

std::string format_error(const std::string& text) {
  try {
    parse(text);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("hex doubles round-trip bit-exactly") {
  Rng rng(1);
  std::vector<double> values{0.0, -0.0, 1.0, -2.5, 1e-310, std::numeric_limits<double>::max(),
                             std::numeric_limits<double>::denorm_min()};
  for (int k = 0; k < 1000; ++k) values.push_back(rng.normal() * std::pow(10.0, rng.uniform(-30, 30)));
  for (double v : values) {
    const double back = parse_hex_double(hex_double(v));
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
  CHECK(hex_double(3.0) == "0x1.8p+1");
  CHECK(hex_double(-3.0) == "-0x1.8p+1");
  CHECK_THROWS_AS(parse_hex_double("1.5"), FormatError);
  CHECK_THROWS_AS(parse_hex_double("0x1.8p+1junk"), FormatError);
  CHECK_THROWS_AS(hex_double(std::nan("")), NumericError);
}

TEST_CASE("read_dataset: valid file with header, blank lines and unlabeled samples") {
  const auto f = parse(
      "{\"_meta\": {\"rule\": \"r\"}}\n"
      "{\"set_id\": \"a\", \"label\": 1, \"graphs\": [{\"channel\": \"x\", \"nodes\": [{\"t\": 1, \"x\": [2]}, {\"t\": 0, \"x\": [3]}]}]}\n"
      "\n"
      "{\"set_id\": \"b\", \"graphs\": [{\"channel\": \"x\", \"nodes\": [{\"t\": 0, \"x\": [1]}]}]}\n");
  REQUIRE(f.meta.has_value());
  CHECK((*f.meta)["rule"] == "r");
  REQUIRE(f.dataset.samples.size() == 2);
  CHECK(f.dataset.feature_dim == 1);
  CHECK(f.dataset.samples[0].label == 1);
  CHECK_FALSE(f.dataset.samples[1].label.has_value());
  CHECK(f.dataset.samples[0].trajectories[0].times(0) == 0.0);  // canonicalized
}

TEST_CASE("read_dataset: an empty file is an empty dataset") {
  CHECK(parse("").dataset.samples.empty());
}

TEST_CASE("read_dataset: rejects malformed records with a line locus") {
  const std::string ok_graph = R"({"channel": "x", "nodes": [{"t": 0, "x": [1]}]})";
  CHECK(format_error(R"({"set_id": "a", "label": 1, "graphs": [{"channel": "x", "nodes": [{"t": 0, "x": [NaN]}]}]})")
            .starts_with("mem:1:"));
  CHECK(format_error("{\"set_id\": \"a\", \"label\": 1, \"graphs\": [" + ok_graph + "]}\n" +
                     R"({"set_id": "b", "label": 1, "graphs": [{"channel": "x", "nodes": [{"t": 0, "x": [Infinity]}]}]})")
            .starts_with("mem:2:"));
  CHECK_FALSE(format_error(R"({"set_id": "a", "label": 1, "graphs": [{"channel": "x", "nodes": [{"t": 0, "x": [1, 2]}, {"t": 1, "x": [1]}]}]})").empty());
  CHECK_FALSE(format_error("{\"set_id\": \"a\", \"label\": 1, \"graphs\": [" + ok_graph + ", " + ok_graph + "]}").empty());
  CHECK_FALSE(format_error(R"({"set_id": "a", "label": 1, "graphs": [{"channel": "x", "nodes": []}]})").empty());
  CHECK_FALSE(format_error(R"({"set_id": "a", "label": 3, "graphs": [{"channel": "x", "nodes": [{"t": 0, "x": [1]}]}]})").empty());
  CHECK_FALSE(format_error(R"({"set_id": "a", "label": 1})").empty());
  CHECK_FALSE(format_error(R"({"set_id": "a", "label": 1, "graphs": [{"channel": "x", "nodes": [{"t": 0, "x": ["1"]}]}]})").empty());
  CHECK_FALSE(format_error("{\"set_id\": \"a\", \"label\": 1, \"graphs\": [" + ok_graph + "]}\n" +
                           "{\"set_id\": \"a\", \"label\": 0, \"graphs\": [" + ok_graph + "]}")
                  .empty());
  // feature dimension differs between samples
  CHECK_FALSE(format_error("{\"set_id\": \"a\", \"label\": 1, \"graphs\": [" + ok_graph + "]}\n" +
                           R"({"set_id": "b", "label": 0, "graphs": [{"channel": "x", "nodes": [{"t": 0, "x": [1, 2]}]}]})")
                  .empty());
  CHECK_FALSE(format_error("not json").empty());
}

TEST_CASE("dataset write/read is idempotent") {
  SparseTrajOptions o;
  o.samples = 30;
  o.seed = 4;
  const Dataset ds = synth_sparse_traj(o);
  std::ostringstream out;
  write_dataset(out, ds, sparse_traj_meta(o));
  std::istringstream in(out.str());
  const auto back = read_dataset(in);
  CHECK(back.dataset == ds);
  std::ostringstream again;
  write_dataset(again, back.dataset, back.meta);
  CHECK(again.str() == out.str());
}

TEST_CASE("partition json") {
  const PartitionSpec p{{{0}, {1, 2}}, {{"hr"}, {"bp", "spo2"}}};
  CHECK(partition_from_json(partition_to_json(p)) == p);
  CHECK_THROWS_AS(partition_from_json(json::parse(R"({"feature_subsets": [[0]]})")), FormatError);
  CHECK_THROWS_AS(partition_from_json(json::parse(R"({"feature_subsets": [["a"]], "graph_subsets": [["x"]]})")),
                  FormatError);
}

TEST_CASE("train config json") {
  TrainConfig c;
  c.max_epochs = 7;
  c.metric = SelectionMetric::val_auroc;
  c.arch = ArchConfig{2, 9};
  c.seed = 123456789012345ULL;
  CHECK(train_config_from_json(train_config_to_json(c)) == c);
  const auto partial = train_config_from_json(json::parse(R"({"max_epochs": 3, "val_fraction": 0.2})"));
  CHECK(partial.max_epochs == 3);
  CHECK(partial.batch_size == TrainConfig{}.batch_size);
  CHECK_THROWS_AS(train_config_from_json(json::parse(R"({"max_epoch": 3})")), FormatError);
  CHECK_THROWS_AS(train_config_from_json(json::parse(R"({"metric": "f1"})")), ValidationError);
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  SparseTrajOptions o;
  o.samples = 100;
  o.seed = 8;
  const Dataset ds = normalize(synth_sparse_traj(o));
  const auto partition = sparse_traj_grouped_partition(o);
  Checkpoint c;
  c.feature_dim = ds.feature_dim;
  c.partition = partition;
  c.params = gman_init(partition, 77);
  c.normalization = ds.normalization;
  c.config.seed = 77;

  std::stringstream buf;
  save_checkpoint(buf, c);
  const Checkpoint back = load_checkpoint(buf);
  CHECK(back.params == c.params);
  CHECK(back.partition == c.partition);
  CHECK(back.config == c.config);
  CHECK(back.normalization.mean == c.normalization.mean);
  CHECK(back.normalization.stddev == c.normalization.stddev);
  for (const auto& s : ds.samples) CHECK(gman_score(s, back.params, back.partition) == gman_score(s, c.params, partition));
}

TEST_CASE("checkpoint: rejects version mismatch and inconsistent contents") {
  const PartitionSpec partition{{{0}}, {{"a"}}};
  Checkpoint c;
  c.feature_dim = 1;
  c.partition = partition;
  c.params = gman_init(partition, 1);
  std::stringstream buf;
  save_checkpoint(buf, c);
  json j = json::parse(buf.str());

  json wrong_version = j;
  wrong_version["format_version"] = 2;
  std::istringstream v(wrong_version.dump());
  try {
    load_checkpoint(v);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  json wrong_dim = j;
  wrong_dim["feature_dim"] = 3;
  std::istringstream d(wrong_dim.dump());
  CHECK_THROWS_AS(load_checkpoint(d), Error);

  std::istringstream garbage("{\"format_version\": 1");
  CHECK_THROWS_AS(load_checkpoint(garbage), FormatError);
}

TEST_CASE("report serialization") {
  const auto partition = set_xor_grouped_partition();
  const auto params = set_xor_gadget_params();
  const auto sample = synth_set_xor().samples[1];
  const auto report = build_report(sample, params, partition);
  const json j = report_to_json(report);
  CHECK(j["raw_score"] == 1.0);
  CHECK(j["completeness_residual"].get<double>() <= kCompletenessTolerance);
  CHECK(j.contains("probability"));
  const std::string svg = report_to_svg(report);
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("svg escapes markup in labels") {
  const PartitionSpec partition{{{0}}, {{"a<b&c"}}};
  const auto sample = make_trajectory_set("<id>", 1, {make_trajectory("a<b&c", {0.0}, {{1.0}})});
  const auto svg = report_to_svg(build_report(sample, gman_init(partition, 1), partition));
  CHECK(svg.find("a<b") == std::string::npos);
  CHECK(svg.find("a&lt;b&amp;c") != std::string::npos);
}

TEST_CASE("training log lines") {
  EpochRecord r;
  r.epoch = 2;
  r.train_loss = 0.5;
  r.val_loss = 0.25;
  r.val_metric = 0.25;
  r.lr = 1e-3;
  const json j = epoch_record_to_json(r);
  for (const char* key : {"epoch", "train_loss", "val_loss", "val_metric", "lr"}) CHECK(j.contains(key));
  CHECK(j["val_auroc"].is_null());
  std::ostringstream out;
  write_training_log(out, {r, r});
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}
