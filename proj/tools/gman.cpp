// gman: command-line front end for training and inspecting graph mixing
// additive networks.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage or validation error,
// 3 malformed input file, 4 numeric failure or divergence, 5 ineligible
// attribution request or undefined metric. Every failure prints one line
// "error:<kind>: <message>" to stderr.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gman/errors.hpp"
#include "gman/gradcheck.hpp"
#include "gman/interpret.hpp"
#include "gman/io.hpp"
#include "gman/random.hpp"
#include "gman/synth.hpp"
#include "gman/training.hpp"

namespace fs = std::filesystem;
using namespace gman;

namespace {

constexpr const char* kOutDirEnv = "GMAN_OUT_DIR";

int exit_code(const std::string& kind) {
  if (kind == "usage" || kind == "validation") return 2;
  if (kind == "format") return 3;
  if (kind == "numeric") return 4;
  if (kind == "eligibility" || kind == "metric") return 5;
  return 1;
}

std::string one_line(const std::string& text) {
  std::string out;
  for (std::size_t k = 0; k < text.size(); ++k) {
    if (text[k] != '\n') {
      out += text[k];
      continue;
    }
    while (k + 1 < text.size() && text[k + 1] == ' ') ++k;
    out += "; ";
  }
  return out;
}

/// --out wins, then $GMAN_OUT_DIR, then the working directory.
fs::path output_dir(const std::string& flag) {
  fs::path dir = ".";
  if (!flag.empty()) {
    dir = flag;
  } else if (const char* env = std::getenv(kOutDirEnv); env && *env) {
    dir = env;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

Dataset apply_stats(Dataset ds, const NormalizationStats& stats) {
  return stats.empty() || ds.samples.empty() ? ds : normalize(std::move(ds), stats);
}

void require_dim(const Dataset& ds, const Checkpoint& ck) {
  if (!ds.samples.empty() && ds.feature_dim != ck.feature_dim)
    throw ValidationError("dataset has " + std::to_string(ds.feature_dim) + " features, checkpoint expects " +
                          std::to_string(ck.feature_dim));
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string task;
  std::string out;
  SparseTrajOptions sparse;
};

int run_synth(const SynthArgs& a) {
  Dataset ds;
  std::optional<json> meta;
  PartitionSpec grouped, singleton;
  if (a.task == "feature_xor") {
    ds = synth_feature_xor();
    grouped = {{{0, 1}}, {{"g"}}};
    singleton = singleton_partition(2, {"g"});
    meta = json{{"task", "feature_xor"}, {"label_rule", "x1 XOR x2 on a single node"}};
  } else if (a.task == "set_xor") {
    ds = synth_set_xor();
    grouped = set_xor_grouped_partition();
    singleton = singleton_partition(1, {"g1", "g2"});
    meta = json{{"task", "set_xor"}, {"label_rule", "x1 XOR x2 across graphs g1 and g2"}};
  } else {
    ds = synth_sparse_traj(a.sparse);
    grouped = sparse_traj_grouped_partition(a.sparse);
    singleton = sparse_traj_singleton_partition(a.sparse);
    meta = sparse_traj_meta(a.sparse);
  }
  const fs::path dir = output_dir(a.out);
  const fs::path data = dir / (a.task + ".jsonl");
  write_dataset_file(data.string(), ds, meta);
  write_text(dir / (a.task + ".grouped.json"), partition_to_json(grouped).dump(2) + "\n");
  write_text(dir / (a.task + ".singleton.json"), partition_to_json(singleton).dump(2) + "\n");
  std::cout << "wrote " << ds.samples.size() << " samples to " << data.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset;
  std::string partition;
  std::string config;
  std::string val;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool raw = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig config;
  double val_fraction = 0.0;
  if (!a.config.empty()) {
    const json j = read_json_file(a.config);
    config = train_config_from_json(j);
    if (j.contains("val_fraction")) {
      if (!j["val_fraction"].is_number()) throw FormatError(a.config + ": val_fraction must be a number");
      val_fraction = j["val_fraction"].get<double>();
    }
  }
  if (a.seed) config.seed = *a.seed;
  validate(config);
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must lie in [0, 1)");

  Dataset all = read_dataset_file(a.dataset).dataset;
  if (all.samples.empty()) throw ValidationError("training dataset '" + a.dataset + "' is empty");
  const PartitionSpec partition = read_partition_file(a.partition);

  Dataset train, val;
  train.feature_dim = val.feature_dim = all.feature_dim;
  if (!a.val.empty()) {
    train = all;
    val = read_dataset_file(a.val).dataset;
    if (val.feature_dim != train.feature_dim)
      throw ValidationError("validation set has " + std::to_string(val.feature_dim) + " features, training set " +
                            std::to_string(train.feature_dim));
  } else if (val_fraction > 0.0) {
    std::vector<std::size_t> order(all.samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(config.seed, 0x5eed));
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(val_fraction * double(order.size())));
    if (n_val >= order.size()) throw ValidationError("val_fraction leaves no training samples");
    for (std::size_t k = 0; k < order.size(); ++k)
      (k < n_val ? val : train).samples.push_back(all.samples[order[k]]);
  } else {
    train = all;
    val = all;  // no held-out split requested: select on the training data
  }

  std::set<std::string> channels = train.channels();
  channels.merge(val.channels());
  require_valid_partition(partition, train.feature_dim, channels);

  NormalizationStats stats;
  if (!a.raw) {
    stats = fit_normalization(train.samples, train.feature_dim);
    for (const auto& w : stats.warnings) std::cerr << "warning: " << w << "\n";
    train = normalize(std::move(train), stats);
    val = normalize(std::move(val), stats);
  }

  const FitResult result = fit(train.samples, val.samples, partition, config);
  const Evaluation ev = evaluate(train.samples, result.params, partition);
  const double train_acc = accuracy(ev.probabilities, ev.labels);

  const fs::path dir = output_dir(a.out);
  Checkpoint ck;
  ck.feature_dim = train.feature_dim;
  ck.partition = partition;
  ck.params = result.params;
  ck.config = config;
  ck.normalization = stats;
  save_checkpoint_file((dir / "checkpoint.json").string(), ck);

  json final_record{{"best_epoch", result.best_epoch},
                    {"best_val_metric", result.best_metric ? json(*result.best_metric) : json(nullptr)},
                    {"metric", to_string(config.metric)},
                    {"train_accuracy", train_acc},
                    {"diverged", result.diverged}};
  {
    std::ofstream log(dir / "train_log.jsonl");
    if (!log) throw FormatError("cannot write training log in '" + dir.string() + "'");
    write_training_log(log, result.log);
    log << json{{"final", final_record}}.dump() << "\n";
  }

  if (result.diverged) throw NumericError("training diverged: " + result.divergence_reason);
  std::cout << "epochs " << result.log.size() << ", best epoch " << result.best_epoch << ", "
            << to_string(config.metric) << " " << (result.best_metric ? *result.best_metric : 0.0)
            << ", train accuracy " << train_acc << "\n"
            << "checkpoint " << (dir / "checkpoint.json").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string dataset;
  std::string out;
};

int run_predict(const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint_file(a.checkpoint);
  Dataset ds = read_dataset_file(a.dataset).dataset;
  require_dim(ds, ck);
  ds = apply_stats(std::move(ds), ck.normalization);
  std::sort(ds.samples.begin(), ds.samples.end(),
            [](const TrajectorySet& x, const TrajectorySet& y) { return x.set_id < y.set_id; });

  const fs::path dir = output_dir(a.out);
  const fs::path path = dir / "predictions.jsonl";
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  std::size_t skipped = 0;
  for (const auto& s : ds.samples) {
    try {
      const double score = gman_score(s, ck.params, ck.partition);
      const double p = predict_proba(score);
      out << json{{"set_id", s.set_id}, {"score", score}, {"probability", p}, {"label", predict_label(p)}}.dump()
          << "\n";
    } catch (const ValidationError& e) {
      ++skipped;
      out << json{{"set_id", s.set_id}, {"skipped", true}, {"error", e.what()}}.dump() << "\n";
    }
  }
  std::cout << "wrote " << ds.samples.size() - skipped << " predictions to " << path.string();
  if (skipped) std::cout << " (" << skipped << " skipped)";
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------- explain

struct ExplainArgs {
  std::string checkpoint;
  std::string dataset;
  std::string sample;
  std::string node;  // channel:index
  std::string out;
  bool svg = false;
  bool json_stdout = false;
};

int run_explain(const ExplainArgs& a) {
  const Checkpoint ck = load_checkpoint_file(a.checkpoint);
  Dataset ds = read_dataset_file(a.dataset).dataset;
  require_dim(ds, ck);
  ds = apply_stats(std::move(ds), ck.normalization);
  const auto it = std::find_if(ds.samples.begin(), ds.samples.end(),
                               [&](const TrajectorySet& s) { return s.set_id == a.sample; });
  if (it == ds.samples.end()) throw ValidationError("no sample '" + a.sample + "' in " + a.dataset);

  if (!a.node.empty()) {
    const auto colon = a.node.rfind(':');
    if (colon == std::string::npos) throw ValidationError("--node expects CHANNEL:INDEX");
    const std::string channel = a.node.substr(0, colon);
    Index j = 0;
    try {
      j = std::stol(a.node.substr(colon + 1));
    } catch (const std::exception&) {
      throw ValidationError("--node expects CHANNEL:INDEX");
    }
    const double c = node_contribution(*it, channel, j, ck.params, ck.partition);
    if (a.json_stdout)
      std::cout << json{{"set_id", it->set_id}, {"channel", channel}, {"node", j}, {"contribution", c}}.dump() << "\n";
    else
      std::cout << channel << "[" << j << "] " << c << "\n";
    return 0;
  }

  const AttributionReport report = build_report(*it, ck.params, ck.partition);
  const json j = report_to_json(report);
  const fs::path dir = output_dir(a.out);
  const fs::path path = dir / (a.sample + ".explain.json");
  write_text(path, j.dump(2) + "\n");
  if (a.svg) write_text(dir / (a.sample + ".explain.svg"), report_to_svg(report));
  if (a.json_stdout) {
    std::cout << j.dump() << "\n";
  } else {
    std::cout << "score " << report.raw_score << ", residual " << report.completeness_residual << "\n";
    for (const auto& g : report.graphs) std::cout << "  graph " << g.channel << " " << g.total << "\n";
    for (const auto& s : report.sets) std::cout << "  subset " << s.subset << " " << s.contribution << "\n";
    std::cout << "report " << path.string() << "\n";
  }
  if (report.completeness_residual > kCompletenessTolerance)
    throw NumericError("attribution residual " + std::to_string(report.completeness_residual) + " exceeds tolerance");
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string metric = "auroc";
  bool json_stdout = false;
};

int run_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint_file(a.checkpoint);
  Dataset ds = read_dataset_file(a.dataset).dataset;
  require_dim(ds, ck);
  if (ds.samples.empty()) throw MetricError("dataset '" + a.dataset + "' is empty");
  ds = apply_stats(std::move(ds), ck.normalization);
  const Evaluation ev = evaluate(ds.samples, ck.params, ck.partition);

  json values = json::object();
  if (a.metric == "auroc" || a.metric == "all") values["auroc"] = auroc(ev.scores, ev.labels);
  if (a.metric == "accuracy" || a.metric == "all") values["accuracy"] = accuracy(ev.probabilities, ev.labels);
  if (a.metric == "loss" || a.metric == "all") values["loss"] = ev.loss;

  if (a.json_stdout) {
    json j = values;
    j["n"] = ds.samples.size();
    std::cout << j.dump() << "\n";
  } else {
    for (const auto& [name, v] : values.items()) std::cout << name << " " << v.get<double>() << "\n";
    std::cout << "n " << ds.samples.size() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  int cases = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  bool json_stdout = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  double worst = 0.0;
  std::string worst_where;
  json rows = json::array();
  for (int k = 0; k < a.cases; ++k) {
    const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(k);
    const auto r = check_gradients(random_gradcheck_case(seed));
    rows.push_back({{"seed", seed}, {"params", r.num_params}, {"max_relative_error", r.max_relative_error},
                    {"worst_array", r.worst_array}});
    if (!a.json_stdout)
      std::cout << "case " << seed << ": " << r.num_params << " params, max rel err " << r.max_relative_error << "\n";
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      worst_where = "case " + std::to_string(seed) + " " + r.worst_array;
    }
  }
  if (a.json_stdout) std::cout << json{{"cases", rows}, {"max_relative_error", worst}}.dump() << "\n";
  if (worst > a.tolerance)
    throw NumericError("gradient mismatch " + std::to_string(worst) + " at " + worst_where);
  if (!a.json_stdout) std::cout << "ok: max relative error " << worst << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph mixing additive networks: synthesize, train, predict, explain, evaluate"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gman 1.0");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset and matching partitions");
  synth_cmd->add_option("task", synth.task, "feature_xor | set_xor | sparse_traj")
      ->required()
      ->check(CLI::IsMember({"feature_xor", "set_xor", "sparse_traj"}));
  synth_cmd->add_option("--seed", synth.sparse.seed, "Generator seed (sparse_traj)");
  synth_cmd->add_option("--samples", synth.sparse.samples, "Number of samples (sparse_traj)");
  synth_cmd->add_option("--distractors", synth.sparse.distractor_channels, "Distractor channels (sparse_traj)");
  synth_cmd->add_option("--max-nodes", synth.sparse.max_nodes, "Observation slots per channel (sparse_traj)");
  synth_cmd->add_option("--sparsity", synth.sparse.sparsity, "Missing-observation rate (sparse_traj)");
  synth_cmd->add_option("--noise", synth.sparse.noise, "Observation noise (sparse_traj)");
  bool no_static = false;
  synth_cmd->add_flag("--no-static", no_static, "Omit the static channel (sparse_traj)");
  synth_cmd->add_option("--out", synth.out, "Output directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint.json and train_log.jsonl");
  train_cmd->add_option("dataset", train.dataset, "Training dataset (JSONL)")->required();
  train_cmd->add_option("--partition", train.partition, "Partition file (JSON)")->required();
  train_cmd->add_option("--config", train.config, "Training config (JSON)");
  train_cmd->add_option("--val", train.val, "Validation dataset (JSONL); otherwise val_fraction from the config");
  train_cmd->add_option("--seed", train.seed, "Override the config seed");
  train_cmd->add_flag("--raw", train.raw, "Skip feature normalization");
  train_cmd->add_option("--out", train.out, "Output directory");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "Score a dataset; writes predictions.jsonl");
  predict_cmd->add_option("checkpoint", predict.checkpoint, "Checkpoint written by train")->required();
  predict_cmd->add_option("dataset", predict.dataset, "Dataset (JSONL)")->required();
  predict_cmd->add_option("--out", predict.out, "Output directory");

  ExplainArgs explain;
  auto* explain_cmd = app.add_subcommand("explain", "Attribution report for one sample");
  explain_cmd->add_option("checkpoint", explain.checkpoint, "Checkpoint written by train")->required();
  explain_cmd->add_option("dataset", explain.dataset, "Dataset (JSONL)")->required();
  explain_cmd->add_option("--sample", explain.sample, "set_id to explain")->required();
  explain_cmd->add_option("--node", explain.node, "Single node contribution, CHANNEL:INDEX");
  explain_cmd->add_flag("--svg", explain.svg, "Also write a bar chart");
  explain_cmd->add_flag("--json", explain.json_stdout, "Print the report as JSON");
  explain_cmd->add_option("--out", explain.out, "Output directory");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled dataset");
  eval_cmd->add_option("checkpoint", eval.checkpoint, "Checkpoint written by train")->required();
  eval_cmd->add_option("dataset", eval.dataset, "Dataset (JSONL)")->required();
  eval_cmd->add_option("--metric", eval.metric, "Metric to report (default auroc)")->check(CLI::IsMember({"auroc", "accuracy", "loss", "all"}));
  eval_cmd->add_flag("--json", eval.json_stdout, "Machine-readable output");

  GradcheckArgs gradcheck;
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  gradcheck_cmd->add_option("--cases", gradcheck.cases, "Number of random toy models")->check(CLI::PositiveNumber);
  gradcheck_cmd->add_option("--seed", gradcheck.seed, "First case seed");
  gradcheck_cmd->add_option("--tolerance", gradcheck.tolerance, "Maximum relative error");
  gradcheck_cmd->add_flag("--json", gradcheck.json_stdout, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error:usage: " << e.what() << "\n";
    return exit_code("usage");
  }

  try {
    synth.sparse.static_channel = !no_static;
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) return run_train(train);
    if (*predict_cmd) return run_predict(predict);
    if (*explain_cmd) return run_explain(explain);
    if (*eval_cmd) return run_eval(eval);
    if (*gradcheck_cmd) return run_gradcheck(gradcheck);
  } catch (const Error& e) {
    std::cerr << "error:" << e.kind() << ": " << one_line(e.what()) << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
