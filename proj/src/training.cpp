#include "gman/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "gman/errors.hpp"
#include "gman/random.hpp"

namespace gman {

const char* to_string(SelectionMetric m) { return m == SelectionMetric::val_loss ? "val_loss" : "val_auroc"; }

SelectionMetric selection_metric_from_string(const std::string& s) {
  if (s == "val_loss") return SelectionMetric::val_loss;
  if (s == "val_auroc") return SelectionMetric::val_auroc;
  throw ValidationError("unknown selection metric '" + s + "'");
}

void validate(const TrainConfig& c) {
  if (c.max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.min_learning_rate > 0.0) || !(c.max_learning_rate >= c.min_learning_rate))
    throw ValidationError("learning rates must satisfy 0 < min_learning_rate <= max_learning_rate");
  if (!(c.scheduler_factor > 0.0 && c.scheduler_factor < 1.0))
    throw ValidationError("scheduler_factor must lie in (0, 1)");
  if (c.scheduler_patience < 1) throw ValidationError("scheduler_patience must be >= 1");
  if (!(c.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (c.early_stop_patience < 0) throw ValidationError("early_stop_patience must be >= 0");
  if (c.arch.hidden_layers < 0 || c.arch.hidden_width < 1)
    throw ValidationError("architecture needs hidden_layers >= 0 and hidden_width >= 1");
}

namespace {

void check_label(int label) {
  if (label != 0 && label != 1) throw ValidationError("label must be 0 or 1, got " + std::to_string(label));
}

}  // namespace

double bce_loss(double probability, int label) {
  check_label(label);
  const double p = std::clamp(probability, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(p) : -std::log1p(-p);
}

double bce_with_logits(double score, int label) {
  check_label(label);
  // max(s, 0) - s y + log(1 + e^{-|s|})
  return std::max(score, 0.0) - score * label + std::log1p(std::exp(-std::abs(score)));
}

SampleGradient backward_sample(const TrajectorySet& sample, int label, const GmanParams& params,
                               const PartitionSpec& partition) {
  const ScoreTrace trace = score_trace(sample, params, partition);
  SampleGradient out{params.zeros_like(), bce_with_logits(trace.score, label), trace.score};
  if (!std::isfinite(out.loss)) throw NumericError("loss: non-finite value for sample '" + sample.set_id + "'");
  score_backward(trace, params, partition, predict_proba(trace.score) - label, out.grads);
  for_each_array(std::as_const(out.grads), "", [&](const std::string& name, std::span<const double> v) {
    for (double x : v)
      if (!std::isfinite(x))
        throw NumericError("backward: non-finite gradient in " + name + " for sample '" + sample.set_id + "'");
  });
  return out;
}

PlateauScheduler::PlateauScheduler(double lr, double min_lr, double factor, int patience, bool maximize)
    : lr_(lr), min_lr_(min_lr), factor_(factor), patience_(patience), maximize_(maximize) {}

double PlateauScheduler::step(double metric) {
  const bool improved = !has_best_ || (maximize_ ? metric > best_ : metric < best_);
  if (improved) {
    has_best_ = true;
    best_ = metric;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ > patience_) {
    lr_ = std::max(lr_ * factor_, min_lr_);
    bad_epochs_ = 0;
  }
  return lr_;
}

Evaluation evaluate(std::span<const TrajectorySet> samples, const GmanParams& params, const PartitionSpec& partition) {
  Evaluation e;
  double total = 0.0;
  for (const auto& s : samples) {
    if (!s.label) throw ValidationError("sample '" + s.set_id + "' has no label");
    const double score = gman_score(s, params, partition);
    e.scores.push_back(score);
    e.probabilities.push_back(predict_proba(score));
    e.labels.push_back(*s.label);
    total += bce_with_logits(score, *s.label);
  }
  e.loss = samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
  return e;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Mann-Whitney U with mid-ranks for ties.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi < order.size() && scores[order[hi]] == scores[order[lo]]) ++hi;
    const double mid_rank = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t k = lo; k < hi; ++k)
      if (labels[order[k]] == 1) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    lo = hi;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw MetricError("auroc is undefined when only one class is present");
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double accuracy(std::span<const double> probabilities, std::span<const int> labels, double threshold) {
  if (probabilities.size() != labels.size()) throw ValidationError("accuracy: inputs differ in length");
  if (probabilities.empty()) throw ValidationError("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    correct += predict_label(probabilities[k], threshold) == labels[k] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
  return order;
}

double selection_value(const TrainConfig& config, const Evaluation& val, std::optional<double> val_auroc) {
  if (config.metric == SelectionMetric::val_loss) return val.loss;
  if (!val_auroc) throw MetricError("val_auroc selection needs both classes in the validation split");
  return *val_auroc;
}

}  // namespace

FitResult fit(std::span<const TrajectorySet> train, std::span<const TrajectorySet> val,
              const PartitionSpec& partition, const TrainConfig& config) {
  return fit(train, val, partition, config, gman_init(partition, config.seed, config.arch));
}

FitResult fit(std::span<const TrajectorySet> train, std::span<const TrajectorySet> val,
              const PartitionSpec& partition, const TrainConfig& config, GmanParams init) {
  validate(config);
  if (train.empty()) throw ValidationError("fit: training split is empty");
  if (val.empty()) throw ValidationError("fit: validation split is empty");
  for (const auto& s : train)
    if (!s.label) throw ValidationError("fit: training sample '" + s.set_id + "' has no label");
  check_compatible(init, partition);

  const bool maximize = config.metric == SelectionMetric::val_auroc;
  FitResult result;
  result.params = init;
  GmanParams params = std::move(init);
  OptimState<double> optim;
  optim.config.learning_rate = config.max_learning_rate;
  optim.config.weight_decay = config.weight_decay;
  PlateauScheduler scheduler(config.max_learning_rate, config.min_learning_rate, config.scheduler_factor,
                             config.scheduler_patience, maximize);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = optim.config.learning_rate;
    try {
      const auto order = shuffled(train.size(), derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
      double loss_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t stop = std::min(start + batch, order.size());
        GmanParams grad = params.zeros_like();
        for (std::size_t k = start; k < stop; ++k) {
          const auto& sample = train[order[k]];
          auto sg = backward_sample(sample, *sample.label, params, partition);
          grad += sg.grads;
          loss_sum += sg.loss;
          correct += predict_label(predict_proba(sg.score)) == *sample.label ? 1 : 0;
        }
        grad *= 1.0 / static_cast<double>(stop - start);
        adam_update(collect_arrays(params), collect_arrays(std::as_const(grad)), optim);
      }
      rec.train_loss = loss_sum / static_cast<double>(train.size());
      rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());

      const Evaluation ev = evaluate(val, params, partition);
      rec.val_loss = ev.loss;
      if (std::isfinite(ev.loss)) {
        try {
          rec.val_auroc = auroc(ev.scores, ev.labels);
        } catch (const MetricError&) {
        }
      }
      rec.val_metric = selection_value(config, ev, rec.val_auroc);
      if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_metric) || !params.all_finite())
        throw NumericError("non-finite loss or parameters at epoch " + std::to_string(epoch));
    } catch (const NumericError& e) {
      result.diverged = true;
      result.divergence_reason = e.what();
      return result;
    }

    const bool improved = !result.best_metric ||
                          (maximize ? rec.val_metric > *result.best_metric : rec.val_metric < *result.best_metric);
    if (improved) {
      result.best_metric = rec.val_metric;
      result.best_epoch = epoch;
      result.params = params;
    }
    optim.config.learning_rate = scheduler.step(rec.val_metric);
    result.log.push_back(rec);
    if (config.early_stop_patience > 0 && epoch - result.best_epoch >= config.early_stop_patience) break;
  }
  return result;
}

std::vector<GridCell> enumerate_grid(const SweepGrid& grid) {
  std::vector<GridCell> cells{GridCell{}};
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw ValidationError("grid axis '" + name + "' has no values");
    std::vector<GridCell> next;
    for (const auto& cell : cells)
      for (double v : values) {
        GridCell c = cell;
        c[name] = v;
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }
  return cells;
}

TrainConfig apply_cell(TrainConfig base, const GridCell& cell) {
  for (const auto& [name, v] : cell) {
    if (name == "learning_rate") base.max_learning_rate = v;
    else if (name == "min_learning_rate") base.min_learning_rate = v;
    else if (name == "weight_decay") base.weight_decay = v;
    else if (name == "batch_size") base.batch_size = static_cast<int>(v);
    else if (name == "max_epochs") base.max_epochs = static_cast<int>(v);
    else if (name == "scheduler_factor") base.scheduler_factor = v;
    else if (name == "scheduler_patience") base.scheduler_patience = static_cast<int>(v);
    else if (name == "hidden_layers") base.arch.hidden_layers = static_cast<int>(v);
    else if (name == "hidden_width") base.arch.hidden_width = static_cast<int>(v);
    else throw ValidationError("unknown grid axis '" + name + "'");
  }
  if (base.min_learning_rate > base.max_learning_rate) base.min_learning_rate = base.max_learning_rate;
  return base;
}

std::vector<GridCellResult> grid_search(const SweepGrid& grid, std::span<const TrajectorySet> train,
                                        std::span<const TrajectorySet> val, const PartitionSpec& partition,
                                        const TrainConfig& base, int num_seeds) {
  if (num_seeds < 1) throw ValidationError("grid_search needs at least one seed");
  const bool maximize = base.metric == SelectionMetric::val_auroc;
  std::vector<GridCellResult> valid;
  std::vector<GridCellResult> failed;
  for (const auto& cell : enumerate_grid(grid)) {
    GridCellResult r;
    r.cell = cell;
    try {
      const TrainConfig config = apply_cell(base, cell);
      for (int k = 0; k < num_seeds; ++k) {
        TrainConfig seeded = config;
        seeded.seed = base.seed + static_cast<std::uint64_t>(k);
        FitResult run = fit(train, val, partition, seeded);
        if (run.diverged) throw NumericError("seed " + std::to_string(seeded.seed) + " diverged: " + run.divergence_reason);
        if (!run.best_metric) throw NumericError("seed " + std::to_string(seeded.seed) + " produced no checkpoint");
        const double m = *run.best_metric;
        const bool better = r.seed_metrics.empty() ||
                            (maximize ? m > *r.best_fit.best_metric : m < *r.best_fit.best_metric);
        r.seeds.push_back(seeded.seed);
        r.seed_metrics.push_back(m);
        if (better) r.best_fit = std::move(run);
      }
    } catch (const Error& e) {
      r.failed = true;
      r.failure = e.what();
      failed.push_back(std::move(r));
      continue;
    }
    const double n = static_cast<double>(r.seed_metrics.size());
    r.mean = std::accumulate(r.seed_metrics.begin(), r.seed_metrics.end(), 0.0) / n;
    double ss = 0.0;
    for (double m : r.seed_metrics) ss += (m - r.mean) * (m - r.mean);
    r.stddev = r.seed_metrics.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    valid.push_back(std::move(r));
  }
  std::stable_sort(valid.begin(), valid.end(), [&](const GridCellResult& a, const GridCellResult& b) {
    return maximize ? a.mean > b.mean : a.mean < b.mean;
  });
  for (auto& f : failed) valid.push_back(std::move(f));
  return valid;
}

}  // namespace gman
