#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gman/data.hpp"
#include "gman/extgnan.hpp"
#include "gman/mixer.hpp"

namespace gman {

enum class SelectionMetric { val_loss, val_auroc };

const char* to_string(SelectionMetric m);
SelectionMetric selection_metric_from_string(const std::string& s);

/// Training hyperparameters. Defaults: up to 500 epochs, AdamW with weight
/// decay 1e-4, and a plateau scheduler halving the learning rate after 20
/// stale epochs.
struct TrainConfig {
  int max_epochs = 500;
  int batch_size = 32;
  double max_learning_rate = 1e-3;
  double min_learning_rate = 1e-5;
  double scheduler_factor = 0.5;
  int scheduler_patience = 20;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  SelectionMetric metric = SelectionMetric::val_loss;
  int early_stop_patience = 0;  // epochs without improvement before stopping; 0 disables
  ArchConfig arch;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

inline constexpr double kProbClamp = 1e-12;

/// -[y ln p + (1 - y) ln(1 - p)] with p clamped to [1e-12, 1 - 1e-12].
double bce_loss(double probability, int label);

/// The same loss fused with the logistic link, evaluated stably on the score.
double bce_with_logits(double score, int label);

struct SampleGradient {
  GmanParams grads;
  double loss = 0.0;
  double score = 0.0;
};

/// Exact gradient of bce_with_logits(gman_score(sample), label) with respect
/// to every parameter array.
SampleGradient backward_sample(const TrajectorySet& sample, int label, const GmanParams& params,
                               const PartitionSpec& partition);

/// Reduce-on-plateau learning rate schedule.
///
/// A metric counts as an improvement only if strictly better than the best
/// seen. Once more than `patience` consecutive epochs pass without one, the
/// rate is multiplied by `factor` (floored at `min_lr`) and the count resets.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double min_lr, double factor, int patience, bool maximize);

  /// Feeds one epoch's metric; returns the learning rate for the next epoch.
  double step(double metric);
  double learning_rate() const { return lr_; }
  int bad_epochs() const { return bad_epochs_; }

 private:
  double lr_;
  double min_lr_;
  double factor_;
  int patience_;
  bool maximize_;
  bool has_best_ = false;
  double best_ = 0.0;
  int bad_epochs_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  std::optional<double> val_auroc;
  double val_metric = 0.0;
  double lr = 0.0;
};

struct FitResult {
  GmanParams params;  // best-validation checkpoint
  std::vector<EpochRecord> log;
  int best_epoch = -1;
  std::optional<double> best_metric;
  bool diverged = false;
  std::string divergence_reason;
};

/// Mini-batch AdamW training with plateau scheduling on the validation metric.
/// Batches are drawn from a per-epoch seeded shuffle; the batch gradient is
/// the mean over samples, accumulated in batch order.
FitResult fit(std::span<const TrajectorySet> train, std::span<const TrajectorySet> val,
              const PartitionSpec& partition, const TrainConfig& config);

FitResult fit(std::span<const TrajectorySet> train, std::span<const TrajectorySet> val,
              const PartitionSpec& partition, const TrainConfig& config, GmanParams init);

struct Evaluation {
  std::vector<double> scores;
  std::vector<double> probabilities;
  std::vector<int> labels;
  double loss = 0.0;
};

/// Scores every sample; every sample must be labeled.
Evaluation evaluate(std::span<const TrajectorySet> samples, const GmanParams& params, const PartitionSpec& partition);

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Throws MetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Fraction of samples whose thresholded probability matches the label;
/// probability == threshold predicts positive.
double accuracy(std::span<const double> probabilities, std::span<const int> labels,
                double threshold = kDefaultThreshold);

using SweepGrid = std::map<std::string, std::vector<double>>;
using GridCell = std::map<std::string, double>;

/// Cartesian product in key order, last key varying fastest.
std::vector<GridCell> enumerate_grid(const SweepGrid& grid);

/// Overrides named fields of `base`: learning_rate, min_learning_rate,
/// weight_decay, batch_size, max_epochs, scheduler_factor,
/// scheduler_patience, hidden_layers, hidden_width.
TrainConfig apply_cell(TrainConfig base, const GridCell& cell);

struct GridCellResult {
  GridCell cell;
  bool failed = false;
  std::string failure;
  std::vector<std::uint64_t> seeds;
  std::vector<double> seed_metrics;  // best validation metric per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 with one seed
  FitResult best_fit;   // the best seed's run
};

/// Trains every cell with seeds base.seed, base.seed + 1, ...; returns valid
/// cells ranked best-first followed by failed cells in grid order.
std::vector<GridCellResult> grid_search(const SweepGrid& grid, std::span<const TrajectorySet> train,
                                        std::span<const TrajectorySet> val, const PartitionSpec& partition,
                                        const TrainConfig& base, int num_seeds = 3);

}  // namespace gman
