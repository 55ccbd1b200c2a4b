#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psd/nn.hpp"
#include "psd/raster.hpp"

namespace psd {

// Training knobs; defaults are the selected final configuration
// (learning rate 0.1, 10 epochs, 5 folds, batch 50, 15 filters, 1 conv layer).
struct HyperParams {
  double learning_rate = 0.1;
  int max_epochs = 10;
  int folds = 5;
  int batch_size = 50;
  int filters = 15;
  int conv_layers = 1;
  std::uint64_t seed = 0;
  bool augment = true;  // x8 expansion of each fold's training side
};

// Confusion counts and the derived ratios. precision is absent when tp+fp = 0,
// recall when tp+fn = 0.
struct Metrics {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
};

Metrics metrics_from_counts(long tp, long fp, long tn, long fn);

// Arithmetic means of per-fold ratios (undefined folds skipped).
struct MetricsMean {
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
};

// One grayscale image with its binary class (1 = pallet).
struct LabeledImage {
  RasterImage image;
  int label = 0;
};

using Dataset = std::vector<LabeledImage>;

// Arithmetic mean of per-fold ratios; folds with an undefined ratio are
// skipped, and the mean is absent when no fold defines it.
MetricsMean mean_metrics(std::span<const Metrics> folds);

// Seeded partition of [0, n) into k folds with sizes differing by at most 1.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int k, std::uint64_t seed);

// SGD updates per epoch: ceil(n / batch_size); the final short batch counts.
std::size_t updates_per_epoch(std::size_t n, int batch_size);

struct TrainResult {
  Model model;
  std::vector<double> loss_curve;  // one mean loss per epoch
};

// Mini-batch SGD on the dataset as given (no implicit augmentation). Batches
// are contiguous chunks of a per-epoch seeded shuffle; the last short batch is
// kept, so one epoch performs ceil(n / batch_size) updates. Deterministic per
// seed. Throws DataError on a single-class dataset and NumericError (naming
// the epoch) if the loss goes non-finite.
TrainResult train_classifier(const Dataset& dataset, const HyperParams& hp, int jobs = 1);

// Argmax-class evaluation; never mutates the model.
Metrics evaluate(const Model& model, const Dataset& dataset);

struct CrossValResult {
  MetricsMean mean;
  std::vector<Metrics> per_fold;
};

// k-fold cross-validation: trains on k-1 folds (training side augmented x8
// when hp.augment is set), evaluates on the held-out fold only. Folds run in
// parallel up to `jobs`; results are identical for any job count.
CrossValResult cross_validate(const Dataset& dataset, const HyperParams& hp, int jobs = 1);

enum class SweepAxis { LearningRate, Epochs, Folds, Filters, Layers };

const char* sweep_axis_name(SweepAxis axis);

// The conventional value panels swept for each axis.
std::vector<double> default_sweep_values(SweepAxis axis);

struct SweepRow {
  double value = 0.0;
  MetricsMean mean;
  std::vector<Metrics> per_fold;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::LearningRate;
  std::vector<SweepRow> rows;  // one per requested value, input order
  std::size_t best_index = 0;
};

// One cross-validated row per value. Each row derives its RNG stream from the
// base seed and the value itself, so rows are independent of their position
// and of each other; rows may run in parallel.
SweepReport sweep(const Dataset& dataset, const HyperParams& base_hp, SweepAxis axis,
                  std::span<const double> values, int jobs = 1);

// (e0 - e1) / e0 with e = 1 - accuracy, and the same for the false negative
// rate fn / (fn + tp). Each ratio is absent when its baseline is zero or
// undefined. Requires both evaluations to cover the same number of examples.
struct ErrorReduction {
  std::optional<double> error_rate_reduction;
  std::optional<double> false_negative_rate_reduction;
};

ErrorReduction error_reduction(const Metrics& baseline, const Metrics& improved);

}  // namespace psd
