#include "psd/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>

#include "psd/augment.hpp"
#include "psd/parallel.hpp"
#include "psd/rng.hpp"

namespace psd {
namespace {

// Per-example gradients are summed inside fixed blocks of this size and the
// block sums reduced in block order. The summation tree is therefore fixed by
// the batch alone, making updates bitwise identical for any worker count.
constexpr std::size_t kGradBlock = 10;

void validate_hp(const HyperParams& hp) {
  if (!(hp.learning_rate > 0.0)) throw DataError("learning_rate must be > 0");
  if (hp.max_epochs < 1) throw DataError("max_epochs must be >= 1");
  if (hp.batch_size < 1) throw DataError("batch_size must be >= 1");
  if (hp.folds < 2) throw DataError("folds must be >= 2");
  if (hp.filters < 1) throw DataError("filters must be >= 1");
  if (hp.conv_layers < 1) throw DataError("conv_layers must be >= 1");
}

int dataset_side(const Dataset& dataset) {
  if (dataset.empty()) throw DataError("dataset is empty");
  const int side = dataset.front().image.side;
  for (const LabeledImage& ex : dataset) {
    if (ex.image.side != side) throw DataError("dataset images differ in size");
    if (ex.label != 0 && ex.label != 1) throw DataError("labels must be 0 or 1");
  }
  return side;
}

}  // namespace

Metrics metrics_from_counts(long tp, long fp, long tn, long fn) {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0) throw DataError("confusion counts must be >= 0");
  const long total = tp + fp + tn + fn;
  if (total == 0) throw DataError("confusion counts are all zero");
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return m;
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw DataError("kfold_split requires k >= 2");
  if (static_cast<std::size_t>(k) > n) throw DataError("kfold_split requires k <= n");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  // The first n % k folds take one extra element.
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t cursor = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<long>(cursor),
                    order.begin() + static_cast<long>(cursor + len));
    cursor += len;
  }
  return folds;
}

std::size_t updates_per_epoch(std::size_t n, int batch_size) {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  return (n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
}

TrainResult train_classifier(const Dataset& dataset, const HyperParams& hp, int jobs) {
  validate_hp(hp);
  const int side = dataset_side(dataset);

  bool has_pos = false, has_neg = false;
  for (const LabeledImage& ex : dataset) (ex.label == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DataError("training dataset must contain both classes");

  ModelConfig config;
  config.conv_layers = hp.conv_layers;
  config.filters = hp.filters;
  config.input_side = side;
  Model model = init_model(config, derive_seed(hp.seed, 0x0de1));

  std::vector<Tensor> images;
  images.reserve(dataset.size());
  for (const LabeledImage& ex : dataset) images.push_back(image_tensor(ex.image));

  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.loss_curve.reserve(static_cast<std::size_t>(hp.max_epochs));
  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    Rng epoch_rng(derive_seed(hp.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(hp.batch_size));
      const std::size_t batch_n = stop - start;
      const std::size_t blocks = (batch_n + kGradBlock - 1) / kGradBlock;

      std::vector<ModelGrads> block_grads;
      std::vector<double> block_loss(blocks, 0.0);
      block_grads.reserve(blocks);
      for (std::size_t b = 0; b < blocks; ++b) block_grads.push_back(ModelGrads::zeros(model));

      parallel_for_index(blocks, jobs, [&](std::size_t b) {
        const std::size_t lo = start + b * kGradBlock;
        const std::size_t hi = std::min(stop, lo + kGradBlock);
        for (std::size_t i = lo; i < hi; ++i) {
          const std::size_t idx = order[i];
          block_loss[b] += backward(model, images[idx], dataset[idx].label, block_grads[b]);
        }
      });

      ModelGrads& total = block_grads.front();
      double batch_loss = block_loss.front();
      for (std::size_t b = 1; b < blocks; ++b) {
        total.add(block_grads[b]);
        batch_loss += block_loss[b];
      }
      total.scale(1.0 / static_cast<double>(batch_n));
      sgd_step(model, total, hp.learning_rate);
      epoch_loss += batch_loss;
    }

    const double mean_loss = epoch_loss / static_cast<double>(n);
    if (!std::isfinite(mean_loss))
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    result.loss_curve.push_back(mean_loss);
  }

  result.model = std::move(model);
  return result;
}

Metrics evaluate(const Model& model, const Dataset& dataset) {
  dataset_side(dataset);
  long tp = 0, fp = 0, tn = 0, fn = 0;
  for (const LabeledImage& ex : dataset) {
    const int pred = predict(model, image_tensor(ex.image));
    if (pred == 1)
      (ex.label == 1 ? tp : fp) += 1;
    else
      (ex.label == 1 ? fn : tn) += 1;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

MetricsMean mean_metrics(std::span<const Metrics> folds) {
  if (folds.empty()) throw DataError("mean_metrics requires at least one fold");
  MetricsMean mean;
  double acc = 0.0, prec = 0.0, rec = 0.0;
  int prec_n = 0, rec_n = 0;
  for (const Metrics& m : folds) {
    acc += m.accuracy;
    if (m.precision) {
      prec += *m.precision;
      ++prec_n;
    }
    if (m.recall) {
      rec += *m.recall;
      ++rec_n;
    }
  }
  mean.accuracy = acc / static_cast<double>(folds.size());
  if (prec_n > 0) mean.precision = prec / prec_n;
  if (rec_n > 0) mean.recall = rec / rec_n;
  return mean;
}

namespace {

Dataset augment_x8(const Dataset& examples) {
  Dataset out;
  out.reserve(examples.size() * 8);
  for (const LabeledImage& ex : examples) {
    for (AugmentedExample& aug : augment_example(ex.image, {}))
      out.push_back({std::move(aug.image), ex.label});
  }
  return out;
}

}  // namespace

CrossValResult cross_validate(const Dataset& dataset, const HyperParams& hp, int jobs) {
  validate_hp(hp);
  dataset_side(dataset);
  const auto folds =
      kfold_split(dataset.size(), hp.folds, derive_seed(hp.seed, 0xf01d));

  CrossValResult result;
  result.per_fold.resize(folds.size());
  parallel_for_index(folds.size(), jobs, [&](std::size_t f) {
    std::vector<bool> held_out(dataset.size(), false);
    for (const std::size_t idx : folds[f]) held_out[idx] = true;

    Dataset train_side, val_side;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      (held_out[i] ? val_side : train_side).push_back(dataset[i]);
    if (hp.augment) train_side = augment_x8(train_side);

    HyperParams fold_hp = hp;
    fold_hp.seed = derive_seed(hp.seed, 0xab1e + f);
    const TrainResult trained = train_classifier(train_side, fold_hp, 1);
    result.per_fold[f] = evaluate(trained.model, val_side);
  });

  result.mean = mean_metrics(result.per_fold);
  return result;
}

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::LearningRate: return "learning-rate";
    case SweepAxis::Epochs: return "epochs";
    case SweepAxis::Folds: return "folds";
    case SweepAxis::Filters: return "filters";
    case SweepAxis::Layers: return "layers";
  }
  return "unknown";
}

std::vector<double> default_sweep_values(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::LearningRate: return {0.001, 0.005, 0.01, 0.03, 0.05, 0.1};
    case SweepAxis::Epochs: return {3, 5, 10, 15};
    case SweepAxis::Folds: return {2, 3, 5, 8, 10};
    case SweepAxis::Filters: return {5, 10, 15, 20, 25};
    case SweepAxis::Layers: return {1, 2, 3};
  }
  return {};
}

namespace {

HyperParams apply_axis(const HyperParams& base, SweepAxis axis, double value) {
  HyperParams hp = base;
  const auto as_int = [&](const char* what) {
    const int v = static_cast<int>(std::llround(value));
    if (std::abs(value - v) > 1e-9) throw DataError(std::string(what) + " sweep values must be integers");
    return v;
  };
  switch (axis) {
    case SweepAxis::LearningRate: hp.learning_rate = value; break;
    case SweepAxis::Epochs: hp.max_epochs = as_int("epochs"); break;
    case SweepAxis::Folds: hp.folds = as_int("folds"); break;
    case SweepAxis::Filters: hp.filters = as_int("filters"); break;
    case SweepAxis::Layers: hp.conv_layers = as_int("layers"); break;
  }
  return hp;
}

// Cheaper-configuration cost for tie-breaking: for the compute-bearing axes
// the swept value itself; learning rate carries no cost.
double axis_cost(SweepAxis axis, double value) {
  return axis == SweepAxis::LearningRate ? 0.0 : value;
}

}  // namespace

SweepReport sweep(const Dataset& dataset, const HyperParams& base_hp, SweepAxis axis,
                  std::span<const double> values, int jobs) {
  if (values.empty()) throw DataError("sweep requires at least one value");

  SweepReport report;
  report.axis = axis;
  report.rows.resize(values.size());
  parallel_for_index(values.size(), jobs, [&](std::size_t i) {
    const double value = values[i];
    HyperParams hp = apply_axis(base_hp, axis, value);
    // Stream derived from the value, not the position: rows are invariant
    // under permutation of the requested values.
    hp.seed = derive_seed(base_hp.seed, std::bit_cast<std::uint64_t>(value));
    const CrossValResult cv = cross_validate(dataset, hp, 1);
    report.rows[i] = {value, cv.mean, cv.per_fold};
  });

  report.best_index = 0;
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    const SweepRow& a = report.rows[i];
    const SweepRow& b = report.rows[report.best_index];
    const double ra = a.mean.recall.value_or(-1.0);
    const double rb = b.mean.recall.value_or(-1.0);
    if (a.mean.accuracy > b.mean.accuracy ||
        (a.mean.accuracy == b.mean.accuracy &&
         (ra > rb || (ra == rb && axis_cost(axis, a.value) < axis_cost(axis, b.value)))))
      report.best_index = i;
  }
  return report;
}

ErrorReduction error_reduction(const Metrics& baseline, const Metrics& improved) {
  const long total0 = baseline.tp + baseline.fp + baseline.tn + baseline.fn;
  const long total1 = improved.tp + improved.fp + improved.tn + improved.fn;
  if (total0 != total1) throw DataError("error_reduction requires same-size evaluations");

  ErrorReduction out;
  const double e0 = 1.0 - baseline.accuracy;
  const double e1 = 1.0 - improved.accuracy;
  if (e0 > 0.0) out.error_rate_reduction = (e0 - e1) / e0;

  if (baseline.tp + baseline.fn > 0 && improved.tp + improved.fn > 0) {
    const double fnr0 =
        static_cast<double>(baseline.fn) / static_cast<double>(baseline.fn + baseline.tp);
    const double fnr1 =
        static_cast<double>(improved.fn) / static_cast<double>(improved.fn + improved.tp);
    if (fnr0 > 0.0) out.false_negative_rate_reduction = (fnr0 - fnr1) / fnr0;
  }
  return out;
}

}  // namespace psd
