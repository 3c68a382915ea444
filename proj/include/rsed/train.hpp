// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rsed/detector.hpp"
#include "rsed/errors.hpp"
#include "rsed/metrics.hpp"
#include "rsed/numerics.hpp"
#include "rsed/random.hpp"

namespace rsed {

struct TrainConfig {
  double alpha = 1.0;
  std::size_t minibatch = 10;
  double stepsize = 1e-4;
  std::size_t epochs = 15;
  std::uint64_t seed = 1;
  EncoderConfig encoder;  // input_dim is taken from the training data
  double thres0 = 0.5;
  double thres1 = 0.5;
  std::size_t margin = kDefaultFrameMargin;
  double frame_shift = kDefaultFrameShiftSeconds;
  double collar = kDefaultCollarSeconds;

  void validate() const {
    if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
    if (minibatch < 1) throw ConfigError("minibatch must be >= 1");
    if (!(stepsize > 0.0)) throw ConfigError("stepsize must be positive");
    if (!(thres0 > 0.0 && thres0 < 1.0)) throw ConfigError("thres0 must lie in (0, 1)");
    if (!(thres1 > 0.0 && thres1 < 1.0)) throw ConfigError("thres1 must lie in (0, 1)");
    if (!(frame_shift > 0.0)) throw ConfigError("frame_shift must be positive");
    if (!(collar > 0.0)) throw ConfigError("collar must be positive");
    encoder.validate();
  }
};

/// Small configuration that trains in well under a minute on one core.
inline TrainConfig desk_preset() {
  TrainConfig c;
  c.alpha = 1.0;
  c.minibatch = 10;
  c.stepsize = 3e-3;
  c.epochs = 15;
  c.seed = 20170901;
  c.encoder = EncoderConfig{EncoderKind::multiresolution, 2, 32, 16, false};
  return c;
}

/// Published recipe: 4 multi-resolution GRU layers of 256 units, ADAM at 1e-4.
inline TrainConfig paper_preset() {
  TrainConfig c;
  c.alpha = 1.0;
  c.minibatch = 10;
  c.stepsize = 1e-4;
  c.epochs = 10;
  c.seed = 20170901;
  c.encoder = EncoderConfig{EncoderKind::multiresolution, 4, 256, 64, false};
  return c;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_error_rate = 0.0;
  double dev_f1 = 0.0;
  MetricCounts dev_counts;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  EventModel best_model;
};

inline std::vector<Detection> detect_all(const EventModel& model, const std::vector<Utterance>& data,
                                         double thres0, double thres1) {
  std::vector<Detection> out;
  out.reserve(data.size());
  for (const auto& u : data) out.push_back(infer(model, u.features, thres0, thres1));
  return out;
}

inline Evaluation evaluate_model(const EventModel& model, const std::vector<Utterance>& data,
                                 const TrainConfig& config) {
  return evaluate_dataset(data, detect_all(model, data, config.thres0, config.thres1),
                          config.frame_shift, config.collar);
}

inline void check_dataset_dims(const std::vector<Utterance>& data, std::size_t dim,
                               const std::string& name) {
  for (const auto& u : data)
    if (u.feature_dim() != dim)
      throw ConsistencyError(name + ": utterance " + u.id + " has feature dim " +
                             std::to_string(u.feature_dim()) + ", expected " + std::to_string(dim));
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch ADAM with per-epoch dev scoring; keeps the lowest-ER epoch
/// (earliest on ties).
inline TrainReport train(TrainConfig config, const std::vector<Utterance>& trainset,
                         const std::vector<Utterance>& devset, const EpochCallback& on_epoch = {}) {
  if (trainset.empty()) throw InputError("train: empty training set");
  if (devset.empty()) throw InputError("train: empty development set");
  config.encoder.input_dim = trainset.front().feature_dim();
  config.validate();
  check_dataset_dims(trainset, config.encoder.input_dim, "training set");
  check_dataset_dims(devset, config.encoder.input_dim, "development set");

  EventModel model = EventModel::create(config.encoder, config.seed);
  AdamState adam = AdamState::fresh(parameter_count(model), AdamConfig{config.stepsize});
  Rng shuffle_rng(substream_seed(config.seed, 0x73687566ULL));

  TrainReport report;
  report.best_model = model;
  std::vector<std::size_t> order(trainset.size());
  std::vector<const Utterance*> batch;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.minibatch, ++batch_index) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.minibatch); ++i)
        batch.push_back(&trainset[order[i]]);
      const BatchGradient g = batch_gradient(model, batch, config.alpha, config.margin);
      if (!std::isfinite(g.loss) || !all_finite(g.gradient))
        throw TrainError("non-finite loss or gradient at epoch " + std::to_string(epoch) +
                         ", batch " + std::to_string(batch_index));
      loss_sum += g.loss * static_cast<double>(batch.size());
      AdamResult step = adam_step(flatten(model), g.gradient, adam);
      unflatten(step.params, model);
      adam = std::move(step.state);
    }
    const Evaluation dev = evaluate_model(model, devset, config);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(trainset.size()), dev.error_rate, dev.f1,
                    dev.counts};
    if (report.epochs.empty() || rec.dev_error_rate < report.epochs[report.best_epoch - 1].dev_error_rate) {
      report.best_epoch = epoch;
      report.best_model = model;
    }
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return report;
}

struct SweepRow {
  double alpha = 0.0;
  std::size_t best_epoch = 0;
  double dev_error_rate = 0.0;
  double dev_f1 = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

inline const std::vector<double>& default_alpha_grid() {
  static const std::vector<double> grid = {0.1, 0.5, 1.0, 5.0, 10.0};
  return grid;
}

/// One training run per alpha, all from the same initialization seed; rows sorted by alpha.
inline std::vector<SweepRow> alpha_sweep(const TrainConfig& base, std::vector<double> grid,
                                         const std::vector<Utterance>& trainset,
                                         const std::vector<Utterance>& devset,
                                         const std::function<void(const SweepRow&)>& on_row = {}) {
  if (grid.empty()) throw ConfigError("alpha grid must be nonempty");
  std::stable_sort(grid.begin(), grid.end());
  std::vector<SweepRow> rows;
  for (double alpha : grid) {
    TrainConfig c = base;
    c.alpha = alpha;
    const TrainReport r = train(c, trainset, devset);
    SweepRow row{alpha, r.best_epoch, 0.0, 0.0};
    if (r.best_epoch > 0) {
      row.dev_error_rate = r.epochs[r.best_epoch - 1].dev_error_rate;
      row.dev_f1 = r.epochs[r.best_epoch - 1].dev_f1;
    }
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

}  // namespace rsed
