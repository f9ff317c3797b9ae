// SPDX-License-Identifier: Apache-2.0
//
// LocalUpdate: E epochs of mini-batch SGD on one dataset.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/parameters.hpp"
#include "nilm/rng.hpp"

namespace nilm {

struct LocalTrainConfig {
  static constexpr std::size_t kFullBatch = std::numeric_limits<std::size_t>::max();

  double gamma = 0.01; // step size
  std::size_t epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 0;

  /// One step over the whole dataset per epoch.
  static LocalTrainConfig full_batch(double gamma, std::size_t epochs = 1) {
    return {gamma, epochs, kFullBatch, 0};
  }

  bool is_full_batch() const { return batch_size == kFullBatch; }

  void validate() const {
    require(std::isfinite(gamma) && gamma >= 0.0,
            "learning rate gamma must be finite and non-negative");
    require(epochs >= 1, "epochs must be at least 1");
    require(batch_size >= 1, "batch_size must be at least 1");
  }
};

struct LocalUpdateStats {
  double mean_batch_loss = 0.0; // sample-weighted, over every executed batch
  std::size_t steps = 0;
};

/// Returns a new parameter vector; w is left untouched. Samples are
/// reshuffled every epoch with a seed derived from (shuffle_seed, epoch); the
/// final short batch is kept.
template <DifferentiableModel Model>
ParameterVector local_update(const Model &model, const ParameterVector &w,
                             std::span<const Seq2PointSample> data,
                             const LocalTrainConfig &cfg,
                             LocalUpdateStats *stats = nullptr) {
  cfg.validate();
  require(!data.empty(), "local update needs at least one sample");
  require(w.size() == model.parameter_count(),
          "parameter vector does not match the model");

  ParameterVector current = w;
  std::vector<std::size_t> order(data.size());
  const std::size_t batch = std::min(cfg.batch_size, data.size());
  double loss_sum = 0.0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    // A single batch covering everything gains nothing from a permutation.
    if (batch < data.size()) {
      Rng rng = make_rng(derive_seed(cfg.shuffle_seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t len = std::min(batch, order.size() - start);
      const Batch b = make_batch(
          data, std::span<const std::size_t>(order).subspan(start, len));
      LossAndGradient lg = model.loss_and_gradient(current, b);
      if (!std::isfinite(lg.loss) || !lg.gradient.all_finite())
        throw RuntimeFailure("local update diverged: non-finite loss or "
                             "gradient at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batch_index) +
                             " (step " + std::to_string(step) + ")");
      current.values -= cfg.gamma * lg.gradient.values;
      loss_sum += lg.loss * static_cast<double>(len);
      ++step;
    }
  }
  if (stats) {
    stats->steps = step;
    stats->mean_batch_loss =
        loss_sum / static_cast<double>(cfg.epochs * data.size());
  }
  return current;
}

/// Mean MSE over every sample, in one pass, without touching w.
template <DifferentiableModel Model>
double evaluate(const Model &model, const ParameterVector &w,
                std::span<const Seq2PointSample> data) {
  require(!data.empty(), "cannot evaluate on an empty dataset");
  return model.loss(w, make_batch(data));
}

} // namespace nilm
