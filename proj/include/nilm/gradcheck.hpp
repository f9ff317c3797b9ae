// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "nilm/gru_model.hpp"
#include "nilm/rng.hpp"

namespace nilm {

struct GradCheckResult {
  std::size_t trials = 0;
  double max_relative_error = 0.0;
};

/// Compares the analytic directional derivative g.v against the central
/// difference (L(w + h v) - L(w - h v)) / 2h on random reduced models
/// (2T <= 8, hidden <= 4, A <= 2).
inline GradCheckResult run_gradient_check(std::size_t trials, std::uint64_t seed,
                                          double step = 1e-5) {
  GradCheckResult result;
  result.trials = trials;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng = make_rng(derive_seed(seed, trial));
    auto pick = [&](std::size_t lo, std::size_t hi) {
      return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    ModelSpec spec;
    spec.input_len = 2 * pick(1, 4);
    spec.recurrent_hidden = pick(1, 4);
    spec.output_len = pick(1, 2);
    spec.dense_widths.clear();
    for (std::size_t l = pick(0, 2); l > 0; --l)
      spec.dense_widths.push_back(pick(1, 5));
    spec.leaky_slope = 0.01 + 0.2 * unit(rng);

    const Seq2PointGru model(spec);
    ParameterVector w = model.init_params(rng());
    for (Eigen::Index i = 0; i < w.values.size(); ++i)
      w.values[i] += 0.1 * gauss(rng); // non-zero biases too

    Batch batch;
    const auto rows = static_cast<Eigen::Index>(pick(1, 5));
    batch.inputs.resize(rows, static_cast<Eigen::Index>(spec.input_len));
    batch.targets.resize(rows, static_cast<Eigen::Index>(spec.output_len));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < batch.inputs.cols(); ++c)
        batch.inputs(r, c) = unit(rng);
      for (Eigen::Index c = 0; c < batch.targets.cols(); ++c)
        batch.targets(r, c) = unit(rng);
    }

    Eigen::VectorXd v(w.values.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v[i] = gauss(rng);
    v.normalize();

    const double analytic = model.gradient(w, batch).values.dot(v);
    const ParameterVector plus(Eigen::VectorXd(w.values + step * v));
    const ParameterVector minus(Eigen::VectorXd(w.values - step * v));
    const double numeric =
        (model.loss(plus, batch) - model.loss(minus, batch)) / (2.0 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
  }
  return result;
}

} // namespace nilm
