// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nilm/errors.hpp"
#include "nilm/series.hpp"

namespace nilm {

/// Flat vector of every model parameter. The only thing that crosses the
/// client/server boundary.
struct ParameterVector {
  Eigen::VectorXd values;

  ParameterVector() = default;
  explicit ParameterVector(Eigen::VectorXd v) : values(std::move(v)) {}
  explicit ParameterVector(std::size_t d) : values(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))) {}

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  bool all_finite() const { return values.allFinite(); }

  /// Bitwise comparison (0.0 == -0.0).
  friend bool operator==(const ParameterVector &a, const ParameterVector &b) {
    return a.values.size() == b.values.size() &&
           (a.values.array() == b.values.array()).all();
  }
};

/// Rows are samples: inputs is batch x 2T, targets is batch x A.
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  Eigen::Index rows() const { return inputs.rows(); }
};

inline Batch make_batch(std::span<const Seq2PointSample> samples,
                        std::span<const std::size_t> indices) {
  require(!indices.empty(), "cannot build an empty batch");
  const auto &first = samples[indices.front()];
  const auto width = static_cast<Eigen::Index>(first.input.size());
  const auto outputs = static_cast<Eigen::Index>(first.target.size());
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(indices.size()), width);
  b.targets.resize(static_cast<Eigen::Index>(indices.size()), outputs);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto &s = samples[indices[r]];
    require(static_cast<Eigen::Index>(s.input.size()) == width &&
                static_cast<Eigen::Index>(s.target.size()) == outputs,
            "samples in a batch must share input and target lengths");
    const auto row = static_cast<Eigen::Index>(r);
    b.inputs.row(row) = Eigen::Map<const Eigen::RowVectorXd>(s.input.data(), width);
    b.targets.row(row) = Eigen::Map<const Eigen::RowVectorXd>(s.target.data(), outputs);
  }
  return b;
}

inline Batch make_batch(std::span<const Seq2PointSample> samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i)
    all[i] = i;
  return make_batch(samples, all);
}

struct LossAndGradient {
  double loss = 0.0;
  ParameterVector gradient;
};

/// What the training loops need from a model: a mean loss over a batch and
/// its exact gradient with respect to the flat parameters.
template <typename M>
concept DifferentiableModel =
    requires(const M &m, const ParameterVector &w, const Batch &b) {
      { m.parameter_count() } -> std::convertible_to<std::size_t>;
      { m.loss(w, b) } -> std::convertible_to<double>;
      { m.loss_and_gradient(w, b) } -> std::same_as<LossAndGradient>;
    };

} // namespace nilm
