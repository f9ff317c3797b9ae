// SPDX-License-Identifier: Apache-2.0
//
// ON/OFF event detection and the per-appliance disaggregation metrics:
// F1, accuracy, MAE and SAE.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nilm/errors.hpp"

namespace nilm {

using StateMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// One threshold per appliance, in normalized units.
struct ThresholdSpec {
  std::vector<double> thresholds;

  /// fraction * (max normalized training power) per appliance column.
  static ThresholdSpec from_training_max(const Eigen::MatrixXd &train_targets,
                                         double fraction = 0.1) {
    require(fraction >= 0.0, "threshold fraction must be non-negative");
    ThresholdSpec spec;
    for (Eigen::Index j = 0; j < train_targets.cols(); ++j) {
      const double peak =
          train_targets.rows() > 0 ? train_targets.col(j).maxCoeff() : 0.0;
      spec.thresholds.push_back(std::max(0.0, fraction * peak));
    }
    return spec;
  }
};

/// ON iff the value is strictly greater than the appliance threshold.
inline StateMatrix detect_on_off(const Eigen::MatrixXd &values,
                                 const ThresholdSpec &thresholds) {
  require(static_cast<std::size_t>(values.cols()) == thresholds.thresholds.size(),
          "prediction has " + std::to_string(values.cols()) +
              " appliance columns but " +
              std::to_string(thresholds.thresholds.size()) +
              " thresholds were given");
  StateMatrix states(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    states.col(j) =
        values.col(j).array() > thresholds.thresholds[static_cast<std::size_t>(j)];
  return states;
}

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), "mae: length mismatch");
  require(!pred.empty(), "mae: empty input");
  double sum = 0.0;
  for (std::size_t l = 0; l < pred.size(); ++l)
    sum += std::abs(pred[l] - truth[l]);
  return sum / static_cast<double>(pred.size());
}

/// |E_hat - E| / max(E, E_hat); 0 when both energies are zero. Normalized
/// truth can dip below zero when the aggregate never reaches 0 W, so the
/// denominator uses magnitudes, which changes nothing for non-negative sums.
inline double sae(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), "sae: length mismatch");
  double predicted = 0.0, actual = 0.0;
  for (std::size_t l = 0; l < pred.size(); ++l) {
    predicted += pred[l];
    actual += truth[l];
  }
  if (predicted == 0.0 && actual == 0.0)
    return 0.0;
  return std::abs(predicted - actual) / std::max(std::abs(actual), std::abs(predicted));
}

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
};

struct ClassificationScores {
  double f1 = 0.0;
  double accuracy = 0.0;
  ConfusionCounts counts;
};

/// f1 = 2tp / (2tp + fp + fn), 0 when the denominator is 0;
/// accuracy = (tp + tn) / L.
inline ClassificationScores f1_accuracy(std::span<const bool> pred_states,
                                        std::span<const bool> true_states) {
  require(pred_states.size() == true_states.size(), "f1: length mismatch");
  ClassificationScores s;
  for (std::size_t l = 0; l < pred_states.size(); ++l) {
    const bool p = pred_states[l], t = true_states[l];
    if (p && t)
      ++s.counts.tp;
    else if (p)
      ++s.counts.fp;
    else if (t)
      ++s.counts.fn;
    else
      ++s.counts.tn;
  }
  const auto denom = 2 * s.counts.tp + s.counts.fp + s.counts.fn;
  s.f1 = denom == 0 ? 0.0
                    : 2.0 * static_cast<double>(s.counts.tp) / static_cast<double>(denom);
  s.accuracy = pred_states.empty()
                   ? 0.0
                   : static_cast<double>(s.counts.tp + s.counts.tn) /
                         static_cast<double>(pred_states.size());
  return s;
}

struct ApplianceMetrics {
  std::string appliance;
  double f1 = 0.0;
  double accuracy = 0.0;
  double mae = 0.0;
  double sae = 0.0;
  ConfusionCounts counts;
  std::int64_t samples = 0;       // L
  double predicted_energy = 0.0;  // E_hat
  double actual_energy = 0.0;     // E
  double threshold = 0.0;
};

/// Scores every appliance column of a prediction matrix against the truth.
inline std::vector<ApplianceMetrics>
score_appliances(const Eigen::MatrixXd &pred, const Eigen::MatrixXd &truth,
                 const ThresholdSpec &thresholds,
                 const std::vector<std::string> &names) {
  require(pred.rows() == truth.rows() && pred.cols() == truth.cols(),
          "prediction and truth shapes differ");
  require(static_cast<std::size_t>(pred.cols()) == names.size(),
          "appliance name count does not match prediction columns");
  require(pred.rows() > 0, "cannot score an empty prediction");
  const StateMatrix p_on = detect_on_off(pred, thresholds);
  const StateMatrix t_on = detect_on_off(truth, thresholds);
  std::vector<ApplianceMetrics> out;
  for (Eigen::Index j = 0; j < pred.cols(); ++j) {
    const Eigen::VectorXd pj = pred.col(j), tj = truth.col(j);
    const auto rows = static_cast<std::size_t>(p_on.rows());
    auto pb = std::make_unique<bool[]>(rows);
    auto tb = std::make_unique<bool[]>(rows);
    for (std::size_t l = 0; l < rows; ++l) {
      pb[l] = p_on(static_cast<Eigen::Index>(l), j);
      tb[l] = t_on(static_cast<Eigen::Index>(l), j);
    }
    const auto cls = f1_accuracy({pb.get(), rows}, {tb.get(), rows});
    ApplianceMetrics m;
    m.appliance = names[static_cast<std::size_t>(j)];
    m.f1 = cls.f1;
    m.accuracy = cls.accuracy;
    m.counts = cls.counts;
    m.mae = mae({pj.data(), static_cast<std::size_t>(pj.size())},
                {tj.data(), static_cast<std::size_t>(tj.size())});
    m.sae = sae({pj.data(), static_cast<std::size_t>(pj.size())},
                {tj.data(), static_cast<std::size_t>(tj.size())});
    m.samples = pred.rows();
    m.predicted_energy = pj.sum();
    m.actual_energy = tj.sum();
    m.threshold = thresholds.thresholds[static_cast<std::size_t>(j)];
    out.push_back(std::move(m));
  }
  return out;
}

} // namespace nilm
