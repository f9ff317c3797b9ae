// SPDX-License-Identifier: Apache-2.0
//
// Household time series, min-max normalization, seq2point windowing and
// chronological train/validation/test splitting.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_set>
#include <vector>

#include "nilm/errors.hpp"

namespace nilm {

struct ApplianceChannel {
  std::string name;
  std::vector<double> values; // watts
};

/// Aggregate meter readings plus the per-appliance sub-meter readings that
/// compose them: aggregate[t] = sum_j appliances[j].values[t] + noise[t].
struct HouseholdSeries {
  std::string household_id;
  std::vector<std::int64_t> timestamps; // seconds, strictly increasing
  std::vector<double> aggregate;        // watts
  std::vector<ApplianceChannel> appliances;
  std::int64_t sample_interval = 60;

  std::size_t length() const { return aggregate.size(); }
  std::size_t appliance_count() const { return appliances.size(); }

  std::vector<std::string> appliance_names() const {
    std::vector<std::string> names;
    names.reserve(appliances.size());
    for (const auto &a : appliances)
      names.push_back(a.name);
    return names;
  }

  /// Throws ValidationError naming the first violated invariant.
  void validate() const {
    require(!aggregate.empty(), "household '" + household_id + "' is empty");
    require(!appliances.empty(),
            "household '" + household_id + "' has no appliance channels");
    require(sample_interval > 0, "sample_interval must be positive");
    const std::size_t n = aggregate.size();
    require(timestamps.size() == n,
            "timestamp count " + std::to_string(timestamps.size()) +
                " differs from aggregate length " + std::to_string(n));
    for (std::size_t t = 1; t < n; ++t)
      require(timestamps[t] > timestamps[t - 1],
              "timestamps not strictly increasing at index " +
                  std::to_string(t));
    for (std::size_t t = 0; t < n; ++t)
      require(std::isfinite(aggregate[t]),
              "non-finite aggregate value at index " + std::to_string(t));
    std::unordered_set<std::string> seen;
    for (const auto &a : appliances) {
      require(!a.name.empty(), "appliance with empty name");
      require(seen.insert(a.name).second,
              "duplicate appliance name '" + a.name + "'");
      require(a.values.size() == n, "appliance '" + a.name + "' has length " +
                                        std::to_string(a.values.size()) +
                                        ", expected " + std::to_string(n));
      for (std::size_t t = 0; t < n; ++t)
        require(std::isfinite(a.values[t]) && a.values[t] >= 0.0,
                "appliance '" + a.name +
                    "' has a negative or non-finite value at index " +
                    std::to_string(t));
    }
  }
};

enum class ZeroRangePolicy { MapToZero };

/// Affine map v -> (v - lo) / (hi - lo). One spec per household, shared by
/// the aggregate and every appliance channel.
struct NormalizationSpec {
  double lo = 0.0;
  double hi = 1.0;
  ZeroRangePolicy zero_range_policy = ZeroRangePolicy::MapToZero;

  double range() const { return hi - lo; }

  double normalize(double v) const {
    if (!(hi > lo))
      return 0.0;
    return (v - lo) / (hi - lo);
  }

  double denormalize(double u) const {
    if (!(hi > lo))
      return lo;
    return lo + u * (hi - lo);
  }
};

inline NormalizationSpec fit_normalization(const HouseholdSeries &series) {
  require(!series.aggregate.empty(), "cannot fit normalization: empty series");
  auto check_finite = [](const std::vector<double> &v,
                         const std::string &channel) {
    for (std::size_t t = 0; t < v.size(); ++t)
      require(std::isfinite(v[t]), "non-finite value in channel '" + channel +
                                       "' at index " + std::to_string(t));
  };
  check_finite(series.aggregate, "aggregate");
  for (const auto &a : series.appliances)
    check_finite(a.values, a.name);
  const auto [lo, hi] =
      std::minmax_element(series.aggregate.begin(), series.aggregate.end());
  return NormalizationSpec{*lo, *hi, ZeroRangePolicy::MapToZero};
}

/// One seq2point example: a window of 2T normalized aggregate readings and
/// the normalized appliance readings at the window midpoint.
struct Seq2PointSample {
  std::vector<double> input;
  std::vector<double> target;
  std::size_t source_index = 0; // window start t; target comes from t + T
};

/// Emits a sample for every start t = 0, stride, 2*stride, ... whose window
/// [t, t + 2T) lies inside the series. Windows are never padded.
inline std::vector<Seq2PointSample> windowize(const HouseholdSeries &series,
                                              const NormalizationSpec &spec,
                                              std::size_t half_window,
                                              std::size_t stride = 1) {
  require(half_window > 0, "half_window must be positive");
  require(stride > 0, "stride must be positive");
  series.validate();
  const std::size_t n = series.length();
  const std::size_t width = 2 * half_window;
  if (n < width)
    throw ValidationError("household '" + series.household_id + "' has " +
                          std::to_string(n) +
                          " readings; windowing requires at least " +
                          std::to_string(width));

  std::vector<double> agg(n);
  for (std::size_t t = 0; t < n; ++t)
    agg[t] = spec.normalize(series.aggregate[t]);

  const std::size_t count = (n - width) / stride + 1;
  std::vector<Seq2PointSample> out;
  out.reserve(count);
  for (std::size_t start = 0; start + width <= n; start += stride) {
    Seq2PointSample s;
    s.source_index = start;
    s.input.assign(agg.begin() + static_cast<std::ptrdiff_t>(start),
                   agg.begin() + static_cast<std::ptrdiff_t>(start + width));
    s.target.reserve(series.appliances.size());
    for (const auto &a : series.appliances)
      s.target.push_back(spec.normalize(a.values[start + half_window]));
    out.push_back(std::move(s));
  }
  return out;
}

struct SplitFractions {
  double train = 0.5;
  double validation = 0.25;
  double test = 0.25;
};

/// A named collection of samples with chronological splits. Serves both as
/// a meta-learning task and as a federated client dataset.
struct TaskDataset {
  std::string task_id;
  std::vector<Seq2PointSample> train;
  std::vector<Seq2PointSample> validation;
  std::vector<Seq2PointSample> test;
  std::vector<std::string> appliance_names;
  NormalizationSpec normalization;

  std::size_t appliance_count() const { return appliance_names.size(); }
};

/// Chronological split: train gets the earliest floor(train * n) samples,
/// validation the next floor(validation * n), test the remainder.
inline TaskDataset split_dataset(std::vector<Seq2PointSample> samples,
                                 const SplitFractions &fractions,
                                 std::string task_id,
                                 std::vector<std::string> appliance_names,
                                 const NormalizationSpec &normalization) {
  require(fractions.train > 0.0 && fractions.validation > 0.0 &&
              fractions.test > 0.0,
          "split fractions must all be positive");
  require(std::abs(fractions.train + fractions.validation + fractions.test -
                   1.0) <= 1e-9,
          "split fractions must sum to 1");
  const std::size_t n = samples.size();
  require(n >= 3, "task '" + task_id + "' has " + std::to_string(n) +
                      " samples; splitting needs at least 3");
  for (const auto &s : samples)
    require(s.target.size() == appliance_names.size(),
            "sample target length does not match appliance count");

  std::stable_sort(samples.begin(), samples.end(),
                   [](const Seq2PointSample &a, const Seq2PointSample &b) {
                     return a.source_index < b.source_index;
                   });

  // The epsilon absorbs products such as 0.29 * 100 = 28.999999999999996.
  auto floor_count = [n](double f) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_train = floor_count(fractions.train);
  const std::size_t n_val = floor_count(fractions.validation);
  require(n_train > 0 && n_val > 0 && n_train + n_val < n,
          "task '" + task_id + "': " + std::to_string(n) +
              " samples leave an empty split");

  TaskDataset task;
  task.task_id = std::move(task_id);
  task.appliance_names = std::move(appliance_names);
  task.normalization = normalization;
  auto begin = std::make_move_iterator(samples.begin());
  task.train.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  task.validation.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                         begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  task.test.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val),
                   std::make_move_iterator(samples.end()));
  return task;
}

} // namespace nilm
