// SPDX-License-Identifier: Apache-2.0
//
// Test-only models, fixtures and brute-force oracles shared by the unit
// tests and the acceptance runner.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nilm/gru_model.hpp"
#include "nilm/meta.hpp"
#include "nilm/metrics.hpp"
#include "nilm/synth.hpp"
#include "nilm/series.hpp"

namespace nilm::testing {

/// L(w) = (1/B) sum_r sum_k (w_k - c_rk)^2 with c_r the target rows. The
/// Hessian is 2I everywhere, so every meta-learning quantity has a closed
/// form. Inputs are ignored.
class QuadraticModel {
public:
  explicit QuadraticModel(std::size_t d) : d_(d) {}

  std::size_t parameter_count() const { return d_; }

  double loss(const ParameterVector &w, const Batch &b) const {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      sum += (b.targets.row(r).transpose() - w.values).squaredNorm();
    return sum / static_cast<double>(b.rows());
  }

  LossAndGradient loss_and_gradient(const ParameterVector &w, const Batch &b) const {
    LossAndGradient out{loss(w, b), ParameterVector(d_)};
    for (Eigen::Index r = 0; r < b.rows(); ++r)
      out.gradient.values += 2.0 * (w.values - b.targets.row(r).transpose());
    out.gradient.values /= static_cast<double>(b.rows());
    return out;
  }

private:
  std::size_t d_;
};

inline Seq2PointSample sample(std::vector<double> input, std::vector<double> target,
                              std::size_t index = 0) {
  return {std::move(input), std::move(target), index};
}

/// Task whose every split holds one sample with target c.
inline TaskDataset constant_task(const std::string &id, std::vector<double> c) {
  TaskDataset t;
  t.task_id = id;
  const std::size_t d = c.size();
  t.train = {sample({0.0}, c)};
  t.validation = {sample({0.0}, c)};
  t.test = {sample({0.0}, c)};
  for (std::size_t k = 0; k < d; ++k)
    t.appliance_names.push_back("p" + std::to_string(k));
  return t;
}

/// Fixture shared with tests/oracles/fedmeta_transcript.py: the same
/// closed-form data and initial weights are rebuilt there independently.
namespace transcript_fixture {

inline ModelSpec spec() {
  ModelSpec s;
  s.input_len = 4;
  s.output_len = 1;
  s.recurrent_hidden = 2;
  s.dense_widths = {3};
  s.leaky_slope = 0.01;
  return s;
}

inline std::vector<Seq2PointSample> rows(int tag, int count, int offset) {
  std::vector<Seq2PointSample> out;
  for (int k = offset; k < offset + count; ++k) {
    std::vector<double> x;
    for (int j = 0; j < 4; ++j)
      x.push_back(static_cast<double>((7 * k + 3 * j + 5 * tag) % 11) / 10.0);
    out.push_back(sample(x, {static_cast<double>((5 * k + 2 * tag) % 7) / 10.0},
                         static_cast<std::size_t>(k)));
  }
  return out;
}

inline ParameterVector initial_weights() {
  const std::size_t d = parameter_count(spec());
  ParameterVector w(d);
  for (std::size_t i = 0; i < d; ++i)
    w.values[static_cast<Eigen::Index>(i)] =
        static_cast<double>(static_cast<int>((37 * i) % 19) - 9) / 20.0;
  return w;
}

inline ClientPool clients() {
  ClientPool pool;
  for (int tag : {0, 1}) {
    TaskDataset c;
    c.task_id = "client-" + std::to_string(tag);
    c.train = rows(tag, 4, 0);
    c.appliance_names = {"a"};
    pool.clients.push_back(std::move(c));
  }
  return pool;
}

inline std::vector<TaskDataset> tasks() {
  std::vector<TaskDataset> out;
  for (int tag : {2, 3}) {
    TaskDataset t;
    t.task_id = "task-" + std::to_string(tag - 2);
    t.train = rows(tag, 3, 0);
    t.validation = rows(tag, 2, 3);
    t.appliance_names = {"a"};
    out.push_back(std::move(t));
  }
  return out;
}

inline FedMetaConfig config(MetaOrder order) {
  FedMetaConfig cfg;
  cfg.main_rounds = 1;
  cfg.fed.rounds = 1;
  cfg.fed.clients_per_round = 2;
  cfg.fed.weighting = Weighting::Uniform;
  cfg.fed.local = LocalTrainConfig::full_batch(0.5);
  cfg.meta.beta = 0.5;
  cfg.meta.maml_rounds = 1;
  cfg.meta.tasks_per_round = 2;
  cfg.meta.inner = LocalTrainConfig::full_batch(0.5);
  cfg.meta.order = order;
  cfg.finetune = LocalTrainConfig::full_batch(0.5);
  return cfg;
}

} // namespace transcript_fixture

/// Straight-line metric definitions, written independently of metrics.hpp.
namespace brute {

inline double mae(const std::vector<double> &p, const std::vector<double> &t) {
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += std::fabs(static_cast<long double>(p[i]) - t[i]);
  return static_cast<double>(s / p.size());
}

inline double sae(const std::vector<double> &p, const std::vector<double> &t) {
  long double ep = 0, et = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ep += p[i];
    et += t[i];
  }
  if (ep == 0 && et == 0)
    return 0.0;
  return static_cast<double>(std::fabs(ep - et) / (ep > et ? ep : et));
}

struct Scores {
  double f1, accuracy;
};

inline Scores f1_accuracy(const std::vector<double> &p, const std::vector<double> &t,
                          double threshold) {
  int tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] > threshold, b = t[i] > threshold;
    tp += a && b;
    fp += a && !b;
    fn += !a && b;
    tn += !a && !b;
  }
  const double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  return {f1, static_cast<double>(tp + tn) / static_cast<double>(p.size())};
}

} // namespace brute

/// Largest disagreement between score_appliances and the brute definitions
/// over random non-negative vectors, plus SAE range and count bookkeeping.
struct MetricOracleReport {
  double max_error = 0.0;
  bool sae_in_unit_interval = true;
  bool counts_sum_to_length = true;
};

inline MetricOracleReport check_metrics_against_oracle(int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(1, 200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MetricOracleReport r;
  for (int trial = 0; trial < trials; ++trial) {
    const int n = len(rng);
    const double threshold = 0.5 * u(rng);
    // Sprinkle exact zeros so empty-energy and all-OFF cases occur.
    const bool zero_pred = trial % 17 == 0, zero_truth = trial % 23 == 0;
    Eigen::MatrixXd pred(n, 1), truth(n, 1);
    std::vector<double> p(static_cast<std::size_t>(n)), t(p.size());
    for (int i = 0; i < n; ++i) {
      p[static_cast<std::size_t>(i)] = zero_pred ? 0.0 : u(rng);
      t[static_cast<std::size_t>(i)] = zero_truth ? 0.0 : u(rng);
      pred(i, 0) = p[static_cast<std::size_t>(i)];
      truth(i, 0) = t[static_cast<std::size_t>(i)];
    }
    const auto m = score_appliances(pred, truth, ThresholdSpec{{threshold}}, {"x"})[0];
    const auto b = brute::f1_accuracy(p, t, threshold);
    r.max_error = std::max({r.max_error, std::fabs(m.mae - brute::mae(p, t)),
                            std::fabs(m.sae - brute::sae(p, t)), std::fabs(m.f1 - b.f1),
                            std::fabs(m.accuracy - b.accuracy)});
    r.sae_in_unit_interval = r.sae_in_unit_interval && m.sae >= 0.0 && m.sae <= 1.0;
    r.counts_sum_to_length = r.counts_sum_to_length && m.counts.total() == n;
  }
  return r;
}

/// Max |aggregate - sum of appliances| over noiseless households.
inline double noiseless_synth_residual(int households, std::uint64_t seed) {
  double worst = 0.0;
  for (int h = 0; h < households; ++h) {
    SynthConfig c;
    c.profiles = {{"ev", 3300.0, 300.0, 30, 4.0, 2},
                  {"dryer", 2100.0, 150.0, 20, 6.0, 1},
                  {"fridge", 95.0, 8.0, 12, 40.0, 0}};
    c.noise_sigma = 0.0;
    c.seed = seed + static_cast<std::uint64_t>(h);
    const auto s = generate(c);
    for (std::size_t t = 0; t < s.length(); ++t) {
      double sum = 0.0;
      for (const auto &a : s.appliances)
        sum += a.values[t];
      worst = std::max(worst, std::fabs(s.aggregate[t] - sum));
    }
  }
  return worst;
}

} // namespace nilm::testing
