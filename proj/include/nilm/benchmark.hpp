// SPDX-License-Identifier: Apache-2.0
//
// Benchmark harness: builds client, task and testing-task datasets, trains
// every enabled algorithm on the same model architecture and scores each
// (algorithm, testing task, appliance) triple.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "nilm/config.hpp"
#include "nilm/csv.hpp"
#include "nilm/errors.hpp"
#include "nilm/federated.hpp"
#include "nilm/gru_model.hpp"
#include "nilm/local_train.hpp"
#include "nilm/meta.hpp"
#include "nilm/metrics.hpp"
#include "nilm/rng.hpp"
#include "nilm/synth.hpp"
#include "nilm/telemetry.hpp"

namespace nilm {

inline constexpr int kReportSchemaVersion = 1;

enum class HouseholdRole { Client = 0, Task = 1, Test = 2 };

inline std::string role_prefix(HouseholdRole role) {
  switch (role) {
  case HouseholdRole::Client:
    return "client";
  case HouseholdRole::Task:
    return "task";
  case HouseholdRole::Test:
    return "test";
  }
  return "household";
}

/// Profiles of one synthetic household: each base parameter is scaled by
/// exp(u), u ~ U(-spread, spread), with spread widened by test_shift for
/// testing households.
inline SynthConfig household_synth_config(const ExperimentConfig &cfg,
                                          HouseholdRole role,
                                          std::size_t index) {
  const auto &fam = cfg.synth;
  Rng rng = make_rng(derive_seed(cfg.seed, 21, static_cast<int>(role), index));
  const double spread =
      fam.heterogeneity + (role == HouseholdRole::Test ? fam.test_shift : 0.0);
  std::uniform_real_distribution<double> u(-spread, spread);
  SynthConfig sc;
  sc.days = fam.days;
  sc.sample_interval = fam.sample_interval;
  sc.noise_sigma = fam.noise_sigma;
  sc.seed = derive_seed(cfg.seed, 22, static_cast<int>(role), index);
  sc.household_id = role_prefix(role) + "-" + std::to_string(index);
  for (auto p : fam.appliances) {
    const double power = std::exp(u(rng));
    const double rate = std::exp(u(rng));
    const double length = std::exp(u(rng));
    p.on_power_mean *= power;
    p.on_power_jitter *= power;
    p.mean_events_per_day *= rate;
    p.mean_event_duration = std::max<std::int64_t>(
        1, std::llround(static_cast<double>(p.mean_event_duration) * length));
    sc.profiles.push_back(p);
  }
  return sc;
}

struct Household {
  HouseholdRole role;
  HouseholdSeries series;
};

/// Synthetic households, or the CSV files of data.csv_dir named
/// client-*.csv, task-*.csv and test-*.csv, in (role, name) order.
inline std::vector<Household> load_households(const ExperimentConfig &cfg) {
  std::vector<Household> out;
  if (cfg.data.source == "synth") {
    auto add = [&](HouseholdRole role, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i)
        out.push_back({role, generate(household_synth_config(cfg, role, i))});
    };
    add(HouseholdRole::Client, cfg.synth.client_households);
    add(HouseholdRole::Task, cfg.synth.task_households);
    add(HouseholdRole::Test, cfg.synth.test_households);
    return out;
  }

  std::map<std::pair<int, std::string>, std::filesystem::path> found;
  for (const auto &entry : std::filesystem::directory_iterator(cfg.data.csv_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv")
      continue;
    const std::string stem = entry.path().stem().string();
    for (auto role : {HouseholdRole::Client, HouseholdRole::Task, HouseholdRole::Test})
      if (stem.rfind(role_prefix(role) + "-", 0) == 0)
        found[{static_cast<int>(role), stem}] = entry.path();
  }
  for (const auto &[key, path] : found)
    out.push_back({static_cast<HouseholdRole>(key.first), read_csv(path)});
  return out;
}

/// Client pool, meta-learning task pool and testing tasks.
struct BenchmarkData {
  ClientPool clients;
  std::vector<TaskDataset> tasks;
  std::vector<TaskDataset> tests;
  std::vector<std::string> appliance_names;
};

inline BenchmarkData build_datasets(const ExperimentConfig &cfg,
                                    const std::vector<Household> &households) {
  BenchmarkData data;
  for (const auto &h : households) {
    const auto names = h.series.appliance_names();
    if (data.appliance_names.empty())
      data.appliance_names = names;
    require(names == data.appliance_names,
            "household '" + h.series.household_id +
                "' has a different appliance set than the others");

    const NormalizationSpec norm = fit_normalization(h.series);
    auto samples = windowize(h.series, norm, cfg.data.half_window, cfg.data.stride);
    const std::string &id = h.series.household_id;
    switch (h.role) {
    case HouseholdRole::Client: {
      // A household may be divided evenly into several contiguous clients.
      const std::size_t parts = std::max<std::size_t>(1, cfg.synth.clients_per_household);
      const std::size_t chunk = samples.size() / parts;
      for (std::size_t c = 0; c < parts; ++c) {
        const auto begin = samples.begin() + static_cast<std::ptrdiff_t>(c * chunk);
        const auto end = c + 1 == parts
                             ? samples.end()
                             : begin + static_cast<std::ptrdiff_t>(chunk);
        data.clients.clients.push_back(split_dataset(
            {begin, end}, cfg.data.pool_split,
            parts == 1 ? id : id + "-" + std::to_string(c), names, norm));
      }
      break;
    }
    case HouseholdRole::Task:
      data.tasks.push_back(
          split_dataset(std::move(samples), cfg.data.pool_split, id, names, norm));
      break;
    case HouseholdRole::Test:
      data.tests.push_back(
          split_dataset(std::move(samples), cfg.data.test_split, id, names, norm));
      break;
    }
  }
  require(!data.tests.empty(), "no testing households found");
  const bool needs_clients =
      std::count(cfg.algorithms.begin(), cfg.algorithms.end(), Algorithm::FedAvg) ||
      std::count(cfg.algorithms.begin(), cfg.algorithms.end(), Algorithm::FedMeta);
  if (needs_clients)
    require(!data.clients.clients.empty(), "federated algorithms need client households");
  if (std::count(cfg.algorithms.begin(), cfg.algorithms.end(), Algorithm::FedMeta))
    require(!data.tasks.empty(), "fedmeta needs task households");
  return data;
}

inline BenchmarkData build_datasets(const ExperimentConfig &cfg) {
  return build_datasets(cfg, load_households(cfg));
}

/// Combines the global seed with every component seed so one --seed
/// changes the whole run.
inline ExperimentConfig resolve_seeds(ExperimentConfig cfg) {
  auto mix = [&](std::uint64_t tag, std::uint64_t &seed) {
    seed = derive_seed(cfg.seed, tag, seed);
  };
  mix(31, cfg.fedmeta.fed.sampling_seed);
  mix(32, cfg.fedmeta.fed.local.shuffle_seed);
  mix(33, cfg.fedmeta.meta.sampling_seed);
  mix(34, cfg.fedmeta.meta.inner.shuffle_seed);
  mix(35, cfg.fedmeta.finetune.shuffle_seed);
  mix(36, cfg.central.shuffle_seed);
  mix(37, cfg.local.shuffle_seed);
  return cfg;
}

inline ModelSpec model_spec_for(const ExperimentConfig &cfg,
                                std::size_t appliance_count) {
  ModelSpec spec = cfg.model;
  spec.input_len = 2 * cfg.data.half_window;
  spec.output_len = appliance_count;
  return spec;
}

inline std::uint64_t init_seed(const ExperimentConfig &cfg) {
  return derive_seed(cfg.seed, 11);
}

/// Parameters used to predict each testing task, in data.tests order.
/// Expects a config already passed through resolve_seeds.
inline std::vector<ParameterVector>
train_algorithm(Algorithm algorithm, const ExperimentConfig &cfg,
                const Seq2PointGru &model, const ParameterVector &w0,
                const BenchmarkData &data, const TelemetrySink &sink = {}) {
  const std::size_t n = data.tests.size();
  switch (algorithm) {
  case Algorithm::Central: {
    std::vector<Seq2PointSample> pooled;
    for (const auto &t : data.tests)
      pooled.insert(pooled.end(), t.train.begin(), t.train.end());
    return std::vector<ParameterVector>(n, local_update(model, w0, pooled, cfg.central));
  }
  case Algorithm::Local:
    return parallel_map(n, [&](std::size_t i) {
      return local_update(model, w0, data.tests[i].train, cfg.local);
    });
  case Algorithm::FedAvg:
    return std::vector<ParameterVector>(
        n, run_fedavg(model, w0, data.clients, cfg.fedmeta.fed, sink));
  case Algorithm::FedMeta: {
    const ParameterVector global =
        run_fedmeta(model, w0, data.clients, data.tasks, cfg.fedmeta, sink);
    return parallel_map(n, [&](std::size_t i) {
      return fine_tune(model, global, data.tests[i], cfg.fedmeta.finetune, sink);
    });
  }
  }
  throw ValidationError("unknown algorithm");
}

/// Power cannot be negative, so predictions are clipped at zero before
/// scoring.
inline Eigen::MatrixXd predict(const Seq2PointGru &model, const ParameterVector &w,
                               const std::vector<Seq2PointSample> &samples) {
  return model.forward(w, make_batch(samples).inputs).cwiseMax(0.0);
}

inline ThresholdSpec thresholds_for(const ExperimentConfig &cfg,
                                    const TaskDataset &task) {
  ThresholdSpec spec = ThresholdSpec::from_training_max(
      make_batch(task.train).targets, cfg.threshold_fraction);
  for (std::size_t j = 0; j < task.appliance_names.size(); ++j)
    if (auto it = cfg.threshold_overrides.find(task.appliance_names[j]);
        it != cfg.threshold_overrides.end())
      spec.thresholds[j] = it->second;
  return spec;
}

struct ReportEntry {
  std::string algorithm;
  std::string task_id;
  ApplianceMetrics metrics;
};

struct BenchmarkResult {
  std::vector<ReportEntry> entries; // sorted by (algorithm, task, appliance)
  std::map<std::string, std::string> failures; // algorithm -> error
  nlohmann::json report;
};

inline nlohmann::json entry_json(const ReportEntry &e) {
  const auto &m = e.metrics;
  return {{"algorithm", e.algorithm},
          {"task_id", e.task_id},
          {"appliance", m.appliance},
          {"f1", m.f1},
          {"accuracy", m.accuracy},
          {"mae", m.mae},
          {"sae", m.sae},
          {"tp", m.counts.tp},
          {"fp", m.counts.fp},
          {"fn", m.counts.fn},
          {"tn", m.counts.tn},
          {"samples", m.samples},
          {"predicted_energy", m.predicted_energy},
          {"actual_energy", m.actual_energy},
          {"threshold", m.threshold}};
}

/// Per (algorithm, appliance) means over testing tasks, plus an "all"
/// row per algorithm.
inline nlohmann::json averages_json(const std::vector<ReportEntry> &entries) {
  struct Acc {
    double f1 = 0, accuracy = 0, mae = 0, sae = 0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const auto &e : entries)
    for (const auto &key : {e.metrics.appliance, std::string("all")}) {
      auto &a = acc[{e.algorithm, key}];
      a.f1 += e.metrics.f1;
      a.accuracy += e.metrics.accuracy;
      a.mae += e.metrics.mae;
      a.sae += e.metrics.sae;
      ++a.n;
    }
  nlohmann::json out = nlohmann::json::array();
  for (const auto &[key, a] : acc) {
    const double n = static_cast<double>(a.n);
    out.push_back({{"algorithm", key.first},
                   {"appliance", key.second},
                   {"f1", a.f1 / n},
                   {"accuracy", a.accuracy / n},
                   {"mae", a.mae / n},
                   {"sae", a.sae / n}});
  }
  return out;
}

inline void write_predictions_csv(const std::filesystem::path &path,
                                  const TaskDataset &task,
                                  const Eigen::MatrixXd &pred,
                                  const Eigen::MatrixXd &truth,
                                  std::size_t half_window) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  out << "t,aggregate";
  for (const auto &name : task.appliance_names)
    out << ",truth_" << name;
  for (const auto &name : task.appliance_names)
    out << ",pred_" << name;
  out << '\n';
  for (std::size_t l = 0; l < task.test.size(); ++l) {
    const auto &s = task.test[l];
    out << s.source_index + half_window << ','
        << detail::format_double(s.input[half_window]);
    const auto row = static_cast<Eigen::Index>(l);
    for (Eigen::Index j = 0; j < truth.cols(); ++j)
      out << ',' << detail::format_double(truth(row, j));
    for (Eigen::Index j = 0; j < pred.cols(); ++j)
      out << ',' << detail::format_double(pred(row, j));
    out << '\n';
  }
  if (!out)
    throw RuntimeFailure("failed writing '" + path.string() + "'");
}

struct BenchmarkOptions {
  bool write_outputs = true; // report.json, run_log.jsonl, predictions/
};

inline BenchmarkResult run_benchmark(const ExperimentConfig &input_cfg,
                                     const BenchmarkOptions &options = {}) {
  input_cfg.validate();
  const ExperimentConfig cfg = resolve_seeds(input_cfg);
  const BenchmarkData data = build_datasets(cfg);
  const Seq2PointGru model(model_spec_for(cfg, data.appliance_names.size()));
  const ParameterVector w0 = model.init_params(init_seed(cfg));

  if (options.write_outputs) {
    std::filesystem::create_directories(cfg.output_dir);
    if (cfg.write_predictions)
      std::filesystem::create_directories(cfg.output_dir / "predictions");
  }

  std::vector<std::string> log_lines;
  std::mutex log_mutex;
  BenchmarkResult result;
  for (Algorithm algorithm : cfg.algorithms) {
    const std::string name = to_string(algorithm);
    const TelemetrySink sink = [&](const nlohmann::json &event) {
      nlohmann::json tagged = event;
      tagged["algorithm"] = name;
      const std::lock_guard lock(log_mutex);
      log_lines.push_back(tagged.dump());
    };
    try {
      const auto params = train_algorithm(algorithm, cfg, model, w0, data, sink);
      for (std::size_t i = 0; i < data.tests.size(); ++i) {
        const TaskDataset &task = data.tests[i];
        const Eigen::MatrixXd truth = make_batch(task.test).targets;
        const Eigen::MatrixXd pred = predict(model, params[i], task.test);
        for (auto &m : score_appliances(pred, truth, thresholds_for(cfg, task),
                                        task.appliance_names))
          result.entries.push_back({name, task.task_id, std::move(m)});
        if (options.write_outputs && cfg.write_predictions)
          write_predictions_csv(cfg.output_dir / "predictions" /
                                    (name + "__" + task.task_id + ".csv"),
                                task, pred, truth, cfg.data.half_window);
      }
    } catch (const std::exception &e) {
      result.failures[name] = e.what();
      std::erase_if(result.entries,
                    [&](const ReportEntry &r) { return r.algorithm == name; });
    }
  }

  std::sort(result.entries.begin(), result.entries.end(),
            [](const ReportEntry &a, const ReportEntry &b) {
              return std::tie(a.algorithm, a.task_id, a.metrics.appliance) <
                     std::tie(b.algorithm, b.task_id, b.metrics.appliance);
            });

  nlohmann::json entries = nlohmann::json::array();
  for (const auto &e : result.entries)
    entries.push_back(entry_json(e));
  nlohmann::json failures = nlohmann::json::array();
  for (const auto &[alg, err] : result.failures)
    failures.push_back({{"algorithm", alg}, {"error", err}});
  std::vector<std::string> algs;
  for (auto a : cfg.algorithms)
    algs.push_back(to_string(a));
  std::vector<std::string> test_ids;
  for (const auto &t : data.tests)
    test_ids.push_back(t.task_id);

  result.report = {{"schema_version", kReportSchemaVersion},
                   {"config_hash", config_hash(input_cfg)},
                   {"seed", input_cfg.seed},
                   {"algorithms", algs},
                   {"testing_tasks", test_ids},
                   {"appliances", data.appliance_names},
                   {"model_parameters", model.parameter_count()},
                   {"entries", entries},
                   {"averages", averages_json(result.entries)},
                   {"failures", failures}};

  if (options.write_outputs) {
    std::ofstream report(cfg.output_dir / "report.json",
                         std::ios::binary | std::ios::trunc);
    report << result.report.dump(2) << '\n';
    std::ofstream log(cfg.output_dir / "run_log.jsonl",
                      std::ios::binary | std::ios::trunc);
    for (const auto &line : log_lines)
      log << line << '\n';
    if (!report || !log)
      throw RuntimeFailure("failed writing outputs to '" +
                           cfg.output_dir.string() + "'");
  }
  return result;
}

} // namespace nilm
