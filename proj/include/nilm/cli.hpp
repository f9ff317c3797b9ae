// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 1 validation error (bad
// flags, config, or data), 2 runtime failure.
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nilm/benchmark.hpp"
#include "nilm/checkpoint.hpp"
#include "nilm/config.hpp"
#include "nilm/csv.hpp"
#include "nilm/gradcheck.hpp"

namespace nilm::cli {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

inline ExperimentConfig load_experiment(const GlobalOptions &g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{}
                                               : load_config(g.config_path);
  if (g.seed)
    cfg.seed = *g.seed;
  if (!g.out_dir.empty())
    cfg.output_dir = g.out_dir;
  cfg.validate();
  return cfg;
}

inline void write_json(const std::filesystem::path &path, const nlohmann::json &j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out)
    throw RuntimeFailure("failed writing '" + path.string() + "'");
}

inline int cmd_synth(const GlobalOptions &g, std::ostream &out) {
  ExperimentConfig cfg = load_experiment(g);
  require(cfg.data.source == "synth", "synth needs data.source = synth");
  const auto households = load_households(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  for (const auto &h : households) {
    const auto path = cfg.output_dir / (h.series.household_id + ".csv");
    write_csv(h.series, path);
    out << path.string() << '\n';
  }
  // Companion config that benchmarks the files just written.
  ExperimentConfig bench = cfg;
  bench.data.source = "csv";
  bench.data.csv_dir = std::filesystem::absolute(cfg.output_dir);
  bench.output_dir = std::filesystem::absolute(cfg.output_dir / "bench");
  std::ofstream ini(cfg.output_dir / "bench.ini", std::ios::binary | std::ios::trunc);
  ini << to_ini(bench);
  if (!ini)
    throw RuntimeFailure("failed writing bench.ini");
  out << (cfg.output_dir / "bench.ini").string() << '\n';
  return 0;
}

inline int cmd_train(const GlobalOptions &g, const std::string &algorithm_name,
                     const std::string &task_id, std::ostream &out) {
  const Algorithm algorithm = parse_algorithm(algorithm_name);
  ExperimentConfig cfg = load_experiment(g);
  cfg.algorithms = {algorithm};
  cfg = resolve_seeds(cfg);
  const BenchmarkData data = build_datasets(cfg);
  const Seq2PointGru model(model_spec_for(cfg, data.appliance_names.size()));
  const ParameterVector w0 = model.init_params(init_seed(cfg));

  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream log(cfg.output_dir / "run_log.jsonl", std::ios::binary | std::ios::trunc);
  const TelemetrySink sink = [&](const nlohmann::json &event) {
    nlohmann::json tagged = event;
    tagged["algorithm"] = to_string(algorithm);
    log << tagged.dump() << '\n';
  };

  ParameterVector w;
  switch (algorithm) {
  case Algorithm::Central: {
    std::vector<Seq2PointSample> pooled;
    for (const auto &t : data.tests)
      pooled.insert(pooled.end(), t.train.begin(), t.train.end());
    w = local_update(model, w0, pooled, cfg.central);
    break;
  }
  case Algorithm::Local: {
    const TaskDataset *task = &data.tests.front();
    if (!task_id.empty()) {
      task = nullptr;
      for (const auto &t : data.tests)
        if (t.task_id == task_id)
          task = &t;
      require(task != nullptr, "unknown testing task '" + task_id + "'");
    }
    w = local_update(model, w0, task->train, cfg.local);
    break;
  }
  case Algorithm::FedAvg:
    w = run_fedavg(model, w0, data.clients, cfg.fedmeta.fed, sink);
    break;
  case Algorithm::FedMeta:
    w = run_fedmeta(model, w0, data.clients, data.tasks, cfg.fedmeta, sink);
    break;
  }
  const auto ckpt = cfg.output_dir / "model.ckpt";
  save_checkpoint(ckpt, model.spec(), w);
  out << ckpt.string() << '\n';
  return 0;
}

inline int cmd_eval(const GlobalOptions &g, const std::string &checkpoint,
                    const std::string &task_id, const std::string &csv_path,
                    bool finetune, std::ostream &out) {
  const ExperimentConfig cfg = resolve_seeds(load_experiment(g));
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Seq2PointGru model(ck.spec);
  require(ck.spec.input_len % 2 == 0, "checkpoint input_len must be even");

  std::vector<TaskDataset> tasks;
  if (!csv_path.empty()) {
    const HouseholdSeries series = read_csv(csv_path);
    const auto norm = fit_normalization(series);
    tasks.push_back(split_dataset(windowize(series, norm, ck.spec.input_len / 2,
                                            cfg.data.stride),
                                  cfg.data.test_split, series.household_id,
                                  series.appliance_names(), norm));
  } else {
    for (auto &t : build_datasets(cfg).tests)
      if (task_id.empty() || t.task_id == task_id)
        tasks.push_back(std::move(t));
    require(!tasks.empty(), "unknown testing task '" + task_id + "'");
  }

  nlohmann::json entries = nlohmann::json::array();
  for (const auto &task : tasks) {
    require(task.appliance_count() == ck.spec.output_len,
            "task '" + task.task_id + "' has " +
                std::to_string(task.appliance_count()) +
                " appliances but the checkpoint predicts " +
                std::to_string(ck.spec.output_len));
    const ParameterVector w =
        finetune ? fine_tune(model, ck.params, task, cfg.fedmeta.finetune) : ck.params;
    const Eigen::MatrixXd pred = predict(model, w, task.test);
    for (auto &m : score_appliances(pred, make_batch(task.test).targets,
                                    thresholds_for(cfg, task), task.appliance_names))
      entries.push_back(entry_json({"checkpoint", task.task_id, std::move(m)}));
  }
  const nlohmann::json report = {{"schema_version", kReportSchemaVersion},
                                 {"checkpoint", checkpoint},
                                 {"finetuned", finetune},
                                 {"entries", entries}};
  std::filesystem::create_directories(cfg.output_dir);
  write_json(cfg.output_dir / "eval.json", report);
  out << report.dump(2) << '\n';
  return 0;
}

inline int cmd_bench(const GlobalOptions &g, bool print_config, std::ostream &out) {
  if (print_config) {
    out << to_ini(load_experiment(g));
    return 0;
  }
  const ExperimentConfig cfg = load_experiment(g);
  const BenchmarkResult result = run_benchmark(cfg);
  out << (cfg.output_dir / "report.json").string() << '\n';
  for (const auto &row : result.report["averages"])
    if (row["appliance"] == "all")
      out << row["algorithm"].get<std::string>() << ": f1=" << row["f1"]
          << " acc=" << row["accuracy"] << " mae=" << row["mae"]
          << " sae=" << row["sae"] << '\n';
  for (const auto &[alg, err] : result.failures)
    out << alg << " FAILED: " << err << '\n';
  return result.failures.empty() ? 0 : 2;
}

inline int cmd_gradcheck(const GlobalOptions &g, std::size_t trials, std::ostream &out) {
  const auto result = run_gradient_check(trials, g.seed.value_or(0));
  out << "gradient check: " << result.trials
      << " trials, max relative error " << result.max_relative_error << '\n';
  if (result.max_relative_error >= kGradCheckTolerance) {
    out << "FAILED (tolerance " << kGradCheckTolerance << ")\n";
    return 2;
  }
  out << "passed (tolerance " << kGradCheckTolerance << ")\n";
  return 0;
}

inline int run(int argc, const char *const *argv, std::ostream &out = std::cout,
               std::ostream &err = std::cerr) {
  CLI::App app{"Federated meta-learning for energy disaggregation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Experiment config (INI)");
  auto *seed_opt = app.add_option("--seed", seed, "Global seed");
  app.add_option("--out", g.out_dir, "Output directory");

  auto *synth = app.add_subcommand("synth", "Generate synthetic household CSVs");
  auto *train = app.add_subcommand("train", "Train one algorithm, write a checkpoint");
  std::string algorithm = "fedmeta", task_id;
  train->add_option("--algorithm", algorithm, "central | local | fedavg | fedmeta");
  train->add_option("--task", task_id, "Testing task for the local algorithm");

  auto *eval = app.add_subcommand("eval", "Score a checkpoint on testing data");
  std::string checkpoint, csv_path, eval_task;
  bool finetune = false;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--task", eval_task, "Testing task id (default: all)");
  eval->add_option("--csv", csv_path, "Household CSV to evaluate on instead");
  eval->add_flag("--finetune", finetune, "Fine-tune on the task's train split first");

  auto *bench = app.add_subcommand("bench", "Run the four-algorithm benchmark");
  bool print_config = false;
  bench->add_flag("--print-config", print_config, "Print the effective config and exit");

  auto *gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::size_t trials = 20;
  gradcheck->add_option("--trials", trials, "Random models to check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (*seed_opt)
    g.seed = seed;

  try {
    if (*synth)
      return cmd_synth(g, out);
    if (*train)
      return cmd_train(g, algorithm, task_id, out);
    if (*eval)
      return cmd_eval(g, checkpoint, eval_task, csv_path, finetune, out);
    if (*bench)
      return cmd_bench(g, print_config, out);
    if (*gradcheck)
      return cmd_gradcheck(g, trials, out);
  } catch (const ValidationError &e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception &e) {
    err << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

} // namespace nilm::cli
