// SPDX-License-Identifier: Apache-2.0
//
// MAML on a task pool and the FedMeta schedule that alternates federated
// averaging rounds with MAML rounds on one shared global model.
//
// Inner adaptation runs LocalUpdate on a task's train split. The outer loss of
// a task is its MSE on the validation split at the adapted parameters, and
// the meta-update is w <- w - beta * sum_i d/dw L_i(adapt_i(w)).
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/federated.hpp"
#include "nilm/local_train.hpp"
#include "nilm/parameters.hpp"
#include "nilm/rng.hpp"
#include "nilm/series.hpp"
#include "nilm/telemetry.hpp"

namespace nilm {

enum class MetaOrder {
  FirstOrder,      // adaptation treated as constant
  FullSecondOrder, // (I - gamma H) correction, single-step inner update only
};

struct MetaConfig {
  double beta = 0.01;                // meta step size
  std::size_t maml_rounds = 1;       // F
  std::size_t tasks_per_round = 1;   // N
  LocalTrainConfig inner = LocalTrainConfig::full_batch(0.01);
  MetaOrder order = MetaOrder::FirstOrder;
  std::uint64_t sampling_seed = 0;

  void validate() const {
    require(std::isfinite(beta) && beta >= 0.0,
            "meta step size beta must be finite and non-negative");
    require(maml_rounds >= 1, "maml_rounds must be at least 1");
    require(tasks_per_round >= 1, "tasks_per_round must be at least 1");
    inner.validate();
  }
};

struct FedMetaConfig {
  std::size_t main_rounds = 1;
  FedConfig fed;
  MetaConfig meta;
  LocalTrainConfig finetune;

  void validate() const {
    require(main_rounds >= 1, "main_rounds must be at least 1");
    fed.validate();
    meta.validate();
    finetune.validate();
  }
};

template <DifferentiableModel Model>
ParameterVector inner_adapt(const Model &model, const ParameterVector &w,
                            const TaskDataset &task,
                            const LocalTrainConfig &inner) {
  require(!task.train.empty(), "task '" + task.task_id + "' has no train split");
  return local_update(model, w, task.train, inner);
}

/// Hessian-vector product of the train-split loss at w by central
/// differences of the exact gradient. The direction is rescaled to unit
/// max-norm so the probe step stays at 1e-4 * (1 + |w|_inf).
template <DifferentiableModel Model>
Eigen::VectorXd hessian_vector_product(const Model &model,
                                       const ParameterVector &w,
                                       const Batch &batch,
                                       const Eigen::VectorXd &v) {
  const double scale = v.lpNorm<Eigen::Infinity>();
  if (scale == 0.0)
    return Eigen::VectorXd::Zero(v.size());
  const double eps = 1e-4 * (1.0 + w.values.lpNorm<Eigen::Infinity>());
  const Eigen::VectorXd dir = v / scale;
  ParameterVector plus(Eigen::VectorXd(w.values + eps * dir));
  ParameterVector minus(Eigen::VectorXd(w.values - eps * dir));
  const Eigen::VectorXd gp = model.loss_and_gradient(plus, batch).gradient.values;
  const Eigen::VectorXd gm = model.loss_and_gradient(minus, batch).gradient.values;
  return scale * (gp - gm) / (2.0 * eps);
}

struct MetaGradient {
  ParameterVector gradient;
  double mean_outer_loss = 0.0; // validation MSE at the adapted parameters
};

/// Summed over tasks in list order.
template <DifferentiableModel Model>
MetaGradient meta_gradient_with_loss(const Model &model, const ParameterVector &w,
                                     std::span<const TaskDataset *const> tasks,
                                     const MetaConfig &cfg) {
  cfg.validate();
  require(!tasks.empty(), "meta-gradient needs at least one task");
  for (const TaskDataset *task_ptr : tasks) {
    const TaskDataset &task = *task_ptr;
    require(!task.train.empty(), "task '" + task.task_id + "' has no train split");
    require(!task.validation.empty(),
            "task '" + task.task_id + "' has no validation split");
    if (cfg.order == MetaOrder::FullSecondOrder)
      require(cfg.inner.epochs == 1 && cfg.inner.batch_size >= task.train.size(),
              "second-order meta-gradient needs a single full-batch inner step");
  }

  struct TaskTerm {
    Eigen::VectorXd term;
    double loss;
  };
  auto terms = parallel_map(tasks.size(), [&](std::size_t i) {
    const TaskDataset &task = *tasks[i];
    return detail::with_label("task '" + task.task_id + "'", [&] {
      const ParameterVector adapted = inner_adapt(model, w, task, cfg.inner);
      LossAndGradient outer =
          model.loss_and_gradient(adapted, make_batch(task.validation));
      TaskTerm t{std::move(outer.gradient.values), outer.loss};
      if (cfg.order == MetaOrder::FullSecondOrder && cfg.inner.gamma != 0.0) {
        // d adapt / dw = I - gamma * H_train(w), symmetric.
        const Eigen::VectorXd hv =
            hessian_vector_product(model, w, make_batch(task.train), t.term);
        t.term -= cfg.inner.gamma * hv;
      }
      return t;
    });
  });

  MetaGradient out{ParameterVector(w.size()), 0.0};
  for (const auto &t : terms) {
    out.gradient.values += t.term;
    out.mean_outer_loss += t.loss;
  }
  out.mean_outer_loss /= static_cast<double>(terms.size());
  if (!out.gradient.all_finite())
    throw RuntimeFailure("meta-gradient is not finite");
  return out;
}

template <DifferentiableModel Model>
ParameterVector meta_gradient(const Model &model, const ParameterVector &w,
                              std::span<const TaskDataset> tasks,
                              const MetaConfig &cfg) {
  std::vector<const TaskDataset *> ptrs;
  for (const auto &t : tasks)
    ptrs.push_back(&t);
  return meta_gradient_with_loss<Model>(model, w, ptrs, cfg).gradient;
}

template <DifferentiableModel Model>
ParameterVector maml_round(const Model &model, const ParameterVector &w,
                           const std::vector<TaskDataset> &task_pool,
                           const MetaConfig &cfg, std::size_t round_index,
                           const TelemetrySink &sink = {}) {
  cfg.validate();
  require(cfg.tasks_per_round <= task_pool.size(),
          "tasks_per_round (" + std::to_string(cfg.tasks_per_round) +
              ") exceeds the task pool size (" +
              std::to_string(task_pool.size()) + ")");
  const auto picked = sample_clients(task_pool, cfg.tasks_per_round,
                                     derive_seed(cfg.sampling_seed, round_index));
  std::vector<const TaskDataset *> sampled;
  sampled.reserve(picked.size());
  nlohmann::json ids = nlohmann::json::array();
  for (auto i : picked) {
    sampled.push_back(&task_pool[i]);
    ids.push_back(task_pool[i].task_id);
  }
  const MetaGradient mg = meta_gradient_with_loss<Model>(model, w, sampled, cfg);
  emit(sink, {{"phase", "maml"},
              {"round", round_index},
              {"task_ids", ids},
              {"loss_summary", {{"mean_adapted_validation_loss", mg.mean_outer_loss}}}});
  return ParameterVector(Eigen::VectorXd(w.values - cfg.beta * mg.gradient.values));
}

/// main_rounds x (K federated rounds, then F MAML rounds). Round indices run
/// globally, so with beta = 0 the result equals run_fedavg over
/// main_rounds * K rounds.
template <DifferentiableModel Model>
ParameterVector run_fedmeta(const Model &model, const ParameterVector &w0,
                            const ClientPool &clients,
                            const std::vector<TaskDataset> &task_pool,
                            const FedMetaConfig &cfg,
                            const TelemetrySink &sink = {}) {
  cfg.validate();
  clients.validate();
  require(!task_pool.empty(), "task pool is empty");

  ParameterVector global = w0;
  for (std::size_t main = 0; main < cfg.main_rounds; ++main) {
    const std::string label = "main round " + std::to_string(main);
    for (std::size_t k = 0; k < cfg.fed.rounds; ++k)
      global = detail::with_label(label + ", fed round " + std::to_string(k), [&] {
        return fed_round(model, global, clients, cfg.fed,
                         main * cfg.fed.rounds + k, sink);
      });
    for (std::size_t f = 0; f < cfg.meta.maml_rounds; ++f)
      global = detail::with_label(label + ", maml round " + std::to_string(f), [&] {
        return maml_round(model, global, task_pool, cfg.meta,
                          main * cfg.meta.maml_rounds + f, sink);
      });
  }
  return global;
}

/// Meta-testing: LocalUpdate on the testing task's train split.
template <DifferentiableModel Model>
ParameterVector fine_tune(const Model &model, const ParameterVector &w_global,
                          const TaskDataset &task, const LocalTrainConfig &cfg,
                          const TelemetrySink &sink = {}) {
  require(!task.train.empty(), "task '" + task.task_id + "' has no train split");
  LocalUpdateStats stats;
  ParameterVector out = local_update(model, w_global, task.train, cfg, &stats);
  emit(sink, {{"phase", "finetune"},
              {"round", 0},
              {"task_id", task.task_id},
              {"loss_summary", {{"mean_train_loss", stats.mean_batch_loss}}}});
  return out;
}

} // namespace nilm
