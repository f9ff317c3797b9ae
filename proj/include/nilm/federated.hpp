// SPDX-License-Identifier: Apache-2.0
//
// Federated averaging: every round samples M clients, each runs LocalUpdate
// from the same global parameters, and the server replaces the global model
// by the weighted average of what comes back.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/local_train.hpp"
#include "nilm/parameters.hpp"
#include "nilm/rng.hpp"
#include "nilm/series.hpp"
#include "nilm/telemetry.hpp"

namespace nilm {

enum class Weighting { Uniform, DataProportional };

struct FedConfig {
  std::size_t rounds = 10;           // K
  std::size_t clients_per_round = 1; // M
  Weighting weighting = Weighting::Uniform;
  std::uint64_t sampling_seed = 0;
  LocalTrainConfig local;

  void validate() const {
    require(rounds >= 1, "federated rounds must be at least 1");
    require(clients_per_round >= 1, "clients_per_round must be at least 1");
    local.validate();
  }
};

/// Client datasets. The server side only ever sees ParameterVectors.
struct ClientPool {
  std::vector<TaskDataset> clients;

  void validate() const {
    require(!clients.empty(), "client pool is empty");
    std::unordered_set<std::string> ids;
    for (const auto &c : clients) {
      require(ids.insert(c.task_id).second,
              "duplicate client id '" + c.task_id + "'");
      require(!c.train.empty(), "client '" + c.task_id + "' has no training data");
    }
  }
};

/// Componentwise sum_i weights[i] * params[i], accumulated in list order.
inline ParameterVector weighted_average(std::span<const ParameterVector> params,
                                        std::span<const double> weights) {
  require(!params.empty(), "cannot average an empty parameter list");
  require(params.size() == weights.size(),
          "parameter and weight lists differ in length");
  const std::size_t d = params.front().size();
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i].size() == d, "parameter vectors differ in length");
    require(std::isfinite(weights[i]) && weights[i] >= 0.0,
            "averaging weights must be non-negative");
    total += weights[i];
  }
  require(std::abs(total - 1.0) <= 1e-9, "averaging weights must sum to 1");

  ParameterVector out(d);
  for (std::size_t i = 0; i < params.size(); ++i)
    out.values += weights[i] * params[i].values;
  return out;
}

/// Draws m distinct indices out of n and returns them in ascending order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t m,
                                                           std::uint64_t seed) {
  require(m <= n, "cannot sample " + std::to_string(m) + " of " +
                      std::to_string(n) + " without replacement");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Sampled pool positions, ordered by client id (the reduction order).
inline std::vector<std::size_t>
sample_clients(const std::vector<TaskDataset> &pool, std::size_t m,
               std::uint64_t seed) {
  auto picked = sample_without_replacement(pool.size(), m, seed);
  std::sort(picked.begin(), picked.end(), [&](std::size_t a, std::size_t b) {
    return pool[a].task_id < pool[b].task_id;
  });
  return picked;
}

namespace detail {

template <typename Fn>
decltype(auto) with_label(const std::string &label, Fn &&fn) {
  try {
    return fn();
  } catch (const ValidationError &e) {
    throw ValidationError(label + ": " + e.what());
  } catch (const RuntimeFailure &e) {
    throw RuntimeFailure(label + ": " + e.what());
  }
}

} // namespace detail

template <DifferentiableModel Model>
ParameterVector fed_round(const Model &model, const ParameterVector &w,
                          const ClientPool &pool, const FedConfig &cfg,
                          std::size_t round_index,
                          const TelemetrySink &sink = {}) {
  cfg.validate();
  pool.validate();
  require(cfg.clients_per_round <= pool.clients.size(),
          "clients_per_round (" + std::to_string(cfg.clients_per_round) +
              ") exceeds the pool size (" +
              std::to_string(pool.clients.size()) + ")");

  const auto picked = sample_clients(
      pool.clients, cfg.clients_per_round,
      derive_seed(cfg.sampling_seed, round_index));

  struct ClientResult {
    ParameterVector params;
    LocalUpdateStats stats;
  };
  auto results = parallel_map(picked.size(), [&](std::size_t k) {
    const TaskDataset &client = pool.clients[picked[k]];
    return detail::with_label("client '" + client.task_id + "'", [&] {
      ClientResult r;
      r.params = local_update(model, w, client.train, cfg.local, &r.stats);
      return r;
    });
  });

  std::vector<double> weights(picked.size());
  if (cfg.weighting == Weighting::Uniform) {
    std::fill(weights.begin(), weights.end(),
              1.0 / static_cast<double>(picked.size()));
  } else {
    double total = 0.0;
    for (auto i : picked)
      total += static_cast<double>(pool.clients[i].train.size());
    for (std::size_t k = 0; k < picked.size(); ++k)
      weights[k] = static_cast<double>(pool.clients[picked[k]].train.size()) / total;
  }

  std::vector<ParameterVector> params;
  params.reserve(results.size());
  double loss_sum = 0.0;
  nlohmann::json ids = nlohmann::json::array();
  for (std::size_t k = 0; k < results.size(); ++k) {
    params.push_back(std::move(results[k].params));
    loss_sum += results[k].stats.mean_batch_loss;
    ids.push_back(pool.clients[picked[k]].task_id);
  }
  emit(sink, {{"phase", "fed"},
              {"round", round_index},
              {"client_ids", ids},
              {"mean_train_loss", loss_sum / static_cast<double>(results.size())}});
  return weighted_average(params, weights);
}

template <DifferentiableModel Model>
ParameterVector run_fedavg(const Model &model, const ParameterVector &w0,
                           const ClientPool &pool, const FedConfig &cfg,
                           const TelemetrySink &sink = {}) {
  cfg.validate();
  ParameterVector w = w0;
  for (std::size_t k = 0; k < cfg.rounds; ++k)
    w = fed_round(model, w, pool, cfg, k, sink);
  return w;
}

} // namespace nilm
