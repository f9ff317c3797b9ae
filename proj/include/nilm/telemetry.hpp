// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <future>
#include <thread>
#include <vector>

#include <json.hpp>

namespace nilm {

/// Receives one JSON object per training round or phase.
using TelemetrySink = std::function<void(const nlohmann::json &)>;

inline void emit(const TelemetrySink &sink, const nlohmann::json &event) {
  if (sink)
    sink(event);
}

/// Applies fn to 0..n-1, concurrently when more than one hardware thread is
/// available. Results keep index order whatever the completion order.
template <typename Fn>
auto parallel_map(std::size_t n, Fn &&fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
  using R = decltype(fn(std::size_t{}));
  std::vector<R> results;
  results.reserve(n);
  if (n <= 1 || std::thread::hardware_concurrency() <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      results.push_back(fn(i));
    return results;
  }
  std::vector<std::future<R>> pending;
  pending.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    pending.push_back(std::async(std::launch::async, [&fn, i] { return fn(i); }));
  for (auto &f : pending)
    results.push_back(f.get());
  return results;
}

} // namespace nilm
