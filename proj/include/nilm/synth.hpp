// SPDX-License-Identifier: Apache-2.0
//
// Synthetic household generator. Each appliance is an independent ON/OFF
// renewal process; the aggregate is the appliance sum plus clipped Gaussian
// meter noise.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/rng.hpp"
#include "nilm/series.hpp"

namespace nilm {

struct ApplianceProfile {
  std::string name;
  double on_power_mean = 1000.0;      // watts
  double on_power_jitter = 0.0;       // watts, uniform +/- per event
  std::int64_t mean_event_duration = 30; // steps
  double mean_events_per_day = 1.0;
  std::int64_t ramp_steps = 0;

  void validate() const {
    require(!name.empty(), "appliance profile with empty name");
    require(std::isfinite(on_power_mean) && on_power_mean > 0.0,
            "appliance '" + name + "': on_power_mean must be positive");
    require(on_power_jitter >= 0.0 && on_power_jitter < on_power_mean,
            "appliance '" + name +
                "': on_power_jitter must lie in [0, on_power_mean)");
    require(mean_event_duration > 0,
            "appliance '" + name + "': mean_event_duration must be positive");
    require(std::isfinite(mean_events_per_day) && mean_events_per_day >= 0.0,
            "appliance '" + name + "': mean_events_per_day must be >= 0");
    require(ramp_steps >= 0, "appliance '" + name + "': ramp_steps must be >= 0");
  }
};

struct SynthConfig {
  std::vector<ApplianceProfile> profiles;
  std::int64_t days = 1;
  std::int64_t sample_interval = 60; // seconds
  double noise_sigma = 0.0;          // watts
  std::uint64_t seed = 0;
  std::string household_id = "synthetic";

  std::int64_t steps_per_day() const { return 86400 / sample_interval; }

  void validate() const {
    require(!profiles.empty(), "synth config needs at least one appliance");
    require(days > 0, "days must be positive");
    require(sample_interval > 0 && sample_interval <= 86400,
            "sample_interval must lie in [1, 86400] seconds");
    require(std::isfinite(noise_sigma) && noise_sigma >= 0.0,
            "noise_sigma must be >= 0");
    std::vector<std::string> names;
    for (const auto &p : profiles) {
      p.validate();
      names.push_back(p.name);
    }
    std::sort(names.begin(), names.end());
    require(std::adjacent_find(names.begin(), names.end()) == names.end(),
            "duplicate appliance profile name");
  }
};

namespace detail {

inline std::vector<double> simulate_appliance(const ApplianceProfile &p,
                                              std::int64_t steps,
                                              std::int64_t steps_per_day,
                                              Rng &rng) {
  std::vector<double> values(static_cast<std::size_t>(steps), 0.0);
  if (p.mean_events_per_day <= 0.0)
    return values;

  const double duration = static_cast<double>(p.mean_event_duration);
  // OFF gaps are chosen so the long-run ON fraction is
  // events_per_day * duration / steps_per_day.
  const double gap_mean = std::max(
      1.0, static_cast<double>(steps_per_day) / p.mean_events_per_day - duration);

  std::exponential_distribution<double> gap_dist(1.0 / gap_mean);
  std::geometric_distribution<std::int64_t> extra_dist(1.0 / duration);
  std::uniform_real_distribution<double> jitter_dist(-p.on_power_jitter,
                                                     p.on_power_jitter);

  // Start at a random phase of one ON/OFF cycle so step 0 is not special.
  const auto cycle = static_cast<std::int64_t>(std::ceil(duration + gap_mean));
  std::int64_t t =
      -std::uniform_int_distribution<std::int64_t>(0, cycle - 1)(rng);
  while (t < steps) {
    const std::int64_t len = 1 + extra_dist(rng);
    const double power = p.on_power_mean + jitter_dist(rng);
    const double ramp = static_cast<double>(p.ramp_steps + 1);
    for (std::int64_t k = 0; k < len; ++k) {
      const std::int64_t at = t + k;
      if (at < 0 || at >= steps)
        continue;
      double level = 1.0;
      if (p.ramp_steps > 0)
        level = std::min({1.0, static_cast<double>(k + 1) / ramp,
                          static_cast<double>(len - k) / ramp});
      values[static_cast<std::size_t>(at)] = power * level;
    }
    t += len;
    t += static_cast<std::int64_t>(std::llround(gap_dist(rng)));
  }
  return values;
}

} // namespace detail

/// Deterministic in config. Appliance j draws from its own sub-stream, so
/// adding a profile does not change the others.
inline HouseholdSeries generate(const SynthConfig &config) {
  config.validate();
  const std::int64_t spd = config.steps_per_day();
  const std::int64_t steps = config.days * spd;
  require(steps >= 1, "synth config yields no samples");

  HouseholdSeries series;
  series.household_id = config.household_id;
  series.sample_interval = config.sample_interval;
  series.timestamps.resize(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t)
    series.timestamps[static_cast<std::size_t>(t)] = t * config.sample_interval;

  for (std::size_t j = 0; j < config.profiles.size(); ++j) {
    Rng rng = make_rng(derive_seed(config.seed, 1, j));
    series.appliances.push_back(
        {config.profiles[j].name,
         detail::simulate_appliance(config.profiles[j], steps, spd, rng)});
  }

  series.aggregate.assign(static_cast<std::size_t>(steps), 0.0);
  for (const auto &a : series.appliances)
    for (std::size_t t = 0; t < a.values.size(); ++t)
      series.aggregate[t] += a.values[t];

  if (config.noise_sigma > 0.0) {
    Rng rng = make_rng(derive_seed(config.seed, 0));
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (auto &y : series.aggregate)
      y = std::max(0.0, y + noise(rng));
  }
  return series;
}

} // namespace nilm
