// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: an INI document with one section per module.
// Every key is optional; `to_ini(ExperimentConfig{})` lists all defaults.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nilm/csv.hpp"
#include "nilm/errors.hpp"
#include "nilm/gru_model.hpp"
#include "nilm/meta.hpp"
#include "nilm/series.hpp"
#include "nilm/synth.hpp"

namespace nilm {

enum class Algorithm { Central, Local, FedAvg, FedMeta };

inline std::string to_string(Algorithm a) {
  switch (a) {
  case Algorithm::Central:
    return "central";
  case Algorithm::Local:
    return "local";
  case Algorithm::FedAvg:
    return "fedavg";
  case Algorithm::FedMeta:
    return "fedmeta";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(const std::string &name) {
  for (auto a : {Algorithm::Central, Algorithm::Local, Algorithm::FedAvg,
                 Algorithm::FedMeta})
    if (to_string(a) == name)
      return a;
  throw ValidationError("unknown algorithm '" + name +
                        "' (expected central, local, fedavg or fedmeta)");
}

/// Synthetic household family: base appliance profiles perturbed per
/// household. Testing households get a wider perturbation band.
struct SynthFamilyConfig {
  std::vector<ApplianceProfile> appliances{
      {"ev", 4000.0, 200.0, 40, 5.0, 2},
      {"air_compressor", 500.0, 25.0, 10, 20.0, 1},
      {"dryer", 2000.0, 100.0, 25, 6.0, 1},
      {"oven", 1000.0, 50.0, 20, 8.0, 0},
  };
  std::int64_t days = 2;
  std::int64_t sample_interval = 60;
  double noise_sigma = 30.0;
  std::size_t client_households = 4;
  std::size_t task_households = 2;
  std::size_t test_households = 2;
  std::size_t clients_per_household = 1;
  double heterogeneity = 0.3;
  double test_shift = 0.3;
};

struct DataConfig {
  std::string source = "synth"; // synth | csv
  std::filesystem::path csv_dir; // holds client-*.csv, task-*.csv, test-*.csv
  std::size_t half_window = 60;
  std::size_t stride = 1;
  SplitFractions pool_split{0.6, 0.2, 0.2};
  SplitFractions test_split{0.3, 0.1, 0.6};
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  std::vector<Algorithm> algorithms{Algorithm::Central, Algorithm::Local,
                                    Algorithm::FedAvg, Algorithm::FedMeta};
  bool write_predictions = true;
  double threshold_fraction = 0.1;
  std::map<std::string, double> threshold_overrides;

  DataConfig data;
  SynthFamilyConfig synth;
  ModelSpec model; // input_len and output_len are derived from the data
  FedMetaConfig fedmeta{
      1,
      FedConfig{10, 4, Weighting::Uniform, 0, LocalTrainConfig{0.05, 1, 64, 0}},
      MetaConfig{0.01, 5, 2, LocalTrainConfig::full_batch(0.05),
                 MetaOrder::FirstOrder, 0},
      LocalTrainConfig{0.05, 1, 64, 0}};
  LocalTrainConfig central{0.05, 5, 64, 0};
  LocalTrainConfig local{0.05, 5, 64, 0};

  void validate() const {
    require(!algorithms.empty(), "at least one algorithm must be enabled");
    require(data.source == "synth" || data.source == "csv",
            "data.source must be 'synth' or 'csv'");
    require(data.half_window >= 1 && data.stride >= 1,
            "data.half_window and data.stride must be positive");
    if (data.source == "csv")
      require(std::filesystem::is_directory(data.csv_dir),
              "data.csv_dir '" + data.csv_dir.string() + "' is not a directory");
    else {
      require(!synth.appliances.empty(), "synth needs at least one appliance");
      for (const auto &p : synth.appliances)
        p.validate();
      require(synth.test_households >= 1, "synth.test_households must be >= 1");
      require(synth.clients_per_household >= 1,
              "synth.clients_per_household must be >= 1");
    }
    require(threshold_fraction >= 0.0, "threshold_fraction must be >= 0");
    fedmeta.validate();
    central.validate();
    local.validate();
  }
};

namespace detail {

inline std::vector<std::string> split_list(const std::string &text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos)
      out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

inline std::string join(const std::vector<std::string> &items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i)
    out += (i ? "," : "") + items[i];
  return out;
}

class IniReader {
public:
  explicit IniReader(boost::property_tree::ptree tree) : tree_(std::move(tree)) {}

  bool has_section(const std::string &section) const {
    return tree_.find(section) != tree_.not_found();
  }

  std::string text(const std::string &section, const std::string &key,
                   const std::string &fallback) {
    used_.insert(section + "\x1f" + key);
    const auto sec = tree_.find(section);
    if (sec == tree_.not_found())
      return fallback;
    const auto it = sec->second.find(key);
    return it == sec->second.not_found() ? fallback : it->second.data();
  }

  template <typename T>
  T number(const std::string &section, const std::string &key, T fallback) {
    const std::string raw = text(section, key, "");
    if (raw.empty())
      return fallback;
    T v{};
    if (!parse_number(raw, v))
      throw ValidationError("config [" + section + "] " + key + ": bad value '" +
                            raw + "'");
    return v;
  }

  bool flag(const std::string &section, const std::string &key, bool fallback) {
    const std::string raw = text(section, key, "");
    if (raw.empty())
      return fallback;
    if (raw == "true" || raw == "1")
      return true;
    if (raw == "false" || raw == "0")
      return false;
    throw ValidationError("config [" + section + "] " + key +
                          ": expected true or false");
  }

  std::vector<std::string> sections() const {
    std::vector<std::string> out;
    for (const auto &kv : tree_)
      out.push_back(kv.first);
    return out;
  }

  std::vector<std::string> keys(const std::string &section) const {
    std::vector<std::string> out;
    const auto sec = tree_.find(section);
    if (sec != tree_.not_found())
      for (const auto &kv : sec->second)
        out.push_back(kv.first);
    return out;
  }

  /// Rejects any key that was never looked up (catches typos).
  void check_all_used() const {
    for (const auto &sec : tree_) {
      if (sec.second.empty() && !sec.second.data().empty())
        throw ValidationError("config key '" + sec.first +
                              "' must live inside a [section]");
      for (const auto &kv : sec.second)
        if (!used_.count(sec.first + "\x1f" + kv.first))
          throw ValidationError("unknown config key [" + sec.first + "] " +
                                kv.first);
    }
  }

private:
  boost::property_tree::ptree tree_;
  std::set<std::string> used_;
};

inline LocalTrainConfig read_local(IniReader &ini, const std::string &section,
                                   LocalTrainConfig d) {
  d.gamma = ini.number(section, "gamma", d.gamma);
  d.epochs = ini.number(section, "epochs", d.epochs);
  const std::string batch = ini.text(section, "batch_size", "");
  if (batch == "full")
    d.batch_size = LocalTrainConfig::kFullBatch;
  else
    d.batch_size = ini.number(section, "batch_size", d.batch_size);
  d.shuffle_seed = ini.number(section, "shuffle_seed", d.shuffle_seed);
  return d;
}

inline SplitFractions read_split(IniReader &ini, const std::string &section,
                                 const std::string &key, SplitFractions d) {
  const std::string raw = ini.text(section, key, "");
  if (raw.empty())
    return d;
  const auto parts = split_list(raw);
  if (parts.size() != 3)
    throw ValidationError("config [" + section + "] " + key +
                          ": expected train,validation,test fractions");
  double f[3];
  for (int i = 0; i < 3; ++i)
    if (!parse_number(parts[static_cast<std::size_t>(i)], f[i]))
      throw ValidationError("config [" + section + "] " + key + ": bad fraction");
  return {f[0], f[1], f[2]};
}

inline std::string batch_text(const LocalTrainConfig &c) {
  return c.is_full_batch() ? std::string("full") : std::to_string(c.batch_size);
}

inline std::string split_text(const SplitFractions &s) {
  return format_double(s.train) + "," + format_double(s.validation) + "," +
         format_double(s.test);
}

} // namespace detail

inline ExperimentConfig parse_config(std::istream &in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error &e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  detail::IniReader ini(std::move(tree));
  ExperimentConfig c;

  c.seed = ini.number("experiment", "seed", c.seed);
  c.output_dir = ini.text("experiment", "output_dir", c.output_dir.string());
  if (const auto algs = ini.text("experiment", "algorithms", ""); !algs.empty()) {
    c.algorithms.clear();
    for (const auto &name : detail::split_list(algs))
      c.algorithms.push_back(parse_algorithm(name));
  }
  c.write_predictions = ini.flag("experiment", "write_predictions", c.write_predictions);
  c.threshold_fraction = ini.number("experiment", "threshold_fraction", c.threshold_fraction);
  for (const auto &key : ini.keys("threshold"))
    c.threshold_overrides[key] = ini.number("threshold", key, 0.0);

  c.data.source = ini.text("data", "source", c.data.source);
  c.data.csv_dir = ini.text("data", "csv_dir", c.data.csv_dir.string());
  c.data.half_window = ini.number("data", "half_window", c.data.half_window);
  c.data.stride = ini.number("data", "stride", c.data.stride);
  c.data.pool_split = detail::read_split(ini, "data", "pool_split", c.data.pool_split);
  c.data.test_split = detail::read_split(ini, "data", "test_split", c.data.test_split);

  auto &s = c.synth;
  s.days = ini.number("synth", "days", s.days);
  s.sample_interval = ini.number("synth", "sample_interval", s.sample_interval);
  s.noise_sigma = ini.number("synth", "noise_sigma", s.noise_sigma);
  s.client_households = ini.number("synth", "client_households", s.client_households);
  s.task_households = ini.number("synth", "task_households", s.task_households);
  s.test_households = ini.number("synth", "test_households", s.test_households);
  s.clients_per_household =
      ini.number("synth", "clients_per_household", s.clients_per_household);
  s.heterogeneity = ini.number("synth", "heterogeneity", s.heterogeneity);
  s.test_shift = ini.number("synth", "test_shift", s.test_shift);
  if (const auto names = ini.text("synth", "appliances", ""); !names.empty()) {
    std::vector<ApplianceProfile> chosen;
    for (const auto &name : detail::split_list(names)) {
      ApplianceProfile p{name, 1000.0, 0.0, 30, 1.0, 0};
      for (const auto &known : s.appliances)
        if (known.name == name)
          p = known;
      chosen.push_back(p);
    }
    s.appliances = std::move(chosen);
  }
  for (auto &p : s.appliances) {
    const std::string sec = "appliance:" + p.name;
    p.on_power_mean = ini.number(sec, "on_power_mean", p.on_power_mean);
    p.on_power_jitter = ini.number(sec, "on_power_jitter", p.on_power_jitter);
    p.mean_event_duration = ini.number(sec, "mean_event_duration", p.mean_event_duration);
    p.mean_events_per_day = ini.number(sec, "mean_events_per_day", p.mean_events_per_day);
    p.ramp_steps = ini.number(sec, "ramp_steps", p.ramp_steps);
  }
  for (const auto &sec : ini.sections())
    if (sec.rfind("appliance:", 0) == 0) {
      bool known = false;
      for (const auto &p : s.appliances)
        known = known || sec == "appliance:" + p.name;
      if (!known)
        throw ValidationError("config section [" + sec +
                              "] names an appliance not listed in synth.appliances");
    }

  c.model.recurrent_hidden = ini.number("model", "recurrent_hidden", c.model.recurrent_hidden);
  if (const auto widths = ini.text("model", "dense_widths", "-"); widths != "-") {
    c.model.dense_widths.clear();
    for (const auto &w : detail::split_list(widths)) {
      std::size_t v = 0;
      if (!detail::parse_number(w, v))
        throw ValidationError("config [model] dense_widths: bad width '" + w + "'");
      c.model.dense_widths.push_back(v);
    }
  }
  c.model.leaky_slope = ini.number("model", "leaky_slope", c.model.leaky_slope);

  auto &fm = c.fedmeta;
  fm.main_rounds = ini.number("fedmeta", "main_rounds", fm.main_rounds);
  fm.fed.rounds = ini.number("fed", "rounds", fm.fed.rounds);
  fm.fed.clients_per_round = ini.number("fed", "clients_per_round", fm.fed.clients_per_round);
  const auto weighting = ini.text("fed", "weighting", "uniform");
  if (weighting == "uniform")
    fm.fed.weighting = Weighting::Uniform;
  else if (weighting == "data_proportional")
    fm.fed.weighting = Weighting::DataProportional;
  else
    throw ValidationError("config [fed] weighting must be uniform or data_proportional");
  fm.fed.sampling_seed = ini.number("fed", "sampling_seed", fm.fed.sampling_seed);
  fm.fed.local = detail::read_local(ini, "client", fm.fed.local);

  fm.meta.beta = ini.number("meta", "beta", fm.meta.beta);
  fm.meta.maml_rounds = ini.number("meta", "maml_rounds", fm.meta.maml_rounds);
  fm.meta.tasks_per_round = ini.number("meta", "tasks_per_round", fm.meta.tasks_per_round);
  const auto order = ini.text("meta", "order", "first_order");
  if (order == "first_order")
    fm.meta.order = MetaOrder::FirstOrder;
  else if (order == "second_order")
    fm.meta.order = MetaOrder::FullSecondOrder;
  else
    throw ValidationError("config [meta] order must be first_order or second_order");
  fm.meta.sampling_seed = ini.number("meta", "sampling_seed", fm.meta.sampling_seed);
  fm.meta.inner = detail::read_local(ini, "inner", fm.meta.inner);
  fm.finetune = detail::read_local(ini, "finetune", fm.finetune);
  c.central = detail::read_local(ini, "central", c.central);
  c.local = detail::read_local(ini, "local", c.local);

  ini.check_all_used();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open config file '" + path.string() + "'");
  try {
    return parse_config(in);
  } catch (const ValidationError &e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

/// Canonical INI rendering; parse_config(to_ini(c)) reproduces c.
inline std::string to_ini(const ExperimentConfig &c) {
  using detail::format_double;
  std::ostringstream o;
  auto local = [&](const std::string &section, const LocalTrainConfig &l) {
    o << "\n[" << section << "]\n"
      << "gamma = " << format_double(l.gamma) << '\n'
      << "epochs = " << l.epochs << '\n'
      << "batch_size = " << detail::batch_text(l) << '\n'
      << "shuffle_seed = " << l.shuffle_seed << '\n';
  };
  std::vector<std::string> algs;
  for (auto a : c.algorithms)
    algs.push_back(to_string(a));

  o << "[experiment]\n"
    << "seed = " << c.seed << '\n'
    << "output_dir = " << c.output_dir.string() << '\n'
    << "algorithms = " << detail::join(algs) << '\n'
    << "write_predictions = " << (c.write_predictions ? "true" : "false") << '\n'
    << "threshold_fraction = " << format_double(c.threshold_fraction) << '\n';
  if (!c.threshold_overrides.empty()) {
    o << "\n[threshold]\n";
    for (const auto &[name, v] : c.threshold_overrides)
      o << name << " = " << format_double(v) << '\n';
  }
  o << "\n[data]\n"
    << "source = " << c.data.source << '\n'
    << "csv_dir = " << c.data.csv_dir.string() << '\n'
    << "half_window = " << c.data.half_window << '\n'
    << "stride = " << c.data.stride << '\n'
    << "pool_split = " << detail::split_text(c.data.pool_split) << '\n'
    << "test_split = " << detail::split_text(c.data.test_split) << '\n';

  const auto &s = c.synth;
  std::vector<std::string> names;
  for (const auto &p : s.appliances)
    names.push_back(p.name);
  o << "\n[synth]\n"
    << "days = " << s.days << '\n'
    << "sample_interval = " << s.sample_interval << '\n'
    << "noise_sigma = " << format_double(s.noise_sigma) << '\n'
    << "client_households = " << s.client_households << '\n'
    << "task_households = " << s.task_households << '\n'
    << "test_households = " << s.test_households << '\n'
    << "clients_per_household = " << s.clients_per_household << '\n'
    << "heterogeneity = " << format_double(s.heterogeneity) << '\n'
    << "test_shift = " << format_double(s.test_shift) << '\n'
    << "appliances = " << detail::join(names) << '\n';
  for (const auto &p : s.appliances)
    o << "\n[appliance:" << p.name << "]\n"
      << "on_power_mean = " << format_double(p.on_power_mean) << '\n'
      << "on_power_jitter = " << format_double(p.on_power_jitter) << '\n'
      << "mean_event_duration = " << p.mean_event_duration << '\n'
      << "mean_events_per_day = " << format_double(p.mean_events_per_day) << '\n'
      << "ramp_steps = " << p.ramp_steps << '\n';

  std::vector<std::string> widths;
  for (auto w : c.model.dense_widths)
    widths.push_back(std::to_string(w));
  o << "\n[model]\n"
    << "recurrent_hidden = " << c.model.recurrent_hidden << '\n'
    << "dense_widths = " << detail::join(widths) << '\n'
    << "leaky_slope = " << format_double(c.model.leaky_slope) << '\n';

  const auto &fm = c.fedmeta;
  o << "\n[fedmeta]\nmain_rounds = " << fm.main_rounds << '\n';
  o << "\n[fed]\n"
    << "rounds = " << fm.fed.rounds << '\n'
    << "clients_per_round = " << fm.fed.clients_per_round << '\n'
    << "weighting = "
    << (fm.fed.weighting == Weighting::Uniform ? "uniform" : "data_proportional") << '\n'
    << "sampling_seed = " << fm.fed.sampling_seed << '\n';
  local("client", fm.fed.local);
  o << "\n[meta]\n"
    << "beta = " << format_double(fm.meta.beta) << '\n'
    << "maml_rounds = " << fm.meta.maml_rounds << '\n'
    << "tasks_per_round = " << fm.meta.tasks_per_round << '\n'
    << "order = "
    << (fm.meta.order == MetaOrder::FirstOrder ? "first_order" : "second_order") << '\n'
    << "sampling_seed = " << fm.meta.sampling_seed << '\n';
  local("inner", fm.meta.inner);
  local("finetune", fm.finetune);
  local("central", c.central);
  local("local", c.local);
  return o.str();
}

/// FNV-1a over the canonical rendering, as 16 hex digits. The output
/// directory does not affect results and is left out.
inline std::string config_hash(ExperimentConfig c) {
  c.output_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_ini(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace nilm
