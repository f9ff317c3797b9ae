// SPDX-License-Identifier: Apache-2.0
//
// Text checkpoint: a versioned ModelSpec header followed by one parameter per
// line in shortest round-trip form, so load(save(w)) == w bitwise.
//
//   nilm-checkpoint 1
//   input_len 120
//   output_len 4
//   recurrent_hidden 64
//   dense_widths 480
//   leaky_slope 0.01
//   parameters <d>
//   <value>
//   ...
#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "nilm/csv.hpp"
#include "nilm/errors.hpp"
#include "nilm/gru_model.hpp"

namespace nilm {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelSpec spec;
  ParameterVector params;
};

inline void save_checkpoint(const std::filesystem::path &path,
                            const ModelSpec &spec, const ParameterVector &w) {
  require(w.size() == parameter_count(spec),
          "checkpoint parameters do not match the model spec");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  out << "nilm-checkpoint " << kCheckpointVersion << '\n'
      << "input_len " << spec.input_len << '\n'
      << "output_len " << spec.output_len << '\n'
      << "recurrent_hidden " << spec.recurrent_hidden << '\n'
      << "dense_widths";
  for (auto width : spec.dense_widths)
    out << ' ' << width;
  out << '\n'
      << "leaky_slope " << detail::format_double(spec.leaky_slope) << '\n'
      << "parameters " << w.size() << '\n';
  for (Eigen::Index i = 0; i < w.values.size(); ++i)
    out << detail::format_double(w.values[i]) << '\n';
  out.flush();
  if (!out)
    throw RuntimeFailure("failed writing '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  const std::string where = "checkpoint '" + path.string() + "': ";
  std::string line;
  std::size_t line_no = 0;

  auto next_fields = [&](const std::string &key) {
    if (!std::getline(in, line))
      throw ValidationError(where + "truncated before '" + key + "'");
    ++line_no;
    std::istringstream fields(line);
    std::string found;
    fields >> found;
    if (found != key)
      throw ValidationError(where + "line " + std::to_string(line_no) +
                            ": expected '" + key + "'");
    std::vector<std::string> rest;
    for (std::string f; fields >> f;)
      rest.push_back(f);
    return rest;
  };
  auto as_size = [&](const std::string &text) {
    std::size_t v = 0;
    if (!detail::parse_number(text, v))
      throw ValidationError(where + "line " + std::to_string(line_no) +
                            ": bad integer '" + text + "'");
    return v;
  };
  auto single = [&](const std::string &key) {
    auto rest = next_fields(key);
    if (rest.size() != 1)
      throw ValidationError(where + "line " + std::to_string(line_no) +
                            ": expected one value for '" + key + "'");
    return rest.front();
  };

  const auto version = single("nilm-checkpoint");
  if (version != std::to_string(kCheckpointVersion))
    throw ValidationError(where + "unsupported version " + version);

  Checkpoint ck;
  ck.spec.input_len = as_size(single("input_len"));
  ck.spec.output_len = as_size(single("output_len"));
  ck.spec.recurrent_hidden = as_size(single("recurrent_hidden"));
  ck.spec.dense_widths.clear();
  for (const auto &f : next_fields("dense_widths"))
    ck.spec.dense_widths.push_back(as_size(f));
  if (!detail::parse_number(single("leaky_slope"), ck.spec.leaky_slope))
    throw ValidationError(where + "bad leaky_slope");
  ck.spec.validate();

  const std::size_t d = as_size(single("parameters"));
  if (d != parameter_count(ck.spec))
    throw ValidationError(where + "parameter count " + std::to_string(d) +
                          " does not match the model spec (" +
                          std::to_string(parameter_count(ck.spec)) + ")");
  ck.params = ParameterVector(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (!std::getline(in, line))
      throw ValidationError(where + "truncated after " + std::to_string(i) +
                            " parameters");
    ++line_no;
    double v = 0.0;
    if (!detail::parse_number(line, v) || !std::isfinite(v))
      throw ValidationError(where + "line " + std::to_string(line_no) +
                            ": bad parameter value");
    ck.params.values[static_cast<Eigen::Index>(i)] = v;
  }
  return ck;
}

} // namespace nilm
