// SPDX-License-Identifier: Apache-2.0
//
// Household CSV files: header `timestamp,aggregate,<appliance>...`, one row
// per reading, '.' decimal point, '\n' line endings.
#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "nilm/errors.hpp"
#include "nilm/series.hpp"

namespace nilm {

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
bool parse_number(std::string_view text, T &out) {
  while (!text.empty() && text.front() == ' ')
    text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ')
    text.remove_suffix(1);
  if (text.empty())
    return false;
  if (text.front() == '+')
    text.remove_prefix(1);
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

} // namespace detail

inline HouseholdSeries read_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open CSV file '" + path.string() + "'");
  const std::string where = path.string() + ":";

  std::string line;
  if (!std::getline(in, line))
    throw ValidationError(where + "1: missing header row");
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "aggregate")
    throw ValidationError(where +
                          "1: header must be timestamp,aggregate,<appliance>...");

  HouseholdSeries series;
  series.household_id = path.stem().string();
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c].empty())
      throw ValidationError(where + "1: empty appliance column name");
    series.appliances.push_back({std::string(header[c]), {}});
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const std::string at = where + std::to_string(line_no) + ": ";
    const auto fields = detail::split_commas(line);
    if (fields.size() != header.size())
      throw ValidationError(at + "expected " + std::to_string(header.size()) +
                            " columns, found " + std::to_string(fields.size()));
    std::int64_t ts = 0;
    if (!detail::parse_number(fields[0], ts))
      throw ValidationError(at + "unparsable timestamp '" +
                            std::string(fields[0]) + "'");
    if (!series.timestamps.empty() && ts <= series.timestamps.back())
      throw ValidationError(at + "timestamp " + std::to_string(ts) +
                            " does not increase");
    series.timestamps.push_back(ts);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = 0.0;
      if (!detail::parse_number(fields[c], v) || !std::isfinite(v))
        throw ValidationError(at + "unparsable value '" +
                              std::string(fields[c]) + "' in column '" +
                              std::string(header[c]) + "'");
      if (c == 1) {
        series.aggregate.push_back(v);
      } else {
        if (v < 0.0)
          throw ValidationError(at + "negative appliance power in column '" +
                                std::string(header[c]) + "'");
        series.appliances[c - 2].values.push_back(v);
      }
    }
  }
  if (series.aggregate.empty())
    throw ValidationError(where + " no data rows");

  if (series.timestamps.size() >= 2)
    series.sample_interval = series.timestamps[1] - series.timestamps[0];
  series.validate();
  return series;
}

inline void write_csv(const HouseholdSeries &series,
                      const std::filesystem::path &path) {
  series.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
  out << "timestamp,aggregate";
  for (const auto &a : series.appliances)
    out << ',' << a.name;
  out << '\n';
  for (std::size_t t = 0; t < series.length(); ++t) {
    out << series.timestamps[t] << ',' << detail::format_double(series.aggregate[t]);
    for (const auto &a : series.appliances)
      out << ',' << detail::format_double(a.values[t]);
    out << '\n';
  }
  out.flush();
  if (!out)
    throw RuntimeFailure("failed writing '" + path.string() + "'");
}

} // namespace nilm
