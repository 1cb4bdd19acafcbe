#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "strata/dataio/dataset.hpp"

namespace strata::dataio {

/// Maps CSV columns onto dataset fields.
struct CsvSchema {
  std::string timestamp = "timestamp";
  std::vector<std::string> channels;
  std::string activity = "activity";
  std::string subject = "subject";
  std::vector<std::string> attributes;
  int window_length = 100;
  /// Rows between window starts; 0 means window_length (no overlap).
  int stride = 0;
  double sample_rate_hz = 50.0;
};

struct CsvLoadResult {
  Dataset dataset;
  std::size_t windows = 0;
  std::size_t dropped_rows = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline int intern(std::vector<std::string>& table, const std::string& v) {
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i] == v) return static_cast<int>(i);
  table.push_back(v);
  return static_cast<int>(table.size()) - 1;
}

}  // namespace detail

/// Reads a headered CSV and cuts it into windows. Rows are grouped into runs
/// of consecutive rows sharing subject, activity and attributes; each run is
/// windowed independently and its trailing partial window is dropped.
inline CsvLoadResult load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("dataio", "cannot open CSV '" + path.string() + "'");
  if (schema.channels.empty()) throw SchemaError("dataio", "schema maps no channel columns");
  if (schema.window_length < 1) throw SchemaError("dataio", "window_length must be positive");
  const int stride = schema.stride > 0 ? schema.stride : schema.window_length;

  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError("dataio", "CSV '" + path.string() + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw SchemaError("dataio", "missing column \"" + name + "\"");
  };
  if (!schema.timestamp.empty()) column(schema.timestamp);
  std::vector<int> ch_cols;
  for (const auto& c : schema.channels) ch_cols.push_back(column(c));
  const int act_col = column(schema.activity);
  const int subj_col = column(schema.subject);
  std::vector<int> attr_cols;
  for (const auto& a : schema.attributes) attr_cols.push_back(column(a));

  CsvLoadResult result;
  Dataset& ds = result.dataset;
  ds.channel_names = schema.channels;
  ds.provenance = Provenance::csv;
  ds.sample_rate_hz = schema.sample_rate_hz;
  for (const auto& a : schema.attributes) ds.attribute_values[a] = {};

  struct Run {
    std::string key;
    std::string subject;
    int activity = 0;
    std::map<std::string, int> attributes;
    std::vector<std::vector<double>> rows;
  };
  Run run;
  std::size_t run_index = 0;

  auto flush = [&]() {
    const auto n = run.rows.size();
    std::size_t start = 0;
    int local = 0;
    for (; start + schema.window_length <= n; start += stride) {
      SensorWindow w;
      w.samples.resize(schema.window_length, static_cast<Eigen::Index>(ch_cols.size()));
      for (int t = 0; t < schema.window_length; ++t)
        for (std::size_t c = 0; c < ch_cols.size(); ++c)
          w.samples(t, static_cast<Eigen::Index>(c)) = run.rows[start + t][c];
      w.activity = run.activity;
      w.attributes = run.attributes;
      w.subject_id = run.subject;
      w.sample_rate_hz = schema.sample_rate_hz;
      w.window_id = "csv-" + std::to_string(run_index) + "-" + std::to_string(local++);
      ds.windows.push_back(std::move(w));
    }
    const std::size_t consumed = local == 0 ? 0 : (static_cast<std::size_t>(local) - 1) * stride + schema.window_length;
    result.dropped_rows += n - std::min(n, consumed);
    run.rows.clear();
    ++run_index;
  };

  std::size_t row_index = 0;
  while (std::getline(in, line)) {
    ++row_index;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < header.size())
      throw ParseError("dataio", "row " + std::to_string(row_index) + " has " + std::to_string(cells.size()) +
                                     " fields, expected " + std::to_string(header.size()));
    std::vector<double> values(ch_cols.size());
    for (std::size_t c = 0; c < ch_cols.size(); ++c) {
      const std::string cell = detail::trim(cells[ch_cols[c]]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty())
        throw ParseError("dataio", "non-numeric value '" + cell + "' in column \"" + schema.channels[c] + "\" at row " +
                                       std::to_string(row_index));
      values[c] = v;
    }
    const std::string subject = detail::trim(cells[subj_col]);
    const std::string activity = detail::trim(cells[act_col]);
    std::string key = subject + '\x1f' + activity;
    std::map<std::string, int> attrs;
    for (std::size_t a = 0; a < attr_cols.size(); ++a) {
      const std::string v = detail::trim(cells[attr_cols[a]]);
      key += '\x1f' + v;
      attrs[schema.attributes[a]] = detail::intern(ds.attribute_values[schema.attributes[a]], v);
    }
    if (key != run.key) {
      if (!run.rows.empty()) flush();
      run.key = key;
      run.subject = subject;
      run.activity = detail::intern(ds.activity_names, activity);
      run.attributes = attrs;
    }
    run.rows.push_back(std::move(values));
  }
  if (!run.rows.empty()) flush();
  if (ds.windows.empty())
    throw EmptyDatasetError("dataio", "CSV '" + path.string() + "' holds fewer rows than one full window");
  result.windows = ds.windows.size();
  return result;
}

}  // namespace strata::dataio
