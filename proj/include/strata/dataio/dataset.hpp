#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/core/container.hpp"
#include "strata/core/error.hpp"

namespace strata::dataio {

/// One fixed-length window of multichannel samples (timesteps x channels).
struct SensorWindow {
  Eigen::MatrixXd samples;
  int activity = 0;
  std::map<std::string, int> attributes;
  std::string subject_id;
  double sample_rate_hz = 50.0;
  std::string window_id;

  int length() const { return static_cast<int>(samples.rows()); }
  int channels() const { return static_cast<int>(samples.cols()); }
};

struct ChannelStats {
  double mean = 0.0;
  double std = 1.0;
};

enum class Provenance { csv, synthetic, reconstructed };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::csv: return "csv";
    case Provenance::synthetic: return "synthetic";
    case Provenance::reconstructed: return "reconstructed";
  }
  return "unknown";
}

inline Provenance provenance_from_string(const std::string& s) {
  if (s == "csv") return Provenance::csv;
  if (s == "synthetic") return Provenance::synthetic;
  if (s == "reconstructed") return Provenance::reconstructed;
  throw FormatError("dataio", "unknown provenance '" + s + "'");
}

struct Dataset {
  std::vector<SensorWindow> windows;
  std::vector<std::string> channel_names;
  std::vector<std::string> activity_names;
  /// attribute name -> ordered value names; SensorWindow::attributes holds
  /// indices into these lists.
  std::map<std::string, std::vector<std::string>> attribute_values;
  /// Present once the samples have been z-scored.
  std::optional<std::vector<ChannelStats>> normalization_stats;
  Provenance provenance = Provenance::synthetic;
  double sample_rate_hz = 50.0;

  std::size_t size() const { return windows.size(); }
  bool empty() const { return windows.empty(); }
  int window_length() const { return windows.empty() ? 0 : windows.front().length(); }
  int channels() const { return static_cast<int>(channel_names.size()); }
  int num_activities() const { return static_cast<int>(activity_names.size()); }

  std::vector<int> activity_labels() const {
    std::vector<int> y;
    y.reserve(windows.size());
    for (const auto& w : windows) y.push_back(w.activity);
    return y;
  }

  std::vector<int> attribute_labels(const std::string& name) const {
    if (!attribute_values.count(name)) throw LabelError("dataio", "dataset has no attribute '" + name + "'");
    std::vector<int> y;
    y.reserve(windows.size());
    for (const auto& w : windows) y.push_back(w.attributes.at(name));
    return y;
  }

  /// Copy with the same metadata and the given windows (by index).
  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d = metadata_only();
    d.windows.reserve(idx.size());
    for (auto i : idx) d.windows.push_back(windows.at(i));
    return d;
  }

  Dataset metadata_only() const {
    Dataset d;
    d.channel_names = channel_names;
    d.activity_names = activity_names;
    d.attribute_values = attribute_values;
    d.normalization_stats = normalization_stats;
    d.provenance = provenance;
    d.sample_rate_hz = sample_rate_hz;
    return d;
  }

  void validate() const {
    if (windows.empty()) return;
    const auto T = windows.front().samples.rows();
    for (const auto& w : windows) {
      if (w.samples.rows() != T || w.samples.cols() != static_cast<Eigen::Index>(channel_names.size()))
        throw SchemaError("dataio", "window '" + w.window_id + "' does not match the dataset shape");
    }
  }
};

// ---------------------------------------------------------------------------
// normalization

/// Per-channel mean and (population) standard deviation over the given
/// windows. Channels with zero spread keep std = 1.
inline std::vector<ChannelStats> fit_normalization(const Dataset& ds, std::span<const std::size_t> idx) {
  const int C = ds.channels();
  std::vector<double> sum(C, 0.0), sq(C, 0.0);
  double n = 0.0;
  for (auto i : idx) {
    const auto& s = ds.windows.at(i).samples;
    for (int c = 0; c < C; ++c) sum[c] += s.col(c).sum();
    n += static_cast<double>(s.rows());
  }
  if (n == 0.0) throw EmptyDatasetError("dataio", "cannot fit normalization on zero windows");
  std::vector<ChannelStats> stats(C);
  for (int c = 0; c < C; ++c) stats[c].mean = sum[c] / n;
  for (auto i : idx) {
    const auto& s = ds.windows.at(i).samples;
    for (int c = 0; c < C; ++c) sq[c] += (s.col(c).array() - stats[c].mean).square().sum();
  }
  for (int c = 0; c < C; ++c) {
    const double sd = std::sqrt(sq[c] / n);
    stats[c].std = sd > 0.0 ? sd : 1.0;
  }
  return stats;
}

inline std::vector<ChannelStats> fit_normalization(const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return fit_normalization(ds, all);
}

inline void apply_normalization(Eigen::MatrixXd& samples, const std::vector<ChannelStats>& stats) {
  for (Eigen::Index c = 0; c < samples.cols(); ++c)
    samples.col(c) = (samples.col(c).array() - stats[c].mean) / stats[c].std;
}

inline void invert_normalization(Eigen::MatrixXd& samples, const std::vector<ChannelStats>& stats) {
  for (Eigen::Index c = 0; c < samples.cols(); ++c)
    samples.col(c) = samples.col(c).array() * stats[c].std + stats[c].mean;
}

inline Dataset normalize(Dataset ds, const std::vector<ChannelStats>& stats) {
  if (ds.normalization_stats) throw PreconditionError("dataio", "dataset is already normalized");
  for (auto& w : ds.windows) apply_normalization(w.samples, stats);
  ds.normalization_stats = stats;
  return ds;
}

inline Dataset denormalize(Dataset ds) {
  if (!ds.normalization_stats) throw PreconditionError("dataio", "dataset is not normalized");
  for (auto& w : ds.windows) invert_normalization(w.samples, *ds.normalization_stats);
  ds.normalization_stats.reset();
  return ds;
}

// ---------------------------------------------------------------------------
// persistence

inline constexpr int kDatasetFormatVersion = 1;

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  ds.validate();
  Container c;
  const std::size_t N = ds.size();
  const int T = ds.window_length(), C = ds.channels();
  c.meta["kind"] = "dataset";
  c.meta["format_version"] = kDatasetFormatVersion;
  c.meta["channel_names"] = ds.channel_names;
  c.meta["activity_names"] = ds.activity_names;
  c.meta["attribute_values"] = ds.attribute_values;
  c.meta["provenance"] = to_string(ds.provenance);
  c.meta["sample_rate_hz"] = ds.sample_rate_hz;
  c.meta["window_length"] = T;
  std::vector<std::string> subjects, ids;
  std::vector<double> rates;
  for (const auto& w : ds.windows) {
    subjects.push_back(w.subject_id);
    ids.push_back(w.window_id);
    rates.push_back(w.sample_rate_hz);
  }
  c.meta["subject_ids"] = subjects;
  c.meta["window_ids"] = ids;
  c.meta["window_sample_rates"] = rates;
  if (ds.normalization_stats) {
    std::vector<double> m, s;
    for (const auto& st : *ds.normalization_stats) {
      m.push_back(st.mean);
      s.push_back(st.std);
    }
    c.meta["normalization"] = {{"mean", m}, {"std", s}};
  }
  std::vector<double> samples;
  samples.reserve(N * static_cast<std::size_t>(T) * C);
  std::vector<std::int32_t> act;
  for (const auto& w : ds.windows) {
    for (int t = 0; t < T; ++t)
      for (int ch = 0; ch < C; ++ch) samples.push_back(w.samples(t, ch));
    act.push_back(w.activity);
  }
  c.put("samples", {N, static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(C)}, std::move(samples));
  c.put("activity", {N}, std::move(act));
  for (const auto& [name, values] : ds.attribute_values) {
    std::vector<std::int32_t> a;
    for (const auto& w : ds.windows) a.push_back(w.attributes.at(name));
    c.put("attribute:" + name, {N}, std::move(a));
  }
  write_container(path, c);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "dataset") throw FormatError("dataio", "'" + path.string() + "' is not a dataset file");
  if (c.meta.value("format_version", 0) != kDatasetFormatVersion)
    throw FormatError("dataio", "unsupported dataset format version");
  Dataset ds;
  ds.channel_names = c.meta.at("channel_names").get<std::vector<std::string>>();
  ds.activity_names = c.meta.at("activity_names").get<std::vector<std::string>>();
  ds.attribute_values = c.meta.at("attribute_values").get<std::map<std::string, std::vector<std::string>>>();
  ds.provenance = provenance_from_string(c.meta.at("provenance").get<std::string>());
  ds.sample_rate_hz = c.meta.at("sample_rate_hz").get<double>();
  if (c.meta.contains("normalization")) {
    const auto m = c.meta["normalization"]["mean"].get<std::vector<double>>();
    const auto s = c.meta["normalization"]["std"].get<std::vector<double>>();
    std::vector<ChannelStats> stats(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) stats[i] = {m[i], s[i]};
    ds.normalization_stats = stats;
  }
  const auto& sa = c.get("samples");
  const auto& samples = sa.as<double>();
  const auto N = sa.dims.at(0), T = sa.dims.at(1), C = sa.dims.at(2);
  const auto& act = c.get("activity").as<std::int32_t>();
  const auto subjects = c.meta.at("subject_ids").get<std::vector<std::string>>();
  const auto ids = c.meta.at("window_ids").get<std::vector<std::string>>();
  const auto rates = c.meta.at("window_sample_rates").get<std::vector<double>>();
  std::map<std::string, const std::vector<std::int32_t>*> attrs;
  for (const auto& [name, values] : ds.attribute_values) attrs[name] = &c.get("attribute:" + name).as<std::int32_t>();
  ds.windows.resize(N);
  for (std::uint64_t i = 0; i < N; ++i) {
    auto& w = ds.windows[i];
    w.samples.resize(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
    for (std::uint64_t t = 0; t < T; ++t)
      for (std::uint64_t ch = 0; ch < C; ++ch)
        w.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(ch)) = samples[(i * T + t) * C + ch];
    w.activity = act[i];
    for (const auto& [name, vec] : attrs) w.attributes[name] = (*vec)[i];
    w.subject_id = subjects[i];
    w.window_id = ids[i];
    w.sample_rate_hz = rates[i];
  }
  return ds;
}

}  // namespace strata::dataio
