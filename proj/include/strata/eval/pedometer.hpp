#pragma once

// Peak-counting pedometer over the accelerometer magnitude.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "strata/dataio/dataset.hpp"

namespace strata::eval {

struct PeakDetectorConfig {
  double smoothing_s = 0.2;  // centered moving average
  double min_gap_s = 0.3;    // refractory period between counted peaks
  /// Minimum smoothed height; unset uses the mean of the smoothed signal.
  std::optional<double> min_height;
};

/// Centered moving average; the window shrinks at the edges.
inline std::vector<double> moving_average(const std::vector<double>& x, int width) {
  const int n = static_cast<int>(x.size()), h = std::max(0, width / 2);
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - h), hi = std::min(n, i + h + 1);
    out[i] = (prefix[hi] - prefix[lo]) / (hi - lo);
  }
  return out;
}

/// Counts local maxima of the smoothed signal above the height threshold.
/// Within one refractory period only the highest candidate survives.
inline int count_steps(const std::vector<double>& signal, double sample_rate_hz, const PeakDetectorConfig& cfg = {}) {
  if (signal.size() < 3) return 0;
  if (!(sample_rate_hz > 0.0)) throw ParameterError("eval", "sample rate must be positive");
  const auto s = moving_average(signal, std::max(1, static_cast<int>(std::lround(cfg.smoothing_s * sample_rate_hz))));
  double height = 0.0;
  if (cfg.min_height) {
    height = *cfg.min_height;
  } else {
    for (double v : s) height += v;
    height /= static_cast<double>(s.size());
  }
  const int gap = std::max(1, static_cast<int>(std::lround(cfg.min_gap_s * sample_rate_hz)));
  std::vector<int> peaks;
  for (int i = 1; i + 1 < static_cast<int>(s.size()); ++i) {
    if (!(s[i] > s[i - 1] && s[i] >= s[i + 1] && s[i] > height)) continue;
    if (!peaks.empty() && i - peaks.back() < gap) {
      if (s[i] > s[peaks.back()]) peaks.back() = i;
      continue;
    }
    peaks.push_back(i);
  }
  return static_cast<int>(peaks.size());
}

/// Accelerometer magnitude of back-to-back windows, in sensor units (the
/// dataset's normalization is undone first).
inline std::vector<double> acceleration_magnitude(const dataio::Dataset& windows) {
  std::vector<int> acc;
  for (int c = 0; c < windows.channels(); ++c)
    if (windows.channel_names[static_cast<std::size_t>(c)].rfind("acc", 0) == 0) acc.push_back(c);
  if (acc.empty()) throw PreconditionError("eval", "pedometer needs accelerometer channels (names starting with 'acc')");
  std::vector<double> mag;
  for (const auto& w : windows.windows) {
    Eigen::MatrixXd x = w.samples;
    if (windows.normalization_stats) dataio::invert_normalization(x, *windows.normalization_stats);
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
      double s = 0.0;
      for (int c : acc) s += x(t, c) * x(t, c);
      mag.push_back(std::sqrt(s));
    }
  }
  return mag;
}

inline int count_steps(const dataio::Dataset& windows, const PeakDetectorConfig& cfg = {}) {
  if (windows.empty()) return 0;
  return count_steps(acceleration_magnitude(windows), windows.sample_rate_hz, cfg);
}

struct PedometerResult {
  int true_steps = 0;
  /// granularity label -> counted steps
  std::map<std::string, int> counted_steps;

  double error_rate(const std::string& key) const {
    return std::abs(counted_steps.at(key) - true_steps) / static_cast<double>(true_steps);
  }
};

}  // namespace strata::eval
