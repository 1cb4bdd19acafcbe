#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "strata/core/error.hpp"

namespace strata::eval {

/// acc_recon / acc_raw. Accuracy stands in for the recognizer's confidence.
inline double utility_ratio(double acc_raw, double acc_recon) {
  if (!(acc_raw > 0.0)) throw UndefinedUtilityError("eval", "utility ratio needs a positive raw accuracy");
  return acc_recon / acc_raw;
}

/// [1/c - 0.1, 1/c + 0.1]: the band a c-class attack must land in to count
/// as anonymized.
struct ChanceBand {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double acc) const { return acc >= lo && acc <= hi; }
};

inline ChanceBand chance_band(int classes) {
  if (classes < 2) throw ParameterError("eval", "chance band needs at least two classes");
  const double c = 1.0 / classes;
  return {std::max(0.0, c - 0.1), std::min(1.0, c + 0.1)};
}

enum class AnonymityVerdict { anonymized, leaking, reversible };

/// Below-band accuracy is reversible: flipping the attacker's decisions
/// recovers the attribute, so it is not anonymization.
inline AnonymityVerdict anonymity_verdict(double attack_accuracy, int classes) {
  const ChanceBand band = chance_band(classes);
  if (band.contains(attack_accuracy)) return AnonymityVerdict::anonymized;
  return attack_accuracy < band.lo ? AnonymityVerdict::reversible : AnonymityVerdict::leaking;
}

inline const char* to_string(AnonymityVerdict v) {
  switch (v) {
    case AnonymityVerdict::anonymized: return "anonymized";
    case AnonymityVerdict::leaking: return "leaking";
    case AnonymityVerdict::reversible: return "reversible";
  }
  return "unknown";
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation: Pearson correlation of the average ranks.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ParameterError("eval", "spearman needs two equal series of length >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericalError("eval", "spearman is undefined for a constant series");
  return sab / std::sqrt(saa * sbb);
}

}  // namespace strata::eval
