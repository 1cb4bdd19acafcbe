#pragma once

// Attacker-side evaluation: the re-identification attack retrains on
// sanitized data, and the Laplace baseline is the noise-only defense it is
// compared against.

#include <cmath>
#include <functional>
#include <vector>

#include "strata/eval/classifier.hpp"
#include "strata/eval/metrics.hpp"

namespace strata::eval {

using Sanitizer = std::function<Dataset(const Dataset&)>;

struct AttackResult {
  CvResult cv;
  AnonymityVerdict verdict = AnonymityVerdict::leaking;
};

/// Sanitizes the attacker's labelled corpus, then trains and tests a fresh
/// attribute classifier on sanitized folds. The sanitizer must preserve
/// window order and labels.
inline AttackResult reidentification_attack(const Sanitizer& sanitize, const Dataset& ds, const std::string& attribute,
                                            const ClassifierConfig& cfg, std::uint64_t seed) {
  if (!sanitize) throw PreconditionError("eval", "attack needs a sanitizer");
  const Target target = Target::attr(attribute);
  const int classes = class_count(ds, target);
  const Dataset clean = sanitize(ds);
  if (clean.size() != ds.size()) throw SchemaError("eval", "sanitizer changed the window count");
  if (labels_for(clean, target) != labels_for(ds, target)) throw LabelError("eval", "sanitizer changed attribute labels");
  AttackResult r;
  r.cv = cross_validate(clean, target, cfg, seed);
  r.verdict = anonymity_verdict(r.cv.mean_accuracy, classes);
  return r;
}

inline Sanitizer identity_sanitizer() {
  return [](const Dataset& d) { return d; };
}

/// Laplace draw with scale b by inverse CDF.
inline double laplace(Rng& rng, double b) {
  double u = rng.uniform(-0.5, 0.5);
  while (std::abs(u) >= 0.5) u = rng.uniform(-0.5, 0.5);
  return -b * (u < 0.0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
}

/// Budgets used by the baseline sweep; each is a multiplier of the
/// per-channel standard deviation, not a privacy epsilon.
inline const std::vector<double>& default_laplace_scales() {
  static const std::vector<double> s{0.1, 0.3, 0.7, 0.9};
  return s;
}

/// One noisy copy per scale. Sample (t, c) receives i.i.d. Laplace noise with
/// scale `scale * std_c`, where std_c is channel c's spread over `ds`.
inline std::vector<Dataset> laplace_baseline(const Dataset& ds, const std::vector<double>& scales, std::uint64_t seed) {
  for (double s : scales)
    if (!(s > 0.0)) throw ParameterError("eval", "Laplace scale must be positive");
  const auto stats = dataio::fit_normalization(ds);
  std::vector<Dataset> out;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    Rng rng(derive_seed(derive_seed(seed, "laplace"), k));
    Dataset noisy = ds;
    for (auto& w : noisy.windows)
      for (Eigen::Index c = 0; c < w.samples.cols(); ++c) {
        const double b = scales[k] * stats[static_cast<std::size_t>(c)].std;
        for (Eigen::Index t = 0; t < w.samples.rows(); ++t) w.samples(t, c) += laplace(rng, b);
      }
    out.push_back(std::move(noisy));
  }
  return out;
}

struct LaplaceSweep {
  std::vector<double> scales;
  std::vector<double> activity_accuracy;
  std::vector<double> attribute_accuracy;
  double mean_activity = 0.0;
  double mean_attribute = 0.0;
};

/// Evaluates activity and attribute accuracy at every scale and reports
/// the means over scales.
inline LaplaceSweep laplace_sweep(const Dataset& ds, const std::string& attribute, const std::vector<double>& scales,
                                  const ClassifierConfig& cfg, std::uint64_t seed) {
  LaplaceSweep r;
  r.scales = scales;
  const auto noisy = laplace_baseline(ds, scales, seed);
  for (const auto& d : noisy) {
    r.activity_accuracy.push_back(cross_validate(d, Target::activity(), cfg, seed).mean_accuracy);
    r.attribute_accuracy.push_back(cross_validate(d, Target::attr(attribute), cfg, seed).mean_accuracy);
  }
  const double n = static_cast<double>(scales.size());
  for (std::size_t k = 0; k < scales.size(); ++k) {
    r.mean_activity += r.activity_accuracy[k] / n;
    r.mean_attribute += r.attribute_accuracy[k] / n;
  }
  return r;
}

}  // namespace strata::eval
