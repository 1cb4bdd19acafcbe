#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "strata/core/rng.hpp"
#include "strata/dataio/dataset.hpp"

namespace strata::dataio {

struct ActivitySpec {
  std::string name;
  double base_frequency_hz = 1.0;
  double amplitude = 1.0;
  /// Weight of harmonic k+1 (k = vector index).
  std::vector<double> harmonic_weights{1.0};
};

struct AttributeValueEffect {
  std::string value;
  double amplitude_factor = 1.0;
  double phase_jitter_std = 0.0;
  /// Scale of the attribute's marker harmonic for this value.
  double marker_gain = 0.0;
};

struct AttributeSpec {
  std::string name;
  std::vector<AttributeValueEffect> values;
  /// Optional marker: a tone at `marker_frequency_hz` (0 disables) added
  /// with weight `marker_weight * marker_gain` of the subject's value.
  double marker_frequency_hz = 0.0;
  double marker_weight = 0.0;
};

struct ChannelSpec {
  std::string name;
  double gain = 1.0;
  double offset = 0.0;
  /// Fixed per-channel phase offset (radians) of the fundamental.
  double phase = 0.0;
};

struct SyntheticSpec {
  int n_subjects = 24;
  std::vector<ActivitySpec> activities;
  std::vector<AttributeSpec> attributes;
  std::vector<ChannelSpec> channels;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  int windows_per_subject_activity = 5;
  int window_length = 100;
  double sample_rate_hz = 50.0;
  /// Log-normal spread of a subject's overall amplitude.
  double subject_amplitude_jitter = 0.0;
  /// Log-normal spread of a single window's amplitude.
  double window_amplitude_jitter = 0.0;
  /// Per-window, per-channel phase shift of the fundamental (radians);
  /// harmonic k moves by k times the shift, so the waveform shape is kept.
  double channel_phase_jitter = 0.0;
};

inline std::vector<ChannelSpec> default_imu_channels() {
  return {
      {"acc_x", 2.0, 0.0, 0.0},    {"acc_y", 1.6, 0.0, 0.7},   {"acc_z", 3.0, 9.81, 1.4},
      {"gyro_x", 1.0, 0.0, 2.1},   {"gyro_y", 0.8, 0.0, 2.8},  {"gyro_z", 0.6, 0.0, 3.5},
      {"mag_x", 4.0, 20.0, 4.2},   {"mag_y", 3.0, -5.0, 4.9},  {"mag_z", 5.0, 40.0, 5.6},
  };
}

inline void validate(const SyntheticSpec& spec) {
  if (spec.activities.empty()) throw SpecError("dataio", "synthetic spec has zero activities");
  if (spec.n_subjects < 1) throw SpecError("dataio", "synthetic spec has zero subjects");
  if (spec.channels.empty()) throw SpecError("dataio", "synthetic spec has zero channels");
  if (spec.windows_per_subject_activity < 1) throw SpecError("dataio", "windows_per_subject_activity must be >= 1");
  if (spec.window_length < 2 || spec.sample_rate_hz <= 0.0) throw SpecError("dataio", "invalid window shape");
  if (spec.noise_std < 0.0) throw SpecError("dataio", "noise_std must be non-negative");
  for (std::size_t i = 0; i < spec.activities.size(); ++i) {
    const auto& a = spec.activities[i];
    if (a.harmonic_weights.empty() || a.base_frequency_hz <= 0.0)
      throw SpecError("dataio", "activity '" + a.name + "' needs a positive frequency and harmonics");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& b = spec.activities[j];
      if (a.base_frequency_hz == b.base_frequency_hz && a.harmonic_weights == b.harmonic_weights)
        throw SpecError("dataio", "activities '" + b.name + "' and '" + a.name + "' are indistinguishable");
    }
  }
  for (const auto& at : spec.attributes) {
    if (at.values.empty()) throw SpecError("dataio", "attribute '" + at.name + "' has no values");
    if (at.marker_frequency_hz < 0.0)
      throw SpecError("dataio", "attribute '" + at.name + "' has a negative marker frequency");
  }
}

/// Harmonic weight vector with `w` at harmonic `k` (1-based) on top of a
/// unit fundamental and a small second harmonic.
inline std::vector<double> harmonics_with(int k, double w) {
  std::vector<double> h(static_cast<std::size_t>(std::max(k, 2)), 0.0);
  h[0] = 1.0;
  h[1] = 0.25;
  h[static_cast<std::size_t>(k - 1)] = w;
  return h;
}

/// Six activities in two cadence groups. Within a group, activities differ
/// by one extra harmonic whose frequency sets the first encoder level that
/// can no longer carry it:
///   23.4 Hz folds onto the cadence band after one 2x pooling,
///   10.8 / 11.2 Hz after two, and a boosted 3.6 Hz second harmonic after
///   three. A binary "gender" attribute switches on a weak 17 Hz tone, a
///   side-channel amplitude in a band no activity occupies.
inline SyntheticSpec default_corpus_spec(std::uint64_t seed = 7) {
  SyntheticSpec s;
  s.seed = seed;
  s.n_subjects = 24;
  s.windows_per_subject_activity = 5;
  s.window_length = 100;
  s.sample_rate_hz = 50.0;
  s.noise_std = 0.1;
  s.subject_amplitude_jitter = 0.03;
  s.window_amplitude_jitter = 0.03;
  s.channel_phase_jitter = 3.0;
  s.channels = default_imu_channels();
  s.activities = {
      {"walk", 1.8, 1.0, {1.0, 0.25}},
      {"walk_tremor", 1.8, 1.0, harmonics_with(13, 1.0)},
      {"walk_sway", 1.8, 1.0, harmonics_with(6, 1.0)},
      {"walk_heavy", 1.8, 1.0, harmonics_with(2, 1.0)},
      {"run", 2.8, 1.0, {1.0, 0.25}},
      {"run_bounce", 2.8, 1.0, harmonics_with(4, 1.0)},
  };
  s.attributes = {{"gender", {{"A", 1.0, 0.0, 0.0}, {"B", 1.0, 0.0, 1.0}}, 17.0, 0.2}};
  return s;
}

namespace detail {

/// Attribute value index of a subject: attributes cycle through their values
/// in mixed radix so every combination is balanced across subjects.
inline std::map<std::string, int> subject_attributes(const SyntheticSpec& spec, int subject) {
  std::map<std::string, int> out;
  int radix = 1;
  for (const auto& at : spec.attributes) {
    const int n = static_cast<int>(at.values.size());
    out[at.name] = (subject / radix) % n;
    radix *= n;
  }
  return out;
}

struct Marker {
  double frequency_hz = 0.0;
  double weight = 0.0;
};

struct SubjectState {
  std::map<std::string, int> attributes;
  double amplitude_factor = 1.0;
  double phase_jitter_std = 0.0;
  std::vector<Marker> markers;
};

inline SubjectState make_subject(const SyntheticSpec& spec, int subject, Rng& rng) {
  SubjectState s;
  s.attributes = subject_attributes(spec, subject);
  double jitter_var = 0.0;
  for (const auto& at : spec.attributes) {
    const auto& eff = at.values[s.attributes[at.name]];
    s.amplitude_factor *= eff.amplitude_factor;
    jitter_var += eff.phase_jitter_std * eff.phase_jitter_std;
    if (at.marker_frequency_hz > 0.0 && at.marker_weight * eff.marker_gain != 0.0)
      s.markers.push_back({at.marker_frequency_hz, at.marker_weight * eff.marker_gain});
  }
  s.phase_jitter_std = std::sqrt(jitter_var);
  s.amplitude_factor *= std::exp(rng.normal(0.0, spec.subject_amplitude_jitter));
  return s;
}

/// Per-channel, per-harmonic phase offsets of one realization.
inline std::vector<std::vector<double>> draw_phases(const SyntheticSpec& spec, const ActivitySpec& act,
                                                    double base_phase, double extra_jitter, Rng& rng) {
  std::vector<std::vector<double>> ph(spec.channels.size(), std::vector<double>(act.harmonic_weights.size()));
  for (std::size_t c = 0; c < spec.channels.size(); ++c) {
    // Channel jitter shifts the whole waveform; attribute jitter perturbs
    // each harmonic independently.
    const double shift = spec.channel_phase_jitter > 0.0 ? rng.normal(0.0, spec.channel_phase_jitter) : 0.0;
    for (std::size_t k = 0; k < act.harmonic_weights.size(); ++k) {
      const double order = static_cast<double>(k + 1);
      ph[c][k] = order * (base_phase + spec.channels[c].phase + shift) +
                 (extra_jitter > 0.0 ? rng.normal(0.0, extra_jitter) : 0.0);
    }
  }
  return ph;
}

/// `phases[0]` is the channel's fundamental phase; markers start from it.
inline double clean_value(const SyntheticSpec& spec, const ActivitySpec& act, std::size_t channel, double amp,
                          double freq, double time_s, const std::vector<double>& phases,
                          const std::vector<Marker>& markers) {
  const double arg = 2.0 * std::numbers::pi * freq * time_s;
  double v = 0.0;
  for (std::size_t k = 0; k < act.harmonic_weights.size(); ++k) {
    const double w = act.harmonic_weights[k];
    if (w == 0.0) continue;
    v += w * amp * std::sin(static_cast<double>(k + 1) * arg + phases[k]);
  }
  for (const auto& m : markers)
    v += m.weight * amp * std::sin(2.0 * std::numbers::pi * m.frequency_hz * time_s + phases[0]);
  return spec.channels[channel].offset + spec.channels[channel].gain * v;
}

inline Dataset empty_like(const SyntheticSpec& spec) {
  Dataset ds;
  for (const auto& c : spec.channels) ds.channel_names.push_back(c.name);
  for (const auto& a : spec.activities) ds.activity_names.push_back(a.name);
  for (const auto& at : spec.attributes) {
    auto& vals = ds.attribute_values[at.name];
    for (const auto& v : at.values) vals.push_back(v.value);
  }
  ds.provenance = Provenance::synthetic;
  ds.sample_rate_hz = spec.sample_rate_hz;
  return ds;
}

}  // namespace detail

/// Generates the labelled corpus. Pure function of `spec` (seed included).
/// Windows are ordered subject-major, then activity, then repetition.
inline Dataset synthesize(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(derive_seed(spec.seed, "synthesize"));
  Dataset ds = detail::empty_like(spec);
  const int T = spec.window_length;
  for (int s = 0; s < spec.n_subjects; ++s) {
    const auto subject = detail::make_subject(spec, s, rng);
    for (std::size_t a = 0; a < spec.activities.size(); ++a) {
      const auto& act = spec.activities[a];
      for (int r = 0; r < spec.windows_per_subject_activity; ++r) {
        const double amp =
            act.amplitude * subject.amplitude_factor * std::exp(rng.normal(0.0, spec.window_amplitude_jitter));
        const double base_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const auto phases = detail::draw_phases(spec, act, base_phase, subject.phase_jitter_std, rng);
        SensorWindow w;
        w.samples.resize(T, static_cast<Eigen::Index>(spec.channels.size()));
        for (int t = 0; t < T; ++t) {
          const double time_s = t / spec.sample_rate_hz;
          for (std::size_t c = 0; c < spec.channels.size(); ++c) {
            double v = detail::clean_value(spec, act, c, amp, act.base_frequency_hz, time_s, phases[c],
                                             subject.markers);
            if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
            w.samples(t, static_cast<Eigen::Index>(c)) = v;
          }
        }
        w.activity = static_cast<int>(a);
        w.attributes = subject.attributes;
        w.subject_id = "s" + std::to_string(s);
        w.sample_rate_hz = spec.sample_rate_hz;
        w.window_id = "syn-" + std::to_string(s) + "-" + std::to_string(a) + "-" + std::to_string(r);
        ds.windows.push_back(std::move(w));
      }
    }
  }
  return ds;
}

struct WalkTrace {
  Dataset windows;  // contiguous windows of one continuous recording
  int true_steps = 0;
  double step_frequency_hz = 0.0;
};

/// A continuous recording of `steps` cycles of `activity`, cut into
/// back-to-back windows. The cadence is adjusted slightly so the windows hold
/// exactly `steps` cycles; one step per fundamental cycle.
inline WalkTrace synthesize_walk(const SyntheticSpec& spec, std::size_t activity, int steps, int subject,
                                 std::uint64_t seed) {
  validate(spec);
  if (activity >= spec.activities.size()) throw RangeError("dataio", "walk activity index out of range");
  if (steps < 1) throw SpecError("dataio", "walk needs at least one step");
  const auto& act = spec.activities[activity];
  const int T = spec.window_length;
  const double window_s = T / spec.sample_rate_hz;
  const int n_windows = static_cast<int>(std::ceil(steps / (act.base_frequency_hz * window_s)));
  const double freq = steps / (n_windows * window_s);
  Rng rng(derive_seed(seed, "walk"));
  const auto subj = detail::make_subject(spec, subject, rng);
  // Peaks of the fundamental land mid-cycle: start the fundamental at -pi/2.
  const auto phases = detail::draw_phases(spec, act, -std::numbers::pi / 2.0, subj.phase_jitter_std, rng);
  const double amp = act.amplitude * subj.amplitude_factor;
  WalkTrace out;
  out.windows = detail::empty_like(spec);
  out.true_steps = steps;
  out.step_frequency_hz = freq;
  for (int wi = 0; wi < n_windows; ++wi) {
    SensorWindow w;
    w.samples.resize(T, static_cast<Eigen::Index>(spec.channels.size()));
    for (int t = 0; t < T; ++t) {
      const double time_s = (wi * T + t) / spec.sample_rate_hz;
      for (std::size_t c = 0; c < spec.channels.size(); ++c) {
        double v = detail::clean_value(spec, act, c, amp, freq, time_s, phases[c], subj.markers);
        if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
        w.samples(t, static_cast<Eigen::Index>(c)) = v;
      }
    }
    w.activity = static_cast<int>(activity);
    w.attributes = subj.attributes;
    w.subject_id = "walk-s" + std::to_string(subject);
    w.sample_rate_hz = spec.sample_rate_hz;
    w.window_id = "walk-" + std::to_string(wi);
    out.windows.windows.push_back(std::move(w));
  }
  return out;
}

}  // namespace strata::dataio
