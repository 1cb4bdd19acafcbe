#pragma once

// Modality ablation: the same reconstruction scored on channel subsets.

#include <string>
#include <vector>

#include "strata/eval/classifier.hpp"
#include "strata/eval/metrics.hpp"
#include "strata/pipeline/reconstruct.hpp"

namespace strata::eval {

/// Channel indices of a modality: "acc", "gyro" and "mag" match channel-name
/// prefixes; "all" selects every channel.
inline std::vector<int> modality_channels(const Dataset& ds, const std::string& modality) {
  if (modality != "acc" && modality != "gyro" && modality != "mag" && modality != "all")
    throw ConfigError("eval", "unknown modality '" + modality + "' (expected acc, gyro, mag or all)");
  std::vector<int> idx;
  for (int c = 0; c < ds.channels(); ++c)
    if (modality == "all" || ds.channel_names[static_cast<std::size_t>(c)].rfind(modality, 0) == 0) idx.push_back(c);
  if (idx.empty()) throw SchemaError("eval", "dataset has no '" + modality + "' channels");
  return idx;
}

inline Dataset select_channels(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out = ds.metadata_only();
  out.channel_names.clear();
  for (int c : idx) out.channel_names.push_back(ds.channel_names.at(static_cast<std::size_t>(c)));
  if (ds.normalization_stats) {
    std::vector<dataio::ChannelStats> st;
    for (int c : idx) st.push_back(ds.normalization_stats->at(static_cast<std::size_t>(c)));
    out.normalization_stats = st;
  }
  out.windows.reserve(ds.size());
  for (const auto& w : ds.windows) {
    dataio::SensorWindow v = w;
    v.samples.resize(w.samples.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) v.samples.col(static_cast<Eigen::Index>(j)) = w.samples.col(idx[j]);
    out.windows.push_back(std::move(v));
  }
  return out;
}

struct ModalityResult {
  std::string modality;
  int channels = 0;
  double raw_accuracy = 0.0;
  double recon_accuracy = 0.0;
  double utility_ratio = 0.0;
};

/// Activity utility ratio of `recon` against `raw` on each channel subset.
/// Both datasets must be index-aligned.
inline std::vector<ModalityResult> modality_ablation(const Dataset& raw, const Dataset& recon,
                                                     const std::vector<std::string>& modalities,
                                                     const ClassifierConfig& cfg, std::uint64_t seed) {
  std::vector<ModalityResult> out;
  for (const auto& m : modalities) (void)modality_channels(raw, m);  // fail before any training
  for (const auto& m : modalities) {
    const auto idx = modality_channels(raw, m);
    ModalityResult r;
    r.modality = m;
    r.channels = static_cast<int>(idx.size());
    r.raw_accuracy = cross_validate(select_channels(raw, idx), Target::activity(), cfg, seed).mean_accuracy;
    r.recon_accuracy = cross_validate(select_channels(recon, idx), Target::activity(), cfg, seed).mean_accuracy;
    r.utility_ratio = utility_ratio(r.raw_accuracy, r.recon_accuracy);
    out.push_back(r);
  }
  return out;
}

/// Reconstructs `raw` with `req` (Granu.1 by default) and ablates it.
inline std::vector<ModalityResult> modality_ablation(const diffusion::DiffusionModel& dm, const scae::ScaeStack& stack,
                                                     const Dataset& raw, const std::vector<std::string>& modalities,
                                                     const pipeline::GranularityRequest& req,
                                                     const ClassifierConfig& cfg, std::uint64_t seed, int workers = 1) {
  for (const auto& m : modalities) (void)modality_channels(raw, m);
  const Dataset recon = pipeline::reconstruct_dataset(raw, req, dm, stack, workers);
  return modality_ablation(raw, recon, modalities, cfg, seed);
}

}  // namespace strata::eval
