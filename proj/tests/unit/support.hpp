#pragma once

// Small fixtures shared by the unit tests. Trained artifacts are built once
// per process and are deliberately undertrained: tests that use them check
// contracts, not quality.

#include <filesystem>
#include <string>

#include "strata/dataio/synth.hpp"
#include "strata/diffusion/model.hpp"
#include "strata/scae/scae.hpp"

namespace strata::fixture {

inline dataio::Dataset normalized(dataio::Dataset ds) {
  const auto stats = dataio::fit_normalization(ds);
  return dataio::normalize(std::move(ds), stats);
}

/// 4 subjects x 6 activities x 5 windows of the default corpus, z-scored.
inline const dataio::Dataset& tiny_corpus() {
  static const dataio::Dataset ds = [] {
    auto spec = dataio::default_corpus_spec(11);
    spec.n_subjects = 4;
    return normalized(dataio::synthesize(spec));
  }();
  return ds;
}

inline const scae::ScaeStack& tiny_stack() {
  static const scae::ScaeStack stack = [] {
    scae::ScaeConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 5;
    return scae::train_stack(tiny_corpus(), cfg);
  }();
  return stack;
}

inline const diffusion::DiffusionModel& tiny_model() {
  static const diffusion::DiffusionModel dm = [] {
    diffusion::DiffusionConfig cfg;
    cfg.T = 100;
    cfg.epochs = 1;
    cfg.draws_per_window = 1;
    cfg.base_width = 8;
    cfg.cond_width = 8;
    cfg.time_dim = 16;
    cfg.seed = 9;
    return diffusion::train(tiny_corpus(), tiny_stack(), cfg);
  }();
  return dm;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("strata-" + tag + "-" + std::to_string(std::hash<std::string>{}(tag + std::to_string(reinterpret_cast<std::uintptr_t>(this)))));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace strata::fixture
