#pragma once

// Multi-granularity reconstruction. Level 0 partially diffuses the window
// itself and denoises it back; level i >= 1 regenerates from pure noise
// guided by the latent z_i alone.

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "strata/diffusion/model.hpp"
#include "strata/scae/scae.hpp"

namespace strata::pipeline {

using dataio::Dataset;
using dataio::SensorWindow;

/// Condition used while denoising a level-0 request.
enum class Granu0Condition {
  null_token,   // denoise-only
  raw_feature,  // guided by z_0, the window itself
};

inline std::string to_string(Granu0Condition c) { return c == Granu0Condition::null_token ? "null_token" : "raw_feature"; }

inline Granu0Condition parse_granu0_condition(const std::string& s) {
  if (s == "null_token" || s == "null") return Granu0Condition::null_token;
  if (s == "raw_feature" || s == "z0") return Granu0Condition::raw_feature;
  throw ConfigError("pipeline", "unknown granu0 condition '" + s + "'");
}

struct GranularityRequest {
  int level = 1;
  /// Fraction of T applied as forward noise at level 0, in (0, 1].
  double granu0_strength = 0.3;
  Granu0Condition granu0_condition = Granu0Condition::null_token;
  diffusion::SamplerConfig sampler;
};

struct ReconstructedWindow {
  Eigen::MatrixXd samples;
  int granularity = 0;
  std::string source_window_id;
  nlohmann::json provenance;
};

inline void validate(const GranularityRequest& req, const diffusion::DiffusionModel& dm, const scae::ScaeStack& stack) {
  if (req.level < 0 || req.level > stack.depth())
    throw RangeError("pipeline", "granularity " + std::to_string(req.level) + " outside [0, " +
                                     std::to_string(stack.depth()) + "]");
  if (req.level > dm.max_layer())
    throw RangeError("pipeline", "model was trained for layers up to " + std::to_string(dm.max_layer()));
  if (req.level == 0 && !(req.granu0_strength > 0.0 && req.granu0_strength <= 1.0))
    throw ParameterError("pipeline", "granu0 strength must lie in (0, 1]");
  if (dm.window_length() != stack.window_length || dm.channels() != stack.channels)
    throw SchemaError("pipeline", "model and stack io shapes differ");
}

/// Step the level-0 request diffuses to: ceil(t* T), at least 1.
inline int granu0_start_step(const GranularityRequest& req, int T) {
  return std::clamp(static_cast<int>(std::ceil(req.granu0_strength * T - 1e-9)), 1, T);
}

inline std::uint64_t window_seed(std::uint64_t base, const std::string& window_id) {
  return derive_seed(derive_seed(base, "reconstruct"), window_id);
}

inline nlohmann::json provenance_of(const GranularityRequest& req, const diffusion::DiffusionModel& dm,
                                    std::uint64_t seed) {
  nlohmann::json p = {{"granularity", req.level},
                      {"inference_steps", req.sampler.inference_steps},
                      {"eta", req.sampler.eta},
                      {"guidance_scale", req.sampler.guidance_scale.value_or(dm.guidance_scale)},
                      {"product_form_variance", req.sampler.product_form_variance},
                      {"base_seed", req.sampler.seed},
                      {"window_seed", seed}};
  if (req.level == 0) {
    p["granu0_strength"] = req.granu0_strength;
    p["granu0_start_step"] = granu0_start_step(req, dm.schedule.T);
    p["granu0_condition"] = to_string(req.granu0_condition);
  }
  return p;
}

namespace detail {

/// Reconstructs windows [s, e) of `ds` as one batch.
inline std::vector<Eigen::MatrixXd> reconstruct_chunk(const Dataset& ds, std::size_t s, std::size_t e,
                                                      const GranularityRequest& req,
                                                      const diffusion::DiffusionModel& dm,
                                                      const scae::ScaeStack& stack) {
  const int L = dm.window_length(), C = dm.channels(), T = dm.schedule.T;
  const int B = static_cast<int>(e - s);
  std::vector<Rng> rngs;
  for (std::size_t j = s; j < e; ++j) rngs.emplace_back(window_seed(req.sampler.seed, ds.windows[j].window_id));

  std::vector<scae::LatentFeature> z;
  std::vector<const scae::LatentFeature*> zp;
  std::vector<int> tau = diffusion::make_tau(T, req.sampler.inference_steps);
  Eigen::MatrixXd X(C, static_cast<Eigen::Index>(B) * L);
  if (req.level == 0) {
    const int t0 = granu0_start_step(req, T);
    tau = diffusion::truncate_tau(tau, t0);
    for (int b = 0; b < B; ++b) {
      const SensorWindow& w = ds.windows[s + b];
      const Eigen::MatrixXd eps = diffusion::standard_normal_window(L, C, rngs[static_cast<std::size_t>(b)]);
      X.middleCols(static_cast<Eigen::Index>(b) * L, L) = diffusion::forward_diffuse(w.samples, t0, eps, dm.schedule).transpose();
      if (req.granu0_condition == Granu0Condition::raw_feature) z.push_back(scae::extract(stack, w, 0));
    }
  } else {
    // The sampler sees the latent only; w.samples is read solely by extract.
    for (int b = 0; b < B; ++b) {
      z.push_back(scae::extract(stack, ds.windows[s + b], req.level));
      X.middleCols(static_cast<Eigen::Index>(b) * L, L) =
          diffusion::standard_normal_window(L, C, rngs[static_cast<std::size_t>(b)]).transpose();
    }
  }
  for (int b = 0; b < B; ++b) zp.push_back(z.empty() ? nullptr : &z[static_cast<std::size_t>(b)]);
  const auto cb = diffusion::make_conditions(dm, zp);
  const Eigen::MatrixXd out = diffusion::run_reverse(dm, X, tau, cb, req.sampler, rngs);
  std::vector<Eigen::MatrixXd> res;
  for (int b = 0; b < B; ++b) res.push_back(out.middleCols(static_cast<Eigen::Index>(b) * L, L).transpose());
  return res;
}

}  // namespace detail

/// Windows per network batch. Fixed so results do not depend on `workers`.
inline constexpr std::size_t kChunkSize = 32;

inline ReconstructedWindow reconstruct(const SensorWindow& w, const GranularityRequest& req,
                                       const diffusion::DiffusionModel& dm, const scae::ScaeStack& stack) {
  validate(req, dm, stack);
  Dataset one;
  one.windows.push_back(w);
  ReconstructedWindow r;
  r.samples = std::move(detail::reconstruct_chunk(one, 0, 1, req, dm, stack).front());
  r.granularity = req.level;
  r.source_window_id = w.window_id;
  r.provenance = provenance_of(req, dm, window_seed(req.sampler.seed, w.window_id));
  return r;
}

/// Maps reconstruction over every window, preserving order, labels and ids.
/// Windows are processed in fixed chunks; `workers` threads share them.
inline Dataset reconstruct_dataset(const Dataset& ds, const GranularityRequest& req,
                                   const diffusion::DiffusionModel& dm, const scae::ScaeStack& stack,
                                   int workers = 1) {
  Dataset out = ds;
  out.provenance = dataio::Provenance::reconstructed;
  if (ds.empty()) return out;
  validate(req, dm, stack);
  const std::size_t n_chunks = (ds.size() + kChunkSize - 1) / kChunkSize;
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::string failed_window;
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      const std::size_t s = c * kChunkSize, e = std::min(ds.size(), s + kChunkSize);
      try {
        auto res = detail::reconstruct_chunk(ds, s, e, req, dm, stack);
        for (std::size_t j = s; j < e; ++j) {
          if (!res[j - s].allFinite())
            throw NumericalError("pipeline", "non-finite reconstruction of window '" + ds.windows[j].window_id + "'");
          out.windows[j].samples = std::move(res[j - s]);
        }
      } catch (const diffusion::SampleFailure& f) {
        std::lock_guard lock(err_mu);
        if (!first_error) {
          first_error = std::current_exception();
          failed_window = ds.windows[s + static_cast<std::size_t>(f.sample)].window_id;
        }
        return;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) {
          first_error = std::current_exception();
          failed_window = ds.windows[s].window_id;
        }
        return;
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, static_cast<int>(n_chunks)));
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const std::exception& e) {
      throw NumericalError("pipeline", "reconstruction aborted at window '" + failed_window + "': " + e.what());
    }
  }
  return out;
}

}  // namespace strata::pipeline
