#pragma once

// Latent-guided diffusion model: hybrid conditional/unconditional training,
// guided noise estimates and the strided reverse sampler.
//
// Windows are (T_w x C) double matrices at the API surface; the network
// works in the (C x B*T_w) sequence layout.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "strata/core/container.hpp"
#include "strata/core/rng.hpp"
#include "strata/dataio/dataset.hpp"
#include "strata/diffusion/eps_net.hpp"
#include "strata/diffusion/schedule.hpp"
#include "strata/scae/scae.hpp"

namespace strata::diffusion {

enum class LayerPolicy {
  all_levels,   // uniform over {0..L}
  latent_only,  // uniform over {1..L}
};

inline std::string to_string(LayerPolicy p) { return p == LayerPolicy::all_levels ? "all_levels" : "latent_only"; }

inline LayerPolicy parse_layer_policy(const std::string& s) {
  if (s == "all_levels") return LayerPolicy::all_levels;
  if (s == "latent_only") return LayerPolicy::latent_only;
  throw ConfigError("diffusion", "unknown layer policy '" + s + "'");
}

struct DiffusionConfig {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  double null_prob = 0.3;
  double guidance_scale = 2.0;
  int epochs = 160;
  /// Independent (t, noise, condition) draws of every window per epoch.
  int draws_per_window = 4;
  int batch_size = 32;
  float learning_rate = 2e-3f;
  bool cosine_decay = true;
  LayerPolicy layer_policy = LayerPolicy::all_levels;
  int base_width = 32;
  int cond_width = 16;
  int time_dim = 64;
  std::uint64_t seed = 0;
};

struct DiffusionModel {
  EpsNet net;
  NoiseSchedule schedule;
  double null_prob = 0.3;
  double guidance_scale = 2.0;
  LayerPolicy layer_policy = LayerPolicy::all_levels;
  std::vector<double> loss_curve;  // mean training loss per epoch

  int window_length() const { return net.cfg.length; }
  int channels() const { return net.cfg.channels; }
  int max_layer() const { return net.cfg.max_layer; }
};

inline DiffusionModel make_model(const DiffusionConfig& cfg, int window_length, int channels, int max_layer) {
  if (cfg.null_prob < 0.0 || cfg.null_prob > 1.0) throw ParameterError("diffusion", "null_prob must lie in [0, 1]");
  DiffusionModel dm;
  EpsNetConfig nc;
  nc.channels = channels;
  nc.length = window_length;
  nc.max_layer = max_layer;
  nc.base_width = cfg.base_width;
  nc.cond_width = cfg.cond_width;
  nc.time_dim = cfg.time_dim;
  Rng rng(derive_seed(cfg.seed, "diffusion.init"));
  dm.net = EpsNet(nc, rng);
  dm.schedule = make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
  dm.null_prob = cfg.null_prob;
  dm.guidance_scale = cfg.guidance_scale;
  dm.layer_policy = cfg.layer_policy;
  return dm;
}

/// One training draw: timestep, conditioning layer and null-token flag.
struct TrainingDraw {
  int t = 1;
  int layer = 0;
  bool null = false;
};

class DrawSampler {
 public:
  DrawSampler(int T, int max_layer, LayerPolicy policy, double null_prob, Rng& rng)
      : T_(T), lo_(policy == LayerPolicy::all_levels ? 0 : 1), hi_(max_layer), null_prob_(null_prob), rng_(rng) {
    if (hi_ < lo_) throw ParameterError("diffusion", "layer policy has no admissible layer");
  }

  TrainingDraw next() {
    TrainingDraw d;
    d.t = static_cast<int>(rng_.integer(1, T_));
    d.layer = static_cast<int>(rng_.integer(lo_, hi_));
    d.null = rng_.bernoulli(null_prob_);
    return d;
  }

 private:
  int T_, lo_, hi_;
  double null_prob_;
  Rng& rng_;
};

namespace detail {

inline void put_window(nn::Mat& X, int b, const Eigen::MatrixXd& w) {
  X.middleCols(static_cast<Eigen::Index>(b) * w.rows(), w.rows()) = w.transpose().cast<float>();
}

inline Eigen::MatrixXd get_window(const Eigen::MatrixXd& X, int b, int L) {
  return X.middleCols(static_cast<Eigen::Index>(b) * L, L).transpose();
}

}  // namespace detail

/// Conditions of a batch; a null entry selects the null token.
struct ConditionBatch {
  nn::Mat cond;  // C x B*L stretched latents (zeros for null entries)
  std::vector<int> layers;
  std::vector<bool> null_mask;

  int size() const { return static_cast<int>(layers.size()); }
};

inline ConditionBatch make_conditions(const DiffusionModel& dm, const std::vector<const scae::LatentFeature*>& z) {
  const int L = dm.window_length(), C = dm.channels();
  ConditionBatch cb;
  cb.cond = nn::Mat::Zero(C, static_cast<Eigen::Index>(z.size()) * L);
  for (std::size_t b = 0; b < z.size(); ++b) {
    if (z[b] == nullptr) {
      cb.layers.push_back(0);
      cb.null_mask.push_back(true);
      continue;
    }
    if (z[b]->values.rows() != L || z[b]->values.cols() != C)
      throw SchemaError("diffusion", "latent feature shape does not match the model window shape");
    if (z[b]->layer_index < 0 || z[b]->layer_index > dm.max_layer())
      throw RangeError("diffusion", "latent layer " + std::to_string(z[b]->layer_index) + " unknown to the model");
    detail::put_window(cb.cond, static_cast<int>(b), stretch_latent(*z[b], L));
    cb.layers.push_back(z[b]->layer_index);
    cb.null_mask.push_back(false);
  }
  return cb;
}

/// Raw network prediction for a batch; X is (C x B*L).
inline nn::Mat predict_noise(const DiffusionModel& dm, const nn::Mat& X, const std::vector<int>& t,
                             const ConditionBatch& cb) {
  nn::Tape tape(false);
  return tape.value(dm.net.forward(tape, X, t, cb.cond, cb.layers, cb.null_mask));
}

/// Guided estimate e_u + s (e_c - e_u) for a batch of conditioned samples.
/// Both branches run in one network call of width 2B.
inline nn::Mat guided_noise(const DiffusionModel& dm, const nn::Mat& X, const std::vector<int>& t,
                            const ConditionBatch& cb, double s) {
  const int B = cb.size(), L = dm.window_length();
  const auto cols = static_cast<Eigen::Index>(B) * L;
  if (std::all_of(cb.null_mask.begin(), cb.null_mask.end(), [](bool n) { return n; }))
    return predict_noise(dm, X, t, cb);
  ConditionBatch both;
  both.cond = nn::Mat::Zero(cb.cond.rows(), 2 * cols);
  both.cond.leftCols(cols) = cb.cond;
  both.layers = cb.layers;
  both.layers.insert(both.layers.end(), cb.layers.begin(), cb.layers.end());
  both.null_mask = cb.null_mask;
  both.null_mask.insert(both.null_mask.end(), static_cast<std::size_t>(B), true);
  nn::Mat X2(X.rows(), 2 * cols);
  X2.leftCols(cols) = X;
  X2.rightCols(cols) = X;
  std::vector<int> t2 = t;
  t2.insert(t2.end(), t.begin(), t.end());
  const nn::Mat E = predict_noise(dm, X2, t2, both);
  const nn::Mat ec = E.leftCols(cols), eu = E.rightCols(cols);
  nn::Mat out = eu + static_cast<float>(s) * (ec - eu);
  // Null-token rows have no conditional branch: their estimate is e_u.
  for (int b = 0; b < B; ++b)
    if (cb.null_mask[static_cast<std::size_t>(b)]) out.middleCols(static_cast<Eigen::Index>(b) * L, L) = eu.middleCols(static_cast<Eigen::Index>(b) * L, L);
  return out;
}

/// Single-window network call; z == nullptr selects the null token.
inline Eigen::MatrixXd eps_net(const DiffusionModel& dm, const Eigen::MatrixXd& x_t, int t,
                               const scae::LatentFeature* z) {
  nn::Mat X(dm.channels(), dm.window_length());
  detail::put_window(X, 0, x_t);
  const nn::Mat E = predict_noise(dm, X, {t}, make_conditions(dm, {z}));
  return E.transpose().cast<double>();
}

inline Eigen::MatrixXd guided_epsilon(const DiffusionModel& dm, const Eigen::MatrixXd& x_t, int t,
                                      const scae::LatentFeature& z, double s) {
  if (x_t.rows() != dm.window_length() || x_t.cols() != dm.channels())
    throw SchemaError("diffusion", "x_t shape does not match the model window shape");
  nn::Mat X(dm.channels(), dm.window_length());
  detail::put_window(X, 0, x_t);
  const nn::Mat E = guided_noise(dm, X, {t}, make_conditions(dm, {&z}), s);
  return E.transpose().cast<double>();
}

// ---------------------------------------------------------------- training

/// Trains eps_net on windows of `ds` conditioned on latents of `stack`.
/// Reads samples only; labels are never touched.
inline DiffusionModel train(const dataio::Dataset& ds, const scae::ScaeStack& stack, const DiffusionConfig& cfg,
                            const std::function<void(int, double)>& on_epoch = {}) {
  if (ds.empty()) throw EmptyDatasetError("diffusion", "cannot train on an empty dataset");
  if (!ds.normalization_stats) throw PreconditionError("diffusion", "dataset must be normalized before training");
  if (stack.depth() < 1) throw PreconditionError("diffusion", "stack must hold at least one trained unit");
  if (ds.window_length() != stack.window_length || ds.channels() != stack.channels)
    throw SchemaError("diffusion", "dataset shape does not match the stack io shape");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ParameterError("diffusion", "epochs and batch size must be >= 1");

  DiffusionModel dm = make_model(cfg, ds.window_length(), ds.channels(), stack.depth());
  const int L = dm.window_length(), C = dm.channels(), D = stack.depth();
  const auto N = ds.size();

  // Stretched conditions per layer, precomputed once.
  std::vector<std::vector<Eigen::MatrixXd>> cond(static_cast<std::size_t>(D) + 1);
  for (int i = 0; i <= D; ++i) {
    const auto z = scae::extract_all(stack, ds, i);
    for (const auto& zi : z) cond[static_cast<std::size_t>(i)].push_back(stretch_latent(zi, L));
  }

  auto params = dm.net.parameters();
  nn::Adam opt(params, nn::AdamConfig{cfg.learning_rate, 0.9f, 0.999f, 1e-8f, 1.0f});
  Rng rng(derive_seed(cfg.seed, "diffusion.train"));
  DrawSampler draws(dm.schedule.T, D, cfg.layer_policy, cfg.null_prob, rng);
  if (cfg.draws_per_window < 1) throw ParameterError("diffusion", "draws_per_window must be >= 1");
  std::vector<std::size_t> perm(N * static_cast<std::size_t>(cfg.draws_per_window));
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i % N;
  const std::size_t M = perm.size();
  const std::size_t steps_per_epoch = (M + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(steps_per_epoch) * cfg.epochs;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    double total = 0.0;
    for (std::size_t s = 0; s < M; s += cfg.batch_size) {
      const std::size_t e = std::min(M, s + cfg.batch_size);
      const int B = static_cast<int>(e - s);
      nn::Mat X(C, static_cast<Eigen::Index>(B) * L), Eps(C, static_cast<Eigen::Index>(B) * L);
      ConditionBatch cb;
      cb.cond = nn::Mat::Zero(C, static_cast<Eigen::Index>(B) * L);
      std::vector<int> ts;
      for (int b = 0; b < B; ++b) {
        const std::size_t w = perm[s + b];
        const TrainingDraw d = draws.next();
        const double ab = dm.schedule.alpha_bar(d.t);
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(L); ++j)
          for (Eigen::Index c = 0; c < C; ++c) Eps(c, b * L + j) = static_cast<float>(rng.normal(0.0, 1.0));
        const Eigen::MatrixXd& x0 = ds.windows[w].samples;
        X.middleCols(static_cast<Eigen::Index>(b) * L, L) =
            (std::sqrt(ab) * x0.transpose()).cast<float>() +
            static_cast<float>(std::sqrt(1.0 - ab)) * Eps.middleCols(static_cast<Eigen::Index>(b) * L, L);
        ts.push_back(d.t);
        cb.layers.push_back(d.layer);
        cb.null_mask.push_back(d.null);
        if (!d.null) detail::put_window(cb.cond, b, cond[static_cast<std::size_t>(d.layer)][w]);
      }
      const double lr_scale =
          cfg.cosine_decay ? 0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps))
                           : 1.0;
      nn::Tape tape;
      const nn::Var pred = dm.net.forward(tape, X, ts, cb.cond, cb.layers, cb.null_mask);
      const nn::Var loss = tape.mse(pred, Eps);
      const double l = tape.scalar(loss);
      if (!std::isfinite(l))
        throw DivergenceError("diffusion", "non-finite loss at step " + std::to_string(step) + " (epoch " +
                                               std::to_string(epoch + 1) + ")");
      tape.backward(loss);
      opt.step(static_cast<float>(lr_scale));
      total += l * B;
      ++step;
    }
    dm.loss_curve.push_back(total / static_cast<double>(M));
    if (on_epoch) on_epoch(epoch, dm.loss_curve.back());
  }
  if (!nn::all_finite(params)) throw DivergenceError("diffusion", "non-finite parameters after training");
  return dm;
}

// ---------------------------------------------------------------- sampling

/// Non-finite sample inside a batch; `sample` is its batch position.
class SampleFailure : public NumericalError {
 public:
  SampleFailure(int sample_index, const std::string& what) : NumericalError("diffusion", what), sample(sample_index) {}
  int sample;
};

struct SamplerConfig {
  int inference_steps = 100;
  double eta = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> guidance_scale;
  bool product_form_variance = false;
};

/// One reverse step t -> prev for a batch (C x B*L, double). `rngs[b]`
/// supplies the fresh noise of sample b when sigma > 0.
inline Eigen::MatrixXd sample_step_batch(const DiffusionModel& dm, const Eigen::MatrixXd& X, int t, int prev,
                                         const ConditionBatch& cb, const SamplerConfig& cfg, std::vector<Rng>& rngs) {
  const StepCoefficients k = step_coefficients(dm.schedule, t, prev, cfg.eta, cfg.product_form_variance);
  const double s = cfg.guidance_scale.value_or(dm.guidance_scale);
  const std::vector<int> ts(static_cast<std::size_t>(cb.size()), t);
  const Eigen::MatrixXd eps = guided_noise(dm, X.cast<float>(), ts, cb, s).cast<double>();
  Eigen::MatrixXd out = step_mean(k, X, eps);
  if (k.sigma > 0.0) {
    const int L = dm.window_length();
    for (int b = 0; b < cb.size(); ++b)
      for (int j = 0; j < L; ++j)
        for (Eigen::Index c = 0; c < out.rows(); ++c)
          out(c, static_cast<Eigen::Index>(b) * L + j) += k.sigma * rngs[static_cast<std::size_t>(b)].normal(0.0, 1.0);
  }
  if (!out.allFinite()) {
    const int L = dm.window_length();
    int bad = 0;
    while (bad + 1 < cb.size() && out.middleCols(static_cast<Eigen::Index>(bad) * L, L).allFinite()) ++bad;
    throw SampleFailure(bad, "non-finite sample at step " + std::to_string(t) + " -> " + std::to_string(prev));
  }
  return out;
}

/// Runs the reverse process over `tau` (ascending) starting from X at
/// tau.back(); returns the x_0 batch.
inline Eigen::MatrixXd run_reverse(const DiffusionModel& dm, Eigen::MatrixXd X, const std::vector<int>& tau,
                                   const ConditionBatch& cb, const SamplerConfig& cfg, std::vector<Rng>& rngs) {
  for (std::size_t i = tau.size(); i-- > 0;) {
    const int prev = i == 0 ? 0 : tau[i - 1];
    X = sample_step_batch(dm, X, tau[i], prev, cb, cfg, rngs);
  }
  return X;
}

/// Single-window step from tau[i] to tau[i-1] (0-based i; i = 0 steps to 0).
inline Eigen::MatrixXd sample_step(const DiffusionModel& dm, const Eigen::MatrixXd& x_t, std::size_t i,
                                   const std::vector<int>& tau, const scae::LatentFeature* z,
                                   const SamplerConfig& cfg, Rng& rng) {
  if (i >= tau.size()) throw RangeError("diffusion", "tau index out of range");
  if (!x_t.allFinite()) throw NumericalError("diffusion", "x_t is not finite");
  Eigen::MatrixXd X = x_t.transpose();
  std::vector<Rng> rngs{rng};
  const Eigen::MatrixXd out =
      sample_step_batch(dm, X, tau[i], i == 0 ? 0 : tau[i - 1], make_conditions(dm, {z}), cfg, rngs);
  rng = rngs.front();
  return out.transpose();
}

inline Eigen::MatrixXd standard_normal_window(int L, int C, Rng& rng) {
  Eigen::MatrixXd m(L, C);
  for (int j = 0; j < L; ++j)
    for (int c = 0; c < C; ++c) m(j, c) = rng.normal(0.0, 1.0);
  return m;
}

/// Generates one window conditioned on z (nullptr = unconditional). Without
/// `init`, x_T is drawn from the seeded stream.
inline Eigen::MatrixXd sample(const DiffusionModel& dm, const scae::LatentFeature* z, const SamplerConfig& cfg,
                              const std::optional<Eigen::MatrixXd>& init = std::nullopt) {
  const auto tau = make_tau(dm.schedule.T, cfg.inference_steps);
  std::vector<Rng> rngs{Rng(derive_seed(cfg.seed, "sampler"))};
  const Eigen::MatrixXd xT = init ? *init : standard_normal_window(dm.window_length(), dm.channels(), rngs[0]);
  if (xT.rows() != dm.window_length() || xT.cols() != dm.channels())
    throw SchemaError("diffusion", "init shape does not match the model window shape");
  return run_reverse(dm, xT.transpose(), tau, make_conditions(dm, {z}), cfg, rngs).transpose();
}

// ---------------------------------------------------------------- persistence

inline constexpr int kModelFormatVersion = 1;

inline void save_model(const std::filesystem::path& path, DiffusionModel& dm) {
  Container c;
  c.meta["kind"] = "diffusion_model";
  c.meta["format_version"] = kModelFormatVersion;
  const auto& n = dm.net.cfg;
  c.meta["eps_net"] = {{"channels", n.channels},     {"length", n.length},         {"max_layer", n.max_layer},
                       {"base_width", n.base_width}, {"cond_width", n.cond_width}, {"time_dim", n.time_dim},
                       {"kernel", n.kernel}};
  c.meta["schedule"] = {{"T", dm.schedule.T}, {"beta_start", dm.schedule.beta_start}, {"beta_end", dm.schedule.beta_end}};
  c.meta["null_prob"] = dm.null_prob;
  c.meta["guidance_scale"] = dm.guidance_scale;
  c.meta["layer_policy"] = to_string(dm.layer_policy);
  c.meta["loss_curve"] = dm.loss_curve;
  nn::save_parameters(c, dm.net.parameters());
  write_container(path, c);
}

inline DiffusionModel load_model(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "diffusion_model")
    throw FormatError("diffusion", "'" + path.string() + "' is not a diffusion checkpoint");
  if (c.meta.value("format_version", 0) != kModelFormatVersion)
    throw FormatError("diffusion", "unsupported diffusion format version");
  const auto& j = c.meta["eps_net"];
  EpsNetConfig n;
  n.channels = j["channels"].get<int>();
  n.length = j["length"].get<int>();
  n.max_layer = j["max_layer"].get<int>();
  n.base_width = j["base_width"].get<int>();
  n.cond_width = j["cond_width"].get<int>();
  n.time_dim = j["time_dim"].get<int>();
  n.kernel = j["kernel"].get<int>();
  DiffusionModel dm;
  Rng rng(0);
  dm.net = EpsNet(n, rng);
  const auto& s = c.meta["schedule"];
  dm.schedule = make_linear_schedule(s["T"].get<int>(), s["beta_start"].get<double>(), s["beta_end"].get<double>());
  dm.null_prob = c.meta["null_prob"].get<double>();
  dm.guidance_scale = c.meta["guidance_scale"].get<double>();
  dm.layer_policy = parse_layer_policy(c.meta["layer_policy"].get<std::string>());
  dm.loss_curve = c.meta["loss_curve"].get<std::vector<double>>();
  nn::load_parameters(c, dm.net.parameters());
  return dm;
}

}  // namespace strata::diffusion
