#pragma once

// Stacked convolutional autoencoders. Unit i encodes the active part of
// feature z_{i-1} with one convolution and one 2x average pooling; its
// decoder (2x nearest unpooling + one convolution) exists only for training.
// Every extracted feature is zero-padded back to the raw window shape with
// the active sub-tensor at the origin.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "strata/core/container.hpp"
#include "strata/core/rng.hpp"
#include "strata/dataio/dataset.hpp"
#include "strata/nn/layers.hpp"

namespace strata::scae {

using dataio::Dataset;
using dataio::SensorWindow;

/// Latent feature z_i zero-padded to (T_w x C). Rows [0, active_length) hold
/// the encoder output; the remaining rows are structural zeros.
struct LatentFeature {
  Eigen::MatrixXd values;
  int layer_index = 0;
  int active_length = 0;
  std::string source_window_id;

  /// 1 on active entries, 0 on structural padding.
  Eigen::MatrixXd mask() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(values.rows(), values.cols());
    m.topRows(active_length).setOnes();
    return m;
  }
  Eigen::Index active_entries() const { return static_cast<Eigen::Index>(active_length) * values.cols(); }
};

struct CaeUnit {
  int layer_index = 1;
  int in_length = 0;   // active length consumed
  int out_length = 0;  // active length produced
  nn::Conv1d encoder;
  nn::Conv1d decoder;

  CaeUnit() = default;
  CaeUnit(int index, int in_len, int channels, int kernel, Rng& rng)
      : layer_index(index),
        in_length(in_len),
        out_length(in_len / 2),
        encoder("unit" + std::to_string(index) + ".encoder", channels, channels, kernel, rng, true),
        decoder("unit" + std::to_string(index) + ".decoder", channels, channels, kernel, rng, true) {}

  nn::Var encode(nn::Tape& tape, nn::Var x) const { return tape.avgpool2(encoder(tape, x)); }

  nn::Var reconstruct(nn::Tape& tape, nn::Var x) const {
    return decoder(tape, tape.upsample2(encode(tape, x), in_length));
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> p;
    encoder.collect(p);
    decoder.collect(p);
    return p;
  }
};

struct UnitHistory {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  int best_epoch = 0;  // 0-based epoch whose weights were kept
};

struct ScaeConfig {
  int depth = 3;
  int epochs = 40;
  int batch_size = 32;
  float learning_rate = 2e-3f;
  int kernel = 5;
  double val_fraction = 0.1;
  int patience = 8;
  std::uint64_t seed = 0;
};

struct ScaeStack {
  std::vector<CaeUnit> units;
  std::vector<UnitHistory> training_history;
  int window_length = 0;
  int channels = 0;
  int kernel = 5;

  int depth() const { return static_cast<int>(units.size()); }

  /// Active length of z_i.
  int active_length(int i) const { return i == 0 ? window_length : units.at(i - 1).out_length; }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> p;
    for (auto& u : units)
      for (auto* q : u.parameters()) p.push_back(q);
    return p;
  }
};

namespace detail {

/// Packs the first `len` rows of each matrix into a (C x B*len) batch.
inline nn::Mat pack(const std::vector<const Eigen::MatrixXd*>& mats, int len) {
  const auto C = mats.front()->cols();
  nn::Mat X(C, static_cast<Eigen::Index>(mats.size()) * len);
  for (std::size_t b = 0; b < mats.size(); ++b)
    X.middleCols(static_cast<Eigen::Index>(b) * len, len) = mats[b]->topRows(len).transpose().cast<float>();
  return X;
}

inline double mean_loss(const CaeUnit& unit, const std::vector<Eigen::MatrixXd>& inputs, const std::vector<std::size_t>& idx,
                        int batch_size) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += batch_size) {
    const std::size_t e = std::min(idx.size(), s + batch_size);
    std::vector<const Eigen::MatrixXd*> mats;
    for (std::size_t j = s; j < e; ++j) mats.push_back(&inputs[idx[j]]);
    const nn::Mat X = pack(mats, unit.in_length);
    nn::Tape tape(false);
    const nn::Var x = tape.input(X, unit.in_length, static_cast<int>(mats.size()));
    const nn::Var loss = tape.mse(unit.reconstruct(tape, x), X);
    total += static_cast<double>(tape.scalar(loss)) * static_cast<double>(e - s);
  }
  return total / static_cast<double>(idx.size());
}

/// Runs encoder `unit` on each input's active rows, returning padded
/// features of the same (T x C) shape.
inline std::vector<Eigen::MatrixXd> encode_all(const CaeUnit& unit, const std::vector<Eigen::MatrixXd>& inputs,
                                               int batch_size = 64) {
  std::vector<Eigen::MatrixXd> out(inputs.size());
  for (std::size_t s = 0; s < inputs.size(); s += batch_size) {
    const std::size_t e = std::min(inputs.size(), s + batch_size);
    std::vector<const Eigen::MatrixXd*> mats;
    for (std::size_t j = s; j < e; ++j) mats.push_back(&inputs[j]);
    nn::Tape tape(false);
    const nn::Var x = tape.input(pack(mats, unit.in_length), unit.in_length, static_cast<int>(mats.size()));
    const nn::Mat& Z = tape.value(unit.encode(tape, x));
    for (std::size_t j = s; j < e; ++j) {
      Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(inputs[j].rows(), inputs[j].cols());
      padded.topRows(unit.out_length) =
          Z.middleCols(static_cast<Eigen::Index>(j - s) * unit.out_length, unit.out_length).transpose().cast<double>();
      out[j] = std::move(padded);
    }
  }
  return out;
}

}  // namespace detail

/// Trains the stack unit by unit; unit i sees only the padded output of the
/// frozen units before it. Labels are never read.
inline ScaeStack train_stack(const Dataset& ds, const ScaeConfig& cfg) {
  if (cfg.depth < 1) throw ParameterError("scae", "depth must be >= 1");
  if (ds.empty()) throw EmptyDatasetError("scae", "cannot train on an empty dataset");
  if (!ds.normalization_stats) throw PreconditionError("scae", "dataset must be normalized before training");
  ds.validate();
  ScaeStack stack;
  stack.window_length = ds.window_length();
  stack.channels = ds.channels();
  stack.kernel = cfg.kernel;
  {
    int len = stack.window_length;
    for (int i = 1; i <= cfg.depth; ++i) {
      if (len / 2 < 1) throw ParameterError("scae", "depth " + std::to_string(cfg.depth) + " pools the window away");
      len /= 2;
    }
  }

  Rng split_rng(derive_seed(cfg.seed, "scae.split"));
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), split_rng.engine());
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(ds.size());
  for (const auto& w : ds.windows) inputs.push_back(w.samples);

  int in_len = stack.window_length;
  for (int i = 1; i <= cfg.depth; ++i) {
    Rng rng(derive_seed(derive_seed(cfg.seed, "scae.unit"), static_cast<std::uint64_t>(i)));
    CaeUnit unit(i, in_len, stack.channels, cfg.kernel, rng);
    auto params = unit.parameters();
    nn::Adam opt(params, nn::AdamConfig{cfg.learning_rate});
    UnitHistory hist;
    std::vector<nn::Mat> best;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<std::size_t> perm = train_idx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(perm.begin(), perm.end(), rng.engine());
      double total = 0.0;
      for (std::size_t s = 0; s < perm.size(); s += cfg.batch_size) {
        const std::size_t e = std::min(perm.size(), s + cfg.batch_size);
        std::vector<const Eigen::MatrixXd*> mats;
        for (std::size_t j = s; j < e; ++j) mats.push_back(&inputs[perm[j]]);
        const nn::Mat X = detail::pack(mats, in_len);
        nn::Tape tape;
        const nn::Var x = tape.input(X, in_len, static_cast<int>(mats.size()));
        const nn::Var loss = tape.mse(unit.reconstruct(tape, x), X);
        const double l = tape.scalar(loss);
        if (!std::isfinite(l))
          throw DivergenceError("scae", "non-finite loss in unit " + std::to_string(i) + " at epoch " +
                                            std::to_string(epoch + 1));
        total += l * static_cast<double>(e - s);
        tape.backward(loss);
        opt.step();
      }
      hist.train_mse.push_back(perm.empty() ? 0.0 : total / static_cast<double>(perm.size()));
      const double val = val_idx.empty() ? hist.train_mse.back() : detail::mean_loss(unit, inputs, val_idx, 64);
      if (!std::isfinite(val))
        throw DivergenceError("scae", "non-finite validation loss in unit " + std::to_string(i) + " at epoch " +
                                          std::to_string(epoch + 1));
      hist.val_mse.push_back(val);
      if (val < best_val) {
        best_val = val;
        hist.best_epoch = epoch;
        since_best = 0;
        best.clear();
        for (auto* p : params) best.push_back(p->value);
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    for (std::size_t p = 0; p < params.size() && !best.empty(); ++p) params[p]->value = best[p];
    inputs = detail::encode_all(unit, inputs);
    stack.units.push_back(std::move(unit));
    stack.training_history.push_back(std::move(hist));
    in_len /= 2;
  }
  return stack;
}

/// Feature of granularity `layer` for one window (layer 0 = the raw window).
inline LatentFeature extract(const ScaeStack& stack, const SensorWindow& w, int layer) {
  if (layer < 0 || layer > stack.depth())
    throw RangeError("scae", "layer " + std::to_string(layer) + " outside [0, " + std::to_string(stack.depth()) + "]");
  if (w.length() != stack.window_length || w.channels() != stack.channels)
    throw SchemaError("scae", "window shape does not match the stack io shape");
  LatentFeature z;
  z.layer_index = layer;
  z.source_window_id = w.window_id;
  std::vector<Eigen::MatrixXd> cur{w.samples};
  for (int i = 0; i < layer; ++i) cur = detail::encode_all(stack.units[i], cur);
  z.values = std::move(cur.front());
  z.active_length = stack.active_length(layer);
  return z;
}

/// Batched extraction over a dataset.
inline std::vector<LatentFeature> extract_all(const ScaeStack& stack, const Dataset& ds, int layer) {
  if (layer < 0 || layer > stack.depth())
    throw RangeError("scae", "layer " + std::to_string(layer) + " outside [0, " + std::to_string(stack.depth()) + "]");
  std::vector<Eigen::MatrixXd> cur;
  cur.reserve(ds.size());
  for (const auto& w : ds.windows) cur.push_back(w.samples);
  for (int i = 0; i < layer; ++i) cur = detail::encode_all(stack.units[i], cur);
  std::vector<LatentFeature> out(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    out[j].values = std::move(cur[j]);
    out[j].layer_index = layer;
    out[j].active_length = stack.active_length(layer);
    out[j].source_window_id = ds.windows[j].window_id;
  }
  return out;
}

inline constexpr int kStackFormatVersion = 1;

inline void save_stack(const std::filesystem::path& path, ScaeStack& stack) {
  Container c;
  c.meta["kind"] = "scae_stack";
  c.meta["format_version"] = kStackFormatVersion;
  c.meta["depth"] = stack.depth();
  c.meta["io_shape"] = {stack.window_length, stack.channels};
  c.meta["kernel"] = stack.kernel;
  c.meta["architecture"] = "conv1d(C->C,k)+avgpool2 | upsample2+conv1d(C->C,k)";
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& h : stack.training_history)
    hist.push_back({{"train_mse", h.train_mse}, {"val_mse", h.val_mse}, {"best_epoch", h.best_epoch}});
  c.meta["training_history"] = hist;
  nn::save_parameters(c, stack.parameters());
  write_container(path, c);
}

inline ScaeStack load_stack(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "scae_stack") throw FormatError("scae", "'" + path.string() + "' is not a stack checkpoint");
  if (c.meta.value("format_version", 0) != kStackFormatVersion) throw FormatError("scae", "unsupported stack format version");
  ScaeStack stack;
  stack.window_length = c.meta["io_shape"][0].get<int>();
  stack.channels = c.meta["io_shape"][1].get<int>();
  stack.kernel = c.meta["kernel"].get<int>();
  const int depth = c.meta["depth"].get<int>();
  Rng rng(0);
  int len = stack.window_length;
  for (int i = 1; i <= depth; ++i) {
    stack.units.emplace_back(i, len, stack.channels, stack.kernel, rng);
    len /= 2;
  }
  for (const auto& h : c.meta["training_history"]) {
    UnitHistory u;
    u.train_mse = h["train_mse"].get<std::vector<double>>();
    u.val_mse = h["val_mse"].get<std::vector<double>>();
    u.best_epoch = h["best_epoch"].get<int>();
    stack.training_history.push_back(std::move(u));
  }
  nn::load_parameters(c, stack.parameters());
  return stack;
}

}  // namespace strata::scae
