#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "strata/core/container.hpp"
#include "strata/core/rng.hpp"
#include "strata/nn/tape.hpp"

namespace strata::nn {

inline Mat uniform_init(Eigen::Index rows, Eigen::Index cols, float bound, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<float>(rng.uniform(-bound, bound));
  return m;
}

struct Conv1d {
  Parameter weight;
  Parameter bias;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;

  Conv1d() = default;
  Conv1d(std::string name, int cin, int cout, int k, Rng& rng, bool zero_bias = false)
      : in_channels(cin), out_channels(cout), kernel(k) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(cin * k));
    weight = Parameter(name + ".weight", uniform_init(cout, static_cast<Eigen::Index>(cin) * k, bound, rng));
    bias = Parameter(name + ".bias", zero_bias ? Mat::Zero(cout, 1) : uniform_init(cout, 1, bound, rng));
  }

  Var operator()(Tape& tape, Var x) const { return tape.conv1d(x, tape.param(weight), tape.param(bias), kernel); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(std::string name, int in, int out, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    weight = Parameter(name + ".weight", uniform_init(out, in, bound, rng));
    bias = Parameter(name + ".bias", uniform_init(out, 1, bound, rng));
  }

  Var operator()(Tape& tape, Var x) const { return tape.linear(x, tape.param(weight), tape.param(bias)); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct GroupNorm {
  Parameter gamma;
  Parameter beta;
  int groups = 1;

  GroupNorm() = default;
  GroupNorm(std::string name, int channels, int n_groups)
      : gamma(name + ".gamma", Mat::Ones(channels, 1)), beta(name + ".beta", Mat::Zero(channels, 1)), groups(n_groups) {
    if (n_groups < 1 || channels % n_groups != 0)
      throw ParameterError("nn", "group count must divide the channel count");
  }

  Var operator()(Tape& tape, Var x) const { return tape.group_norm(x, tape.param(gamma), tape.param(beta), groups); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float clip_norm = 0.0f;  // 0 disables global-norm clipping
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      p->adam_m = Mat::Zero(p->value.rows(), p->value.cols());
      p->adam_v = Mat::Zero(p->value.rows(), p->value.cols());
      p->zero_grad();
    }
  }

  /// Applies one update from the accumulated gradients, then clears them.
  /// Returns the global gradient norm before clipping.
  float step(float lr_scale = 1.0f) {
    ++t_;
    double sq = 0.0;
    for (auto* p : params_) sq += static_cast<double>(p->grad.squaredNorm());
    const float norm = static_cast<float>(std::sqrt(sq));
    float scale = 1.0f;
    if (cfg_.clip_norm > 0.0f && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    const float lr = cfg_.lr * lr_scale;
    for (auto* p : params_) {
      p->adam_m = cfg_.beta1 * p->adam_m + (1.0f - cfg_.beta1) * scale * p->grad;
      p->adam_v = cfg_.beta2 * p->adam_v + (1.0f - cfg_.beta2) * (scale * p->grad).cwiseAbs2();
      p->value.array() -= lr * (p->adam_m.array() / bc1) / ((p->adam_v.array() / bc2).sqrt() + cfg_.eps);
      p->grad.setZero();
    }
    return norm;
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  long t_ = 0;
};

inline bool all_finite(const std::vector<Parameter*>& params) {
  for (auto* p : params)
    if (!p->value.allFinite()) return false;
  return true;
}

/// Stores parameter values under "<prefix><name>".
inline void save_parameters(Container& c, const std::vector<Parameter*>& params, const std::string& prefix = "") {
  for (auto* p : params) {
    std::vector<float> data(static_cast<std::size_t>(p->value.size()));
    // row-major on disk
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        data[static_cast<std::size_t>(i * p->value.cols() + j)] = p->value(i, j);
    c.put(prefix + p->name, {static_cast<std::uint64_t>(p->value.rows()), static_cast<std::uint64_t>(p->value.cols())},
          std::move(data));
  }
}

inline void load_parameters(const Container& c, const std::vector<Parameter*>& params, const std::string& prefix = "") {
  for (auto* p : params) {
    const Array& a = c.get(prefix + p->name);
    if (a.dims.size() != 2 || a.dims[0] != static_cast<std::uint64_t>(p->value.rows()) ||
        a.dims[1] != static_cast<std::uint64_t>(p->value.cols()))
      throw FormatError("nn", "shape mismatch for parameter '" + p->name + "'");
    const auto& data = a.as<float>();
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j)
        p->value(i, j) = data[static_cast<std::size_t>(i * p->value.cols() + j)];
    p->zero_grad();
  }
}

inline std::size_t parameter_count(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace strata::nn
