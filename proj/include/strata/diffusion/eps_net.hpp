#pragma once

// Noise-prediction network: a two-level 1-D U-Net over the window with a
// timestep embedding added in every residual block. The condition is a
// latent feature whose active extent is stretched back over the window,
// embedded by one convolution plus a per-layer bias, and concatenated to
// x_t channel-wise. The unconditional branch swaps that embedding for a
// learned null plane.

#include <cmath>
#include <numbers>
#include <vector>

#include "strata/nn/layers.hpp"
#include "strata/scae/scae.hpp"

namespace strata::diffusion {

struct EpsNetConfig {
  int channels = 9;
  int length = 100;
  int max_layer = 3;  // conditions come from layers 0..max_layer
  int base_width = 32;
  int cond_width = 16;
  int time_dim = 64;
  int kernel = 3;
};

inline constexpr int kTimeFeatures = 32;

/// Sinusoidal features of integer timesteps, (kTimeFeatures x B).
inline nn::Mat timestep_features(const std::vector<int>& t) {
  constexpr int half = kTimeFeatures / 2;
  nn::Mat m(kTimeFeatures, static_cast<Eigen::Index>(t.size()));
  for (std::size_t b = 0; b < t.size(); ++b)
    for (int k = 0; k < half; ++k) {
      const double f = std::exp(-std::log(10000.0) * k / half);
      m(k, static_cast<Eigen::Index>(b)) = static_cast<float>(std::sin(t[b] * f));
      m(half + k, static_cast<Eigen::Index>(b)) = static_cast<float>(std::cos(t[b] * f));
    }
  return m;
}

/// Stretches the active rows of a padded latent over `length` rows by
/// nearest-neighbour resampling; row r reads active row floor(r * a / length).
inline Eigen::MatrixXd stretch_latent(const scae::LatentFeature& z, int length) {
  const int a = std::max(1, z.active_length);
  Eigen::MatrixXd out(length, z.values.cols());
  for (int r = 0; r < length; ++r) out.row(r) = z.values.row(std::min(a - 1, (r * a) / length));
  return out;
}

inline int norm_groups(int channels) {
  for (int g : {8, 4, 2})
    if (channels % g == 0) return g;
  return 1;
}

/// Pre-activation residual block:
///   h = conv1(silu(gn1(x))) + proj(temb);  out = conv2(silu(gn2(h))) + skip(x).
struct ResBlock {
  nn::GroupNorm norm1;
  nn::GroupNorm norm2;
  nn::Conv1d conv1;
  nn::Conv1d conv2;
  nn::Linear time_proj;
  nn::Conv1d skip;  // 1x1 when widths differ
  bool has_skip = false;

  ResBlock() = default;
  ResBlock(const std::string& name, int cin, int cout, int kernel, int time_dim, Rng& rng)
      : norm1(name + ".norm1", cin, norm_groups(cin)),
        norm2(name + ".norm2", cout, norm_groups(cout)),
        conv1(name + ".conv1", cin, cout, kernel, rng),
        conv2(name + ".conv2", cout, cout, kernel, rng),
        time_proj(name + ".time", time_dim, cout, rng),
        has_skip(cin != cout) {
    if (has_skip) skip = nn::Conv1d(name + ".skip", cin, cout, 1, rng);
  }

  nn::Var operator()(nn::Tape& tape, nn::Var x, nn::Var temb) const {
    nn::Var h = tape.add_per_sample(conv1(tape, tape.silu(norm1(tape, x))), time_proj(tape, temb));
    h = conv2(tape, tape.silu(norm2(tape, h)));
    return tape.add(h, has_skip ? skip(tape, x) : x);
  }

  void collect(std::vector<nn::Parameter*>& out) {
    norm1.collect(out);
    norm2.collect(out);
    conv1.collect(out);
    conv2.collect(out);
    time_proj.collect(out);
    if (has_skip) skip.collect(out);
  }
};

struct EpsNet {
  EpsNetConfig cfg;
  nn::Linear time1, time2;
  nn::Conv1d cond_conv;
  nn::Linear layer_embed;
  nn::Parameter null_plane;  // cond_width x length
  nn::Conv1d stem;
  ResBlock down1, down2, mid, up2, up1;
  nn::Linear global1, global2;  // time-pooled bottleneck context
  nn::GroupNorm head_norm;
  nn::Conv1d head;

  EpsNet() = default;
  EpsNet(const EpsNetConfig& c, Rng& rng) : cfg(c) {
    const int w = c.base_width, w2 = 2 * c.base_width;
    time1 = nn::Linear("time.fc1", kTimeFeatures, c.time_dim, rng);
    time2 = nn::Linear("time.fc2", c.time_dim, c.time_dim, rng);
    cond_conv = nn::Conv1d("cond.conv", c.channels, c.cond_width, c.kernel, rng);
    layer_embed = nn::Linear("cond.layer", c.max_layer + 1, c.cond_width, rng);
    null_plane = nn::Parameter("cond.null", nn::uniform_init(c.cond_width, c.length, 0.1f, rng));
    stem = nn::Conv1d("stem", c.channels + c.cond_width, w, c.kernel, rng);
    down1 = ResBlock("down1", w, w, c.kernel, c.time_dim, rng);
    down2 = ResBlock("down2", w, w2, c.kernel, c.time_dim, rng);
    mid = ResBlock("mid", w2, w2, c.kernel, c.time_dim, rng);
    up2 = ResBlock("up2", 2 * w2, w2, c.kernel, c.time_dim, rng);
    up1 = ResBlock("up1", w2 + w, w, c.kernel, c.time_dim, rng);
    global1 = nn::Linear("global.fc1", w2, w2, rng);
    global2 = nn::Linear("global.fc2", w2, w2, rng);
    head_norm = nn::GroupNorm("head.norm", w, norm_groups(w));
    head = nn::Conv1d("head", w, c.channels, c.kernel, rng, true);
    head.weight.value *= 0.1f;
  }

  /// x: (C x B*L) noisy windows; t: B timesteps; cond: (C x B*L) stretched
  /// latents; layers: B layer indices; null_mask[b] selects the null branch.
  nn::Var forward(nn::Tape& tape, const nn::Mat& x, const std::vector<int>& t, const nn::Mat& cond,
                  const std::vector<int>& layers, const std::vector<bool>& null_mask) const {
    const int B = static_cast<int>(t.size()), L = cfg.length;
    const nn::Var xt = tape.input(x, L, B);
    const nn::Var temb = time2(tape, tape.silu(time1(tape, tape.input(timestep_features(t), 0, B))));

    nn::Mat onehot = nn::Mat::Zero(cfg.max_layer + 1, B);
    for (int b = 0; b < B; ++b) onehot(std::clamp(layers[b], 0, cfg.max_layer), b) = 1.0f;
    nn::Var c = tape.add_per_sample(cond_conv(tape, tape.input(cond, L, B)), layer_embed(tape, tape.input(onehot, 0, B)));
    c = tape.silu(c);
    c = tape.substitute(c, tape.param(null_plane), null_mask);

    const nn::Var h0 = stem(tape, tape.concat_rows(xt, c));
    const nn::Var d1 = down1(tape, h0, temb);
    const nn::Var d2 = down2(tape, tape.avgpool2(d1), temb);
    nn::Var m = mid(tape, tape.avgpool2(d2), temb);
    m = tape.add_per_sample(m, global2(tape, tape.silu(global1(tape, tape.time_mean(m)))));
    const nn::Var u2 = up2(tape, tape.concat_rows(tape.upsample2(m, tape.len(d2)), d2), temb);
    const nn::Var u1 = up1(tape, tape.concat_rows(tape.upsample2(u2, tape.len(d1)), d1), temb);
    return head(tape, tape.silu(head_norm(tape, u1)));
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> p;
    time1.collect(p);
    time2.collect(p);
    cond_conv.collect(p);
    layer_embed.collect(p);
    p.push_back(&null_plane);
    stem.collect(p);
    down1.collect(p);
    down2.collect(p);
    mid.collect(p);
    up2.collect(p);
    up1.collect(p);
    global1.collect(p);
    global2.collect(p);
    head_norm.collect(p);
    head.collect(p);
    return p;
  }

  /// Parameters that only the conditional branch reads.
  std::vector<nn::Parameter*> condition_parameters() {
    std::vector<nn::Parameter*> p;
    cond_conv.collect(p);
    layer_embed.collect(p);
    return p;
  }
};

}  // namespace strata::diffusion
