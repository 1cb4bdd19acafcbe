#pragma once

// Minimal reverse-mode autodiff over Eigen matrices.
//
// Two tensor layouts are used throughout:
//   sequence: rows = channels, cols = batch * len, column b*len + t holds
//             every channel of sample b at time t.
//   dense:    rows = features, cols = batch (len == 0).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/core/error.hpp"

namespace strata::nn {

using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }

  void zero_grad() { grad = Mat::Zero(value.rows(), value.cols()); }
};

class Tape;

struct Var {
  int id = -1;
};

class Tape {
 public:
  explicit Tape(bool track_grad = true) : track_(track_grad) { nodes_.reserve(128); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  int len(Var v) const { return nodes_[v.id].len; }
  int batch(Var v) const { return nodes_[v.id].batch; }
  float scalar(Var v) const { return nodes_[v.id].value(0, 0); }

  Var input(Mat m, int len, int batch) { return push(std::move(m), len, batch, nullptr); }

  /// W * X. Eigen's GEMM sums a column in an order that depends on where it
  /// falls in the packed panels (and a lone column goes through GEMV), so a
  /// batched product makes a sample's output depend on its batch mates.
  /// Without gradient tracking the product runs sample by sample, which makes
  /// inference batch-invariant; training keeps the single wide GEMM.
  Mat product(const Mat& W, const Mat& X, int len, int batch) const {
    if (track_ || batch <= 1) return W * X;
    const Eigen::Index w = std::max(len, 1);
    Mat Y(W.rows(), X.cols());
    for (int b = 0; b < batch; ++b) Y.middleCols(b * w, w).noalias() = W * X.middleCols(b * w, w);
    return Y;
  }

  /// Leaf holding a copy of the parameter value. On a tracking tape the
  /// gradient is accumulated into `p.grad` during backward.
  Var param(const Parameter& p) {
    Var out = push(p.value, 0, 0, nullptr);
    if (track_) {
      auto* target = const_cast<Parameter*>(&p);
      nodes_[out.id].backward = [this, out, target] { target->grad += nodes_[out.id].grad; };
    }
    return out;
  }

  /// Same-padded stride-1 1-D convolution. `w` is (cout x k*cin) with column
  /// index k*cin + ci; `b` is (cout x 1).
  Var conv1d(Var x, Var w, Var b, int kernel) {
    const Mat& X = value(x);
    const int cin = static_cast<int>(X.rows());
    const int L = len(x), B = batch(x);
    const int pad = (kernel - 1) / 2;
    Mat col = Mat::Zero(static_cast<Eigen::Index>(kernel) * cin, static_cast<Eigen::Index>(B) * L);
    for (int bi = 0; bi < B; ++bi) {
      for (int k = 0; k < kernel; ++k) {
        const int shift = k - pad;
        const int t0 = std::max(0, -shift), t1 = std::min(L, L - shift);
        if (t1 <= t0) continue;
        col.block(k * cin, bi * L + t0, cin, t1 - t0) = X.block(0, bi * L + t0 + shift, cin, t1 - t0);
      }
    }
    Mat Y = product(value(w), col, L, B);
    Y.colwise() += value(b).col(0);
    Var out = push(std::move(Y), L, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, w, b, kernel, cin, L, B, pad, col = std::move(col)] {
        const Mat& G = nodes_[out.id].grad;
        grad_of(w).noalias() += G * col.transpose();
        grad_of(b).col(0) += G.rowwise().sum();
        Mat dcol = value(w).transpose() * G;
        Mat& dx = grad_of(x);
        for (int bi = 0; bi < B; ++bi) {
          for (int k = 0; k < kernel; ++k) {
            const int shift = k - pad;
            const int t0 = std::max(0, -shift), t1 = std::min(L, L - shift);
            if (t1 <= t0) continue;
            dx.block(0, bi * L + t0 + shift, cin, t1 - t0) += dcol.block(k * cin, bi * L + t0, cin, t1 - t0);
          }
        }
      };
    }
    return out;
  }

  /// Average pooling with factor 2; a trailing odd sample is dropped.
  Var avgpool2(Var x) {
    const Mat& X = value(x);
    const int L = len(x), B = batch(x), Lo = L / 2;
    Mat Y(X.rows(), static_cast<Eigen::Index>(B) * Lo);
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < Lo; ++t)
        Y.col(bi * Lo + t) = 0.5f * (X.col(bi * L + 2 * t) + X.col(bi * L + 2 * t + 1));
    Var out = push(std::move(Y), Lo, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, L, B, Lo] {
        const Mat& G = nodes_[out.id].grad;
        Mat& dx = grad_of(x);
        for (int bi = 0; bi < B; ++bi)
          for (int t = 0; t < Lo; ++t) {
            dx.col(bi * L + 2 * t) += 0.5f * G.col(bi * Lo + t);
            dx.col(bi * L + 2 * t + 1) += 0.5f * G.col(bi * Lo + t);
          }
      };
    }
    return out;
  }

  /// Max pooling with factor 2 per channel.
  Var maxpool2(Var x) {
    const Mat& X = value(x);
    const int L = len(x), B = batch(x), Lo = L / 2;
    const auto C = X.rows();
    Mat Y(C, static_cast<Eigen::Index>(B) * Lo);
    Eigen::MatrixXi arg(C, static_cast<Eigen::Index>(B) * Lo);
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < Lo; ++t)
        for (Eigen::Index c = 0; c < C; ++c) {
          const float a = X(c, bi * L + 2 * t), bb = X(c, bi * L + 2 * t + 1);
          const bool first = a >= bb;
          Y(c, bi * Lo + t) = first ? a : bb;
          arg(c, bi * Lo + t) = bi * L + 2 * t + (first ? 0 : 1);
        }
    Var out = push(std::move(Y), Lo, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, arg = std::move(arg)] {
        const Mat& G = nodes_[out.id].grad;
        Mat& dx = grad_of(x);
        for (Eigen::Index j = 0; j < G.cols(); ++j)
          for (Eigen::Index c = 0; c < G.rows(); ++c) dx(c, arg(c, j)) += G(c, j);
      };
    }
    return out;
  }

  /// Nearest-neighbour upsampling inverting avgpool2: output t reads input
  /// min(t / 2, len - 1).
  Var upsample2(Var x, int out_len) {
    const Mat& X = value(x);
    const int L = len(x), B = batch(x);
    Mat Y(X.rows(), static_cast<Eigen::Index>(B) * out_len);
    for (int bi = 0; bi < B; ++bi)
      for (int t = 0; t < out_len; ++t) Y.col(bi * out_len + t) = X.col(bi * L + std::min(t / 2, L - 1));
    Var out = push(std::move(Y), out_len, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, L, B, out_len] {
        const Mat& G = nodes_[out.id].grad;
        Mat& dx = grad_of(x);
        for (int bi = 0; bi < B; ++bi)
          for (int t = 0; t < out_len; ++t) dx.col(bi * L + std::min(t / 2, L - 1)) += G.col(bi * out_len + t);
      };
    }
    return out;
  }

  Var linear(Var x, Var w, Var b) {
    Mat Y = product(value(w), value(x), len(x), batch(x));
    Y.colwise() += value(b).col(0);
    Var out = push(std::move(Y), len(x), batch(x), nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, w, b] {
        const Mat& G = nodes_[out.id].grad;
        grad_of(w).noalias() += G * value(x).transpose();
        grad_of(b).col(0) += G.rowwise().sum();
        grad_of(x).noalias() += value(w).transpose() * G;
      };
    }
    return out;
  }

  Var add(Var a, Var b) {
    Var out = push(value(a) + value(b), len(a), batch(a), nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, a, b] {
        grad_of(a) += nodes_[out.id].grad;
        grad_of(b) += nodes_[out.id].grad;
      };
    }
    return out;
  }

  /// Adds a per-sample channel vector `e` (channels x batch) to every time
  /// step of sequence `x`.
  Var add_per_sample(Var x, Var e) {
    const int L = len(x), B = batch(x);
    Mat Y = value(x);
    const Mat& E = value(e);
    for (int bi = 0; bi < B; ++bi) Y.middleCols(bi * L, L).colwise() += E.col(bi);
    Var out = push(std::move(Y), L, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, e, L, B] {
        const Mat& G = nodes_[out.id].grad;
        grad_of(x) += G;
        Mat& de = grad_of(e);
        for (int bi = 0; bi < B; ++bi) de.col(bi) += G.middleCols(bi * L, L).rowwise().sum();
      };
    }
    return out;
  }

  /// Group normalization of a sequence: statistics per sample over the
  /// channels of each group and all time steps, then a per-channel affine
  /// map with `gamma`, `beta` (C x 1).
  Var group_norm(Var x, Var gamma, Var beta, int groups, float eps = 1e-5f) {
    const Mat& X = value(x);
    const int L = len(x), B = batch(x);
    const int C = static_cast<int>(X.rows()), cg = C / groups;
    Mat xhat(C, X.cols());
    Mat inv_std(groups, B);
    for (int bi = 0; bi < B; ++bi)
      for (int g = 0; g < groups; ++g) {
        const auto blk = X.block(g * cg, bi * L, cg, L);
        const float mu = blk.mean();
        const float var = (blk.array() - mu).square().mean();
        const float is = 1.0f / std::sqrt(var + eps);
        inv_std(g, bi) = is;
        xhat.block(g * cg, bi * L, cg, L) = (blk.array() - mu) * is;
      }
    Mat Y = (xhat.array().colwise() * value(gamma).col(0).array()).matrix();
    Y.colwise() += value(beta).col(0);
    Var out = push(std::move(Y), L, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, gamma, beta, groups, cg, L, B, xhat = std::move(xhat),
                                 inv_std = std::move(inv_std)] {
        const Mat& G = nodes_[out.id].grad;
        grad_of(gamma).col(0) += (G.array() * xhat.array()).rowwise().sum().matrix();
        grad_of(beta).col(0) += G.rowwise().sum();
        const Mat dxhat = (G.array().colwise() * value(gamma).col(0).array()).matrix();
        Mat& dx = grad_of(x);
        for (int bi = 0; bi < B; ++bi)
          for (int g = 0; g < groups; ++g) {
            const auto dh = dxhat.block(g * cg, bi * L, cg, L).array();
            const auto xh = xhat.block(g * cg, bi * L, cg, L).array();
            const float m1 = dh.mean(), m2 = (dh * xh).mean();
            dx.block(g * cg, bi * L, cg, L).array() += inv_std(g, bi) * (dh - m1 - xh * m2);
          }
      };
    }
    return out;
  }

  /// Mean over time of a sequence, giving a dense (C x B) result.
  Var time_mean(Var x) {
    const int L = len(x), B = batch(x);
    const Mat& X = value(x);
    Mat Y(X.rows(), B);
    for (int bi = 0; bi < B; ++bi) Y.col(bi) = X.middleCols(bi * L, L).rowwise().mean();
    Var out = push(std::move(Y), 0, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, L, B] {
        const Mat& G = nodes_[out.id].grad;
        Mat& dx = grad_of(x);
        for (int bi = 0; bi < B; ++bi) dx.middleCols(bi * L, L).colwise() += G.col(bi) / static_cast<float>(L);
      };
    }
    return out;
  }

  Var concat_rows(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& Bm = value(b);
    Mat Y(A.rows() + Bm.rows(), A.cols());
    Y.topRows(A.rows()) = A;
    Y.bottomRows(Bm.rows()) = Bm;
    const auto ra = A.rows(), rb = Bm.rows();
    Var out = push(std::move(Y), len(a), batch(a), nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, a, b, ra, rb] {
        const Mat& G = nodes_[out.id].grad;
        grad_of(a) += G.topRows(ra);
        grad_of(b) += G.bottomRows(rb);
      };
    }
    return out;
  }

  Var silu(Var x) {
    const Mat& X = value(x);
    Mat sig = (1.0f + (-X.array()).exp()).inverse().matrix();
    Mat Y = (X.array() * sig.array()).matrix();
    Var out = push(std::move(Y), len(x), batch(x), nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, sig = std::move(sig)] {
        const auto& X = value(x).array();
        auto d = sig.array() * (1.0f + X * (1.0f - sig.array()));
        grad_of(x).array() += nodes_[out.id].grad.array() * d;
      };
    }
    return out;
  }

  Var relu(Var x) {
    Mat Y = value(x).cwiseMax(0.0f);
    Var out = push(std::move(Y), len(x), batch(x), nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x] {
        grad_of(x).array() += nodes_[out.id].grad.array() * (value(x).array() > 0.0f).cast<float>();
      };
    }
    return out;
  }

  Var tanh(Var x) {
    Mat Y = value(x).array().tanh().matrix();
    Var out = push(std::move(Y), len(x), batch(x), nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x] {
        const auto& Y = nodes_[out.id].value.array();
        grad_of(x).array() += nodes_[out.id].grad.array() * (1.0f - Y * Y);
      };
    }
    return out;
  }

  /// Replaces the sequence of every sample b with mask[b] set by the
  /// learned plane `null_plane` (channels x len).
  Var substitute(Var cond, Var null_plane, const std::vector<bool>& mask) {
    const int L = len(cond), B = batch(cond);
    Mat Y = value(cond);
    const Mat& N = value(null_plane);
    for (int bi = 0; bi < B; ++bi)
      if (mask[bi]) Y.middleCols(bi * L, L) = N;
    Var out = push(std::move(Y), L, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, cond, null_plane, mask, L, B] {
        const Mat& G = nodes_[out.id].grad;
        for (int bi = 0; bi < B; ++bi) {
          if (mask[bi])
            grad_of(null_plane) += G.middleCols(bi * L, L);
          else
            grad_of(cond).middleCols(bi * L, L) += G.middleCols(bi * L, L);
        }
      };
    }
    return out;
  }

  /// Sequence (C x B*L) to dense (C*L x B), channel index fastest.
  Var flatten(Var x) {
    const int L = len(x), B = batch(x);
    const auto C = value(x).rows();
    Mat Y(C * L, B);
    for (int bi = 0; bi < B; ++bi)
      Y.col(bi) = Eigen::Map<const Vec>(value(x).col(bi * L).data(), C * L);
    Var out = push(std::move(Y), 0, B, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, x, L, B, C] {
        const Mat& G = nodes_[out.id].grad;
        Mat& dx = grad_of(x);
        for (int bi = 0; bi < B; ++bi)
          Eigen::Map<Vec>(dx.col(bi * L).data(), C * L) += G.col(bi);
      };
    }
    return out;
  }

  /// Mean squared error against a constant target.
  Var mse(Var pred, const Mat& target) {
    const Mat& P = value(pred);
    const float n = static_cast<float>(P.size());
    Mat diff = P - target;
    Mat Y(1, 1);
    Y(0, 0) = diff.squaredNorm() / n;
    Var out = push(std::move(Y), 0, 1, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, pred, n, diff = std::move(diff)] {
        grad_of(pred) += (2.0f * nodes_[out.id].grad(0, 0) / n) * diff;
      };
    }
    return out;
  }

  /// Mean softmax cross-entropy; logits are (classes x batch).
  Var cross_entropy(Var logits, const std::vector<int>& labels) {
    const Mat& Z = value(logits);
    Mat prob(Z.rows(), Z.cols());
    double loss = 0.0;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      const float mx = Z.col(j).maxCoeff();
      Vec e = (Z.col(j).array() - mx).exp().matrix();
      const float s = e.sum();
      prob.col(j) = e / s;
      loss -= std::log(std::max(prob(labels[j], j), 1e-30f));
    }
    const float n = static_cast<float>(Z.cols());
    Mat Y(1, 1);
    Y(0, 0) = static_cast<float>(loss / n);
    Var out = push(std::move(Y), 0, 1, nullptr);
    if (track_) {
      nodes_[out.id].backward = [this, out, logits, labels, n, prob = std::move(prob)]() mutable {
        for (Eigen::Index j = 0; j < prob.cols(); ++j) prob(labels[j], j) -= 1.0f;
        grad_of(logits) += (nodes_[out.id].grad(0, 0) / n) * prob;
      };
    }
    return out;
  }

  void backward(Var loss) {
    if (!track_) throw PreconditionError("nn", "backward called on a tape without gradient tracking");
    grad_of(loss).setOnes();
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    int len = 0;
    int batch = 0;
    std::function<void()> backward;
  };

  Var push(Mat v, int len, int batch, std::function<void()> bw) {
    nodes_.push_back(Node{std::move(v), Mat(), len, batch, std::move(bw)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Mat& grad_of(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool track_;
  std::vector<Node> nodes_;
};

}  // namespace strata::nn
