#pragma once

// Linear-beta noise schedule, the strided sampling subsequence and the
// closed-form coefficients of one accelerated reverse step.
//
// Index convention: alpha_bar(0) = 1 (clean data); steps run 1..T.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "strata/core/error.hpp"

namespace strata::diffusion {

struct NoiseSchedule {
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::vector<double> betas;       // betas[t], t in 1..T (betas[0] unused, 0)
  std::vector<double> alphas;      // 1 - beta
  std::vector<double> alpha_bars;  // cumulative product, alpha_bars[0] = 1

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t)); }
  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t)); }
  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t)); }
};

inline NoiseSchedule make_linear_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
  if (T < 1) throw ParameterError("diffusion", "schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_end < 1.0 && beta_start <= beta_end))
    throw ParameterError("diffusion", "betas must satisfy 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  s.betas.assign(static_cast<std::size_t>(T) + 1, 0.0);
  s.alphas.assign(static_cast<std::size_t>(T) + 1, 1.0);
  s.alpha_bars.assign(static_cast<std::size_t>(T) + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    const double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (T - 1);
    s.betas[t] = b;
    s.alphas[t] = 1.0 - b;
    s.alpha_bars[t] = s.alpha_bars[t - 1] * (1.0 - b);
  }
  return s;
}

/// Uniformly spaced subsequence of [1..T] of length S ending at T:
/// tau_i = floor(i * T / S), i = 1..S.
inline std::vector<int> make_tau(int T, int S) {
  if (S < 1 || S > T) throw ParameterError("diffusion", "inference steps must lie in [1, T]");
  std::vector<int> tau(static_cast<std::size_t>(S));
  for (int i = 1; i <= S; ++i) tau[static_cast<std::size_t>(i - 1)] = static_cast<int>((static_cast<long long>(i) * T) / S);
  return tau;
}

/// Subsequence used when reverse sampling starts from a partially diffused
/// x_{t0}: the entries of `tau` below t0, followed by t0 itself.
inline std::vector<int> truncate_tau(const std::vector<int>& tau, int t0) {
  std::vector<int> out;
  for (int t : tau)
    if (t < t0) out.push_back(t);
  out.push_back(t0);
  return out;
}

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline Eigen::MatrixXd forward_diffuse(const Eigen::MatrixXd& x0, int t, const Eigen::MatrixXd& eps,
                                       const NoiseSchedule& s) {
  if (t < 1 || t > s.T) throw RangeError("diffusion", "timestep " + std::to_string(t) + " outside [1, T]");
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw SchemaError("diffusion", "noise shape mismatch");
  const double ab = s.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

/// Coefficients of the step x_t -> x_prev given a noise estimate e:
///   x0_hat = (x_t - sqrt(1 - abar_t) e) / sqrt(abar_t)
///   x_prev = sqrt(abar_prev) x0_hat + dir * e + sigma * z
struct StepCoefficients {
  double sqrt_ab_t = 1.0;
  double sqrt_1m_ab_t = 0.0;
  double sqrt_ab_prev = 1.0;
  double dir = 0.0;
  double sigma = 0.0;
  double sigma_ref = 0.0;
};

/// Reference standard deviation of the accelerated sampler. The default is
/// sqrt((1 - abar_prev) / (1 - abar_t)) * sqrt(1 - abar_t / abar_prev); the
/// product form multiplies the two (1 - abar) factors instead of dividing.
inline double sigma_ref(const NoiseSchedule& s, int t, int prev, bool product_form = false) {
  const double ab_t = s.alpha_bar(t), ab_p = s.alpha_bar(prev);
  const double ratio = std::max(0.0, 1.0 - ab_t / ab_p);
  const double lead = product_form ? (1.0 - ab_p) * (1.0 - ab_t) : (1.0 - ab_p) / (1.0 - ab_t);
  return std::sqrt(std::max(0.0, lead)) * std::sqrt(ratio);
}

inline StepCoefficients step_coefficients(const NoiseSchedule& s, int t, int prev, double eta,
                                          bool product_form = false) {
  if (t < 1 || t > s.T || prev < 0 || prev >= t)
    throw RangeError("diffusion", "invalid step " + std::to_string(t) + " -> " + std::to_string(prev));
  StepCoefficients c;
  const double ab_t = s.alpha_bar(t), ab_p = s.alpha_bar(prev);
  c.sqrt_ab_t = std::sqrt(ab_t);
  c.sqrt_1m_ab_t = std::sqrt(1.0 - ab_t);
  c.sqrt_ab_prev = std::sqrt(ab_p);
  c.sigma_ref = sigma_ref(s, t, prev, product_form);
  c.sigma = eta * c.sigma_ref;
  c.dir = std::sqrt(std::max(0.0, 1.0 - ab_p - c.sigma * c.sigma));
  return c;
}

/// x0_hat = (x_t - sqrt(1 - abar_t) e) / sqrt(abar_t).
inline Eigen::MatrixXd predicted_x0(const StepCoefficients& k, const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& e) {
  return (x_t - k.sqrt_1m_ab_t * e) / k.sqrt_ab_t;
}

/// Deterministic part of the step: sqrt(abar_prev) x0_hat + dir e. The
/// sampler adds sigma z on top.
inline Eigen::MatrixXd step_mean(const StepCoefficients& k, const Eigen::MatrixXd& x_t, const Eigen::MatrixXd& e) {
  return k.sqrt_ab_prev * predicted_x0(k, x_t, e) + k.dir * e;
}

}  // namespace strata::diffusion
