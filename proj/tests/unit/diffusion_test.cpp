#include <gtest/gtest.h>

#include "strata/diffusion/model.hpp"
#include "support.hpp"

using namespace strata;
using namespace strata::diffusion;

namespace {

Eigen::MatrixXd random_window(Rng& rng, int L = 100, int C = 9) { return standard_normal_window(L, C, rng); }

DiffusionConfig tiny_config(std::uint64_t seed) {
  DiffusionConfig cfg;
  cfg.T = 100;
  cfg.epochs = 1;
  cfg.draws_per_window = 1;
  cfg.base_width = 8;
  cfg.cond_width = 8;
  cfg.time_dim = 16;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

// ------------------------------------------------------------------- schedule

TEST(Schedule, LinearBetasAndMonotoneAlphaBar) {
  const auto s = make_linear_schedule();
  EXPECT_EQ(s.T, 1000);
  EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
  EXPECT_NEAR(s.beta(1000), 0.02, 1e-15);
  EXPECT_DOUBLE_EQ(s.alpha_bar(0), 1.0);
  for (int t = 1; t <= 1000; ++t) {
    ASSERT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    ASSERT_NEAR(s.alpha_bar(t), s.alpha_bar(t - 1) * (1.0 - s.beta(t)), 1e-15);
  }
  EXPECT_LT(s.alpha_bar(1000), 0.05);
  EXPECT_THROW(make_linear_schedule(0), ParameterError);
  EXPECT_THROW(make_linear_schedule(10, 0.5, 0.1), ParameterError);
}

TEST(Schedule, TauIsUniformAndEndsAtT) {
  const auto tau = make_tau(1000, 100);
  ASSERT_EQ(tau.size(), 100u);
  EXPECT_EQ(tau.front(), 10);
  EXPECT_EQ(tau.back(), 1000);
  EXPECT_EQ(make_tau(1000, 3), (std::vector<int>{333, 666, 1000}));
  EXPECT_EQ(make_tau(1000, 1), std::vector<int>{1000});
  EXPECT_EQ(make_tau(5, 5), (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_THROW(make_tau(1000, 0), ParameterError);
  EXPECT_THROW(make_tau(10, 11), ParameterError);
}

TEST(Schedule, TruncatedTauStartsAtTheNoiseDepth) {
  const auto tau = make_tau(1000, 100);
  const auto a = truncate_tau(tau, 300);
  EXPECT_EQ(a.size(), 30u);
  EXPECT_EQ(a.back(), 300);
  EXPECT_EQ(a[a.size() - 2], 290);
  const auto b = truncate_tau(tau, 305);
  EXPECT_EQ(b.back(), 305);
  EXPECT_EQ(b[b.size() - 2], 300);
  EXPECT_EQ(truncate_tau(tau, 1), std::vector<int>{1});
}

// -------------------------------------------------------------------- forward

TEST(Forward, IdentityWhenNoNoiseHasAccumulated) {
  NoiseSchedule s;
  s.T = 2;
  s.betas = {0.0, 0.0, 0.1};
  s.alphas = {1.0, 1.0, 0.9};
  s.alpha_bars = {1.0, 1.0, 0.9};
  Rng rng(1);
  const auto x0 = random_window(rng), eps = random_window(rng);
  EXPECT_TRUE(forward_diffuse(x0, 1, eps, s) == x0);
}

TEST(Forward, ZeroSignalGivesScaledNoise) {
  const auto s = make_linear_schedule();
  Rng rng(2);
  const auto eps = random_window(rng);
  const auto xt = forward_diffuse(Eigen::MatrixXd::Zero(100, 9), 400, eps, s);
  EXPECT_LE((xt - std::sqrt(1.0 - s.alpha_bar(400)) * eps).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forward, RangeAndShapeErrors) {
  const auto s = make_linear_schedule();
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, 2);
  EXPECT_THROW(forward_diffuse(x, 0, x, s), RangeError);
  EXPECT_THROW(forward_diffuse(x, 1001, x, s), RangeError);
  EXPECT_THROW(forward_diffuse(x, 5, Eigen::MatrixXd::Zero(3, 2), s), SchemaError);
}

// Running the Markov chain x_t = sqrt(alpha_t) x_{t-1} + sqrt(beta_t) n_t for
// 200 steps must match the closed form in distribution. Each draw is a
// 10 x 9 window; moments are pooled over its entries.
TEST(Forward, MarkovChainMatchesClosedForm) {
  const auto s = make_linear_schedule();
  const double x0 = 1.5;
  const int t = 200, draws = 2000, entries = 90;
  Rng rng(3);
  double sum = 0.0, sq = 0.0;
  for (int d = 0; d < draws; ++d)
    for (int e = 0; e < entries; ++e) {
      double x = x0;
      for (int k = 1; k <= t; ++k) x = std::sqrt(s.alpha(k)) * x + std::sqrt(s.beta(k)) * rng.normal();
      sum += x;
      sq += x * x;
    }
  const double n = static_cast<double>(draws) * entries;
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_NEAR(mean, std::sqrt(s.alpha_bar(t)) * x0, 0.02 * std::sqrt(s.alpha_bar(t)) * x0);
  EXPECT_NEAR(var, 1.0 - s.alpha_bar(t), 0.02 * (1.0 - s.alpha_bar(t)));
}

// ---------------------------------------------------------------- step maths

TEST(Step, PerfectOracleRecoversCleanWindowInOneStep) {
  const auto s = make_linear_schedule();
  Rng rng(4);
  const auto x0 = random_window(rng), eps = random_window(rng);
  const auto xT = forward_diffuse(x0, s.T, eps, s);
  const auto k = step_coefficients(s, s.T, 0, 0.0);
  EXPECT_LE((step_mean(k, xT, eps) - x0).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LE((predicted_x0(k, xT, eps) - x0).cwiseAbs().maxCoeff(), 1e-5);
}

// With eta = 1 and adjacent steps the accelerated step must coincide with the
// ancestral posterior q(x_{t-1} | x_t, x0_hat), whose mean and variance are
// written out here from the schedule alone.
TEST(Step, EtaOneAdjacentStepIsTheAncestralPosterior) {
  const auto s = make_linear_schedule();
  Rng rng(5);
  const auto x_t = random_window(rng, 6, 2), e = random_window(rng, 6, 2);
  for (int t : {2, 10, 300, 999}) {
    const double ab = s.alpha_bar(t), ab_prev = s.alpha_bar(t - 1), beta = s.beta(t), alpha = s.alpha(t);
    const Eigen::MatrixXd x0 = (x_t - std::sqrt(1.0 - ab) * e) / std::sqrt(ab);
    const Eigen::MatrixXd mu = (std::sqrt(ab_prev) * beta / (1.0 - ab)) * x0 +
                               (std::sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab)) * x_t;
    const double var = (1.0 - ab_prev) / (1.0 - ab) * beta;
    const auto k = step_coefficients(s, t, t - 1, 1.0);
    EXPECT_NEAR(k.sigma * k.sigma, var, 1e-8 * std::max(1.0, var)) << "t=" << t;
    EXPECT_LE((step_mean(k, x_t, e) - mu).cwiseAbs().maxCoeff(), 1e-8) << "t=" << t;
  }
}

TEST(Step, EtaScalesSigmaAndProductFormDiffers) {
  const auto s = make_linear_schedule();
  const auto k0 = step_coefficients(s, 500, 490, 0.0), k5 = step_coefficients(s, 500, 490, 0.5),
             k1 = step_coefficients(s, 500, 490, 1.0);
  EXPECT_EQ(k0.sigma, 0.0);
  EXPECT_NEAR(k5.sigma, 0.5 * k1.sigma, 1e-15);
  EXPECT_NEAR(k1.sigma, k1.sigma_ref, 1e-15);
  const double ab_t = s.alpha_bar(500), ab_p = s.alpha_bar(490);
  EXPECT_NEAR(sigma_ref(s, 500, 490, true), std::sqrt((1 - ab_p) * (1 - ab_t) * (1 - ab_t / ab_p)), 1e-15);
  EXPECT_NE(sigma_ref(s, 500, 490, true), sigma_ref(s, 500, 490, false));
  EXPECT_THROW(step_coefficients(s, 10, 10, 0.0), RangeError);
  EXPECT_THROW(step_coefficients(s, 1001, 0, 0.0), RangeError);
}

// ------------------------------------------------------------------- training

TEST(Training, DrawsRespectNullProbabilityAndLayerPolicy) {
  Rng rng(6);
  DrawSampler all(1000, 3, LayerPolicy::all_levels, 0.3, rng);
  int nulls = 0, zeros = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto d = all.next();
    ASSERT_GE(d.t, 1);
    ASSERT_LE(d.t, 1000);
    nulls += d.null;
    zeros += d.layer == 0;
  }
  EXPECT_GE(nulls / 10000.0, 0.27);
  EXPECT_LE(nulls / 10000.0, 0.33);
  EXPECT_GT(zeros, 0);
  DrawSampler latent(1000, 3, LayerPolicy::latent_only, 0.3, rng);
  for (int i = 0; i < 1000; ++i) ASSERT_GE(latent.next().layer, 1);
}

TEST(Training, AlwaysNullNeverTouchesConditionWeights) {
  auto cfg = tiny_config(12);
  cfg.null_prob = 1.0;
  auto trained = train(fixture::tiny_corpus(), fixture::tiny_stack(), cfg);
  auto fresh = make_model(cfg, 100, 9, 3);
  const auto a = trained.net.condition_parameters(), b = fresh.net.condition_parameters();
  ASSERT_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i]->value == b[i]->value) << a[i]->name;
  // ...while the shared weights did move.
  EXPECT_FALSE(trained.net.stem.weight.value == fresh.net.stem.weight.value);
}

TEST(Training, SameSeedSameLossCurve) {
  const auto a = train(fixture::tiny_corpus(), fixture::tiny_stack(), tiny_config(13));
  const auto b = train(fixture::tiny_corpus(), fixture::tiny_stack(), tiny_config(13));
  ASSERT_EQ(a.loss_curve.size(), 1u);
  EXPECT_NEAR(a.loss_curve.back(), b.loss_curve.back(), 1e-6);
  EXPECT_TRUE(std::isfinite(a.loss_curve.back()));
}

TEST(Training, Preconditions) {
  auto cfg = tiny_config(1);
  EXPECT_THROW(train(fixture::tiny_corpus().metadata_only(), fixture::tiny_stack(), cfg), EmptyDatasetError);
  cfg.null_prob = 1.5;
  EXPECT_THROW(train(fixture::tiny_corpus(), fixture::tiny_stack(), cfg), ParameterError);
}

// ------------------------------------------------------------------- guidance

TEST(Guidance, ScaleZeroOneTwoIdentities) {
  const auto& dm = fixture::tiny_model();
  const auto z = scae::extract(fixture::tiny_stack(), fixture::tiny_corpus().windows[5], 2);
  Rng rng(7);
  for (int probe = 0; probe < 5; ++probe) {
    const auto x = random_window(rng);
    const int t = static_cast<int>(rng.integer(1, dm.schedule.T));
    const auto eu = eps_net(dm, x, t, nullptr), ec = eps_net(dm, x, t, &z);
    EXPECT_LE((guided_epsilon(dm, x, t, z, 0.0) - eu).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE((guided_epsilon(dm, x, t, z, 1.0) - ec).cwiseAbs().maxCoeff(), 1e-6);
    Eigen::MatrixXd want(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) want(i, j) = 2.0 * ec(i, j) - eu(i, j);
    EXPECT_LE((guided_epsilon(dm, x, t, z, 2.0) - want).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Guidance, NetworkOutputDoesNotDependOnBatchMates) {
  const auto& dm = fixture::tiny_model();
  const auto& ds = fixture::tiny_corpus();
  const auto z1 = scae::extract(fixture::tiny_stack(), ds.windows[1], 1);
  const auto z2 = scae::extract(fixture::tiny_stack(), ds.windows[2], 3);
  Rng rng(12);
  const auto x1 = random_window(rng), x2 = random_window(rng), x3 = random_window(rng);
  nn::Mat X(9, 300);
  X.middleCols(0, 100) = x2.transpose().cast<float>();
  X.middleCols(100, 100) = x1.transpose().cast<float>();
  X.middleCols(200, 100) = x3.transpose().cast<float>();
  const auto E = predict_noise(dm, X, {40, 17, 90}, make_conditions(dm, {&z2, &z1, nullptr}));
  const Eigen::MatrixXd alone = eps_net(dm, x1, 17, &z1);
  EXPECT_TRUE(Eigen::MatrixXd(E.middleCols(100, 100).transpose().cast<double>()) == alone);
}

TEST(Guidance, ConditionShapeAndLayerAreChecked) {
  const auto& dm = fixture::tiny_model();
  auto z = scae::extract(fixture::tiny_stack(), fixture::tiny_corpus().windows[0], 1);
  Rng rng(8);
  EXPECT_THROW(guided_epsilon(dm, random_window(rng, 50), 5, z, 1.0), SchemaError);
  z.layer_index = 9;
  EXPECT_THROW(guided_epsilon(dm, random_window(rng), 5, z, 1.0), RangeError);
}

// ------------------------------------------------------------------- sampling

TEST(Sampling, EtaZeroIsBitIdentical) {
  const auto& dm = fixture::tiny_model();
  const auto z = scae::extract(fixture::tiny_stack(), fixture::tiny_corpus().windows[1], 1);
  SamplerConfig cfg;
  cfg.inference_steps = 10;
  cfg.seed = 77;
  const auto a = sample(dm, &z, cfg), b = sample(dm, &z, cfg);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.rows(), 100);
  EXPECT_EQ(a.cols(), 9);
  EXPECT_TRUE(a.allFinite());
  cfg.seed = 78;
  EXPECT_FALSE(sample(dm, &z, cfg) == a);
}

TEST(Sampling, EtaOneStepVarianceMatchesReference) {
  const auto& dm = fixture::tiny_model();
  const auto z = scae::extract(fixture::tiny_stack(), fixture::tiny_corpus().windows[2], 1);
  const auto tau = make_tau(dm.schedule.T, 10);
  const std::size_t i = 5;
  SamplerConfig cfg;
  cfg.eta = 1.0;
  Rng rng(9);
  const auto x = random_window(rng);
  const int reps = 300;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(100, 9), sq = Eigen::MatrixXd::Zero(100, 9);
  for (int r = 0; r < reps; ++r) {
    const auto y = sample_step(dm, x, i, tau, &z, cfg, rng);
    sum += y;
    sq += y.cwiseProduct(y);
  }
  const Eigen::MatrixXd mean = sum / reps;
  const double var = ((sq / reps - mean.cwiseProduct(mean)) * reps / (reps - 1.0)).mean();
  const double ref = sigma_ref(dm.schedule, tau[i], tau[i - 1]);
  EXPECT_NEAR(var, ref * ref, 0.05 * ref * ref);
}

TEST(Sampling, InitShapeAndFiniteness) {
  const auto& dm = fixture::tiny_model();
  SamplerConfig cfg;
  cfg.inference_steps = 4;
  EXPECT_THROW(sample(dm, nullptr, cfg, Eigen::MatrixXd::Zero(10, 9)), SchemaError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(100, 9);
  bad(3, 3) = std::numeric_limits<double>::quiet_NaN();
  Rng rng(1);
  EXPECT_THROW(sample_step(dm, bad, 1, make_tau(dm.schedule.T, 4), nullptr, cfg, rng), NumericalError);
  EXPECT_THROW(sample_step(dm, bad, 9, make_tau(dm.schedule.T, 4), nullptr, cfg, rng), RangeError);
}

TEST(Checkpoint, SaveLoadPreservesPredictions) {
  fixture::TempDir dir("model");
  auto dm = fixture::tiny_model();
  save_model(dir / "m.bin", dm);
  const auto back = load_model(dir / "m.bin");
  EXPECT_EQ(back.schedule.T, 100);
  EXPECT_EQ(back.guidance_scale, dm.guidance_scale);
  EXPECT_EQ(back.loss_curve, dm.loss_curve);
  Rng rng(10);
  const auto x = random_window(rng);
  EXPECT_TRUE(eps_net(back, x, 50, nullptr) == eps_net(dm, x, 50, nullptr));
  EXPECT_THROW(load_model(dir / "missing.bin"), FormatError);
}
