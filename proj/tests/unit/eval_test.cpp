#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "strata/eval/report.hpp"
#include "support.hpp"

using namespace strata;
using namespace strata::eval;

namespace {

const dataio::Dataset& full_corpus() {
  static const dataio::Dataset ds = fixture::normalized(dataio::synthesize(dataio::default_corpus_spec(7)));
  return ds;
}

ClassifierConfig quick_classifier() {
  ClassifierConfig c;
  c.epochs = 3;
  c.folds = 2;
  return c;
}

std::vector<double> sinusoid(int cycles, double freq_hz, double rate_hz, double offset = 9.81) {
  const int n = static_cast<int>(std::lround(cycles / freq_hz * rate_hz));
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[i] = offset + std::sin(2.0 * std::numbers::pi * freq_hz * i / rate_hz - std::numbers::pi / 2);
  return x;
}

}  // namespace

// -------------------------------------------------------------------- metrics

TEST(Metrics, UtilityRatioExamples) {
  EXPECT_NEAR(utility_ratio(0.967, 0.948), 0.980, 5e-4);
  EXPECT_DOUBLE_EQ(utility_ratio(0.73, 0.73), 1.0);
  EXPECT_DOUBLE_EQ(utility_ratio(0.90, 0.45), 0.50);
  EXPECT_THROW(utility_ratio(0.0, 0.5), UndefinedUtilityError);
}

TEST(Metrics, ChanceBandAndVerdicts) {
  const auto b2 = chance_band(2);
  EXPECT_DOUBLE_EQ(b2.lo, 0.4);
  EXPECT_DOUBLE_EQ(b2.hi, 0.6);
  EXPECT_THROW(chance_band(1), ParameterError);
  EXPECT_EQ(anonymity_verdict(0.528, 2), AnonymityVerdict::anonymized);
  EXPECT_EQ(anonymity_verdict(0.93, 2), AnonymityVerdict::leaking);
  EXPECT_EQ(anonymity_verdict(0.2, 2), AnonymityVerdict::reversible);
  EXPECT_STREQ(to_string(AnonymityVerdict::reversible), "reversible");
}

// A defense whose attacker is right only 20% of the time is deterministic
// enough to be inverted: flipping every decision is right 80% of the time.
TEST(Metrics, BelowChanceAttackIsReversible) {
  std::vector<int> truth, pred;
  for (int i = 0; i < 500; ++i) {
    truth.push_back(i % 2);
    pred.push_back(i % 5 == 0 ? i % 2 : 1 - i % 2);
  }
  const double acc = accuracy(pred, truth);
  EXPECT_NEAR(acc, 0.2, 1e-12);
  EXPECT_EQ(anonymity_verdict(acc, 2), AnonymityVerdict::reversible);
  for (auto& p : pred) p = 1 - p;
  EXPECT_NEAR(accuracy(pred, truth), 0.8, 1e-12);
}

TEST(Metrics, Spearman) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_EQ(average_ranks({5, 1, 5, 3}), (std::vector<double>{3.5, 1, 3.5, 2}));
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}), 0.8, 1e-12);
  EXPECT_THROW(spearman({1}, {1}), ParameterError);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), NumericalError);
}

// ---------------------------------------------------------------- classifier

TEST(Classifier, RawCorpusActivityIsSeparable) {
  const auto r = cross_validate(full_corpus(), Target::activity(), ClassifierConfig{}, 3);
  EXPECT_GE(r.mean_accuracy, 0.90);
  EXPECT_EQ(r.folds, 5);
  int total = 0;
  for (const auto& row : r.confusion)
    for (int v : row) total += v;
  EXPECT_EQ(total, static_cast<int>(full_corpus().size()));
}

TEST(Classifier, PermutedLabelsScoreNearChance) {
  dataio::Dataset ds = full_corpus();
  auto y = ds.activity_labels();
  std::mt19937 g(1);
  std::shuffle(y.begin(), y.end(), g);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.windows[i].activity = y[i];
  const auto r = cross_validate(ds, Target::activity(), ClassifierConfig{}, 3);
  EXPECT_NEAR(r.mean_accuracy, 1.0 / 6.0, 0.07);
}

TEST(Classifier, SameSeedSameResultAndMissingAttribute) {
  const auto& ds = fixture::tiny_corpus();
  const auto a = cross_validate(ds, Target::activity(), quick_classifier(), 4);
  const auto b = cross_validate(ds, Target::activity(), quick_classifier(), 4);
  EXPECT_EQ(a.fold_accuracy, b.fold_accuracy);
  EXPECT_THROW(cross_validate(ds, Target::attr("age"), quick_classifier(), 4), LabelError);
  EXPECT_NE(quick_classifier().hash(), ClassifierConfig{}.hash());
}

// -------------------------------------------------------------------- privacy

TEST(Privacy, IdentitySanitizerEqualsRawAttributeAccuracy) {
  const auto& ds = fixture::tiny_corpus();
  const auto attack = reidentification_attack(identity_sanitizer(), ds, "gender", quick_classifier(), 5);
  const auto raw = cross_validate(ds, Target::attr("gender"), quick_classifier(), 5);
  EXPECT_EQ(attack.cv.mean_accuracy, raw.mean_accuracy);
  EXPECT_EQ(attack.verdict, anonymity_verdict(raw.mean_accuracy, 2));
}

TEST(Privacy, SanitizerMustKeepWindowsAndLabels) {
  const auto& ds = fixture::tiny_corpus();
  Sanitizer drop = [](const dataio::Dataset& d) {
    auto out = d;
    out.windows.pop_back();
    return out;
  };
  Sanitizer relabel = [](const dataio::Dataset& d) {
    auto out = d;
    out.windows[0].attributes["gender"] = 1 - out.windows[0].attributes["gender"];
    return out;
  };
  EXPECT_THROW(reidentification_attack(drop, ds, "gender", quick_classifier(), 1), SchemaError);
  EXPECT_THROW(reidentification_attack(relabel, ds, "gender", quick_classifier(), 1), LabelError);
  EXPECT_THROW(reidentification_attack(Sanitizer{}, ds, "gender", quick_classifier(), 1), PreconditionError);
}

TEST(Privacy, LaplaceDrawsHaveTheRequestedScale) {
  Rng rng(3);
  double abs_sum = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = laplace(rng, 0.7);
    abs_sum += std::abs(v);
    sum += v;
  }
  EXPECT_NEAR(abs_sum / n, 0.7, 0.01);  // E|X| = b
  EXPECT_NEAR(sum / n, 0.0, 0.01);
}

TEST(Privacy, LaplaceBaselineScalesAndLimits) {
  const auto& ds = fixture::tiny_corpus();
  EXPECT_THROW(laplace_baseline(ds, {0.1, 0.0}, 1), ParameterError);
  EXPECT_THROW(laplace_baseline(ds, {-0.3}, 1), ParameterError);
  const auto tiny = laplace_baseline(ds, {1e-12}, 1).front();
  for (std::size_t i = 0; i < ds.size(); ++i)
    ASSERT_LE((tiny.windows[i].samples - ds.windows[i].samples).cwiseAbs().maxCoeff(), 1e-9);
  // Laplace variance is 2 b^2; the corpus channels have unit spread.
  const auto noisy = laplace_baseline(ds, {0.5}, 2).front();
  double sq = 0.0, n = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    sq += (noisy.windows[i].samples - ds.windows[i].samples).squaredNorm();
    n += static_cast<double>(ds.windows[i].samples.size());
  }
  EXPECT_NEAR(sq / n, 2.0 * 0.25, 0.02);
  EXPECT_EQ(default_laplace_scales(), (std::vector<double>{0.1, 0.3, 0.7, 0.9}));
}

// ------------------------------------------------------------------ pedometer

TEST(Pedometer, CountsCyclesOfASinusoid) {
  EXPECT_EQ(count_steps(sinusoid(200, 1.8, 50.0), 50.0), 200);
  EXPECT_EQ(count_steps(sinusoid(37, 2.5, 50.0), 50.0), 37);
}

TEST(Pedometer, FlatAndEmptySignalsHaveNoSteps) {
  EXPECT_EQ(count_steps(std::vector<double>(500, 0.0), 50.0), 0);
  EXPECT_EQ(count_steps(std::vector<double>{}, 50.0), 0);
  EXPECT_EQ(count_steps(fixture::tiny_corpus().metadata_only()), 0);
}

TEST(Pedometer, RefractoryGapMergesCloseCandidates) {
  // 6 Hz ripple on a 1 Hz cadence: smoothing and the gap leave one peak per
  // cadence cycle.
  std::vector<double> x;
  for (int i = 0; i < 500; ++i) {
    const double t = i / 50.0;
    x.push_back(std::sin(2 * std::numbers::pi * t - std::numbers::pi / 2) + 0.3 * std::sin(2 * std::numbers::pi * 6 * t));
  }
  EXPECT_EQ(count_steps(x, 50.0), 10);
  PeakDetectorConfig strict;
  strict.min_height = 10.0;
  EXPECT_EQ(count_steps(x, 50.0, strict), 0);
}

TEST(Pedometer, RawSyntheticWalkIsCountedExactly) {
  const auto spec = dataio::default_corpus_spec(7);
  const auto walk = dataio::synthesize_walk(spec, 0, 600, 0, 3);
  EXPECT_EQ(count_steps(walk.windows), 600);
  const auto stats = dataio::fit_normalization(walk.windows);
  EXPECT_EQ(count_steps(dataio::normalize(walk.windows, stats)), 600);
  const auto gyro = select_channels(walk.windows, modality_channels(walk.windows, "gyro"));
  EXPECT_THROW(count_steps(gyro), PreconditionError);
  PedometerResult r;
  r.true_steps = 600;
  r.counted_steps["granu1"] = 630;
  EXPECT_NEAR(r.error_rate("granu1"), 0.05, 1e-12);
}

// ------------------------------------------------------------------- ablation

TEST(Ablation, ModalitySubsets) {
  const auto& ds = fixture::tiny_corpus();
  EXPECT_EQ(modality_channels(ds, "acc"), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(modality_channels(ds, "gyro"), (std::vector<int>{3, 4, 5}));
  EXPECT_EQ(modality_channels(ds, "mag"), (std::vector<int>{6, 7, 8}));
  EXPECT_EQ(modality_channels(ds, "all").size(), 9u);
  EXPECT_THROW(modality_channels(ds, "barometer"), ConfigError);
  const auto acc = select_channels(ds, modality_channels(ds, "acc"));
  EXPECT_EQ(acc.channels(), 3);
  EXPECT_TRUE(acc.windows[4].samples.col(2) == ds.windows[4].samples.col(2));
  EXPECT_EQ(acc.normalization_stats->size(), 3u);
}

TEST(Ablation, AllSubsetMatchesTheStandardEvaluation) {
  const auto& ds = fixture::tiny_corpus();
  const auto recon = laplace_baseline(ds, {0.3}, 4).front();
  const auto res = modality_ablation(ds, recon, {"all"}, quick_classifier(), 6);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].raw_accuracy, cross_validate(ds, Target::activity(), quick_classifier(), 6).mean_accuracy);
  EXPECT_EQ(res[0].recon_accuracy, cross_validate(recon, Target::activity(), quick_classifier(), 6).mean_accuracy);
  EXPECT_THROW(modality_ablation(ds, recon, {"acc", "sonar"}, quick_classifier(), 6), ConfigError);
}

// --------------------------------------------------------------------- report

TEST(Report, RowsMustShareOneClassifierConfiguration) {
  EvaluationReport rep;
  ReportRow a;
  a.method = "raw";
  a.activity.config_hash = 1;
  rep.add_row(a);
  ReportRow b;
  b.method = "granu1";
  b.activity.config_hash = 2;
  EXPECT_THROW(rep.add_row(b), SchemaError);
  EXPECT_THROW((void)rep.row("granu3"), RangeError);
  EXPECT_EQ(rep.row("raw").method, "raw");
}

TEST(Report, EvaluateProducesVersionedJson) {
  const auto& ds = fixture::tiny_corpus();
  const auto noisy = laplace_baseline(ds, {0.5}, 4).front();
  auto bad = ds;
  bad.windows.pop_back();
  EXPECT_THROW(evaluate(ds, {{"granu1", &bad}}, {"gender"}, quick_classifier(), 2), SchemaError);
  const auto rep = evaluate(ds, {{"granu1", &noisy}}, {"gender"}, quick_classifier(), 2);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[1].granularity, 1);
  EXPECT_NEAR(*rep.rows[1].utility_ratio, rep.rows[1].activity.mean_accuracy / rep.rows[0].activity.mean_accuracy, 1e-12);
  const auto j = to_json(rep);
  EXPECT_EQ(j["format"], "strata.evaluation_report");
  EXPECT_EQ(j["version"], kReportFormatVersion);
  EXPECT_EQ(j["rows"][1]["method"], "granu1");
  EXPECT_TRUE(j["rows"][0]["granularity"].is_null());
  EXPECT_EQ(j["rows"][0]["per_activity"].size(), 6u);
  EXPECT_TRUE(j["rows"][0]["attributes"]["gender"].contains("verdict"));
}

TEST(Report, PerClassAccuracyIsRowRecall) {
  EXPECT_EQ(per_class_accuracy({{3, 1, 0}, {0, 0, 0}, {2, 0, 2}}), (std::vector<double>{0.75, 0.0, 0.5}));
}
