#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "strata/scae/scae.hpp"
#include "support.hpp"

using namespace strata;

namespace {

scae::ScaeConfig quick(std::uint64_t seed, int epochs = 3) {
  scae::ScaeConfig c;
  c.seed = seed;
  c.epochs = epochs;
  return c;
}

std::vector<nn::Mat> weights(scae::ScaeStack& s) {
  std::vector<nn::Mat> w;
  for (auto* p : s.parameters()) w.push_back(p->value);
  return w;
}

}  // namespace

TEST(Scae, ZeroDatasetIsReconstructedExactly) {
  dataio::Dataset ds = fixture::tiny_corpus();
  for (auto& w : ds.windows) w.samples.setZero();
  const auto stack = scae::train_stack(ds, quick(1, 5));
  for (const auto& h : stack.training_history) EXPECT_LT(*std::min_element(h.train_mse.begin(), h.train_mse.end()), 1e-6);
}

TEST(Scae, TrainingNeverReadsLabels) {
  dataio::Dataset shuffled = fixture::tiny_corpus();
  std::mt19937 g(3);
  std::vector<int> acts = shuffled.activity_labels();
  std::shuffle(acts.begin(), acts.end(), g);
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    shuffled.windows[i].activity = acts[i];
    shuffled.windows[i].attributes["gender"] = 1 - shuffled.windows[i].attributes["gender"];
  }
  auto a = scae::train_stack(fixture::tiny_corpus(), quick(4, 2));
  auto b = scae::train_stack(shuffled, quick(4, 2));
  const auto wa = weights(a), wb = weights(b);
  ASSERT_EQ(wa.size(), wb.size());
  for (std::size_t i = 0; i < wa.size(); ++i) EXPECT_TRUE(wa[i] == wb[i]);
}

TEST(Scae, SameSeedSameStackDifferentSeedDifferentStack) {
  auto a = scae::train_stack(fixture::tiny_corpus(), quick(4, 2));
  auto b = scae::train_stack(fixture::tiny_corpus(), quick(4, 2));
  auto c = scae::train_stack(fixture::tiny_corpus(), quick(5, 2));
  for (std::size_t u = 0; u < a.training_history.size(); ++u)
    EXPECT_NEAR(a.training_history[u].val_mse.back(), b.training_history[u].val_mse.back(), 1e-6);
  EXPECT_TRUE(weights(a).front() == weights(b).front());
  EXPECT_FALSE(weights(a).front() == weights(c).front());
}

TEST(Scae, LossCurvesDecreaseAfterSmoothing) {
  auto spec = dataio::default_corpus_spec(2);
  spec.n_subjects = 4;
  spec.activities.resize(4);
  const auto ds = fixture::normalized(dataio::synthesize(spec));
  auto cfg = quick(8, 20);
  cfg.patience = 100;
  const auto stack = scae::train_stack(ds, cfg);
  for (const auto& h : stack.training_history) {
    std::vector<double> smooth;
    for (std::size_t e = 0; e + 5 <= h.train_mse.size(); e += 5)
      smooth.push_back((h.train_mse[e] + h.train_mse[e + 1] + h.train_mse[e + 2] + h.train_mse[e + 3] + h.train_mse[e + 4]) / 5.0);
    for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1] + 1e-9);
  }
}

TEST(Scae, LevelZeroIsTheWindowItself) {
  const auto& w = fixture::tiny_corpus().windows.front();
  const auto z = scae::extract(fixture::tiny_stack(), w, 0);
  EXPECT_TRUE(z.values == w.samples);
  EXPECT_EQ(z.active_length, 100);
  EXPECT_EQ(z.source_window_id, w.window_id);
}

TEST(Scae, FeaturesKeepTheWindowShapeWithShrinkingActiveRegion) {
  const auto& stack = fixture::tiny_stack();
  const auto& w = fixture::tiny_corpus().windows[7];
  int prev_nonzero = static_cast<int>(w.samples.size());
  const int expected_len[] = {100, 50, 25, 12};
  for (int i = 0; i <= 3; ++i) {
    const auto z = scae::extract(stack, w, i);
    EXPECT_EQ(z.values.rows(), 100);
    EXPECT_EQ(z.values.cols(), 9);
    EXPECT_EQ(z.active_length, expected_len[i]);
    EXPECT_EQ(z.values.bottomRows(100 - z.active_length).cwiseAbs().maxCoeff() == 0.0 || z.active_length == 100, true);
    const int nonzero = static_cast<int>((z.values.array() != 0.0).count());
    EXPECT_LE(nonzero, prev_nonzero);
    prev_nonzero = nonzero;
    EXPECT_EQ(z.mask().sum(), z.active_entries());
  }
}

TEST(Scae, BatchedExtractionMatchesSingleWindows) {
  const auto& ds = fixture::tiny_corpus();
  const auto all = scae::extract_all(fixture::tiny_stack(), ds, 3);
  for (std::size_t j : {0u, 17u, 99u}) {
    const auto one = scae::extract(fixture::tiny_stack(), ds.windows[j], 3);
    // inference products run per sample, so batching cannot change a value
    EXPECT_TRUE(all[j].values == one.values);
  }
}

TEST(Scae, ContractViolations) {
  const auto& stack = fixture::tiny_stack();
  const auto& w = fixture::tiny_corpus().windows.front();
  EXPECT_THROW(scae::extract(stack, w, 4), RangeError);
  EXPECT_THROW(scae::extract(stack, w, -1), RangeError);
  dataio::SensorWindow bad = w;
  bad.samples.conservativeResize(80, 9);
  EXPECT_THROW(scae::extract(stack, bad, 1), SchemaError);
  EXPECT_THROW(scae::train_stack(dataio::synthesize(dataio::default_corpus_spec()), quick(1)), PreconditionError);
  dataio::Dataset empty = fixture::tiny_corpus().metadata_only();
  EXPECT_THROW(scae::train_stack(empty, quick(1)), EmptyDatasetError);
  auto deep = quick(1);
  deep.depth = 7;
  EXPECT_THROW(scae::train_stack(fixture::tiny_corpus(), deep), ParameterError);
}

TEST(Scae, SaveLoadRoundTrip) {
  fixture::TempDir dir("stack");
  auto stack = fixture::tiny_stack();
  scae::save_stack(dir / "s.bin", stack);
  const auto back = scae::load_stack(dir / "s.bin");
  ASSERT_EQ(back.depth(), 3);
  const auto& w = fixture::tiny_corpus().windows[3];
  EXPECT_TRUE(scae::extract(back, w, 3).values == scae::extract(stack, w, 3).values);
  EXPECT_EQ(back.training_history.size(), 3u);
}
