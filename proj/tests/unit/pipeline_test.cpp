#include <gtest/gtest.h>

#include "strata/pipeline/reconstruct.hpp"
#include "support.hpp"

using namespace strata;
using namespace strata::pipeline;

namespace {

GranularityRequest request(int level, std::uint64_t seed = 21) {
  GranularityRequest r;
  r.level = level;
  r.sampler.inference_steps = 10;
  r.sampler.seed = seed;
  return r;
}

dataio::Dataset first(std::size_t n) {
  const auto& ds = fixture::tiny_corpus();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) idx.push_back(i * 7 % ds.size());
  return ds.subset(idx);
}

double rms(const Eigen::MatrixXd& a) { return std::sqrt(a.squaredNorm() / static_cast<double>(a.size())); }

}  // namespace

TEST(Reconstruct, WorkerCountDoesNotChangeResults) {
  const auto ds = first(70);  // three chunks
  for (int level : {0, 2}) {
    const auto a = reconstruct_dataset(ds, request(level), fixture::tiny_model(), fixture::tiny_stack(), 1);
    const auto b = reconstruct_dataset(ds, request(level), fixture::tiny_model(), fixture::tiny_stack(), 4);
    for (std::size_t i = 0; i < ds.size(); ++i) ASSERT_TRUE(a.windows[i].samples == b.windows[i].samples) << i;
  }
}

TEST(Reconstruct, EmptyDatasetGivesEmptyDataset) {
  const auto out = reconstruct_dataset(fixture::tiny_corpus().metadata_only(), request(1), fixture::tiny_model(),
                                       fixture::tiny_stack(), 2);
  EXPECT_TRUE(out.empty());
  EXPECT_EQ(out.provenance, dataio::Provenance::reconstructed);
}

TEST(Reconstruct, PreservesOrderLabelsAndIds) {
  const auto ds = first(12);
  const auto out = reconstruct_dataset(ds, request(3), fixture::tiny_model(), fixture::tiny_stack());
  ASSERT_EQ(out.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(out.windows[i].window_id, ds.windows[i].window_id);
    EXPECT_EQ(out.windows[i].activity, ds.windows[i].activity);
    EXPECT_EQ(out.windows[i].attributes, ds.windows[i].attributes);
    EXPECT_EQ(out.windows[i].subject_id, ds.windows[i].subject_id);
    EXPECT_FALSE(out.windows[i].samples == ds.windows[i].samples);
    EXPECT_TRUE(out.windows[i].samples.allFinite());
  }
  EXPECT_EQ(out.normalization_stats.has_value(), ds.normalization_stats.has_value());
  EXPECT_EQ(out.provenance, dataio::Provenance::reconstructed);
}

TEST(Reconstruct, LevelZeroConvergesToInputAsStrengthVanishes) {
  const auto& w = fixture::tiny_corpus().windows[4];
  double prev = std::numeric_limits<double>::infinity();
  for (double strength : {0.5, 0.1, 0.01}) {
    auto req = request(0);
    req.granu0_strength = strength;
    const double err = rms(reconstruct(w, req, fixture::tiny_model(), fixture::tiny_stack()).samples - w.samples);
    EXPECT_LT(err, prev) << "strength " << strength;
    prev = err;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(Reconstruct, RecordsProvenance) {
  auto req = request(0);
  req.granu0_strength = 0.3;
  const auto& w = fixture::tiny_corpus().windows[0];
  const auto r = reconstruct(w, req, fixture::tiny_model(), fixture::tiny_stack());
  EXPECT_EQ(r.granularity, 0);
  EXPECT_EQ(r.source_window_id, w.window_id);
  EXPECT_EQ(r.provenance["granu0_start_step"], 30);
  EXPECT_EQ(r.provenance["granu0_condition"], "null_token");
  EXPECT_EQ(r.provenance["inference_steps"], 10);
  EXPECT_EQ(r.provenance["window_seed"].get<std::uint64_t>(), window_seed(21, w.window_id));
  const auto r1 = reconstruct(w, request(1), fixture::tiny_model(), fixture::tiny_stack());
  EXPECT_FALSE(r1.provenance.contains("granu0_strength"));
}

TEST(Reconstruct, SeedsFollowWindowIdentity) {
  EXPECT_EQ(window_seed(5, "a"), window_seed(5, "a"));
  EXPECT_NE(window_seed(5, "a"), window_seed(5, "b"));
  EXPECT_NE(window_seed(5, "a"), window_seed(6, "a"));
  const auto& w = fixture::tiny_corpus().windows[9];
  const auto a = reconstruct(w, request(2, 1), fixture::tiny_model(), fixture::tiny_stack());
  const auto b = reconstruct(w, request(2, 1), fixture::tiny_model(), fixture::tiny_stack());
  const auto c = reconstruct(w, request(2, 2), fixture::tiny_model(), fixture::tiny_stack());
  EXPECT_TRUE(a.samples == b.samples);
  EXPECT_FALSE(a.samples == c.samples);
}

TEST(Reconstruct, Granu0StartStepIsCeilingOfStrength) {
  GranularityRequest r;
  r.granu0_strength = 0.3;
  EXPECT_EQ(granu0_start_step(r, 1000), 300);
  r.granu0_strength = 0.3004;
  EXPECT_EQ(granu0_start_step(r, 1000), 301);
  r.granu0_strength = 1e-9;
  EXPECT_EQ(granu0_start_step(r, 1000), 1);
  r.granu0_strength = 1.0;
  EXPECT_EQ(granu0_start_step(r, 1000), 1000);
}

TEST(Reconstruct, RejectsInvalidRequests) {
  const auto ds = first(3);
  const auto& dm = fixture::tiny_model();
  const auto& st = fixture::tiny_stack();
  EXPECT_THROW(reconstruct_dataset(ds, request(4), dm, st), RangeError);
  EXPECT_THROW(reconstruct_dataset(ds, request(-1), dm, st), RangeError);
  auto req = request(0);
  req.granu0_strength = 0.0;
  EXPECT_THROW(reconstruct_dataset(ds, req, dm, st), ParameterError);
  req.granu0_strength = 1.2;
  EXPECT_THROW(reconstruct(ds.windows[0], req, dm, st), ParameterError);
  EXPECT_THROW(parse_granu0_condition("maybe"), ConfigError);
  EXPECT_EQ(parse_granu0_condition("z0"), Granu0Condition::raw_feature);
}
