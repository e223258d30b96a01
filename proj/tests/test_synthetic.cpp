// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "test_util.hpp"
#include "tpareto/synthetic.hpp"

using namespace tpareto;

namespace {

GenConfig small(std::size_t n = 200, std::uint64_t seed = 1) {
  GenConfig c;
  c.n_samples = n;
  c.seed = seed;
  return c;
}

// Accuracy of the sign of the summed projections, an independent plug-in
// classifier used to probe that labels follow the features.
double projection_accuracy(const Dataset& ds) {
  long correct = 0;
  for (const auto& s : ds.samples) {
    double score = 0.0;
    auto add = [&](const std::vector<double>& v, std::size_t m) {
      for (std::size_t j = 0; j < v.size(); ++j) score += v[j] * ds.directions[m][j];
    };
    for (const auto& v : s.embeddings.text) add(v, 0);
    correct += ((score > 0) == (s.label == kLabelFake));
  }
  return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

}  // namespace

TEST(Generate, DeterministicAndBalanced) {
  const auto a = generate(small(301, 5)), b = generate(small(301, 5));
  ASSERT_EQ(a.samples.size(), 301u);
  long fake = 0;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
    EXPECT_EQ(a.samples[i].embeddings.text, b.samples[i].embeddings.text);
    EXPECT_EQ(a.samples[i].embeddings.comments, b.samples[i].embeddings.comments);
    EXPECT_EQ(a.samples[i].embeddings.like_counts, b.samples[i].embeddings.like_counts);
    fake += a.samples[i].label == kLabelFake;
  }
  EXPECT_LE(std::labs(2 * fake - 301), 1);
  EXPECT_NE(generate(small(301, 6)).samples[0].embeddings.text, a.samples[0].embeddings.text);
}

TEST(Generate, PerSampleStreamsIndependentOfOrder) {
  const GenConfig cfg = small(50, 9);
  const auto ds = generate(cfg);
  const auto dirs = signal_directions(cfg);
  for (std::size_t i : {49u, 0u, 17u}) {
    const auto inst = generate_instance(cfg, dirs, i);
    EXPECT_EQ(inst.embeddings.audio, ds.samples[i].embeddings.audio);
    EXPECT_EQ(inst.label, ds.samples[i].label);
  }
}

TEST(Generate, ShapesFollowConfig) {
  GenConfig cfg = small(20);
  cfg.include_publisher = false;
  const auto ds = generate(cfg);
  for (const auto& s : ds.samples) {
    EXPECT_EQ(s.embeddings.text.size(), cfg.text_len);
    EXPECT_EQ(s.embeddings.audio.size(), cfg.audio_len);
    EXPECT_EQ(s.embeddings.images.size(), cfg.image_count);
    EXPECT_LE(s.embeddings.comments.size(), cfg.comments_max);
    EXPECT_EQ(s.embeddings.comments.size(), s.embeddings.like_counts.size());
    for (long l : s.embeddings.like_counts) EXPECT_GE(l, 0);
    EXPECT_FALSE(s.embeddings.publisher.has_value());
  }
  for (const auto& d : ds.directions) {
    double n = 0.0;
    for (double x : d) n += x * x;
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
}

TEST(Generate, ZeroSignalCarriesNoLabelInformation) {
  GenConfig cfg = small(4000);
  cfg.informativeness = {0, 0, 0, 0};
  const double acc = projection_accuracy(generate(cfg));
  EXPECT_NEAR(acc, 0.5, 3 * std::sqrt(0.25 / 4000));
}

TEST(Generate, NoiseFreeTextIsSeparable) {
  GenConfig cfg = small(500);
  cfg.informativeness = {1, 0, 0, 0};
  cfg.noise_sigma = 0.0;
  cfg.conflict_rate = 0.0;
  EXPECT_EQ(projection_accuracy(generate(cfg)), 1.0);
}

TEST(Generate, RejectsBadConfig) {
  GenConfig cfg;
  cfg.conflict_rate = 1.5;
  EXPECT_THROW(generate(cfg), std::invalid_argument);
  cfg = GenConfig{};
  cfg.informativeness[2] = -0.1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(BayesOracle, ChanceWithoutSignal) {
  GenConfig cfg;
  cfg.informativeness = {0, 0, 0, 0};
  const auto est = bayes_oracle(cfg, 20000);
  EXPECT_NEAR(est.accuracy, 0.5, 3 * est.standard_error + 1e-12);
}

TEST(BayesOracle, PerfectSingleModality) {
  GenConfig cfg;
  cfg.informativeness = {1, 0, 0, 0};
  cfg.noise_sigma = 0.0;
  cfg.conflict_rate = 0.0;
  EXPECT_EQ(bayes_oracle(cfg, 2000).accuracy, 1.0);
}

TEST(BayesOracle, ConflictConfigInOpenInterval) {
  GenConfig cfg;
  cfg.conflict_rate = 0.3;
  const auto est = bayes_oracle(cfg, 100000);
  EXPECT_GT(est.accuracy, 0.5);
  EXPECT_LT(est.accuracy, 1.0);
  EXPECT_LT(est.standard_error, 0.005);
}

TEST(BayesOracle, MonotoneInTextInformativeness) {
  double prev = 0.0, prev_se = 0.0;
  for (double rho : {0.1, 0.3, 0.6}) {
    GenConfig cfg;
    cfg.informativeness = {rho, 0.1, 0.1, 0.1};
    cfg.conflict_rate = 0.3;
    const auto est = bayes_oracle(cfg, 20000);
    EXPECT_GE(est.accuracy + 3 * std::hypot(est.standard_error, prev_se), prev) << "rho " << rho;
    prev = est.accuracy;
    prev_se = est.standard_error;
  }
}

TEST(BayesOracle, PosteriorBeatsProjectionRule) {
  GenConfig cfg = small(3000, 4);
  cfg.conflict_rate = 0.3;
  const auto ds = generate(cfg);
  long correct = 0;
  for (const auto& s : ds.samples) {
    const double lo = posterior_log_odds(cfg, ds.directions, s);
    correct += ((lo > 0) == (s.label == kLabelFake));
  }
  EXPECT_GE(static_cast<double>(correct) / 3000.0 + 0.01, projection_accuracy(ds));
}

TEST(Split, RatioSizes) {
  const auto s = split_by_ratio(100, {0.7, 0.15, 0.15});
  EXPECT_EQ(s.train.size(), 70u);
  EXPECT_EQ(s.val.size(), 15u);
  EXPECT_EQ(s.test.size(), 15u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), 100u);
  const auto full = split_by_ratio(100, {1, 0, 0});
  EXPECT_EQ(full.train.size(), 100u);
  EXPECT_TRUE(full.val.empty());
  EXPECT_TRUE(full.test.empty());
  EXPECT_THROW(split_by_ratio(100, {0.5, 0.2, 0.2}), std::invalid_argument);
}

TEST(Split, KFoldPartition) {
  const auto folds = split_kfold(100, 5);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::size_t> all;
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 20u);
    for (auto i : f) EXPECT_TRUE(all.insert(i).second);
  }
  EXPECT_EQ(all.size(), 100u);
  const auto s = kfold_split(100, 5, 2);
  EXPECT_EQ(s.test, folds[2]);
  EXPECT_EQ(s.train.size() + s.val.size(), 80u);
}

TEST(DatasetFile, RoundTrip) {
  const auto ds = generate(small(30, 3));
  const auto path = std::filesystem::temp_directory_path() / "tpareto_ds_test.jsonl";
  write_dataset(ds, path.string());
  const auto back = read_dataset(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back.config, ds.config);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].embeddings.text, ds.samples[i].embeddings.text);
    EXPECT_EQ(back.samples[i].embeddings.publisher, ds.samples[i].embeddings.publisher);
  }
}

TEST(GenConfigJson, StrictKeysAndHash) {
  GenConfig c = small();
  nlohmann::json j = c;
  EXPECT_EQ(j.get<GenConfig>(), c);
  EXPECT_EQ(config_hash(c).size(), 16u);
  GenConfig d = c;
  d.seed = 2;
  EXPECT_NE(config_hash(c), config_hash(d));
  j["bogus"] = 1;
  EXPECT_THROW(j.get<GenConfig>(), std::invalid_argument);
}
