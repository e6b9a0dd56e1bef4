#include <cstring>
#include <random>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <cap/errors.h>
#include <cap/feature_bank.h>
#include <cap/scoring.h>
#include <cap/synthetic.h>

#include "test_support.h"

namespace {

using cap::SyntheticSpec;
using cap::Vector;

double baseline_auroc(const cap::SyntheticInstance& inst, std::size_t k) {
  std::vector<double> scores;
  for (std::size_t i = 0; i < inst.test.features.size(); ++i) {
    scores.push_back(cap::baseline_score_no_adaptation(inst.train, inst.test.features.row(i), k).score);
  }
  return cap::auroc(scores, *inst.test.labels);
}

TEST(Synthetic, ShapesIdsAndLabels) {
  const auto inst = cap::gaussian_cluster_instance(8, 30, 5, 7, 2, 6.0, 1);
  EXPECT_EQ(inst.train.size(), 30u);
  EXPECT_EQ(inst.train.dim(), 8u);
  ASSERT_EQ(inst.test.features.size(), 12u);
  ASSERT_TRUE(inst.test.labels.has_value());
  const auto& labels = *inst.test.labels;
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 0), 5);
  EXPECT_EQ(std::count(labels.begin(), labels.end(), 1), 7);
  EXPECT_EQ(labels.front(), 0);
  EXPECT_EQ(labels.back(), 1);
  EXPECT_EQ(inst.train.ids().front(), "train-0");
  EXPECT_EQ(inst.test.features.ids().front(), "test-normal-0");
  EXPECT_EQ(inst.test.features.ids().back(), "test-anomaly-6");
  EXPECT_EQ(inst.train.provenance().at("generator"), "gaussian_cluster");
  EXPECT_EQ(inst.train.provenance().at("seed"), "1");
}

TEST(Synthetic, Deterministic) {
  const auto a = cap::generate_instance(cap::standard_suite_spec(4));
  const auto b = cap::generate_instance(cap::standard_suite_spec(4));
  const auto c = cap::generate_instance(cap::standard_suite_spec(5));
  EXPECT_EQ(cap::serialize_bank(a.train), cap::serialize_bank(b.train));
  EXPECT_EQ(cap::serialize_feature_set(a.test), cap::serialize_feature_set(b.test));
  EXPECT_NE(cap::serialize_bank(a.train), cap::serialize_bank(c.train));
}

TEST(Synthetic, FeatureCloudIsShiftedAwayFromTheOrigin) {
  const auto inst = cap::generate_instance(cap::standard_suite_spec(0));
  const Vector mean = inst.train.items_f64().colwise().mean().transpose();
  EXPECT_GT(mean.sum(), 0.0);
  EXPECT_GT(mean.norm(), 1.0);
  EXPECT_GT((mean.array() > 0.0).count(), mean.size() / 2);
}

TEST(Synthetic, StandardSuiteSpec) {
  const SyntheticSpec s = cap::standard_suite_spec(7);
  EXPECT_EQ(s.dim, 64u);
  EXPECT_EQ(s.n_modes, 3u);
  EXPECT_EQ(s.anomaly_offset, 6.0);
  EXPECT_EQ(s.n_train, 2000u);
  EXPECT_EQ(s.n_test_normal, 500u);
  EXPECT_EQ(s.n_test_anomaly, 500u);
  EXPECT_EQ(s.covariance_scale, 1.0);
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(cap::kStandardSuiteName, "synth-std-v1");
  EXPECT_EQ(cap::generate_instance(cap::standard_suite_spec(0)).train.provenance().at("suite"), "synth-std-v1");
}

TEST(Synthetic, ZeroOffsetIsIndistinguishable) {
  SyntheticSpec s = cap::standard_suite_spec(2);
  s.anomaly_offset = 0.0;
  s.n_test_normal = 1500;
  s.n_test_anomaly = 1500;
  EXPECT_NEAR(baseline_auroc(cap::generate_instance(s), 32), 0.5, 0.04);
}

TEST(Synthetic, StandardFixtureBaselineIsStrong) {
  const auto inst = cap::gaussian_cluster_instance(64, 2000, 500, 500, 3, 6.0, 0);
  EXPECT_GE(baseline_auroc(inst, 32), 0.95);
}

TEST(Synthetic, InvalidSpecs) {
  EXPECT_THROW(cap::gaussian_cluster_instance(1, 10, 1, 1, 1, 6.0, 0), cap::ConfigError);
  EXPECT_THROW(cap::gaussian_cluster_instance(4, 0, 1, 1, 1, 6.0, 0), cap::ConfigError);
  EXPECT_THROW(cap::gaussian_cluster_instance(4, 10, 0, 1, 1, 6.0, 0), cap::ConfigError);
  EXPECT_THROW(cap::gaussian_cluster_instance(4, 10, 1, 0, 1, 6.0, 0), cap::ConfigError);
  EXPECT_THROW(cap::gaussian_cluster_instance(4, 10, 1, 1, 0, 6.0, 0), cap::ConfigError);
  EXPECT_THROW(cap::gaussian_cluster_instance(4, 10, 1, 1, 1, 0.0, 0), cap::ConfigError);
  SyntheticSpec s;
  s.centre_norm = -1.0;
  EXPECT_THROW(cap::generate_instance(s), cap::ConfigError);
}

TEST(KnnOracle, MirrorsTopKExamples) {
  const std::vector<Vector> rows = {(Vector(2) << 1, 0).finished(), (Vector(2) << 0, 1).finished(),
                                    (Vector(2) << 0.6, 0.8).finished()};
  const auto bank = cap::build_bank(rows);
  const std::vector<double> q = {1.0, 0.0};
  EXPECT_THAT(cap::knn_oracle(bank, q, 2).indices, ::testing::ElementsAre(0u, 2u));
  EXPECT_THAT(cap::knn_oracle(bank, q, 2, 0).indices, ::testing::ElementsAre(2u, 1u));
  const std::vector<Vector> dup = {(Vector(2) << 1, 0).finished(), (Vector(2) << 1, 0).finished()};
  EXPECT_THAT(cap::knn_oracle(cap::build_bank(dup), q, 1).indices, ::testing::ElementsAre(0u));
}

TEST(PairwiseOracle, Examples) {
  EXPECT_EQ(cap::pairwise_auroc_oracle(std::vector<double>{0.1, 0.2, 0.9}, std::vector<std::uint8_t>{0, 0, 1}), 1.0);
  EXPECT_EQ(cap::pairwise_auroc_oracle(std::vector<double>(6, 0.3), std::vector<std::uint8_t>{0, 1, 0, 1, 1, 0}), 0.5);
  EXPECT_THROW(cap::pairwise_auroc_oracle(std::vector<double>{0.1}, std::vector<std::uint8_t>{0}), cap::ConfigError);
}

TEST(PairwiseOracle, AgreesWithRankAuroc) {
  std::mt19937_64 rng(3);
  std::vector<double> s(200);
  std::vector<std::uint8_t> l(200);
  for (int i = 0; i < 200; ++i) {
    s[i] = std::normal_distribution<double>(i % 2 ? 0.3 : 0.0, 0.5)(rng);
    l[i] = static_cast<std::uint8_t>(i % 2);
  }
  EXPECT_EQ(cap::pairwise_auroc_oracle(s, l), cap::auroc(s, l));
}

}  // namespace
