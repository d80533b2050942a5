#include <gtest/gtest.h>

#include <random>

#include "disco/rewards.hpp"
#include "oracles.hpp"

using namespace disco;
using oracle::face;

namespace {

ImageRecord image_of(std::vector<Embedding> faces, int target = 2, std::optional<double> q = std::nullopt) {
  ImageRecord img;
  img.image_id = "x";
  img.prompt_id = "p";
  img.target_count = target;
  img.quality_raw = q;
  for (auto& e : faces) img.faces.push_back(face(std::move(e)));
  return img;
}

// Three unit vectors in R^3 with prescribed pairwise cosines (Gram matrix factorization).
std::vector<Embedding> triangle(double s01, double s02, double s12) {
  const double a = s01;
  const double b = std::sqrt(1 - a * a);
  const double c0 = s02;
  const double c1 = (s12 - a * c0) / b;
  const double c2 = std::sqrt(1 - c0 * c0 - c1 * c1);
  return {normalize({1.0, 0.0, 0.0}), normalize({a, b, 0.0}), normalize({c0, c1, c2})};
}

}  // namespace

TEST(IntraImageDiversity, FallbackBelowTwoFaces) {
  RewardWeights w;
  EXPECT_EQ(intra_image_diversity(image_of({normalize({1.0, 0.0})}), w), 0.5);
  EXPECT_EQ(intra_image_diversity(image_of({}), w), 0.5);
}

TEST(IntraImageDiversity, IdenticalFacesScoreZero) {
  const auto e = normalize({0.3, 0.4});
  EXPECT_EQ(intra_image_diversity(image_of({e, e}), RewardWeights{}), 0.0);
}

TEST(IntraImageDiversity, AggregationsOverPrescribedSims) {
  const auto img = image_of(triangle(0.2, 0.7, -0.1), 3);
  // The Gram construction is exact up to rounding; check the fixture first.
  ASSERT_NEAR(cosine_sim(img.faces[0].embedding, img.faces[2].embedding), 0.7, 1e-12);
  RewardWeights w;
  w.intra_aggregation = Aggregation::max;
  EXPECT_NEAR(intra_image_diversity(img, w), 0.3, 1e-12);
  w.intra_aggregation = Aggregation::mean;
  EXPECT_NEAR(intra_image_diversity(img, w), 1.0 - 0.8 / 3.0, 1e-12);
  EXPECT_NEAR(intra_image_diversity(img, w), oracle::intra(img, "mean"), 1e-12);
  w.intra_aggregation = Aggregation::min;
  EXPECT_EQ(intra_image_diversity(img, w), 1.0);
}

TEST(IntraImageDiversity, MaxNeverExceedsMean) {
  std::mt19937_64 rng(17);
  RewardWeights wmax, wmean;
  wmean.intra_aggregation = Aggregation::mean;
  for (int trial = 0; trial < 500; ++trial) {
    const auto img = oracle::random_image(rng, 4, 2, 6, 3, "i");
    EXPECT_LE(intra_image_diversity(img, wmax), intra_image_diversity(img, wmean) + 1e-15);
  }
}

TEST(GroupDiversity, ZeroDeltaGivesHalf) {
  const auto e = normalize({1.0, 2.0, 3.0});
  GroupRecord g{"p", {image_of({e, e}), image_of({e, e})}};
  const auto r = group_diversity(g, RewardWeights{});
  EXPECT_NEAR(r.stats.s_g, 1.0, 1e-15);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(r.stats.s_g_minus[i], 1.0, 1e-15);
    EXPECT_NEAR(r.stats.deltas[i], 0.0, 1e-15);
    EXPECT_NEAR(r.rewards[i], 0.5, 1e-15);
  }
}

TEST(GroupDiversity, MatchesLeaveOneOutOracle) {
  std::mt19937_64 rng(19);
  RewardWeights w;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = oracle::random_group(rng, 8, 4, 2, 3);
    const auto r = group_diversity(g, w);
    const auto o = oracle::group(g, w.lambda_sigmoid);
    EXPECT_NEAR(r.stats.s_g, o.s_g, 1e-12);
    for (std::size_t i = 0; i < g.images.size(); ++i) {
      EXPECT_NEAR(r.stats.s_g_minus[i], o.s_minus[i], 1e-12);
      EXPECT_EQ(r.stats.deltas[i], r.stats.s_g - r.stats.s_g_minus[i]);
      EXPECT_NEAR(r.rewards[i], o.rewards[i], 1e-9);
      EXPECT_GE(r.rewards[i], 0.0);
      EXPECT_LE(r.rewards[i], 1.0);
    }
  }
}

TEST(GroupDiversity, FewRemainingFacesUseZeroSimilarity) {
  // Removing the two-face image leaves a single face: S_{G-i} = 0, delta = S_G.
  const auto a = normalize({1.0, 0.0});
  const auto b = normalize({0.6, 0.8});
  GroupRecord g{"p", {image_of({a, a}), image_of({b})}};
  const auto r = group_diversity(g, RewardWeights{});
  EXPECT_EQ(r.stats.s_g_minus[0], 0.0);
  EXPECT_EQ(r.stats.deltas[0], r.stats.s_g);
}

TEST(GroupDiversity, PermutingImagesPermutesRewards) {
  std::mt19937_64 rng(23);
  const auto g = oracle::random_group(rng, 8, 6, 0, 4);
  const auto base = group_diversity(g, RewardWeights{});
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  GroupRecord shuffled{"p", {}};
  for (std::size_t i : perm) shuffled.images.push_back(g.images[i]);
  const auto r = group_diversity(shuffled, RewardWeights{});
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_NEAR(r.rewards[k], base.rewards[perm[k]], 1e-12);
}

TEST(GroupDiversity, DuplicatingTheGroupIdentityLowersReward) {
  std::mt19937_64 rng(29);
  const auto e = normalize({1.0, 0.0, 0.0, 0.0});
  for (int trial = 0; trial < 50; ++trial) {
    // Image 0 starts with random faces, the others all show identity e.
    GroupRecord g{"p", {image_of({oracle::random_unit(rng, 4), oracle::random_unit(rng, 4)}), image_of({e, e}),
                        image_of({e, e}), image_of({e})}};
    const double before = group_diversity(g, RewardWeights{}).rewards[0];
    g.images[0].faces = g.images[1].faces;
    const auto after = group_diversity(g, RewardWeights{});
    EXPECT_GE(after.stats.deltas[0], 0.0);
    EXPECT_LE(after.rewards[0], 0.5);
    EXPECT_LE(after.rewards[0], before);
  }
  // Fully collapsed group versus one distinct image: the distinct one scores above 0.5.
  const auto x = normalize({1.0, 0.0, 0.0, 0.0});
  const auto f = normalize({0.0, 1.0, 0.0, 0.0});
  const auto h = normalize({0.0, 0.0, 1.0, 0.0});
  GroupRecord g{"p", {image_of({x, x}), image_of({x, x}), image_of({f, h})}};
  const auto r = group_diversity(g, RewardWeights{});
  EXPECT_GT(r.rewards[2], 0.5);
  EXPECT_LE(r.rewards[0], 0.5);
  EXPECT_GE(r.stats.deltas[0], 0.0);
}

TEST(CountReward, ExactMatchOnly) {
  const auto e = normalize({1.0, 0.0});
  EXPECT_EQ(count_reward(image_of(std::vector<Embedding>(5, e), 5)), 1.0);
  EXPECT_EQ(count_reward(image_of(std::vector<Embedding>(4, e), 5)), 0.0);
  EXPECT_EQ(count_reward(image_of({}, 2)), 0.0);
}

TEST(QualityReward, LinearMapWithClamp) {
  RewardWeights w;
  EXPECT_EQ(quality_reward(image_of({}, 2, 0.0), w), 0.0);
  EXPECT_EQ(quality_reward(image_of({}, 2, 10.0), w), 1.0);
  EXPECT_EQ(quality_reward(image_of({}, 2, 5.0), w), 0.5);
  EXPECT_EQ(quality_reward(image_of({}, 2, 11.0), w), 1.0);
  EXPECT_EQ(quality_reward(image_of({}, 2, -3.0), w), 0.0);
}

TEST(QualityReward, MissingScore) {
  RewardWeights w;
  EXPECT_THROW(quality_reward(image_of({}, 2), w), MissingQuality);
  w.zeta = 0.0;
  EXPECT_EQ(quality_reward(image_of({}, 2), w), 0.0);
}

TEST(CompositeReward, WeightedSum) {
  // (0.5, 0.1, 0.15, 0.15) . (1, 0.5, 1, 0.67)
  const auto w = RewardWeights::appendix_d();
  EXPECT_NEAR(w.alpha * 1 + w.beta * 0.5 + w.gamma * 1 + w.zeta * 0.67, 0.8005, 1e-12);

  std::mt19937_64 rng(31);
  for (const auto& weights : {RewardWeights::appendix_d(), RewardWeights::table_a2()}) {
    const auto g = oracle::random_group(rng, 8, 5, 0, 4);
    const auto out = composite_reward(g, weights);
    ASSERT_EQ(out.size(), g.images.size());
    for (const auto& b : out) {
      EXPECT_NEAR(b.total,
                  weights.alpha * b.intra + weights.beta * b.group + weights.gamma * b.count + weights.zeta * b.quality,
                  1e-12);
      for (double c : {b.intra, b.group, b.count, b.quality}) {
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0);
      }
    }
  }
}

TEST(CompositeReward, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(37);
  const auto g = oracle::random_group(rng, 8, 3, 0, 3);
  for (const auto& b : composite_reward(g, RewardWeights::only(0, 0, 0, 0))) EXPECT_EQ(b.total, 0.0);
}

TEST(CompositeReward, PresetsMatchPublishedWeights) {
  const auto a = RewardWeights::appendix_d();
  EXPECT_EQ(a.alpha, 0.50);
  EXPECT_EQ(a.beta, 0.10);
  EXPECT_EQ(a.gamma, 0.15);
  EXPECT_EQ(a.zeta, 0.15);
  EXPECT_EQ(a.lambda_sigmoid, 5.0);
  const auto t = RewardWeights::table_a2();
  EXPECT_EQ(t.alpha, 0.5);
  EXPECT_EQ(t.beta, 0.1);
  EXPECT_EQ(t.gamma, 0.3);
  EXPECT_EQ(t.zeta, 0.2);
}

TEST(CompositeReward, PropagatesMissingQuality) {
  GroupRecord g{"p", {image_of({normalize({1.0, 0.0})})}};
  EXPECT_THROW(composite_reward(g, RewardWeights{}), MissingQuality);
  EXPECT_NO_THROW(composite_reward(g, RewardWeights::only(1, 1, 1, 0)));
}
