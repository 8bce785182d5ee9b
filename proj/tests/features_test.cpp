#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "coupnet/experiment.hpp"
#include "coupnet/features.hpp"
#include "support.hpp"

using namespace coupnet;

namespace {

oracle::Fixture empty_fixture(std::size_t users, std::size_t items) {
  oracle::Fixture f;
  f.users = users;
  f.items = items;
  f.adj.assign(users, std::vector<bool>(users, false));
  f.rated.resize(users);
  return f;
}

void link(oracle::Fixture& f, std::size_t a, std::size_t b) { f.adj[a][b] = f.adj[b][a] = true; }

oracle::Fixture complete(std::size_t n) {
  auto f = empty_fixture(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) link(f, i, j);
  }
  return f;
}

}  // namespace

TEST(FeatureOracle, RandomNetworksMatchBruteForce) {
  coupnet::Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto f = oracle::random_fixture(rng, 30, 20);
    const auto net = oracle::to_network(f);
    const auto m = compute_matrix(net);
    ASSERT_EQ(m.size(), f.users);
    for (std::size_t u = 0; u < f.users; ++u) {
      const auto expected = oracle::features(f, u);
      for (std::size_t c = 0; c < kComponentCount; ++c) {
        EXPECT_NEAR(m.rows[u][c], expected[c], 1e-9) << "trial " << trial << " user " << u << " " << kComponentNames[c];
      }
      for (bool social : {true, false}) {
        EXPECT_LE(std::abs(oracle::assortativity_unclamped(f, u, social)), 1 + 1e-9);
      }
    }
  }
}

TEST(FeatureOracle, MatrixEqualsPerUserOperations) {
  coupnet::Rng rng(7);
  const auto f = oracle::random_fixture(rng, 30, 20);
  const auto net = oracle::to_network(f);
  const auto m = compute_matrix(net);
  for (UserIndex u = 0; u < net.user_count(); ++u) {
    for (Layer layer : {Layer::social, Layer::behavioral}) {
      const std::size_t base = layer == Layer::social ? 0 : kLayerWidth;
      EXPECT_EQ(m.rows[u][base + 0], activity(net, u, layer));
      EXPECT_EQ(m.rows[u][base + 1], avg_neighbor_activity(net, u, layer));
      EXPECT_EQ(m.rows[u][base + 2], clustering(net, u, layer));
      EXPECT_EQ(m.rows[u][base + 3], assortativity(net, u, layer));
      EXPECT_EQ(m.rows[u][base + 4], discrimination(net, u, layer));
    }
  }
}

TEST(FeatureRanges, HoldOnRandomNetworks) {
  coupnet::Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto net = oracle::to_network(oracle::random_fixture(rng, 30, 20));
    const auto m = compute_matrix(net);
    for (UserIndex u = 0; u < net.user_count(); ++u) {
      for (std::size_t base : {std::size_t{0}, kLayerWidth}) {
        const auto& row = m.rows[u];
        EXPECT_GE(row[base], 0.0);
        EXPECT_GE(row[base + 2], 0.0);
        EXPECT_LE(row[base + 2], 1.0);
        EXPECT_GE(row[base + 3], -1.0);
        EXPECT_LE(row[base + 3], 1.0);
        EXPECT_GE(row[base + 4], 0.0);
        if (row[base] >= 1) EXPECT_LE(row[base + 4], 1.0 - 1.0 / row[base] + 1e-12);
      }
    }
  }
}

TEST(SocialClustering, CompleteGraphsAreOne) {
  for (std::size_t n = 3; n <= 8; ++n) {
    const auto net = oracle::to_network(complete(n));
    for (UserIndex u = 0; u < n; ++u) EXPECT_NEAR(clustering(net, u, Layer::social), 1.0, 1e-12);
  }
}

TEST(SocialClustering, TreesAreZero) {
  coupnet::Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    auto f = empty_fixture(n, 1);
    for (std::size_t i = 1; i < n; ++i) link(f, i, rng.below(i));
    const auto net = oracle::to_network(f);
    for (UserIndex u = 0; u < n; ++u) EXPECT_EQ(clustering(net, u, Layer::social), 0.0);
  }
}

TEST(SocialFeatures, SmallShapes) {
  auto tri = complete(3);
  EXPECT_EQ(clustering(oracle::to_network(tri), 0, Layer::social), 1.0);

  auto star = empty_fixture(5, 1);
  for (std::size_t i = 1; i < 5; ++i) link(star, 0, i);
  const auto s = oracle::to_network(star);
  EXPECT_EQ(activity(s, 0, Layer::social), 4.0);
  EXPECT_EQ(avg_neighbor_activity(s, 0, Layer::social), 1.0);
  EXPECT_EQ(clustering(s, 0, Layer::social), 0.0);

  auto path = empty_fixture(3, 1);
  link(path, 0, 1);
  link(path, 1, 2);
  const auto p = oracle::to_network(path);
  EXPECT_EQ(avg_neighbor_activity(p, 1, Layer::social), 1.0);
  EXPECT_NEAR(assortativity(p, 1, Layer::social), -1.0, 1e-12);
  EXPECT_EQ(assortativity(p, 0, Layer::social), 0.0);
}

TEST(Assortativity, EqualActivitiesGiveZero) {
  const auto net = oracle::to_network(complete(5));
  for (UserIndex u = 0; u < 5; ++u) EXPECT_EQ(assortativity(net, u, Layer::social), 0.0);
}

TEST(Discrimination, DistinctNeighborActivities) {
  // Hub 0 linked to n spokes; spoke k also has k private leaves so the
  // spokes' degrees are 1..n, all distinct.
  for (std::size_t n = 2; n <= 5; ++n) {
    std::size_t users = 1 + n + n * (n - 1) / 2;
    auto f = empty_fixture(users, 1);
    std::size_t next = 1 + n;
    for (std::size_t k = 0; k < n; ++k) {
      link(f, 0, 1 + k);
      for (std::size_t leaf = 0; leaf < k; ++leaf) link(f, 1 + k, next++);
    }
    const auto net = oracle::to_network(f);
    EXPECT_NEAR(discrimination(net, 0, Layer::social), 1.0 - 1.0 / static_cast<double>(n), 1e-12) << n;
  }
}

TEST(Discrimination, SharedActivityAndFourNinths) {
  EXPECT_EQ(discrimination(oracle::to_network(complete(4)), 0, Layer::social), 0.0);
  // Neighbor activities {2, 2, 4}.
  auto f = empty_fixture(8, 1);
  for (std::size_t i = 1; i <= 3; ++i) link(f, 0, i);
  link(f, 1, 4);
  link(f, 2, 5);
  link(f, 3, 6);
  link(f, 3, 7);
  link(f, 3, 4);
  EXPECT_NEAR(discrimination(oracle::to_network(f), 0, Layer::social), 4.0 / 9.0, 1e-12);
}

TEST(BehavioralFeatures, HandExamples) {
  // Items popularities {3, 5} for user 0 -> AN = 4.
  auto f = empty_fixture(5, 2);
  for (std::size_t u = 0; u < 3; ++u) f.rated[u][0] = 4.0;
  for (std::size_t u = 0; u < 5; ++u) f.rated[u][1] = 2.0;
  const auto net = oracle::to_network(f);
  EXPECT_EQ(activity(net, 0, Layer::behavioral), 2.0);
  EXPECT_EQ(avg_neighbor_activity(net, 0, Layer::behavioral), 4.0);

  // U_j = {u, v}, U_k = {u, w} -> s = 1/3 and C = 1/3.
  auto g = empty_fixture(3, 2);
  g.rated[0][0] = 3.0;
  g.rated[1][0] = 3.0;
  g.rated[0][1] = 3.0;
  g.rated[2][1] = 3.0;
  EXPECT_NEAR(clustering(oracle::to_network(g), 0, Layer::behavioral), 1.0 / 3.0, 1e-12);

  const auto lone = oracle::to_network(empty_fixture(1, 1));
  const auto m = compute_matrix(lone);
  ASSERT_EQ(m.size(), 1u);
  for (std::size_t c = 0; c < kComponentCount; ++c) EXPECT_EQ(m.rows[0][c], 0.0);
}

TEST(BehavioralFeatures, TriangleWithNoRatings) {
  const auto m = compute_matrix(oracle::to_network(complete(3)));
  for (const auto& row : m.rows) {
    EXPECT_EQ(row[kSocialClustering], 1.0);
    for (std::size_t c = kLayerWidth; c < kComponentCount; ++c) EXPECT_EQ(row[c], 0.0);
  }
}

TEST(BehavioralClustering, SampledAboveCapIsSeededAndClose) {
  // One heavy user over 260 items, plus light users that give the items
  // varied audiences.
  constexpr std::size_t kItems = 260;
  auto f = empty_fixture(40, kItems);
  coupnet::Rng rng(13);
  for (std::size_t j = 0; j < kItems; ++j) {
    f.rated[0][j] = 3.0;
    for (std::size_t u = 1; u < 40; ++u) {
      if (rng.bernoulli(0.2)) f.rated[u][j] = 2.0;
    }
  }
  const auto net = oracle::to_network(f);
  const double a = clustering(net, 0, Layer::behavioral, 1);
  const double b = clustering(net, 0, Layer::behavioral, 1);
  const double c = clustering(net, 0, Layer::behavioral, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const double exact = oracle::clustering(f, 0, false);
  EXPECT_NEAR(a, exact, 0.01);
  EXPECT_NEAR(c, exact, 0.01);
  EXPECT_EQ(compute_matrix(net, 1).rows[0][kBehavioralClustering], a);
}

TEST(ComputeMatrix, IndependentOfWorkerCount) {
  SyntheticConfig sc;
  sc.user_count = 400;
  sc.item_count = 150;
  sc.mean_items_per_user = 30;
  sc.seed = 3;
  const auto net = synthesize(sc);
  std::ostringstream one;
  std::ostringstream four;
  write_feature_csv(one, compute_matrix(net, 9, 1));
  write_feature_csv(four, compute_matrix(net, 9, 4));
  EXPECT_EQ(one.str(), four.str());
}

TEST(Normalization, MinMaxWithClampingAndConstants) {
  EXPECT_EQ(normalize_value(6, 2, 10), 0.5);
  EXPECT_EQ(normalize_value(12, 2, 10), 1.0);
  EXPECT_EQ(normalize_value(-1, 2, 10), 0.0);
  EXPECT_EQ(normalize_value(3, 3, 3), 0.0);

  FeatureMatrix m;
  m.rows.resize(3);
  for (std::size_t i = 0; i < 3; ++i) {
    m.rows[i][kSocialActivity] = 2.0 + 4.0 * static_cast<double>(i);
    m.rows[i][kBehavioralActivity] = 7.0;
  }
  const std::vector<std::size_t> fit = {0, 1};
  const auto p = fit_normalization(m, fit);
  EXPECT_EQ(p.min[kSocialActivity], 2.0);
  EXPECT_EQ(p.max[kSocialActivity], 6.0);
  const auto n = apply_normalization(m, p);
  EXPECT_EQ(n.rows[1][kSocialActivity], 1.0);
  EXPECT_EQ(n.rows[2][kSocialActivity], 1.0);
  EXPECT_EQ(n.rows[0][kBehavioralActivity], 0.0);
  ASSERT_TRUE(n.normalization.has_value());
  EXPECT_THROW(fit_normalization(m, std::vector<std::size_t>{}), ValidationError);
}

TEST(FeatureCsv, RoundTripsExactly) {
  coupnet::Rng rng(17);
  const auto m = compute_matrix(oracle::to_network(oracle::random_fixture(rng, 30, 20)));
  std::ostringstream out;
  write_feature_csv(out, m);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "user_index,sA,sAN,sC,sAC,sD,bA,bAN,bC,bAC,bD");
  std::istringstream in(out.str());
  const auto back = read_feature_csv(in, "f.csv");
  EXPECT_EQ(back.rows, m.rows);
}
