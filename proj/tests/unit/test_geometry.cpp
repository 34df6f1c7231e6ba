#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "test_util.hpp"
#include "vrc/errors.hpp"
#include "vrc/geometry/geometry.hpp"

using namespace vrc;
using geo::PointCloud;
using geo::Vec3;

namespace {

PointCloud line_cloud(std::initializer_list<double> xs) {
  std::vector<Vec3> pts;
  for (double x : xs) pts.push_back({x, 0.0, 0.0});
  return PointCloud::from_points(pts);
}

std::set<std::array<double, 3>> as_set(const PointCloud& c) {
  std::set<std::array<double, 3>> s;
  for (std::size_t i = 0; i < c.size(); ++i) s.insert(c.point(i));
  return s;
}

bool subset_of(const PointCloud& small, const PointCloud& big) {
  const auto b = as_set(big);
  for (std::size_t i = 0; i < small.size(); ++i)
    if (!b.count(small.point(i))) return false;
  return true;
}

}  // namespace

TEST(PointCloud, RejectsNonFiniteAndBadShape) {
  diff::Tensor t(diff::Shape{2, 3});
  t(1, 2) = std::nan("");
  EXPECT_THROW(PointCloud{t}, ContractError);
  EXPECT_THROW(PointCloud(diff::Tensor(diff::Shape{2, 2})), ContractError);
}

TEST(Knn, SelfNeighborhood) {
  std::mt19937_64 rng(1);
  const auto c = test::random_cloud(20, rng);
  const auto nbr = geo::knn_index(c, 1);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(nbr.indices[i], i);
  EXPECT_THROW(geo::knn_index(c, 21), ContractError);
}

TEST(Knn, CollinearExample) {
  const auto nbr = geo::knn_index(line_cloud({0.0, 1.0, 3.0}), 2);
  EXPECT_EQ(nbr.row(1)[0], 1u);
  EXPECT_EQ(nbr.row(1)[1], 0u);
}

TEST(Knn, MatchesExhaustiveSortOracle) {
  std::mt19937_64 rng(2);
  const auto c = test::random_cloud(32, rng);
  const auto nbr = geo::knn_index(c, 5);
  for (std::size_t i = 0; i < 32; ++i) {
    std::vector<std::pair<double, std::uint32_t>> all;
    for (std::uint32_t j = 0; j < 32; ++j)
      if (j != i) all.emplace_back(geo::dist2(c.point(i), c.point(j)), j);
    std::sort(all.begin(), all.end());
    EXPECT_EQ(nbr.row(i)[0], i);
    for (std::size_t j = 1; j < 5; ++j) EXPECT_EQ(nbr.row(i)[j], all[j - 1].second);
    std::set<std::uint32_t> distinct(nbr.row(i).begin(), nbr.row(i).end());
    EXPECT_EQ(distinct.size(), 5u);
  }
}

TEST(Knn, PermutationConsistent) {
  std::mt19937_64 rng(3);
  const auto c = test::random_cloud(40, rng);
  const auto perm = test::random_permutation(40, rng);
  const PointCloud pc = c.subset(perm);
  const auto a = geo::knn_index(c, 6);
  const auto b = geo::knn_index(pc, 6);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(perm[b.row(i)[j]], a.row(perm[i])[j]);
}

TEST(Fps, FullSelectionIsPermutation) {
  std::mt19937_64 rng(4);
  const auto c = test::random_cloud(25, rng);
  auto idx = geo::fps_indices(c, 25, 9);
  std::sort(idx.begin(), idx.end());
  for (std::uint32_t i = 0; i < 25; ++i) EXPECT_EQ(idx[i], i);
  EXPECT_THROW(geo::fps_indices(c, 26, 9), ContractError);
}

TEST(Fps, SquareCornersFromCorner) {
  // Hand-run of the greedy steps from corner 0: the opposite corner (2) is
  // farthest, then corners 1 and 3 (distance 1) beat the centre (0.707).
  const PointCloud sq = PointCloud::from_points(std::vector<Vec3>{
      {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0.5, 0.5, 0}});
  const auto idx = geo::fps_indices_from(sq, 4, 0);
  EXPECT_EQ(idx, (std::vector<std::uint32_t>{0, 2, 1, 3}));
}

TEST(Fps, SingleAndDeterministic) {
  std::mt19937_64 rng(5);
  const auto c = test::random_cloud(50, rng);
  const auto one = geo::fps_indices(c, 1, 77);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(geo::fps_indices(c, 10, 77)[0], one[0]);
  EXPECT_EQ(geo::fps_indices(c, 10, 77), geo::fps_indices(c, 10, 77));
  EXPECT_TRUE(subset_of(geo::farthest_point_sample(c, 10, 77), c));
}

TEST(Fps, StartIndependentOfInputOrder) {
  std::mt19937_64 rng(6);
  const auto c = test::random_cloud(64, rng);
  const auto perm = test::random_permutation(64, rng);
  EXPECT_EQ(as_set(geo::farthest_point_sample(c, 12, 3)),
            as_set(geo::farthest_point_sample(c.subset(perm), 12, 3)));
}

TEST(Fps, DominatesRandomSubsets) {
  std::mt19937_64 rng(7);
  for (int cloud = 0; cloud < 5; ++cloud) {
    const auto c = test::random_cloud(300, rng);
    const double fps = geo::min_pairwise_distance(geo::farthest_point_sample(c, 30, cloud));
    for (int trial = 0; trial < 100; ++trial) {
      auto perm = test::random_permutation(300, rng);
      perm.resize(30);
      EXPECT_GE(fps, geo::min_pairwise_distance(c.subset(perm)));
    }
  }
}

TEST(Poisson, TargetEqualsNIsIdentity) {
  std::mt19937_64 rng(8);
  const auto c = test::random_cloud(30, rng);
  const auto r = geo::poisson_disk_sample(c, 30);
  EXPECT_EQ(r.cloud.xyz(), c.xyz());
  EXPECT_DOUBLE_EQ(r.r_out, geo::min_pairwise_distance(c));
}

TEST(Poisson, UnitSegmentSpacing) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.push_back({u(rng), 0.0, 0.0});
  const auto r = geo::poisson_disk_sample(PointCloud::from_points(pts), 10);
  ASSERT_EQ(r.cloud.size(), 10u);
  const double spacing = geo::min_pairwise_distance(r.cloud);
  EXPECT_GE(spacing, 0.5 / 9.0);
  EXPECT_GE(spacing + 1e-15, r.r_out);
}

TEST(Poisson, RequiresOversampling) {
  std::mt19937_64 rng(10);
  EXPECT_THROW(geo::poisson_disk_sample(test::random_cloud(30, rng), 10), ContractError);
}

TEST(Poisson, BeatsRandomSubsets) {
  std::mt19937_64 rng(11);
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = test::random_cloud(400, rng);
    const auto r = geo::poisson_disk_sample(c, 50);
    EXPECT_TRUE(subset_of(r.cloud, c));
    EXPECT_GE(geo::min_pairwise_distance(r.cloud) + 1e-15, r.r_out);
    auto perm = test::random_permutation(400, rng);
    perm.resize(50);
    if (geo::min_pairwise_distance(r.cloud) > geo::min_pairwise_distance(c.subset(perm))) ++wins;
  }
  EXPECT_GE(wins, 95);
}

TEST(Normalize, Examples) {
  std::mt19937_64 rng(12);
  const auto c = test::random_cloud(50, rng);
  const auto n = geo::normalize(c);
  Vec3 mean{};
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n.cloud.size(); ++i) {
    const Vec3 p = n.cloud.point(i);
    for (int d = 0; d < 3; ++d) mean[d] += p[d] / 50.0;
    max_norm = std::max(max_norm, std::sqrt(geo::dist2(p, {0, 0, 0})));
  }
  for (double m : mean) EXPECT_NEAR(m, 0.0, 1e-9);
  EXPECT_NEAR(max_norm, 1.0, 1e-9);

  const auto again = geo::normalize(n.cloud);
  for (double v : again.center) EXPECT_NEAR(v, 0.0, 1e-9);
  EXPECT_NEAR(again.scale, 1.0, 1e-9);

  const auto back = geo::denormalize(n.cloud, n.center, n.scale);
  for (std::size_t i = 0; i < c.xyz().size(); ++i) EXPECT_NEAR(back.xyz()[i], c.xyz()[i], 1e-12);

  diff::Tensor shifted = c.xyz();
  for (std::size_t i = 0; i < shifted.rows(); ++i) shifted(i, 0) += 5.0;
  const auto s = geo::normalize(PointCloud(shifted));
  EXPECT_NEAR(s.center[0] - n.center[0], 5.0, 1e-12);
}

TEST(Normalize, DegenerateFlagged) {
  const auto n = geo::normalize(line_cloud({2.0, 2.0, 2.0}));
  EXPECT_TRUE(n.degenerate);
  EXPECT_EQ(n.scale, 1.0);
  EXPECT_THROW(geo::normalize(PointCloud{}), ContractError);
}

TEST(UniformGrid, FindsExactlyTheBallMembers) {
  std::mt19937_64 rng(13);
  const auto c = test::random_cloud(500, rng);
  const geo::UniformGrid grid(c, 0.1);
  for (int q = 0; q < 20; ++q) {
    const Vec3 p = c.point(static_cast<std::size_t>(q) * 7);
    std::set<std::uint32_t> found;
    grid.for_each_within(p, 0.23, [&](std::uint32_t j, double) { found.insert(j); });
    std::set<std::uint32_t> expect;
    for (std::uint32_t j = 0; j < 500; ++j)
      if (geo::dist2(p, c.point(j)) <= 0.23 * 0.23) expect.insert(j);
    EXPECT_EQ(found, expect);
  }
}
