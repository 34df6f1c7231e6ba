#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vrc/geometry/point_cloud.hpp"

namespace vrc::geo {

// rows x k point indices. Built over a cloud by knn_index, every row starts
// with its own point.
struct NeighborhoodIndex {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;

  std::span<const std::uint32_t> row(std::size_t i) const { return {indices.data() + i * k, k}; }
  // First k' columns of every row (a smaller neighborhood of the same points).
  NeighborhoodIndex truncated(std::size_t k_small) const;
};

// k nearest points of every point, self first, then by (distance, index).
NeighborhoodIndex knn_index(const PointCloud& cloud, std::size_t k);
// k nearest points of `ref` for every point of `query` by (distance, index).
NeighborhoodIndex knn_between(const PointCloud& ref, const PointCloud& query, std::size_t k);

// Greedy max-min selection of m indices. The start point is drawn from the
// seeded generator as a rank in lexicographic coordinate order, which makes
// the selection independent of how the input happens to be ordered.
std::vector<std::uint32_t> fps_indices(const PointCloud& cloud, std::size_t m, std::uint64_t seed);
std::vector<std::uint32_t> fps_indices_from(const PointCloud& cloud, std::size_t m, std::size_t start);
PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t m, std::uint64_t seed);

struct PoissonResult {
  PointCloud cloud;
  std::vector<std::uint32_t> indices;
  double r_out = 0.0;  // min pairwise distance of the result
};

// Weighted sample elimination over an oversampled set (dense >= 4 x target,
// or target == N which returns the input unchanged).
PoissonResult poisson_disk_sample(const PointCloud& dense, std::size_t target);

struct Normalized {
  PointCloud cloud;
  Vec3 center{};
  double scale = 1.0;
  bool degenerate = false;  // all points identical; scale forced to 1
};

// Subtract the centroid, divide by the largest resulting norm.
Normalized normalize(const PointCloud& cloud);
PointCloud apply_transform(const PointCloud& cloud, const Vec3& center, double scale);
PointCloud denormalize(const PointCloud& cloud, const Vec3& center, double scale);

// Mean nearest-neighbour distance estimated from up to `samples` evenly
// strided query points.
double mean_spacing(const PointCloud& cloud, std::size_t samples = 256);

// Uniform hash grid for fixed-radius queries.
class UniformGrid {
 public:
  UniformGrid(const PointCloud& cloud, double cell);
  // Calls fn(j, d2) for every point j with |p_j - q|^2 <= r^2, in cell order.
  void for_each_within(const Vec3& q, double r,
                       const std::function<void(std::uint32_t, double)>& fn) const;

 private:
  std::int64_t key(std::int64_t x, std::int64_t y, std::int64_t z) const;
  std::array<std::int64_t, 3> cell_of(const Vec3& p) const;

  const PointCloud* cloud_;
  double cell_;
  Vec3 lo_{};
  std::array<std::int64_t, 3> dims_{};
  std::vector<std::int64_t> sorted_keys_;  // cell key of order_[i]
  std::vector<std::uint32_t> order_;
};

}  // namespace vrc::geo
