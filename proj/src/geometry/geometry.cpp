#include "vrc/geometry/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>

#include "vrc/errors.hpp"
#include "vrc/kernels/kernels.hpp"

namespace vrc::geo {

NeighborhoodIndex NeighborhoodIndex::truncated(std::size_t k_small) const {
  VRC_REQUIRE(k_small >= 1 && k_small <= k, "truncated: k out of range");
  NeighborhoodIndex out{rows, k_small, {}};
  out.indices.reserve(rows * k_small);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = row(i);
    out.indices.insert(out.indices.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(k_small));
  }
  return out;
}

NeighborhoodIndex knn_index(const PointCloud& cloud, std::size_t k) {
  const std::size_t n = cloud.size();
  VRC_REQUIRE(k >= 1 && k <= n,
              "knn_index: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  auto res = kernels::knn(cloud.flat(), cloud.flat(), k);
  NeighborhoodIndex out{n, k, std::move(res.indices)};
  // Duplicated coordinates can put an earlier copy ahead of the point
  // itself; move self to the front.
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t* r = out.indices.data() + i * k;
    if (r[0] == i) continue;
    std::uint32_t* pos = std::find(r, r + k, static_cast<std::uint32_t>(i));
    if (pos == r + k) pos = r + k - 1;
    std::move_backward(r, pos, pos + 1);
    r[0] = static_cast<std::uint32_t>(i);
  }
  return out;
}

NeighborhoodIndex knn_between(const PointCloud& ref, const PointCloud& query, std::size_t k) {
  VRC_REQUIRE(k >= 1 && k <= ref.size(),
              "knn_between: k = " + std::to_string(k) + " exceeds reference size " +
                  std::to_string(ref.size()));
  auto res = kernels::knn(ref.flat(), query.flat(), k);
  return NeighborhoodIndex{query.size(), k, std::move(res.indices)};
}

std::vector<std::uint32_t> fps_indices_from(const PointCloud& cloud, std::size_t m, std::size_t start) {
  const std::size_t n = cloud.size();
  VRC_REQUIRE(m >= 1 && m <= n,
              "farthest_point_sample: m = " + std::to_string(m) + " outside [1, " + std::to_string(n) + "]");
  VRC_REQUIRE(start < n, "farthest_point_sample: start index out of range");
  std::vector<std::uint32_t> picked;
  picked.reserve(m);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t next = start;
  for (std::size_t s = 0; s < m; ++s) {
    picked.push_back(static_cast<std::uint32_t>(next));
    if (s + 1 < m) next = kernels::fps_update(cloud.flat(), min_d2, next);
  }
  return picked;
}

std::vector<std::uint32_t> fps_indices(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  VRC_REQUIRE(n >= 1, "farthest_point_sample: empty cloud");
  std::mt19937_64 rng(seed);
  const std::size_t rank = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  const auto& xyz = cloud.xyz();
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(rank), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     for (std::size_t c = 0; c < 3; ++c)
                       if (xyz(a, c) != xyz(b, c)) return xyz(a, c) < xyz(b, c);
                     return a < b;
                   });
  return fps_indices_from(cloud, m, order[rank]);
}

PointCloud farthest_point_sample(const PointCloud& cloud, std::size_t m, std::uint64_t seed) {
  return cloud.subset(fps_indices(cloud, m, seed));
}

namespace {

// Mean distance to the m-th nearest other point over strided queries.
double mean_kth_distance(const PointCloud& cloud, std::size_t m, std::size_t samples) {
  const std::size_t n = cloud.size();
  const std::size_t q = std::min(samples, n);
  std::vector<std::uint32_t> idx(q);
  for (std::size_t i = 0; i < q; ++i) idx[i] = static_cast<std::uint32_t>(i * n / q);
  const PointCloud queries = cloud.subset(idx);
  const std::size_t k = std::min(m + 1, n);
  const auto res = kernels::knn(cloud.flat(), queries.flat(), k);
  double total = 0.0;
  for (std::size_t i = 0; i < q; ++i) total += std::sqrt(res.dist2[i * k + k - 1]);
  return total / static_cast<double>(q);
}

}  // namespace

double mean_spacing(const PointCloud& cloud, std::size_t samples) {
  VRC_REQUIRE(cloud.size() >= 2, "mean_spacing: need at least two points");
  return mean_kth_distance(cloud, 1, samples);
}

PoissonResult poisson_disk_sample(const PointCloud& dense, std::size_t target) {
  const std::size_t n = dense.size();
  VRC_REQUIRE(target >= 1 && target <= n, "poisson_disk_sample: target outside [1, N]");
  if (target == n) {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    return {dense, std::move(all), min_pairwise_distance(dense)};
  }
  VRC_REQUIRE(n >= 4 * target, "poisson_disk_sample: source has " + std::to_string(n) +
                                   " points, need at least 4 x " + std::to_string(target));

  // Maximum achievable radius for `target` points: the radius that holds
  // N / target source points around a typical point. Dimension-free, so the
  // same estimate serves curves, surfaces and volumes.
  const auto per_sample = static_cast<std::size_t>(std::lround(static_cast<double>(n) / target));
  const double r_max = mean_kth_distance(dense, std::max<std::size_t>(per_sample, 1), 256);
  const double reach = 2.0 * r_max;
  // Weight limiting from the sample-elimination formulation (beta 0.65,
  // gamma 1.5) stops tightly packed pairs from dominating.
  const double ratio = static_cast<double>(target) / static_cast<double>(n);
  const double r_min = r_max * 0.65 * (1.0 - std::pow(ratio, 1.5));
  auto weight = [&](double d) {
    const double dd = std::max(d, r_min);
    const double t = 1.0 - dd / reach;
    return t > 0.0 ? std::pow(t, 8) : 0.0;
  };

  UniformGrid grid(dense, reach);
  std::vector<std::vector<std::pair<std::uint32_t, double>>> nbrs(n);
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    grid.for_each_within(dense.point(i), reach, [&](std::uint32_t j, double d2) {
      if (j == i) return;
      const double wij = weight(std::sqrt(d2));
      if (wij <= 0.0) return;
      nbrs[i].emplace_back(j, wij);
      w[i] += wij;
    });
  }

  // Max-heap on (weight, lower index first); stale entries are skipped.
  using Entry = std::pair<double, std::int64_t>;
  std::priority_queue<Entry> heap;
  for (std::size_t i = 0; i < n; ++i) heap.emplace(w[i], -static_cast<std::int64_t>(i));
  std::vector<char> removed(n, 0);
  std::size_t remaining = n;
  while (remaining > target) {
    auto [wt, neg] = heap.top();
    heap.pop();
    const auto i = static_cast<std::size_t>(-neg);
    if (removed[i] || wt != w[i]) continue;
    removed[i] = 1;
    --remaining;
    for (auto [j, wij] : nbrs[i]) {
      if (removed[j]) continue;
      w[j] -= wij;
      heap.emplace(w[j], -static_cast<std::int64_t>(j));
    }
  }

  std::vector<std::uint32_t> kept;
  kept.reserve(target);
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) kept.push_back(static_cast<std::uint32_t>(i));
  PoissonResult out{dense.subset(kept), std::move(kept), 0.0};
  out.r_out = min_pairwise_distance(out.cloud);
  return out;
}

Normalized normalize(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  VRC_REQUIRE(n >= 1, "normalize: empty cloud");
  Vec3 c{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) c[k] += cloud.xyz()(i, k);
  for (double& v : c) v /= static_cast<double>(n);
  double r2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) r2 = std::max(r2, dist2(cloud.point(i), c));
  Normalized out;
  out.center = c;
  out.scale = std::sqrt(r2);
  if (!(out.scale > 0.0)) {
    out.scale = 1.0;
    out.degenerate = true;
  }
  out.cloud = apply_transform(cloud, out.center, out.scale);
  return out;
}

PointCloud apply_transform(const PointCloud& cloud, const Vec3& center, double scale) {
  diff::Tensor xyz = cloud.xyz();
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) xyz(i, k) = (xyz(i, k) - center[k]) / scale;
  return PointCloud(std::move(xyz), cloud.role());
}

PointCloud denormalize(const PointCloud& cloud, const Vec3& center, double scale) {
  diff::Tensor xyz = cloud.xyz();
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) xyz(i, k) = xyz(i, k) * scale + center[k];
  return PointCloud(std::move(xyz), cloud.role());
}

// --- UniformGrid -----------------------------------------------------------

UniformGrid::UniformGrid(const PointCloud& cloud, double cell) : cloud_(&cloud), cell_(cell) {
  VRC_REQUIRE(cell > 0.0, "UniformGrid: cell size must be positive");
  const std::size_t n = cloud.size();
  Vec3 hi{};
  for (std::size_t k = 0; k < 3; ++k) {
    lo_[k] = std::numeric_limits<double>::infinity();
    hi[k] = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      lo_[k] = std::min(lo_[k], cloud.xyz()(i, k));
      hi[k] = std::max(hi[k], cloud.xyz()(i, k));
    }
  for (std::size_t k = 0; k < 3; ++k)
    dims_[k] = n ? static_cast<std::int64_t>(std::floor((hi[k] - lo_[k]) / cell_)) + 1 : 1;

  std::vector<std::int64_t> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto c = cell_of(cloud.point(i));
    keys[i] = key(c[0], c[1], c[2]);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0u);
  std::stable_sort(order_.begin(), order_.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return keys[a] < keys[b]; });
  sorted_keys_.resize(n);
  for (std::size_t i = 0; i < n; ++i) sorted_keys_[i] = keys[order_[i]];
}

std::int64_t UniformGrid::key(std::int64_t x, std::int64_t y, std::int64_t z) const {
  return (x * dims_[1] + y) * dims_[2] + z;
}

std::array<std::int64_t, 3> UniformGrid::cell_of(const Vec3& p) const {
  std::array<std::int64_t, 3> c{};
  for (std::size_t k = 0; k < 3; ++k)
    c[k] = static_cast<std::int64_t>(std::floor((p[k] - lo_[k]) / cell_));
  return c;
}

void UniformGrid::for_each_within(const Vec3& q, double r,
                                  const std::function<void(std::uint32_t, double)>& fn) const {
  const double r2 = r * r;
  const auto span = static_cast<std::int64_t>(std::ceil(r / cell_));
  const auto c = cell_of(q);
  for (std::int64_t x = std::max<std::int64_t>(0, c[0] - span);
       x <= std::min(dims_[0] - 1, c[0] + span); ++x) {
    for (std::int64_t y = std::max<std::int64_t>(0, c[1] - span);
         y <= std::min(dims_[1] - 1, c[1] + span); ++y) {
      const std::int64_t z0 = std::max<std::int64_t>(0, c[2] - span);
      const std::int64_t z1 = std::min(dims_[2] - 1, c[2] + span);
      if (z0 > z1) continue;
      // Cells along z are contiguous in key order.
      auto first = std::lower_bound(sorted_keys_.begin(), sorted_keys_.end(), key(x, y, z0));
      auto last = std::upper_bound(first, sorted_keys_.end(), key(x, y, z1));
      for (auto it = first; it != last; ++it) {
        const std::uint32_t j = order_[static_cast<std::size_t>(it - sorted_keys_.begin())];
        const double d2 = dist2(q, cloud_->point(j));
        if (d2 <= r2) fn(j, d2);
      }
    }
  }
}

}  // namespace vrc::geo
