#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "vrc/diffcore/tensor.hpp"
#include "vrc/geometry/point_cloud.hpp"

namespace vrc::test {

inline diff::Tensor random_tensor(diff::Shape shape, std::mt19937_64& rng, double lo = -1.0,
                                  double hi = 1.0) {
  diff::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

inline geo::PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  return geo::PointCloud(random_tensor({n, 3}, rng));
}

inline std::vector<std::uint32_t> random_permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint32_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint32_t>(i);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Rows of t reordered so that row i of the result is row perm[i] of t.
inline diff::Tensor permute_rows(const diff::Tensor& t, const std::vector<std::uint32_t>& perm) {
  diff::Tensor out(t.shape());
  const std::size_t c = t.cols();
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) = t(perm[i], j);
  return out;
}

}  // namespace vrc::test
