#include "vrc/geometry/point_cloud.hpp"

#include <cmath>
#include <limits>

#include "vrc/errors.hpp"
#include "vrc/kernels/kernels.hpp"

namespace vrc::geo {

std::string_view to_string(CloudRole role) {
  switch (role) {
    case CloudRole::unspecified: return "unspecified";
    case CloudRole::partial: return "partial";
    case CloudRole::complete: return "complete";
    case CloudRole::coarse: return "coarse";
    case CloudRole::fine: return "fine";
    case CloudRole::reconstructed: return "reconstructed";
  }
  return "unspecified";
}

PointCloud::PointCloud(diff::Tensor xyz, CloudRole role) : xyz_(std::move(xyz)), role_(role) {
  VRC_REQUIRE(xyz_.rank() == 2 && xyz_.cols() == 3,
              "point cloud needs an N x 3 tensor, got " + diff::shape_string(xyz_.shape()));
  VRC_REQUIRE(xyz_.all_finite(), "point cloud has non-finite coordinates");
}

PointCloud PointCloud::from_points(std::span<const Vec3> pts, CloudRole role) {
  std::vector<double> flat;
  flat.reserve(pts.size() * 3);
  for (const Vec3& p : pts) flat.insert(flat.end(), p.begin(), p.end());
  return PointCloud(diff::Tensor(diff::Shape{pts.size(), 3}, std::move(flat)), role);
}

PointCloud PointCloud::subset(std::span<const std::uint32_t> index) const {
  diff::Tensor out(diff::Shape{index.size(), 3});
  for (std::size_t i = 0; i < index.size(); ++i) {
    VRC_REQUIRE(index[i] < size(), "subset index out of range");
    for (std::size_t c = 0; c < 3; ++c) out(i, c) = xyz_(index[i], c);
  }
  return PointCloud(std::move(out), role_);
}

double min_pairwise_distance(const PointCloud& cloud) {
  if (cloud.size() < 2) return std::numeric_limits<double>::infinity();
  const auto nn = kernels::knn(cloud.flat(), cloud.flat(), 2);
  double best = std::numeric_limits<double>::infinity();
  // Column 0 is a zero-distance hit (the point itself or an earlier
  // duplicate); column 1 is the nearest other candidate.
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = nn.indices[2 * i] == i ? nn.dist2[2 * i + 1] : nn.dist2[2 * i];
    best = std::min(best, d);
  }
  return std::sqrt(best);
}

}  // namespace vrc::geo
