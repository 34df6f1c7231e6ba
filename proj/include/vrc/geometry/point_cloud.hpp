#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "vrc/diffcore/tensor.hpp"

namespace vrc::geo {

using Vec3 = std::array<double, 3>;

enum class CloudRole { unspecified, partial, complete, coarse, fine, reconstructed };

std::string_view to_string(CloudRole role);

// N x 3 coordinates in normalized model units. Coordinates are checked
// finite on construction; an empty cloud is representable so that
// operations can reject it with a contract error.
class PointCloud {
 public:
  PointCloud() : xyz_(diff::Shape{0, 3}) {}
  explicit PointCloud(diff::Tensor xyz, CloudRole role = CloudRole::unspecified);
  static PointCloud from_points(std::span<const Vec3> pts, CloudRole role = CloudRole::unspecified);

  std::size_t size() const noexcept { return xyz_.rows(); }
  bool empty() const noexcept { return size() == 0; }
  CloudRole role() const noexcept { return role_; }
  void set_role(CloudRole r) noexcept { role_ = r; }

  Vec3 point(std::size_t i) const { return {xyz_(i, 0), xyz_(i, 1), xyz_(i, 2)}; }
  const diff::Tensor& xyz() const noexcept { return xyz_; }
  std::span<const double> flat() const noexcept { return xyz_.data(); }

  PointCloud subset(std::span<const std::uint32_t> index) const;

 private:
  diff::Tensor xyz_;
  CloudRole role_ = CloudRole::unspecified;
};

inline double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Smallest pairwise distance (not squared); +inf for fewer than two points.
double min_pairwise_distance(const PointCloud& cloud);

}  // namespace vrc::geo
