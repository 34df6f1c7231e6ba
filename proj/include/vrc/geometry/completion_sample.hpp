#pragma once

#include <array>
#include <string>

#include "vrc/geometry/point_cloud.hpp"

namespace vrc::geo {

// Ground truth is stored at these multiples of the base resolution.
inline constexpr std::array<std::size_t, 4> kResolutionMultiples{1, 2, 4, 8};

// One partial scan with its complete shape at every resolution. All clouds
// share the complete shape's normalization.
struct CompletionSample {
  PointCloud partial;
  std::array<PointCloud, 4> complete;  // indexed like kResolutionMultiples
  std::string category;
  std::string model_id;
  int view_index = 0;
  std::string split = "train";

  std::size_t base_n() const { return partial.size(); }
};

// Index into kResolutionMultiples, or -1.
inline int resolution_slot(std::size_t multiple) {
  for (std::size_t i = 0; i < kResolutionMultiples.size(); ++i)
    if (kResolutionMultiples[i] == multiple) return static_cast<int>(i);
  return -1;
}

}  // namespace vrc::geo
