#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "vrc/geometry/completion_sample.hpp"
#include "vrc/geometry/point_cloud.hpp"

namespace vrc::mvp {

using geo::CompletionSample;
using geo::PointCloud;
using geo::Vec3;
using Mat3 = std::array<Vec3, 3>;  // rows

inline constexpr std::size_t kViewCount = 26;
inline constexpr int kDatasetVersion = 1;

// The camera looks along `direction` from distance * (-direction).
struct CameraPose {
  Vec3 direction{};
  Vec3 up{};
  double distance = 2.0;
};

struct ViewSet {
  std::array<CameraPose, kViewCount> poses{};
  Mat3 rotation{};  // applied to the canonical directions
  std::uint64_t seed = 0;
};

// The 26 normalized offsets of the 3x3x3 grid around the origin, in
// lexicographic (x, y, z) order.
std::array<Vec3, kViewCount> canonical_directions();
// Canonical directions under one uniformly random rotation drawn from seed.
ViewSet camera_view_set(std::uint64_t seed);
Mat3 random_rotation(std::uint64_t seed);

struct RenderOptions {
  // Occluder disks have radius splat_scale * mean point spacing; a point is
  // hidden when it lies further than depth_tolerance_scale * radius behind
  // the nearest disk covering its pixel.
  double splat_scale = 3.0;
  double depth_tolerance_scale = 2.0;
};

// Orthographic z-buffer on a grid of square pixels of side 2 / min(w, h).
// Survivors are the nearest point of their pixel that no splatted surface
// hides; output keeps source order. Throws DataError(empty_view) when
// nothing is visible.
PointCloud render_partial(const PointCloud& dense, const CameraPose& pose, std::size_t grid_w,
                          std::size_t grid_h, const RenderOptions& options = {});
// As above, returning indices into `dense`.
std::vector<std::uint32_t> render_visible(const PointCloud& dense, const CameraPose& pose,
                                          std::size_t grid_w, std::size_t grid_h,
                                          const RenderOptions& options = {});

struct SkippedView {
  std::string model_id;
  int view_index = 0;
  std::string reason;
};

struct GenerationOptions {
  std::size_t base_n = 512;
  std::size_t grid_w = 200;
  std::size_t grid_h = 150;
  std::uint64_t seed = 0;
  double split_frac = 0.1;  // share of models assigned to the test split
  RenderOptions render;
};

struct ModelSamples {
  std::vector<CompletionSample> samples;
  std::vector<SkippedView> skipped;
};

// The cloud every sample of a model is cut from: normalized (centroid at the
// origin, max norm 1) and rounded to float32, so derived clouds are exact
// subsets of it.
PointCloud prepare_dense(const PointCloud& dense);

// One sample per usable view, every cloud drawn from prepare_dense(dense).
ModelSamples build_sample(const PointCloud& dense, const std::string& category,
                          const std::string& model_id, const ViewSet& views,
                          const GenerationOptions& options);

// "train" or "test", decided by a hash of the model id alone.
std::string split_for(const std::string& model_id, double split_frac);

// Area-uniform samples of analytic surfaces, roughly unit sized.
const std::vector<std::string>& synthetic_shape_names();
PointCloud synthetic_shape(const std::string& name, std::size_t n, std::uint64_t seed);

struct DenseModel {
  std::string category;
  std::string model_id;
  PointCloud dense;
};

// One "x y z" triple per line; blank lines and '#' comments are skipped.
PointCloud read_xyz(const std::filesystem::path& file);
void write_xyz(const std::filesystem::path& file, const PointCloud& cloud);

// <dir>/<category>/<model_id>.xyz with one "x y z" triple per line.
std::vector<DenseModel> load_models(const std::filesystem::path& dir);
std::vector<DenseModel> synthetic_models(std::size_t count, std::size_t points, std::uint64_t seed);

struct Dataset {
  std::vector<CompletionSample> samples;
  std::vector<SkippedView> skipped;
  nlohmann::json manifest;
};

// Per-model generation is independent; `jobs` bounds the worker count.
Dataset generate_dataset(const std::vector<DenseModel>& models, const GenerationOptions& options,
                         int jobs = 1);

std::string blob_name(const std::string& model_id, int view, std::string_view role,
                      std::size_t resolution);

// manifest.json plus one float32 little-endian blob per cloud.
nlohmann::json write_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                             const GenerationOptions& options);
// Exact inverse of write_dataset. DataError codes: io, parse,
// version_mismatch, truncated_blob, count_mismatch.
Dataset read_dataset(const std::filesystem::path& dir);

// Cloud as little-endian float32 triplets, and back.
std::string encode_blob(const PointCloud& cloud);
PointCloud decode_blob(const std::string& bytes, const std::string& name);

// Round every coordinate to the nearest float32.
PointCloud quantize_f32(const PointCloud& cloud);

}  // namespace vrc::mvp
