#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "test_util.hpp"
#include "vrc/diffcore/checkpoint.hpp"
#include "vrc/errors.hpp"
#include "vrc/geometry/geometry.hpp"
#include "vrc/metrics/metrics.hpp"
#include "vrc/mvpgen/mvpgen.hpp"

using namespace vrc;
namespace fs = std::filesystem;
using geo::PointCloud;
using geo::Vec3;

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

std::vector<double> sorted_dots(const mvp::ViewSet& v) {
  std::vector<double> d;
  for (std::size_t i = 0; i < mvp::kViewCount; ++i)
    for (std::size_t j = i + 1; j < mvp::kViewCount; ++j) d.push_back(dot(v.poses[i].direction, v.poses[j].direction));
  std::sort(d.begin(), d.end());
  return d;
}

bool subset_of(const PointCloud& small, const PointCloud& big) {
  std::set<std::array<double, 3>> b;
  for (std::size_t i = 0; i < big.size(); ++i) b.insert(big.point(i));
  for (std::size_t i = 0; i < small.size(); ++i)
    if (!b.count(small.point(i))) return false;
  return true;
}

mvp::GenerationOptions small_options() {
  mvp::GenerationOptions o;
  o.base_n = 64;
  o.grid_w = 80;
  o.grid_h = 60;
  o.seed = 4;
  return o;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vrc_mvpgen_" + name);
  fs::remove_all(p);
  return p;
}

DataErrorCode read_error(const fs::path& dir, std::string* what = nullptr) {
  try {
    mvp::read_dataset(dir);
  } catch (const DataError& e) {
    if (what) *what = e.what();
    return e.code();
  }
  ADD_FAILURE() << "read_dataset accepted a damaged dataset";
  return DataErrorCode::io;
}

}  // namespace

TEST(Views, TwentySixUnitDirections) {
  const auto dirs = mvp::canonical_directions();
  std::set<std::array<double, 3>> distinct(dirs.begin(), dirs.end());
  EXPECT_EQ(distinct.size(), 26u);
  const auto v = mvp::camera_view_set(5);
  for (const auto& p : v.poses) {
    EXPECT_NEAR(dot(p.direction, p.direction), 1.0, 1e-12);
    EXPECT_NEAR(dot(p.direction, p.up), 0.0, 1e-12);
  }
}

TEST(Views, RandomRotationIsProperAndPreservesGeometry) {
  for (std::uint64_t seed : {1, 2, 3, 77}) {
    const auto r = mvp::random_rotation(seed);
    const double det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) -
                       r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]) +
                       r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
    EXPECT_NEAR(det, 1.0, 1e-12);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(dot(r[i], r[j]), i == j ? 1.0 : 0.0, 1e-12);
  }
  const auto a = sorted_dots(mvp::camera_view_set(1)), b = sorted_dots(mvp::camera_view_set(2));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  EXPECT_NE(mvp::camera_view_set(1).poses[0].direction, mvp::camera_view_set(2).poses[0].direction);
}

TEST(Render, SinglePointAndOccludedPair) {
  mvp::CameraPose pose{{0, 0, 1}, {0, 1, 0}, 2.0};
  const auto one = PointCloud::from_points(std::vector<Vec3>{{0.1, 0.2, 0.3}});
  EXPECT_EQ(mvp::render_partial(one, pose, 20, 20).xyz(), one.xyz());

  // Both on the viewing ray; the camera sits at z = -2 looking toward +z.
  const auto pair = PointCloud::from_points(std::vector<Vec3>{{0, 0, 0.5}, {0, 0, -0.5}});
  EXPECT_EQ(mvp::render_visible(pair, pose, 20, 20), std::vector<std::uint32_t>{1});
}

TEST(Render, SphereShowsRoughlyOneHemisphereInSourceOrder) {
  const auto sphere = mvp::prepare_dense(mvp::synthetic_shape("sphere", 4000, 1));
  const mvp::CameraPose pose{{1, 0, 0}, {0, 0, 1}, 2.0};
  const auto idx = mvp::render_visible(sphere, pose, 200, 150);
  EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
  const double share = static_cast<double>(idx.size()) / 4000.0;
  EXPECT_GT(share, 0.3);
  EXPECT_LT(share, 0.55);
  for (auto i : idx) EXPECT_LT(sphere.point(i)[0], 0.2);  // faces the camera at x = -2
}

TEST(Render, EmptyViewIsDataError) {
  mvp::CameraPose pose{{0, 0, 1}, {0, 1, 0}, 2.0};
  try {
    mvp::render_partial(PointCloud{}, pose, 10, 10);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrorCode::empty_view);
  } catch (const ContractError&) {
  }
}

TEST(BuildSample, ViewCountsResolutionsAndSubsets) {
  const auto dense = mvp::synthetic_shape("torus", 4096, 2);
  const auto prepared = mvp::prepare_dense(dense);
  const auto o = small_options();
  const auto r = mvp::build_sample(dense, "torus", "t0", mvp::camera_view_set(3), o);
  EXPECT_EQ(r.samples.size() + r.skipped.size(), mvp::kViewCount);
  EXPECT_GE(r.samples.size(), 20u);
  std::set<int> views;
  for (const auto& s : r.samples) {
    views.insert(s.view_index);
    EXPECT_EQ(s.partial.size(), 64u);
    EXPECT_TRUE(subset_of(s.partial, prepared));
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(s.complete[k].size(), 64 * geo::kResolutionMultiples[k]);
      EXPECT_TRUE(subset_of(s.complete[k], prepared));
    }
    EXPECT_EQ(s.complete[3].xyz(), r.samples[0].complete[3].xyz());
  }
  EXPECT_EQ(views.size(), r.samples.size());
}

TEST(BuildSample, GroundTruthIsWellSpread) {
  const auto dense = mvp::synthetic_shape("sphere", 8192, 3);
  const auto r = mvp::build_sample(dense, "sphere", "s0", mvp::camera_view_set(4), small_options());
  ASSERT_FALSE(r.samples.empty());
  const auto prepared = mvp::prepare_dense(dense);
  std::mt19937_64 rng(5);
  for (std::size_t k = 0; k < 4; ++k) {
    const PointCloud& gt = r.samples[0].complete[k];
    const double spacing = geo::min_pairwise_distance(gt);
    int beaten = 0;
    for (int trial = 0; trial < 20; ++trial) {
      auto perm = test::random_permutation(prepared.size(), rng);
      perm.resize(gt.size());
      if (geo::min_pairwise_distance(prepared.subset(perm)) >= spacing) ++beaten;
    }
    EXPECT_EQ(beaten, 0) << "resolution " << gt.size();
  }
}

TEST(Views, UnionRecallOnDenseSphere) {
  const auto sphere = mvp::prepare_dense(mvp::synthetic_shape("sphere", 8192, 6));
  const auto views = mvp::camera_view_set(7);
  std::set<std::uint32_t> seen;
  for (const auto& pose : views.poses)
    for (auto i : mvp::render_visible(sphere, pose, 200, 150)) seen.insert(i);
  const std::vector<std::uint32_t> idx(seen.begin(), seen.end());
  const double pitch = 2.0 / 150.0;
  EXPECT_GT(metrics::fscore(sphere.subset(idx), sphere, 2.0 * pitch).precision, 0.99);
  EXPECT_GT(metrics::fscore(sphere.subset(idx), sphere, 2.0 * pitch).recall, 0.99);
}

TEST(Xyz, RoundTripAndParseErrors) {
  const fs::path dir = scratch_dir("xyz");
  fs::create_directories(dir);
  std::mt19937_64 rng(8);
  const auto c = mvp::quantize_f32(test::random_cloud(17, rng));
  mvp::write_xyz(dir / "a.xyz", c);
  EXPECT_EQ(mvp::read_xyz(dir / "a.xyz").xyz(), c.xyz());

  std::ofstream(dir / "b.xyz") << "# header\n\n1 2 3\n4 five 6\n";
  try {
    mvp::read_xyz(dir / "b.xyz");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataErrorCode::parse);
    EXPECT_NE(std::string(e.what()).find("b.xyz:4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(mvp::read_xyz(dir / "missing.xyz"), DataError);
}

TEST(Blob, RoundTripIsExactForFloat32Values) {
  std::mt19937_64 rng(9);
  const auto c = mvp::quantize_f32(test::random_cloud(33, rng));
  const std::string bytes = mvp::encode_blob(c);
  EXPECT_EQ(bytes.size(), 33u * 12u);
  EXPECT_EQ(mvp::decode_blob(bytes, "x").xyz(), c.xyz());
  EXPECT_EQ(mvp::quantize_f32(c).xyz(), c.xyz());
}

TEST(Dataset, WriteReadRoundTripAndManifestCounts) {
  const auto models = mvp::synthetic_models(2, 2048, 10);
  const auto o = small_options();
  const auto d = mvp::generate_dataset(models, o, 1);
  const fs::path dir = scratch_dir("roundtrip");
  const auto manifest = mvp::write_dataset(dir, d, o);
  EXPECT_EQ(manifest.at("sample_count").get<std::size_t>(), d.samples.size());
  EXPECT_EQ(manifest.at("files_per_sample").get<std::size_t>(), 5u);

  const auto back = mvp::read_dataset(dir);
  ASSERT_EQ(back.samples.size(), d.samples.size());
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].partial.xyz(), d.samples[i].partial.xyz());
    EXPECT_EQ(back.samples[i].model_id, d.samples[i].model_id);
    EXPECT_EQ(back.samples[i].split, d.samples[i].split);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(back.samples[i].complete[k].xyz(), d.samples[i].complete[k].xyz());
  }
  EXPECT_EQ(back.skipped.size(), d.skipped.size());
}

TEST(Dataset, DamagedInputsRaiseCodedErrors) {
  const auto models = mvp::synthetic_models(1, 2048, 11);
  const auto o = small_options();
  const auto d = mvp::generate_dataset(models, o, 1);
  const fs::path dir = scratch_dir("damaged");
  mvp::write_dataset(dir, d, o);
  const auto& s = d.samples.front();
  const fs::path blob = dir / mvp::blob_name(s.model_id, s.view_index, "partial", s.partial.size());

  std::string bytes = diff::read_file(blob);
  diff::write_file_atomic(blob, bytes + "abcd");
  std::string what;
  EXPECT_EQ(read_error(dir, &what), DataErrorCode::truncated_blob);
  EXPECT_NE(what.find(blob.filename().string()), std::string::npos) << what;

  diff::write_file_atomic(blob, bytes.substr(0, bytes.size() - 12));
  EXPECT_EQ(read_error(dir), DataErrorCode::count_mismatch);
  diff::write_file_atomic(blob, bytes);

  const std::string manifest = diff::read_file(dir / "manifest.json");
  auto j = nlohmann::json::parse(manifest);
  j["format_version"] = mvp::kDatasetVersion + 1;
  diff::write_file_atomic(dir / "manifest.json", j.dump());
  EXPECT_EQ(read_error(dir), DataErrorCode::version_mismatch);
  diff::write_file_atomic(dir / "manifest.json", manifest);

  fs::remove(blob);
  EXPECT_EQ(read_error(dir), DataErrorCode::count_mismatch);
  EXPECT_EQ(read_error(dir / "nowhere"), DataErrorCode::io);
}

TEST(Dataset, SameSeedIsBitIdenticalAcrossWorkerCounts) {
  const auto models = mvp::synthetic_models(3, 2048, 12);
  const auto o = small_options();
  const auto a = mvp::generate_dataset(models, o, 1);
  const auto b = mvp::generate_dataset(models, o, 3);
  EXPECT_EQ(a.manifest, b.manifest);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(mvp::encode_blob(a.samples[i].partial), mvp::encode_blob(b.samples[i].partial));
    for (std::size_t k = 0; k < 4; ++k)
      EXPECT_EQ(mvp::encode_blob(a.samples[i].complete[k]), mvp::encode_blob(b.samples[i].complete[k]));
  }
}

TEST(Split, DependsOnModelIdOnly) {
  EXPECT_EQ(mvp::split_for("abc", 0.3), mvp::split_for("abc", 0.3));
  EXPECT_EQ(mvp::split_for("abc", 0.0), "train");
  EXPECT_EQ(mvp::split_for("abc", 1.0), "test");
  int test = 0;
  for (int i = 0; i < 1000; ++i) test += mvp::split_for("m" + std::to_string(i), 0.2) == "test";
  EXPECT_NEAR(test, 200, 60);
}
