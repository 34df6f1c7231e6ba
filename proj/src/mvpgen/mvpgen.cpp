#include "vrc/mvpgen/mvpgen.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "vrc/diffcore/checkpoint.hpp"
#include "vrc/diffcore/param_store.hpp"
#include "vrc/errors.hpp"
#include "vrc/geometry/geometry.hpp"

namespace vrc::mvp {

namespace fs = std::filesystem;
using diff::Shape;
using diff::Tensor;
using nlohmann::json;

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 rotate(const Mat3& m, const Vec3& v) { return {dot(m[0], v), dot(m[1], v), dot(m[2], v)}; }

}  // namespace

// ---- views ----

std::array<Vec3, kViewCount> canonical_directions() {
  std::array<Vec3, kViewCount> out{};
  std::size_t i = 0;
  for (int x = -1; x <= 1; ++x)
    for (int y = -1; y <= 1; ++y)
      for (int z = -1; z <= 1; ++z)
        if (x || y || z) out[i++] = normalized({double(x), double(y), double(z)});
  return out;
}

Mat3 random_rotation(std::uint64_t seed) {
  // Normalized Gaussian 4-vector = uniform unit quaternion.
  std::mt19937_64 rng(diff::mix_seed(seed, "view-rotation"));
  std::normal_distribution<double> normal;
  double q[4];
  double n = 0.0;
  do {
    n = 0.0;
    for (double& v : q) {
      v = normal(rng);
      n += v * v;
    }
  } while (n < 1e-12);
  n = std::sqrt(n);
  const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
  return Mat3{Vec3{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
              Vec3{2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
              Vec3{2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

ViewSet camera_view_set(std::uint64_t seed) {
  ViewSet set;
  set.seed = seed;
  set.rotation = random_rotation(seed);
  const auto dirs = canonical_directions();
  for (std::size_t i = 0; i < kViewCount; ++i) {
    const Vec3& d = dirs[i];
    const Vec3 ref = std::abs(d[2]) > 0.9 ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
    const double proj = dot(ref, d);
    const Vec3 up = normalized({ref[0] - proj * d[0], ref[1] - proj * d[1], ref[2] - proj * d[2]});
    set.poses[i].direction = normalized(rotate(set.rotation, d));
    set.poses[i].up = normalized(rotate(set.rotation, up));
  }
  return set;
}

// ---- rendering ----

std::vector<std::uint32_t> render_visible(const PointCloud& dense, const CameraPose& pose,
                                          std::size_t grid_w, std::size_t grid_h,
                                          const RenderOptions& options) {
  VRC_REQUIRE(grid_w >= 1 && grid_h >= 1, "render_partial: empty pixel grid");
  VRC_REQUIRE(options.splat_scale >= 0.0 && options.depth_tolerance_scale >= 0.0,
              "render_partial: negative splat options");
  const std::size_t n = dense.size();
  if (n == 0) throw DataError(DataErrorCode::empty_view, "render_partial: empty source cloud");
  const Vec3 dir = normalized(pose.direction);
  const Vec3 up = normalized(pose.up);
  const Vec3 right = cross(dir, up);
  const double s = 2.0 / static_cast<double>(std::min(grid_w, grid_h));
  const double x0 = -0.5 * s * static_cast<double>(grid_w);
  const double y0 = -0.5 * s * static_cast<double>(grid_h);
  const double radius = n >= 2 ? options.splat_scale * geo::mean_spacing(dense) : 0.0;
  const double tolerance = options.depth_tolerance_scale * radius;

  const std::size_t pixels = grid_w * grid_h;
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> nearest(pixels, kNone);
  std::vector<double> zbuf(pixels, std::numeric_limits<double>::infinity());
  std::vector<double> depth(n);
  std::vector<std::int64_t> pixel_of(n, -1);
  const auto reach = static_cast<std::int64_t>(std::ceil(radius / s));
  const auto gw = static_cast<std::int64_t>(grid_w), gh = static_cast<std::int64_t>(grid_h);

  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = dense.point(i);
    const double u = dot(right, p), v = dot(up, p);
    depth[i] = dot(dir, p);
    const auto px = static_cast<std::int64_t>(std::floor((u - x0) / s));
    const auto py = static_cast<std::int64_t>(std::floor((v - y0) / s));
    if (px < 0 || py < 0 || px >= gw || py >= gh) continue;
    const std::int64_t pix = py * gw + px;
    pixel_of[i] = pix;
    std::uint32_t& best = nearest[static_cast<std::size_t>(pix)];
    if (best == kNone || depth[i] < depth[best]) best = static_cast<std::uint32_t>(i);
    // Splat the point as a disk of the given radius.
    zbuf[static_cast<std::size_t>(pix)] = std::min(zbuf[static_cast<std::size_t>(pix)], depth[i]);
    for (std::int64_t qy = std::max<std::int64_t>(0, py - reach);
         qy <= std::min<std::int64_t>(gh - 1, py + reach); ++qy) {
      const double cy = y0 + (static_cast<double>(qy) + 0.5) * s - v;
      for (std::int64_t qx = std::max<std::int64_t>(0, px - reach);
           qx <= std::min<std::int64_t>(gw - 1, px + reach); ++qx) {
        const double cx = x0 + (static_cast<double>(qx) + 0.5) * s - u;
        if (cx * cx + cy * cy > radius * radius) continue;
        double& z = zbuf[static_cast<std::size_t>(qy * gw + qx)];
        z = std::min(z, depth[i]);
      }
    }
  }
  std::vector<std::uint32_t> visible;
  for (std::size_t i = 0; i < n; ++i) {
    if (pixel_of[i] < 0) continue;
    const auto pix = static_cast<std::size_t>(pixel_of[i]);
    if (nearest[pix] == i && depth[i] <= zbuf[pix] + tolerance)
      visible.push_back(static_cast<std::uint32_t>(i));
  }
  if (visible.empty())
    throw DataError(DataErrorCode::empty_view, "render_partial: no point visible from this pose");
  return visible;
}

PointCloud render_partial(const PointCloud& dense, const CameraPose& pose, std::size_t grid_w,
                          std::size_t grid_h, const RenderOptions& options) {
  PointCloud out = dense.subset(render_visible(dense, pose, grid_w, grid_h, options));
  out.set_role(geo::CloudRole::partial);
  return out;
}

// ---- samples ----

PointCloud quantize_f32(const PointCloud& cloud) {
  Tensor t = cloud.xyz();
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  return PointCloud(std::move(t), cloud.role());
}

PointCloud prepare_dense(const PointCloud& dense) {
  return quantize_f32(geo::normalize(dense).cloud);
}

ModelSamples build_sample(const PointCloud& dense, const std::string& category,
                          const std::string& model_id, const ViewSet& views,
                          const GenerationOptions& options) {
  const std::size_t base = options.base_n;
  VRC_REQUIRE(base >= 1, "build_sample: base_n must be positive");
  VRC_REQUIRE(dense.size() >= 32 * base,
              "build_sample: model '" + model_id + "' has " + std::to_string(dense.size()) +
                  " points, needs at least " + std::to_string(32 * base));
  const PointCloud source = prepare_dense(dense);

  std::array<PointCloud, 4> complete;
  for (std::size_t r = 0; r < geo::kResolutionMultiples.size(); ++r) {
    complete[r] = geo::poisson_disk_sample(source, geo::kResolutionMultiples[r] * base).cloud;
    complete[r].set_role(geo::CloudRole::complete);
  }

  ModelSamples out;
  const std::string split = split_for(model_id, options.split_frac);
  for (std::size_t v = 0; v < kViewCount; ++v) {
    std::vector<std::uint32_t> visible;
    try {
      visible = render_visible(source, views.poses[v], options.grid_w, options.grid_h,
                               options.render);
    } catch (const DataError& e) {
      out.skipped.push_back({model_id, static_cast<int>(v), e.what()});
      continue;
    }
    if (visible.size() < base) {
      out.skipped.push_back({model_id, static_cast<int>(v),
                             "visible set of " + std::to_string(visible.size()) +
                                 " points is below base_n " + std::to_string(base)});
      continue;
    }
    CompletionSample s;
    s.partial = geo::farthest_point_sample(
        source.subset(visible), base,
        diff::mix_seed(options.seed, model_id + "/" + std::to_string(v)));
    s.partial.set_role(geo::CloudRole::partial);
    s.complete = complete;
    s.category = category;
    s.model_id = model_id;
    s.view_index = static_cast<int>(v);
    s.split = split;
    out.samples.push_back(std::move(s));
  }
  return out;
}

std::string split_for(const std::string& model_id, double split_frac) {
  VRC_REQUIRE(split_frac >= 0.0 && split_frac <= 1.0, "split_frac must lie in [0, 1]");
  const std::uint64_t h = diff::mix_seed(0, model_id);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < split_frac ? "test" : "train";
}

// ---- synthetic shapes ----

const std::vector<std::string>& synthetic_shape_names() {
  static const std::vector<std::string> names{"sphere", "box", "cylinder", "torus", "cone"};
  return names;
}

PointCloud synthetic_shape(const std::string& name, std::size_t n, std::uint64_t seed) {
  VRC_REQUIRE(n >= 1, "synthetic_shape: n must be positive");
  std::mt19937_64 rng(diff::mix_seed(seed, name));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal;
  constexpr double pi = std::numbers::pi;
  std::vector<Vec3> pts;
  pts.reserve(n);
  auto pick_by_area = [&](std::span<const double> areas) {
    double total = 0.0;
    for (double a : areas) total += a;
    double t = uni(rng) * total;
    for (std::size_t i = 0; i < areas.size(); ++i) {
      if (t < areas[i]) return i;
      t -= areas[i];
    }
    return areas.size() - 1;
  };

  if (name == "sphere") {
    while (pts.size() < n) {
      Vec3 v{normal(rng), normal(rng), normal(rng)};
      const double r = std::sqrt(dot(v, v));
      if (r < 1e-12) continue;
      pts.push_back({v[0] / r, v[1] / r, v[2] / r});
    }
  } else if (name == "box") {
    const Vec3 h{1.0, 0.6, 0.4};  // half extents
    const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};
    while (pts.size() < n) {
      const std::size_t axis = pick_by_area(areas);
      Vec3 p{};
      for (std::size_t k = 0; k < 3; ++k) p[k] = (2.0 * uni(rng) - 1.0) * h[k];
      p[axis] = uni(rng) < 0.5 ? -h[axis] : h[axis];
      pts.push_back(p);
    }
  } else if (name == "cylinder") {
    const double r = 0.5, hh = 0.8;
    const double areas[2] = {2 * pi * r * 2 * hh, 2 * pi * r * r};
    while (pts.size() < n) {
      const double t = 2 * pi * uni(rng);
      if (pick_by_area(areas) == 0) {
        pts.push_back({r * std::cos(t), r * std::sin(t), (2 * uni(rng) - 1) * hh});
      } else {
        const double rr = r * std::sqrt(uni(rng));
        pts.push_back({rr * std::cos(t), rr * std::sin(t), uni(rng) < 0.5 ? -hh : hh});
      }
    }
  } else if (name == "torus") {
    const double big = 0.7, small = 0.3;
    while (pts.size() < n) {
      const double u = 2 * pi * uni(rng), v = 2 * pi * uni(rng);
      // Area element is proportional to big + small cos v.
      if (uni(rng) * (big + small) > big + small * std::cos(v)) continue;
      const double ring = big + small * std::cos(v);
      pts.push_back({ring * std::cos(u), ring * std::sin(u), small * std::sin(v)});
    }
  } else if (name == "cone") {
    const double r = 0.6, h = 1.2;
    const double slant = std::sqrt(r * r + h * h);
    const double areas[2] = {pi * r * slant, pi * r * r};
    while (pts.size() < n) {
      const double t = 2 * pi * uni(rng);
      if (pick_by_area(areas) == 0) {
        const double a = std::sqrt(uni(rng));  // 0 at the apex
        pts.push_back({a * r * std::cos(t), a * r * std::sin(t), 0.5 * h - a * h});
      } else {
        const double rr = r * std::sqrt(uni(rng));
        pts.push_back({rr * std::cos(t), rr * std::sin(t), -0.5 * h});
      }
    }
  } else {
    throw ConfigError("unknown synthetic shape '" + name + "'");
  }
  return PointCloud::from_points(pts);
}

std::vector<DenseModel> synthetic_models(std::size_t count, std::size_t points, std::uint64_t seed) {
  const auto& names = synthetic_shape_names();
  std::vector<DenseModel> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& shape = names[i % names.size()];
    char id[64];
    std::snprintf(id, sizeof id, "%s_%03zu", shape.c_str(), i);
    const std::uint64_t s = diff::mix_seed(seed, id);
    PointCloud base = synthetic_shape(shape, points, s);
    // Per-model anisotropic stretch so models of one shape differ.
    std::mt19937_64 rng(s);
    std::uniform_real_distribution<double> stretch(0.6, 1.0);
    Tensor t = base.xyz();
    const Vec3 k{stretch(rng), stretch(rng), stretch(rng)};
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < 3; ++c) t(r, c) *= k[c];
    out.push_back({shape, id, PointCloud(std::move(t), geo::CloudRole::complete)});
  }
  return out;
}

PointCloud read_xyz(const fs::path& f) {
  std::ifstream in(f);
  if (!in) throw DataError(DataErrorCode::io, "cannot open '" + f.string() + "'");
  std::vector<Vec3> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Vec3 p{};
    if (!(ls >> p[0] >> p[1] >> p[2]) || !std::isfinite(p[0]) || !std::isfinite(p[1]) ||
        !std::isfinite(p[2]))
      throw DataError(DataErrorCode::parse,
                      f.string() + ":" + std::to_string(line_no) + ": expected three numbers");
    pts.push_back(p);
  }
  if (pts.empty()) throw DataError(DataErrorCode::parse, f.string() + ": no points");
  return PointCloud::from_points(pts);
}

void write_xyz(const fs::path& f, const PointCloud& cloud) {
  std::string text;
  char line[96];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 p = cloud.point(i);
    std::snprintf(line, sizeof line, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    text += line;
  }
  diff::write_file_atomic(f, text);
}

std::vector<DenseModel> load_models(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec))
    throw DataError(DataErrorCode::io, "model directory '" + dir.string() + "' not found");
  std::vector<fs::path> files;
  for (const auto& cat : fs::directory_iterator(dir))
    if (cat.is_directory())
      for (const auto& f : fs::directory_iterator(cat.path()))
        if (f.is_regular_file() && f.path().extension() == ".xyz") files.push_back(f.path());
  std::sort(files.begin(), files.end());
  std::vector<DenseModel> out;
  for (const fs::path& f : files)
    out.push_back({f.parent_path().filename().string(), f.stem().string(), read_xyz(f)});
  return out;
}

// ---- dataset ----

namespace {

json make_manifest(const Dataset& d, const GenerationOptions& o) {
  std::map<std::string, std::size_t> categories;
  json samples = json::array();
  for (const CompletionSample& s : d.samples) {
    ++categories[s.category];
    json files = json::object();
    files["partial"] = blob_name(s.model_id, s.view_index, "partial", s.partial.size());
    json complete = json::array();
    for (const PointCloud& c : s.complete)
      complete.push_back(blob_name(s.model_id, s.view_index, "complete", c.size()));
    files["complete"] = complete;
    samples.push_back({{"model_id", s.model_id},
                       {"category", s.category},
                       {"view", s.view_index},
                       {"split", s.split},
                       {"files", files}});
  }
  json skipped = json::array();
  for (const SkippedView& v : d.skipped)
    skipped.push_back({{"model_id", v.model_id}, {"view", v.view_index}, {"reason", v.reason}});
  std::vector<std::size_t> res;
  for (std::size_t m : geo::kResolutionMultiples) res.push_back(m * o.base_n);
  return json{{"format", "vrc-mvp"},
              {"format_version", kDatasetVersion},
              {"base_n", o.base_n},
              {"grid", {o.grid_w, o.grid_h}},
              {"seed", o.seed},
              {"split_frac", o.split_frac},
              {"resolutions", res},
              {"roles", {"partial", "complete"}},
              {"files_per_sample", 1 + geo::kResolutionMultiples.size()},
              {"categories", categories},
              {"sample_count", d.samples.size()},
              {"samples", samples},
              {"skipped", skipped}};
}

}  // namespace

Dataset generate_dataset(const std::vector<DenseModel>& models, const GenerationOptions& options,
                         int jobs) {
  VRC_REQUIRE(jobs >= 1, "generate_dataset: jobs must be at least 1");
  std::vector<ModelSamples> per_model(models.size());
  std::vector<std::exception_ptr> errors(models.size());
  const auto count = static_cast<std::ptrdiff_t>(models.size());
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const DenseModel& m = models[static_cast<std::size_t>(i)];
    try {
      const ViewSet views = camera_view_set(diff::mix_seed(options.seed, m.model_id));
      per_model[static_cast<std::size_t>(i)] =
          build_sample(m.dense, m.category, m.model_id, views, options);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  Dataset d;
  for (ModelSamples& m : per_model) {
    for (auto& s : m.samples) d.samples.push_back(std::move(s));
    for (auto& s : m.skipped) d.skipped.push_back(std::move(s));
  }
  d.manifest = make_manifest(d, options);
  return d;
}

std::string blob_name(const std::string& model_id, int view, std::string_view role,
                      std::size_t resolution) {
  return model_id + "_" + std::to_string(view) + "_" + std::string(role) + "_" +
         std::to_string(resolution) + ".bin";
}

std::string encode_blob(const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 12);
  for (double v : cloud.flat()) diff::append_f32_le(out, static_cast<float>(v));
  return out;
}

PointCloud decode_blob(const std::string& bytes, const std::string& name) {
  if (bytes.size() % 12 != 0)
    throw DataError(DataErrorCode::truncated_blob,
                    "blob '" + name + "' has " + std::to_string(bytes.size()) +
                        " bytes, not a whole number of float32 triplets");
  const std::size_t n = bytes.size() / 12;
  Tensor t(Shape{n, 3});
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < n * 3; ++i) t[i] = static_cast<double>(diff::read_f32_le(p + 4 * i));
  return PointCloud(std::move(t));
}

json write_dataset(const fs::path& dir, const Dataset& dataset, const GenerationOptions& options) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(DataErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
  const json manifest = make_manifest(dataset, options);
  for (const CompletionSample& s : dataset.samples) {
    diff::write_file_atomic(dir / blob_name(s.model_id, s.view_index, "partial", s.partial.size()),
                            encode_blob(s.partial));
    for (const PointCloud& c : s.complete)
      diff::write_file_atomic(dir / blob_name(s.model_id, s.view_index, "complete", c.size()),
                              encode_blob(c));
  }
  diff::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::error_code ec;
  if (!fs::is_regular_file(manifest_path, ec))
    throw DataError(DataErrorCode::io, "no manifest at '" + manifest_path.string() + "'");
  Dataset d;
  try {
    d.manifest = json::parse(diff::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::parse, manifest_path.string() + ": " + e.what());
  }
  const json& m = d.manifest;
  try {
    if (m.at("format").get<std::string>() != "vrc-mvp")
      throw DataError(DataErrorCode::parse, manifest_path.string() + ": not a dataset manifest");
    const int version = m.at("format_version").get<int>();
    if (version != kDatasetVersion)
      throw DataError(DataErrorCode::version_mismatch,
                      manifest_path.string() + ": format version " + std::to_string(version) +
                          ", this build reads " + std::to_string(kDatasetVersion));
    const json& samples = m.at("samples");
    const std::size_t per_sample = m.at("files_per_sample").get<std::size_t>();
    if (samples.size() != m.at("sample_count").get<std::size_t>())
      throw DataError(DataErrorCode::count_mismatch,
                      manifest_path.string() + ": sample_count disagrees with the sample list");
    std::size_t blobs = 0;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".bin") ++blobs;
    if (blobs != samples.size() * per_sample)
      throw DataError(DataErrorCode::count_mismatch,
                      dir.string() + ": manifest lists " + std::to_string(samples.size()) +
                          " samples (" + std::to_string(samples.size() * per_sample) +
                          " blobs) but " + std::to_string(blobs) + " blobs are on disk");
    const std::size_t base = m.at("base_n").get<std::size_t>();
    auto load = [&](const std::string& name, std::size_t expected, geo::CloudRole role) {
      const fs::path p = dir / name;
      if (!fs::is_regular_file(p, ec))
        throw DataError(DataErrorCode::io, "missing blob '" + p.string() + "'");
      PointCloud c = decode_blob(diff::read_file(p), p.string());
      if (c.size() != expected)
        throw DataError(DataErrorCode::count_mismatch,
                        "blob '" + p.string() + "' holds " + std::to_string(c.size()) +
                            " points, manifest expects " + std::to_string(expected));
      c.set_role(role);
      return c;
    };
    for (const json& e : samples) {
      CompletionSample s;
      s.model_id = e.at("model_id").get<std::string>();
      s.category = e.at("category").get<std::string>();
      s.view_index = e.at("view").get<int>();
      s.split = e.at("split").get<std::string>();
      const json& files = e.at("files");
      s.partial = load(files.at("partial").get<std::string>(), base, geo::CloudRole::partial);
      const json& complete = files.at("complete");
      if (complete.size() != s.complete.size())
        throw DataError(DataErrorCode::count_mismatch,
                        manifest_path.string() + ": sample needs " +
                            std::to_string(s.complete.size()) + " complete clouds");
      for (std::size_t r = 0; r < s.complete.size(); ++r)
        s.complete[r] = load(complete[r].get<std::string>(), geo::kResolutionMultiples[r] * base,
                             geo::CloudRole::complete);
      d.samples.push_back(std::move(s));
    }
    for (const json& e : m.at("skipped"))
      d.skipped.push_back({e.at("model_id").get<std::string>(), e.at("view").get<int>(),
                           e.at("reason").get<std::string>()});
  } catch (const json::exception& e) {
    throw DataError(DataErrorCode::parse, manifest_path.string() + ": " + e.what());
  }
  return d;
}

}  // namespace vrc::mvp
