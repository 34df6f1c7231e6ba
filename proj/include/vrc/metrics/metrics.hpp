#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vrc/diffcore/tape.hpp"
#include "vrc/geometry/completion_sample.hpp"
#include "vrc/geometry/point_cloud.hpp"

namespace vrc::metrics {

using geo::PointCloud;

// Symmetric squared Chamfer distance:
//   mean_{x in P} min_y |x - y|^2 + mean_{y in Q} min_x |x - y|^2
double chamfer(const PointCloud& p, const PointCloud& q);
// mean_{x in P} min_{y in Q} |x - y|^2
double chamfer_one_sided(const PointCloud& p, const PointCloud& q);

// Differentiable version over N x 3 / M x 3 coordinate tensors. The
// gradient follows the nearest-neighbour pairing of the forward pass (first
// found on ties).
diff::Var chamfer(diff::Var p, diff::Var q);

struct FScore {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// precision: share of pred points with a gt point closer than tau;
// recall: share of gt points with a pred point closer than tau.
FScore fscore(const PointCloud& pred, const PointCloud& gt, double tau = 0.01);

// Diagonal Gaussian; logvar is clamped to [-10, 10] on construction.
class GaussianParams {
 public:
  static constexpr double kLogvarMin = -10.0;
  static constexpr double kLogvarMax = 10.0;

  GaussianParams(std::vector<double> mean, std::vector<double> logvar);
  static GaussianParams standard(std::size_t dim);

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& logvar() const noexcept { return logvar_; }

 private:
  std::vector<double> mean_;
  std::vector<double> logvar_;
};

// KL[q || p] >= 0, summed over dimensions.
double gaussian_kl(const GaussianParams& q, const GaussianParams& p);
// Differentiable KL[q || p] over mean / logvar vectors.
diff::Var gaussian_kl(diff::Var q_mean, diff::Var q_logvar, diff::Var p_mean, diff::Var p_logvar);

// Column order of the published result tables.
inline constexpr std::array<std::string_view, 16> kCategories{
    "airplane", "cabinet", "car",   "chair",  "lamp",      "sofa",   "table",      "watercraft",
    "bed",      "bench",   "bookshelf", "bus", "guitar", "motorbike", "pistol", "skateboard"};

bool in_taxonomy(std::string_view category);

struct CategoryStat {
  double cd_e4 = 0.0;
  double fscore = 0.0;
  std::size_t count = 0;
};

struct MetricReport {
  std::size_t points = 0;  // evaluated resolution
  double cd_e4 = 0.0;      // mean CD x 1e4
  double fscore = 0.0;     // mean F-score@tau
  std::size_t count = 0;
  std::map<std::string, CategoryStat> per_category;
  std::vector<std::string> flagged_categories;  // not in kCategories
};

// preds[i] is compared against gts[i].complete at the given resolution slot
// (index into kResolutionMultiples).
MetricReport evaluate_dataset(const std::vector<PointCloud>& preds,
                              const std::vector<geo::CompletionSample>& gts, std::size_t slot = 0,
                              double tau = 0.01);

// Delimiter-separated table: one row per (method, metric, resolution), one
// column per category in kCategories order, then unlisted categories, then
// the average. Missing categories print "-".
std::string to_table(const std::vector<MetricReport>& reports, const std::string& method,
                     char delimiter = ',');

}  // namespace vrc::metrics
