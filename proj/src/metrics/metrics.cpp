#include "vrc/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "vrc/errors.hpp"
#include "vrc/kernels/kernels.hpp"

namespace vrc::metrics {

using diff::Shape;
using diff::Tensor;
using diff::Var;

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void require_nonempty(const PointCloud& p, const PointCloud& q, const char* op) {
  VRC_REQUIRE(!p.empty() && !q.empty(), std::string(op) + ": empty point cloud");
}

}  // namespace

double chamfer_one_sided(const PointCloud& p, const PointCloud& q) {
  require_nonempty(p, q, "chamfer");
  return mean_of(kernels::nearest(q.flat(), p.flat()).dist2);
}

double chamfer(const PointCloud& p, const PointCloud& q) {
  return chamfer_one_sided(p, q) + chamfer_one_sided(q, p);
}

Var chamfer(Var p, Var q) {
  const Tensor& pv = p.value();
  const Tensor& qv = q.value();
  VRC_REQUIRE(pv.rank() == 2 && pv.cols() == 3 && qv.rank() == 2 && qv.cols() == 3,
              "chamfer: expected N x 3 inputs");
  VRC_REQUIRE(pv.rows() > 0 && qv.rows() > 0, "chamfer: empty point cloud");
  auto p_to_q = kernels::nearest(qv.data(), pv.data());
  auto q_to_p = kernels::nearest(pv.data(), qv.data());
  const double value = mean_of(p_to_q.dist2) + mean_of(q_to_p.dist2);
  return p.tape().record(
      "chamfer", Tensor::scalar(value), {p, q},
      [pp = &pv, qp = &qv, pq = std::move(p_to_q.index), qpi = std::move(q_to_p.index)](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        const std::size_t np = pp->rows(), nq = qp->rows();
        const double sp = 2.0 * g[0] / static_cast<double>(np);
        const double sq = 2.0 * g[0] / static_cast<double>(nq);
        for (std::size_t i = 0; i < np; ++i) {
          const std::size_t j = pq[i];
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = sp * ((*pp)(i, c) - (*qp)(j, c));
            if (gin[0]) (*gin[0])(i, c) += d;
            if (gin[1]) (*gin[1])(j, c) -= d;
          }
        }
        for (std::size_t j = 0; j < nq; ++j) {
          const std::size_t i = qpi[j];
          for (std::size_t c = 0; c < 3; ++c) {
            const double d = sq * ((*qp)(j, c) - (*pp)(i, c));
            if (gin[1]) (*gin[1])(j, c) += d;
            if (gin[0]) (*gin[0])(i, c) -= d;
          }
        }
      });
}

FScore fscore(const PointCloud& pred, const PointCloud& gt, double tau) {
  require_nonempty(pred, gt, "fscore");
  VRC_REQUIRE(tau > 0.0, "fscore: tau must be positive");
  const double t2 = tau * tau;
  auto share_within = [t2](const std::vector<double>& d2) {
    const auto hits = std::count_if(d2.begin(), d2.end(), [t2](double d) { return d < t2; });
    return static_cast<double>(hits) / static_cast<double>(d2.size());
  };
  FScore out;
  out.precision = share_within(kernels::nearest(gt.flat(), pred.flat()).dist2);
  out.recall = share_within(kernels::nearest(pred.flat(), gt.flat()).dist2);
  const double s = out.precision + out.recall;
  out.f = s > 0.0 ? 2.0 * out.precision * out.recall / s : 0.0;
  return out;
}

GaussianParams::GaussianParams(std::vector<double> mean, std::vector<double> logvar)
    : mean_(std::move(mean)), logvar_(std::move(logvar)) {
  VRC_REQUIRE(mean_.size() == logvar_.size(), "GaussianParams: mean/logvar length mismatch");
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    VRC_REQUIRE(std::isfinite(mean_[i]) && std::isfinite(logvar_[i]),
                "GaussianParams: non-finite parameter");
    logvar_[i] = std::clamp(logvar_[i], kLogvarMin, kLogvarMax);
  }
}

GaussianParams GaussianParams::standard(std::size_t dim) {
  return GaussianParams(std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0));
}

namespace {
double kl_term(double mq, double lq, double mp, double lp) {
  const double dm = mq - mp;
  return 0.5 * (lp - lq + (std::exp(lq) + dm * dm) * std::exp(-lp) - 1.0);
}
}  // namespace

double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  VRC_REQUIRE(q.dim() == p.dim(), "gaussian_kl: dimension mismatch " + std::to_string(q.dim()) +
                                      " vs " + std::to_string(p.dim()));
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i)
    kl += kl_term(q.mean()[i], q.logvar()[i], p.mean()[i], p.logvar()[i]);
  return kl;
}

Var gaussian_kl(Var q_mean, Var q_logvar, Var p_mean, Var p_logvar) {
  const std::size_t d = q_mean.size();
  VRC_REQUIRE(q_logvar.size() == d && p_mean.size() == d && p_logvar.size() == d,
              "gaussian_kl: dimension mismatch");
  const Tensor& mq = q_mean.value();
  const Tensor& lq = q_logvar.value();
  const Tensor& mp = p_mean.value();
  const Tensor& lp = p_logvar.value();
  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) kl += kl_term(mq[i], lq[i], mp[i], lp[i]);
  return q_mean.tape().record(
      "gaussian_kl", Tensor::scalar(kl), {q_mean, q_logvar, p_mean, p_logvar},
      [&mq, &lq, &mp, &lp, d](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < d; ++i) {
          const double inv_vp = std::exp(-lp[i]);
          const double dm = mq[i] - mp[i];
          const double g_mean = g[0] * dm * inv_vp;
          if (gin[0]) (*gin[0])[i] += g_mean;
          if (gin[1]) (*gin[1])[i] += g[0] * 0.5 * (std::exp(lq[i] - lp[i]) - 1.0);
          if (gin[2]) (*gin[2])[i] -= g_mean;
          if (gin[3]) (*gin[3])[i] += g[0] * 0.5 * (1.0 - (std::exp(lq[i]) + dm * dm) * inv_vp);
        }
      });
}

bool in_taxonomy(std::string_view category) {
  return std::find(kCategories.begin(), kCategories.end(), category) != kCategories.end();
}

MetricReport evaluate_dataset(const std::vector<PointCloud>& preds,
                              const std::vector<geo::CompletionSample>& gts, std::size_t slot,
                              double tau) {
  VRC_REQUIRE(preds.size() == gts.size(), "evaluate_dataset: " + std::to_string(preds.size()) +
                                              " predictions for " + std::to_string(gts.size()) +
                                              " samples");
  VRC_REQUIRE(slot < geo::kResolutionMultiples.size(), "evaluate_dataset: bad resolution slot");
  MetricReport report;
  std::vector<double> cd(preds.size()), f1(preds.size());
  const auto n = static_cast<std::ptrdiff_t>(preds.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const PointCloud& gt = gts[i].complete[slot];
    cd[i] = chamfer(preds[i], gt) * 1e4;
    f1[i] = fscore(preds[i], gt, tau).f;
  }
  std::set<std::string> flagged;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CategoryStat& s = report.per_category[gts[i].category];
    s.cd_e4 += cd[i];
    s.fscore += f1[i];
    ++s.count;
    report.cd_e4 += cd[i];
    report.fscore += f1[i];
    if (!in_taxonomy(gts[i].category)) flagged.insert(gts[i].category);
    if (report.points == 0) report.points = gts[i].complete[slot].size();
  }
  for (auto& [name, s] : report.per_category) {
    s.cd_e4 /= static_cast<double>(s.count);
    s.fscore /= static_cast<double>(s.count);
  }
  report.count = preds.size();
  if (report.count) {
    report.cd_e4 /= static_cast<double>(report.count);
    report.fscore /= static_cast<double>(report.count);
  }
  report.flagged_categories.assign(flagged.begin(), flagged.end());
  return report;
}

std::string to_table(const std::vector<MetricReport>& reports, const std::string& method,
                     char delimiter) {
  std::vector<std::string> columns(kCategories.begin(), kCategories.end());
  std::set<std::string> extra;
  for (const MetricReport& r : reports)
    extra.insert(r.flagged_categories.begin(), r.flagged_categories.end());
  columns.insert(columns.end(), extra.begin(), extra.end());

  std::string out = "method";
  out += delimiter;
  out += "metric";
  out += delimiter;
  out += "points";
  for (const std::string& c : columns) (out += delimiter) += c;
  (out += delimiter) += "avg";
  out += '\n';

  char buf[64];
  auto cell = [&](double v, const char* fmt) {
    std::snprintf(buf, sizeof buf, fmt, v);
    return std::string(buf);
  };
  for (const MetricReport& r : reports) {
    for (int metric = 0; metric < 2; ++metric) {
      const char* fmt = metric == 0 ? "%.2f" : "%.3f";
      out += method;
      (out += delimiter) += metric == 0 ? "cd_e4" : "f1";
      (out += delimiter) += std::to_string(r.points);
      for (const std::string& c : columns) {
        out += delimiter;
        auto it = r.per_category.find(c);
        if (it == r.per_category.end()) {
          out += "-";
        } else {
          out += cell(metric == 0 ? it->second.cd_e4 : it->second.fscore, fmt);
        }
      }
      (out += delimiter) += cell(metric == 0 ? r.cd_e4 : r.fscore, fmt);
      out += '\n';
    }
  }
  return out;
}

}  // namespace vrc::metrics
