// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. `acceptance 3 7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "vrc/diffcore/checkpoint.hpp"
#include "vrc/errors.hpp"
#include "vrc/harness/harness.hpp"
#include "vrc/mvpgen/mvpgen.hpp"

using namespace vrc;
namespace fs = std::filesystem;
using diff::Tape;
using diff::Tensor;
using geo::PointCloud;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradBudgetSeconds = 300.0;
constexpr double kMetricTol = 1e-12;
constexpr std::size_t kMetricPairs = 200;
constexpr std::size_t kMetricMaxN = 64;
constexpr std::size_t kKlPairs = 20;
constexpr std::size_t kKlSamples = 1000000;
constexpr double kKlSigmas = 3.0;
constexpr double kGateSumTol = 1e-15;
constexpr double kSaturatedTol = 1e-9;
constexpr int kPermutations = 50;
constexpr std::size_t kSmokeSteps = 2000;
constexpr double kSmokeReduction = 10.0;
constexpr double kSmokeBudgetSeconds = 600.0;
constexpr double kRecallMin = 0.99;
constexpr double kScheduleTol = 1e-15;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(diff::Shape{n, 3});
  for (double& v : t.data()) v = u(rng);
  return PointCloud(std::move(t));
}

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(diff::Shape{r, c});
  for (double& v : t.data()) v = u(rng);
  return t;
}

std::vector<std::uint32_t> permutation(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::uint32_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint32_t>(i);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

void jitter(diff::ParamStore& store, std::mt19937_64& rng, double scale, const std::string& prefix = "") {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& [name, p] : store.entries())
    if (name.rfind(prefix, 0) == 0)
      for (double& v : p.value.data()) v += u(rng);
}

// ---- 1 ----
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = harness::run_gradcheck("all", 1);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name, failed;
  for (const auto& r : rows) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!(r.checked > 0 && r.max_rel_error < kGradRelTol)) failed += " " + r.name;
  }
  Outcome o;
  o.pass = failed.empty() && elapsed < kGradBudgetSeconds;
  o.detail = std::to_string(rows.size()) + " checks, worst " + fmt("%.2e", worst) + " (" + worst_name +
             "), " + fmt("%.1f", elapsed) + " s";
  if (!failed.empty()) o.detail += ", failed:" + failed;
  return o;
}

// ---- 2 ----
double nn2(const PointCloud& a, std::size_t i, const PointCloud& b) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < b.size(); ++j) best = std::min(best, geo::dist2(a.point(i), b.point(j)));
  return best;
}

Outcome metric_oracles() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> size(1, kMetricMaxN);
  double worst = 0.0;
  bool exact = true;
  for (std::size_t t = 0; t < kMetricPairs; ++t) {
    const PointCloud p = random_cloud(size(rng), rng), q = random_cloud(size(rng), rng);
    const double tau = 0.05 + 0.5 * std::uniform_real_distribution<double>(0, 1)(rng);
    double a = 0.0, b = 0.0, hp = 0.0, hr = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = nn2(p, i, q);
      a += d;
      hp += std::sqrt(d) < tau;
    }
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double d = nn2(q, j, p);
      b += d;
      hr += std::sqrt(d) < tau;
    }
    const double cd = a / p.size() + b / q.size();
    const double prec = hp / p.size(), rec = hr / q.size();
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    worst = std::max({worst, std::abs(metrics::chamfer(p, q) - cd),
                      std::abs(metrics::fscore(p, q, tau).f - f),
                      std::abs(metrics::chamfer(p, q) - metrics::chamfer(q, p))});
    exact = exact && metrics::chamfer(p, p) == 0.0 && metrics::chamfer(q, q) == 0.0;
  }
  return {worst <= kMetricTol && exact,
          std::to_string(kMetricPairs) + " pairs, max deviation " + fmt("%.2e", worst) +
              (exact ? ", self distance 0" : ", self distance nonzero")};
}

// ---- 3 ----
Outcome kl_monte_carlo() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> um(-1.0, 1.0), ul(-1.5, 1.0);
  std::normal_distribution<double> n01;
  const std::size_t d = 4;
  double worst_sigma = 0.0;
  bool nonneg = true;
  for (std::size_t t = 0; t < kKlPairs; ++t) {
    std::vector<double> qm(d), ql(d), pm(d), pl(d);
    for (std::size_t i = 0; i < d; ++i) {
      qm[i] = um(rng);
      ql[i] = ul(rng);
      pm[i] = um(rng);
      pl[i] = ul(rng);
    }
    const metrics::GaussianParams q(qm, ql), p(pm, pl);
    const double kl = metrics::gaussian_kl(q, p);
    nonneg = nonneg && kl >= 0.0;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t s = 0; s < kKlSamples; ++s) {
      double lr = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double e = n01(rng);
        const double z = qm[i] + std::exp(0.5 * ql[i]) * e;
        const double dp = z - pm[i];
        lr += 0.5 * (pl[i] - ql[i]) - 0.5 * e * e + 0.5 * dp * dp * std::exp(-pl[i]);
      }
      sum += lr;
      sum2 += lr * lr;
    }
    const double mean = sum / kKlSamples;
    const double se = std::sqrt((sum2 / kKlSamples - mean * mean) / kKlSamples);
    worst_sigma = std::max(worst_sigma, std::abs(kl - mean) / se);
  }
  return {worst_sigma <= kKlSigmas && nonneg,
          std::to_string(kKlPairs) + " pairs, worst |closed - MC| = " + fmt("%.2f", worst_sigma) + " SE"};
}

// ---- 4 ----
Outcome gate_laws() {
  std::mt19937_64 rng(4);
  double worst_sum = 0.0, worst_sat = 0.0;
  for (int t = 0; t < 50; ++t) {
    diff::ParamStore store(t);
    const auto p = rel::make_psk(store, "psk", 6, 16, {4, 8});
    jitter(store, rng, 1.0 + t * 0.1);
    const PointCloud cloud = random_cloud(24, rng);
    const Tensor x = random_tensor(24, 6, rng);
    Tape tape;
    const auto out = rel::psk_forward(tape, store, tape.constant(x), cloud, p);
    for (std::size_t c = 0; c < 16; ++c)
      worst_sum = std::max(worst_sum, std::abs(out.a.value()[c] + out.b.value()[c] - 1.0));

    for (int side = 0; side < 2; ++side) {
      for (double& v : store.at(p.gate_a.bias).value.data()) v = side == 0 ? 1e3 : -1e3;
      for (double& v : store.at(p.gate_b.bias).value.data()) v = side == 0 ? -1e3 : 1e3;
      Tape ts;
      const auto sat = rel::psk_forward(ts, store, ts.constant(x), cloud, p);
      const Tensor& branch = side == 0 ? sat.u_a.value() : sat.u_b.value();
      for (std::size_t i = 0; i < branch.size(); ++i)
        worst_sat = std::max(worst_sat, std::abs(sat.v.value()[i] - branch[i]));
    }
  }
  return {worst_sum <= kGateSumTol && worst_sat <= kSaturatedTol,
          "max |a+b-1| " + fmt("%.1e", worst_sum) + ", saturated deviation " + fmt("%.1e", worst_sat)};
}

// ---- 5 ----
Outcome permutation_laws() {
  std::mt19937_64 rng(5);
  net::CompletionModel model(net::ModelConfig::toy(), 5);
  jitter(model.params(), rng, 0.05);
  const PointCloud cloud = random_cloud(256, rng);
  Tape t0;
  const auto base = model.encode(t0, cloud, net::Head::partial_p_psi);

  diff::ParamStore store(6);
  const auto psa = rel::make_psa(store, "psa", 8, 16);
  jitter(store, rng, 0.1);
  const PointCloud pc = random_cloud(128, rng);
  const Tensor x = random_tensor(128, 8, rng);
  Tape t1;
  const Tensor y = rel::psa_forward(t1, store, t1.constant(x), geo::knn_index(pc, 16), psa).value();

  int enc_ok = 0, psa_ok = 0;
  for (int k = 0; k < kPermutations; ++k) {
    const auto perm = permutation(256, rng);
    Tape t;
    const auto e = model.encode(t, cloud.subset(perm), net::Head::partial_p_psi);
    enc_ok += e.global_feature.value() == base.global_feature.value() && e.mean.value() == base.mean.value() &&
              e.logvar.value() == base.logvar.value();

    const auto pp = permutation(128, rng);
    Tensor xp(x.shape()), expect(y.shape());
    for (std::size_t i = 0; i < 128; ++i) {
      for (std::size_t c = 0; c < 8; ++c) xp(i, c) = x(pp[i], c);
      for (std::size_t c = 0; c < 16; ++c) expect(i, c) = y(pp[i], c);
    }
    Tape tp;
    psa_ok += rel::psa_forward(tp, store, tp.constant(xp), geo::knn_index(pc.subset(pp), 16), psa).value() == expect;
  }
  return {enc_ok == kPermutations && psa_ok == kPermutations,
          "encoder invariant " + std::to_string(enc_ok) + "/" + std::to_string(kPermutations) +
              ", attention equivariant " + std::to_string(psa_ok) + "/" + std::to_string(kPermutations)};
}

// ---- 6 ----
Outcome dual_path_isolation() {
  std::mt19937_64 rng(6);
  net::CompletionModel model(net::ModelConfig::toy(), 6);
  const PointCloud x = random_cloud(256, rng);
  std::mt19937_64 r0(60);
  const auto base = model.infer(x, 512, r0);
  std::size_t touched = 0;
  for (const auto& [name, p] : model.params().entries())
    touched += name.rfind(net::CompletionModel::kReconstructionPrefix, 0) == 0;
  int same = 0;
  const int trials = 5;
  for (int t = 0; t < trials; ++t) {
    jitter(model.params(), rng, std::pow(10.0, t), net::CompletionModel::kReconstructionPrefix);
    std::mt19937_64 r1(60);
    const auto out = model.infer(x, 512, r1);
    same += out.fine.xyz() == base.fine.xyz() && out.coarse.xyz() == base.coarse.xyz();
  }
  return {same == trials && touched > 0,
          std::to_string(same) + "/" + std::to_string(trials) + " perturbations of " + std::to_string(touched) +
              " reconstruction-only tensors left inference bit-identical"};
}

// ---- 7 ----
Outcome learning_smoke() {
  const auto models = mvp::synthetic_models(4, 8192, 11);
  std::vector<harness::TrainPair> pairs;
  for (const auto& m : models) {
    mvp::GenerationOptions o;
    o.base_n = 256;
    o.seed = 3;
    const auto s = mvp::build_sample(m.dense, m.category, m.model_id,
                                     mvp::camera_view_set(diff::mix_seed(3, m.model_id)), o);
    pairs.push_back({s.samples.at(0).partial, s.samples.at(0).complete[1], m.category});
  }
  harness::RunConfig cfg;  // default optimizer, loss weights and schedule
  cfg.model = net::ModelConfig::toy();
  cfg.max_steps = kSmokeSteps;
  cfg.epochs = kSmokeSteps;  // the step cap binds first
  cfg.seed = 5;
  harness::Trainer trainer(cfg, pairs);
  auto fine_cd = [&] {
    double cd = 0.0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::mt19937_64 r(i);
      cd += metrics::chamfer(trainer.model().infer(pairs[i].x, pairs[i].y.size(), r).fine, pairs[i].y);
    }
    return cd / static_cast<double>(pairs.size());
  };
  const double before = fine_cd();
  const auto t0 = std::chrono::steady_clock::now();
  while (trainer.step() < trainer.total_steps() && seconds_since(t0) < kSmokeBudgetSeconds) trainer.train_step();
  const double elapsed = seconds_since(t0);
  const double after = fine_cd();
  const bool finished = trainer.step() == kSmokeSteps;
  Outcome o;
  o.pass = finished && before / after >= kSmokeReduction && elapsed < kSmokeBudgetSeconds;
  o.detail = "CD " + fmt("%.5f", before) + " -> " + fmt("%.5f", after) + " (" + fmt("%.2f", before / after) +
             "x) after " + std::to_string(trainer.step()) + " steps in " + fmt("%.0f", elapsed) + " s";
  if (!finished) o.detail += ", stopped at the time budget";
  return o;
}

// ---- 8 ----
Outcome resolution_contract() {
  std::string detail;
  bool ok = true;
  for (const auto& [label, cfg] : {std::pair<std::string, net::ModelConfig>{"toy", net::ModelConfig::toy()},
                                   {"full", net::ModelConfig::full_scale()}}) {
    std::mt19937_64 rng(8);
    net::CompletionModel model(cfg, 8);
    const PointCloud x = random_cloud(cfg.partial_n, rng);
    Tape tape;
    const auto coarse = tape.constant(random_tensor(cfg.coarse_n, 3, rng));
    detail += label + ":";
    for (std::size_t m : geo::kResolutionMultiples) {
      const std::size_t want = m * cfg.partial_n;
      Tape t;
      const auto out = model.renet_forward(t, x, t.constant(coarse.value()), want, 1);
      ok = ok && out.fine.rows() == want && out.expanded == out.factor * cfg.renet_input_n();
      detail += " " + std::to_string(out.fine.rows());
      if (label == "full" && m == 8) {
        ok = ok && out.expanded == 18432 && cfg.renet_input_n() == 3072;
        detail += " (via " + std::to_string(out.expanded) + " = " + std::to_string(cfg.renet_input_n()) + "x" +
                  std::to_string(out.factor) + ")";
      }
    }
    detail += "; ";
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// ---- 9 ----
Outcome dataset_generator() {
  mvp::GenerationOptions o;
  o.base_n = 256;
  o.seed = 9;
  const auto models = mvp::synthetic_models(3, 8192, 9);
  const auto a = mvp::generate_dataset(models, o, 1);
  const auto b = mvp::generate_dataset(models, o, 2);

  bool views_ok = true, sizes_ok = true, identical = a.manifest == b.manifest, spacing_ok = true;
  for (const auto& m : models) {
    std::size_t n = 0;
    for (const auto& s : a.samples) n += s.model_id == m.model_id;
    for (const auto& s : a.skipped) n += s.model_id == m.model_id;
    views_ok = views_ok && n == mvp::kViewCount;
  }
  identical = identical && a.samples.size() == b.samples.size();
  for (std::size_t i = 0; i < a.samples.size() && identical; ++i) {
    identical = mvp::encode_blob(a.samples[i].partial) == mvp::encode_blob(b.samples[i].partial);
    for (std::size_t k = 0; k < 4; ++k)
      identical = identical && mvp::encode_blob(a.samples[i].complete[k]) == mvp::encode_blob(b.samples[i].complete[k]);
  }
  std::mt19937_64 rng(9);
  std::set<std::string> checked;
  for (const auto& s : a.samples) {
    sizes_ok = sizes_ok && s.partial.size() == o.base_n;
    for (std::size_t k = 0; k < 4; ++k) sizes_ok = sizes_ok && s.complete[k].size() == o.base_n * geo::kResolutionMultiples[k];
    if (!checked.insert(s.model_id).second) continue;
    // Spacing: ground truth keeps points further apart than any of 20 random
    // subsets of the same size drawn from the same normalized cloud.
    const auto& dense = models[checked.size() - 1].dense;
    const PointCloud prepared = mvp::prepare_dense(dense);
    for (std::size_t k = 0; k < 4; ++k) {
      const double gap = geo::min_pairwise_distance(s.complete[k]);
      for (int t = 0; t < 20; ++t) {
        auto idx = permutation(prepared.size(), rng);
        idx.resize(s.complete[k].size());
        spacing_ok = spacing_ok && gap > geo::min_pairwise_distance(prepared.subset(idx));
      }
    }
  }

  const PointCloud sphere = mvp::prepare_dense(mvp::synthetic_shape("sphere", 16384, 9));
  std::set<std::uint32_t> seen;
  for (const auto& pose : mvp::camera_view_set(9).poses)
    for (auto i : mvp::render_visible(sphere, pose, o.grid_w, o.grid_h)) seen.insert(i);
  const std::vector<std::uint32_t> idx(seen.begin(), seen.end());
  const double pitch = 2.0 / static_cast<double>(std::min(o.grid_w, o.grid_h));
  const double recall = metrics::fscore(sphere.subset(idx), sphere, 2.0 * pitch).recall;

  Outcome out;
  out.pass = views_ok && sizes_ok && identical && spacing_ok && recall > kRecallMin;
  out.detail = std::to_string(a.samples.size()) + " samples, " + std::to_string(a.skipped.size()) + " skipped; views " +
               (views_ok ? "ok" : "BAD") + ", sizes " + (sizes_ok ? "ok" : "BAD") + ", spacing " +
               (spacing_ok ? "ok" : "BAD") + ", rerun " + (identical ? "identical" : "DIFFERS") +
               ", union recall " + fmt("%.4f", recall);
  return out;
}

// ---- 10 ----
Outcome schedule_and_resume() {
  const harness::OptimizerConfig o;
  const double ratio = harness::learning_rate(o, 40) / harness::learning_rate(o, 0);
  const bool lr_ok = std::abs(ratio - 0.7) <= kScheduleTol && harness::learning_rate(o, 39) == o.lr;

  mvp::GenerationOptions g;
  g.base_n = 32;
  g.grid_w = g.grid_h = 60;
  const auto data = mvp::generate_dataset(mvp::synthetic_models(2, 1024, 10), g, 1);
  auto pairs = harness::make_pairs(data.samples, 0, "");
  pairs.resize(6);
  harness::RunConfig cfg;
  cfg.model = harness::tiny_model_config();
  cfg.optimizer.batch_size = 2;
  cfg.epochs = 3;
  cfg.seed = 10;

  harness::Trainer straight(cfg, pairs);
  straight.run();
  const fs::path dir = fs::temp_directory_path() / "vrc_acceptance_resume";
  fs::remove_all(dir);
  harness::RunConfig first = cfg;
  first.max_steps = 4;
  harness::Trainer a(first, pairs);
  a.run(dir);
  harness::Trainer b(cfg, pairs);
  b.resume(dir);
  b.run();
  bool same = b.step() == straight.step() &&
              b.log().deterministic_json().dump() == straight.log().deterministic_json().dump();
  for (const auto& [name, p] : straight.model().params().entries()) same = same && b.model().params().at(name).value == p.value;
  fs::remove_all(dir);
  return {lr_ok && same, "lr(40)/lr(0) = " + fmt("%.17g", ratio) + ", resume after 4 of " +
                             std::to_string(straight.step()) + " steps " + (same ? "bit-identical" : "DIVERGED")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"metric oracles", metric_oracles},
      {"KL closed form vs Monte Carlo", kl_monte_carlo},
      {"selective-kernel gate", gate_laws},
      {"permutation laws", permutation_laws},
      {"dual-path isolation", dual_path_isolation},
      {"end-to-end learning smoke", learning_smoke},
      {"resolution contract", resolution_contract},
      {"dataset generator", dataset_generator},
      {"schedule and resume", schedule_and_resume},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2d  %-30s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
