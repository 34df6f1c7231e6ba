#include "vrc/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vrc/errors.hpp"

namespace vrc::diff {

namespace {

void require_eps(double eps) {
  VRC_REQUIRE(eps >= 1e-7 && eps <= 1e-3,
              "grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");
}

double scalar_of(Tape& tape, Var out) {
  VRC_REQUIRE(out.size() == 1, "grad_check: graph must be scalar-valued, got shape " +
                                   shape_string(out.shape()));
  tape.check_finite();
  return out.value()[0];
}

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Central difference at eps; when that disagrees with the analytic value the
// estimate is repeated at eps/10 and eps/100 (not below 1e-7) and the closest
// one kept. A kink or a nearest-neighbour switch lying within eps of the probe
// spoils only the wider stencils, whereas a wrong gradient fails at all of them.
template <typename Eval>
double central_difference(double& x, double eps, double analytic, Eval&& eval) {
  const double x0 = x;
  double best = 0.0, best_err = -1.0;
  for (double h = eps; h >= 1e-7 * (1.0 - 1e-9); h /= 10.0) {
    x = x0 + h;
    const double fp = eval();
    x = x0 - h;
    const double fm = eval();
    x = x0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = rel_error(analytic, numeric);
    if (best_err < 0.0 || err < best_err) {
      best = numeric;
      best_err = err;
    }
    if (best_err < kRefineThreshold || h <= eps / 100.0 * (1.0 + 1e-9)) break;
  }
  return best;
}

void record(GradCheckReport& r, double analytic, double numeric, std::string where) {
  const double err = rel_error(analytic, numeric);
  ++r.checked;
  if (r.worst.empty() || err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst = std::move(where);
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

}  // namespace

GradCheckReport grad_check(const LeafGraph& f, std::vector<Tensor> inputs, double eps) {
  require_eps(eps);
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
    Var out = f(tape, vars);
    scalar_of(tape, out);
    tape.backward(out);
    for (const Var& v : vars) analytic.push_back(tape.grad(v));
  }

  auto eval = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    return scalar_of(tape, f(tape, vars));
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double numeric = central_difference(inputs[k][i], eps, analytic[k][i], eval);
      record(report, analytic[k][i], numeric,
             "input " + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return report;
}

GradCheckReport grad_check_params(const ParamGraph& f, ParamStore& store,
                                  std::span<const ParamProbe> probes, double eps) {
  require_eps(eps);
  store.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    scalar_of(tape, out);
    tape.backward(out);
  }
  std::vector<double> analytic;
  for (const ParamProbe& p : probes) analytic.push_back(store.at(p.name).grad[p.index]);

  auto eval = [&]() {
    Tape tape;
    return scalar_of(tape, f(tape));
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    double& x = store.at(probes[k].name).value[probes[k].index];
    const double numeric = central_difference(x, eps, analytic[k], eval);
    record(report, analytic[k], numeric,
           probes[k].name + "[" + std::to_string(probes[k].index) + "]");
  }
  return report;
}

std::vector<ParamProbe> all_probes(const ParamStore& store, const std::string& prefix) {
  std::vector<ParamProbe> out;
  for (const auto& [name, p] : store.entries()) {
    if (name.rfind(prefix, 0) != 0) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) out.push_back({name, i});
  }
  return out;
}

std::vector<ParamProbe> sample_probes(const ParamStore& store, std::size_t count,
                                      std::uint64_t seed, const std::string& prefix) {
  std::vector<ParamProbe> all = all_probes(store, prefix);
  if (all.size() <= count) return all;
  std::mt19937_64 rng(seed);
  std::vector<ParamProbe> out;
  std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
  return out;
}

}  // namespace vrc::diff
