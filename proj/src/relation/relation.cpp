#include "vrc/relation/relation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vrc/diffcore/ops.hpp"
#include "vrc/errors.hpp"

namespace vrc::rel {

using diff::Shape;
using diff::Tensor;

namespace {

void require_matrix(const Var& v, const char* op) {
  VRC_REQUIRE(v.value().rank() == 2, std::string(op) + ": expected a matrix, got " +
                                         diff::shape_string(v.shape()));
}

void require_index_range(const NeighborhoodIndex& nbr, std::size_t limit, const char* op) {
  for (std::uint32_t j : nbr.indices)
    VRC_REQUIRE(j < limit, std::string(op) + ": neighbour index " + std::to_string(j) +
                               " out of range " + std::to_string(limit));
}

}  // namespace

Var pair_sum(Var p, Var q, const NeighborhoodIndex& nbr) {
  require_matrix(p, "pair_sum");
  VRC_REQUIRE(p.shape() == q.shape(), "pair_sum: operand shapes differ");
  VRC_REQUIRE(nbr.rows == p.rows(), "pair_sum: neighbourhood rows do not match features");
  require_index_range(nbr, q.rows(), "pair_sum");
  const std::size_t n = nbr.rows, k = nbr.k, c = p.cols();
  const Tensor& pv = p.value();
  const Tensor& qv = q.value();
  Tensor out(Shape{n * k, c});
  for (std::size_t i = 0; i < n; ++i) {
    const double* pi = pv.data().data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      const double* qj = qv.data().data() + std::size_t{nbr.indices[i * k + j]} * c;
      double* o = out.data().data() + (i * k + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] = pi[ch] + qj[ch];
    }
  }
  return p.tape().record(
      "pair_sum", std::move(out), {p, q},
      [idx = nbr.indices, n, k, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double* gr = g.data().data() + (i * k + j) * c;
            if (gin[0]) {
              double* gp = gin[0]->data().data() + i * c;
              for (std::size_t ch = 0; ch < c; ++ch) gp[ch] += gr[ch];
            }
            if (gin[1]) {
              double* gq = gin[1]->data().data() + std::size_t{idx[i * k + j]} * c;
              for (std::size_t ch = 0; ch < c; ++ch) gq[ch] += gr[ch];
            }
          }
        }
      });
}

Var neighbor_softmax_sum(Var logits, Var values, const NeighborhoodIndex& nbr) {
  require_matrix(logits, "neighbor_softmax_sum");
  require_matrix(values, "neighbor_softmax_sum");
  const std::size_t n = nbr.rows, k = nbr.k, c = values.cols();
  VRC_REQUIRE(logits.rows() == n * k && logits.cols() == c,
              "neighbor_softmax_sum: attention width " + diff::shape_string(logits.shape()) +
                  " does not match values " + diff::shape_string(values.shape()) + " with k=" +
                  std::to_string(k));
  require_index_range(nbr, values.rows(), "neighbor_softmax_sum");
  const Tensor& lv = logits.value();
  const Tensor& vv = values.value();
  Tensor alpha(Shape{n * k, c});
  Tensor out(Shape{n, c});
  std::vector<double> mx(c), total(c);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(mx.begin(), mx.end(), -std::numeric_limits<double>::infinity());
    std::fill(total.begin(), total.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double* l = lv.data().data() + (i * k + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) mx[ch] = std::max(mx[ch], l[ch]);
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double* l = lv.data().data() + (i * k + j) * c;
      double* a = alpha.data().data() + (i * k + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        a[ch] = std::exp(l[ch] - mx[ch]);
        total[ch] += a[ch];
      }
    }
    double* o = out.data().data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      double* a = alpha.data().data() + (i * k + j) * c;
      const double* v = vv.data().data() + std::size_t{nbr.indices[i * k + j]} * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        a[ch] /= total[ch];
        o[ch] += a[ch] * v[ch];
      }
    }
  }
  return logits.tape().record(
      "neighbor_softmax_sum", std::move(out), {logits, values},
      [idx = nbr.indices, alpha = std::move(alpha), vp = &vv, n, k, c](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        std::vector<double> dot(c);
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = g.data().data() + i * c;
          if (gin[0]) {
            std::fill(dot.begin(), dot.end(), 0.0);
            for (std::size_t j = 0; j < k; ++j) {
              const double* a = alpha.data().data() + (i * k + j) * c;
              const double* v = vp->data().data() + std::size_t{idx[i * k + j]} * c;
              for (std::size_t ch = 0; ch < c; ++ch) dot[ch] += a[ch] * gi[ch] * v[ch];
            }
            for (std::size_t j = 0; j < k; ++j) {
              const double* a = alpha.data().data() + (i * k + j) * c;
              const double* v = vp->data().data() + std::size_t{idx[i * k + j]} * c;
              double* gl = gin[0]->data().data() + (i * k + j) * c;
              for (std::size_t ch = 0; ch < c; ++ch) gl[ch] += a[ch] * (gi[ch] * v[ch] - dot[ch]);
            }
          }
          if (gin[1]) {
            for (std::size_t j = 0; j < k; ++j) {
              const double* a = alpha.data().data() + (i * k + j) * c;
              double* gv = gin[1]->data().data() + std::size_t{idx[i * k + j]} * c;
              for (std::size_t ch = 0; ch < c; ++ch) gv[ch] += a[ch] * gi[ch];
            }
          }
        }
      });
}

Var neighbor_max(Var values, const NeighborhoodIndex& nbr) {
  require_matrix(values, "neighbor_max");
  require_index_range(nbr, values.rows(), "neighbor_max");
  VRC_REQUIRE(nbr.k >= 1, "neighbor_max: empty neighbourhood");
  const std::size_t n = nbr.rows, k = nbr.k, c = values.cols();
  const Tensor& vv = values.value();
  Tensor out(Shape{n, c});
  std::vector<std::uint32_t> arg(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data().data() + i * c;
    std::uint32_t* a = arg.data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      const std::uint32_t src = nbr.indices[i * k + j];
      const double* v = vv.data().data() + std::size_t{src} * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        if (j == 0 || v[ch] > o[ch]) {
          o[ch] = v[ch];
          a[ch] = src;
        }
      }
    }
  }
  return values.tape().record(
      "neighbor_max", std::move(out), {values},
      [arg = std::move(arg), n, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch)
            (*gin[0])[std::size_t{arg[i * c + ch]} * c + ch] += g[i * c + ch];
      });
}

Var weighted_gather(Var values, const NeighborhoodIndex& nbr, std::vector<double> weights) {
  require_matrix(values, "weighted_gather");
  require_index_range(nbr, values.rows(), "weighted_gather");
  const std::size_t n = nbr.rows, k = nbr.k, c = values.cols();
  VRC_REQUIRE(weights.size() == n * k, "weighted_gather: weight count does not match neighbourhood");
  const Tensor& vv = values.value();
  Tensor out(Shape{n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data().data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      const double w = weights[i * k + j];
      const double* v = vv.data().data() + std::size_t{nbr.indices[i * k + j]} * c;
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] += w * v[ch];
    }
  }
  return values.tape().record(
      "weighted_gather", std::move(out), {values},
      [idx = nbr.indices, w = std::move(weights), n, k, c](const Tensor&, const Tensor& g,
                                                           std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = g.data().data() + i * c;
          for (std::size_t j = 0; j < k; ++j) {
            double* gv = gin[0]->data().data() + std::size_t{idx[i * k + j]} * c;
            for (std::size_t ch = 0; ch < c; ++ch) gv[ch] += w[i * k + j] * gi[ch];
          }
        }
      });
}

Var weighted_gather(Var values, const NeighborhoodIndex& nbr, Var weights) {
  require_matrix(values, "weighted_gather");
  require_index_range(nbr, values.rows(), "weighted_gather");
  const std::size_t n = nbr.rows, k = nbr.k, c = values.cols();
  VRC_REQUIRE(weights.value().size() == n * k,
              "weighted_gather: weight count does not match neighbourhood");
  const Tensor& vv = values.value();
  const Tensor& wv = weights.value();
  Tensor out(Shape{n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data().data() + i * c;
    for (std::size_t j = 0; j < k; ++j) {
      const double w = wv.data()[i * k + j];
      const double* v = vv.data().data() + std::size_t{nbr.indices[i * k + j]} * c;
      for (std::size_t ch = 0; ch < c; ++ch) o[ch] += w * v[ch];
    }
  }
  return values.tape().record(
      "weighted_gather", std::move(out), {values, weights},
      [idx = nbr.indices, &vv, &wv, n, k, c](const Tensor&, const Tensor& g,
                                             std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = g.data().data() + i * c;
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = idx[i * k + j];
            if (gin[0]) {
              double* gv = gin[0]->data().data() + src * c;
              for (std::size_t ch = 0; ch < c; ++ch) gv[ch] += wv.data()[i * k + j] * gi[ch];
            }
            if (gin[1]) {
              const double* v = vv.data().data() + src * c;
              double acc = 0.0;
              for (std::size_t ch = 0; ch < c; ++ch) acc += v[ch] * gi[ch];
              gin[1]->data()[i * k + j] += acc;
            }
          }
        }
      });
}

Var idw_weights(const PointCloud& ref, Var ref_position, const PointCloud& query,
                Var query_position, const NeighborhoodIndex& nbr) {
  VRC_REQUIRE(nbr.rows == query.size(), "idw_weights: neighbourhood does not match queries");
  require_index_range(nbr, ref.size(), "idw_weights");
  Tape* tape = ref_position.valid() ? &ref_position.tape()
               : query_position.valid() ? &query_position.tape()
                                        : nullptr;
  VRC_REQUIRE(tape != nullptr, "idw_weights: at least one position must be a Var");
  if (!ref_position.valid()) ref_position = tape->constant(ref.xyz());
  if (!query_position.valid()) query_position = tape->constant(query.xyz());
  VRC_REQUIRE(ref_position.shape() == ref.xyz().shape() && query_position.shape() == query.xyz().shape(),
              "idw_weights: positions do not match their clouds");
  const std::size_t n = nbr.rows, k = nbr.k;
  const Tensor& rp = ref_position.value();
  const Tensor& qp = query_position.value();
  auto d2_of = [&](std::size_t i, std::size_t j) {
    const double* a = qp.data().data() + i * 3;
    const double* b = rp.data().data() + std::size_t{nbr.indices[i * k + j]} * 3;
    return (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
  };
  Tensor w(Shape{n * k, 1});
  std::vector<char> exact(n, 0);
  std::vector<double> total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* wi = w.data().data() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double d2 = d2_of(i, j);
      if (d2 == 0.0) {
        std::fill(wi, wi + k, 0.0);
        wi[j] = 1.0;
        exact[i] = 1;
        break;
      }
      wi[j] = 1.0 / (d2 + 1e-8);
      total[i] += wi[j];
    }
    if (!exact[i])
      for (std::size_t j = 0; j < k; ++j) wi[j] /= total[i];
  }
  return tape->record(
      "idw_weights", std::move(w), {ref_position, query_position},
      [idx = nbr.indices, exact = std::move(exact), total = std::move(total), &rp, &qp, n, k](
          const Tensor& w, const Tensor& g, std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < n; ++i) {
          if (exact[i]) continue;
          const double* wi = w.data().data() + i * k;
          const double* gi = g.data().data() + i * k;
          double gw = 0.0;
          for (std::size_t j = 0; j < k; ++j) gw += gi[j] * wi[j];
          const double* a = qp.data().data() + i * 3;
          for (std::size_t j = 0; j < k; ++j) {
            // w_j = u_j / S with u_j = 1/(d2_j + 1e-8); du_j/dd2_j = -u_j^2.
            const double u = wi[j] * total[i];
            const double gd2 = -(gi[j] - gw) / total[i] * u * u;
            const std::size_t src = idx[i * k + j];
            const double* b = rp.data().data() + src * 3;
            for (int d = 0; d < 3; ++d) {
              const double t = 2.0 * (a[d] - b[d]) * gd2;
              if (gin[1]) gin[1]->data()[i * 3 + d] += t;
              if (gin[0]) gin[0]->data()[src * 3 + d] -= t;
            }
          }
        }
      });
}

// ---- PSA ----

PsaParams make_psa(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   bool uniform_alpha) {
  VRC_REQUIRE(in >= 1 && out >= 1, "make_psa: widths must be positive");
  PsaParams p;
  p.in = in;
  p.out = out;
  p.uniform_alpha = uniform_alpha;
  p.beta = diff::make_linear(store, prefix + ".beta", in, out);
  if (!uniform_alpha) {
    p.sigma = diff::make_linear(store, prefix + ".sigma", in, out);
    p.xi = diff::make_linear(store, prefix + ".xi", in, out);
    p.gamma1 = diff::make_linear(store, prefix + ".gamma1", 2 * out, out);
    p.gamma2 = diff::make_linear(store, prefix + ".gamma2", out, out);
  }
  return p;
}

Var psa_forward(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
                const PsaParams& params) {
  require_matrix(x, "psa_forward");
  VRC_REQUIRE(x.cols() == params.in, "psa_forward: input width " + std::to_string(x.cols()) +
                                         " but kernel expects " + std::to_string(params.in));
  VRC_REQUIRE(nbr.rows == x.rows(), "psa_forward: neighbourhood built over a different point set");
  Var beta = params.beta(tape, store, x);
  Var logits;
  if (params.uniform_alpha) {
    logits = tape.constant(Tensor(Shape{nbr.rows * nbr.k, params.out}));
  } else {
    VRC_REQUIRE(params.gamma2.out == params.beta.out,
                "psa_forward: attention width differs from value width");
    Var s = diff::relu(params.sigma(tape, store, x));
    Var e = diff::relu(params.xi(tape, store, x));
    // gamma's first layer on [s_i || e_j] splits into s_i W_top + e_j W_bot.
    Var w1 = store.bind(tape, params.gamma1.weight);
    Var top = diff::matmul(s, diff::slice_rows(w1, 0, params.out));
    Var bot = diff::matmul(e, diff::slice_rows(w1, params.out, params.out));
    Var h = diff::relu(diff::add_row(pair_sum(top, bot, nbr), store.bind(tape, params.gamma1.bias)));
    logits = params.gamma2(tape, store, h);
  }
  return neighbor_softmax_sum(logits, beta, nbr);
}

// ---- PSK ----

std::size_t reduction_width(std::size_t channels) {
  const std::size_t d = std::max<std::size_t>(channels / 4, 8);
  if (d < channels) return d;
  return std::max<std::size_t>(channels / 2, 1);
}

PskParams make_psk(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   const PskOptions& options) {
  VRC_REQUIRE(options.k_a >= 1 && options.k_b >= 1, "make_psk: kernel sizes must be positive");
  PskParams p;
  p.k_a = options.k_a;
  p.k_b = options.k_b;
  p.channels = out;
  p.single_branch = options.single_branch;
  p.branch_a = make_psa(store, prefix + ".a", in, out, options.uniform_alpha);
  if (!options.single_branch) {
    p.reduced = reduction_width(out);
    p.branch_b = make_psa(store, prefix + ".b", in, out, options.uniform_alpha);
    p.fuse = diff::make_linear(store, prefix + ".fuse", out, p.reduced);
    p.gate_a = diff::make_linear(store, prefix + ".gate_a", p.reduced, out);
    p.gate_b = diff::make_linear(store, prefix + ".gate_b", p.reduced, out);
  }
  return p;
}

PskOutput psk_forward(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
                      const PskParams& params) {
  // Levels with fewer points than a kernel size use every point.
  const std::size_t ka = std::min(params.k_a, nbr.k);
  PskOutput out;
  out.u_a = psa_forward(tape, store, x, ka == nbr.k ? nbr : nbr.truncated(ka), params.branch_a);
  if (params.single_branch) {
    out.v = out.u_a;
    return out;
  }
  const std::size_t kb = std::min(params.k_b, nbr.k);
  out.u_b = psa_forward(tape, store, x, kb == nbr.k ? nbr : nbr.truncated(kb), params.branch_b);
  Var s = diff::reduce(diff::add(out.u_a, out.u_b), diff::Reduce::mean);
  Var z = diff::relu(params.fuse(tape, store, s));
  std::tie(out.a, out.b) =
      diff::softmax_pair(params.gate_a(tape, store, z), params.gate_b(tape, store, z));
  out.v = diff::add(diff::mul_row(out.u_a, out.a), diff::mul_row(out.u_b, out.b));
  return out;
}

PskOutput psk_forward(Tape& tape, ParamStore& store, Var x, const PointCloud& cloud,
                      const PskParams& params) {
  VRC_REQUIRE(cloud.size() == x.rows(), "psk_forward: cloud and features disagree on N");
  const std::size_t k = std::max(params.k_a, params.single_branch ? 1 : params.k_b);
  return psk_forward(tape, store, x, geo::knn_index(cloud, std::min(k, cloud.size())), params);
}

// ---- R-PSK ----

RpskParams make_rpsk(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                     const PskOptions& options) {
  RpskParams p;
  p.psk = make_psk(store, prefix + ".psk", in, out, options);
  p.post = diff::make_linear(store, prefix + ".post", out, out);
  p.project_residual = in != out;
  if (p.project_residual) p.residual = diff::make_linear(store, prefix + ".res", in, out);
  return p;
}

Var rpsk_main(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
              const RpskParams& params) {
  return params.post(tape, store, diff::relu(psk_forward(tape, store, x, nbr, params.psk).v));
}

Var rpsk_forward(Tape& tape, ParamStore& store, Var x, const NeighborhoodIndex& nbr,
                 const RpskParams& params) {
  Var main = rpsk_main(tape, store, x, nbr, params);
  Var skip = params.project_residual ? params.residual(tape, store, x) : x;
  return diff::add(main, skip);
}

Var rpsk_forward(Tape& tape, ParamStore& store, Var x, const PointCloud& cloud,
                 const RpskParams& params) {
  VRC_REQUIRE(cloud.size() == x.rows(), "rpsk_forward: cloud and features disagree on N");
  const std::size_t k = std::max(params.psk.k_a, params.psk.single_branch ? 1 : params.psk.k_b);
  return rpsk_forward(tape, store, x, geo::knn_index(cloud, std::min(k, cloud.size())), params);
}

// ---- levels ----

void LevelState::check() const {
  VRC_REQUIRE(features.valid() && features.rows() == points.size(),
              "LevelState: feature rows do not match point count");
  VRC_REQUIRE(nbr.rows == points.size(), "LevelState: neighbourhood does not match points");
}

LevelState make_level(PointCloud points, Var features, std::size_t k,
                      std::vector<std::uint32_t> parent_index) {
  LevelState level;
  level.nbr = geo::knn_index(points, std::min(k, points.size()));
  level.points = std::move(points);
  level.features = features;
  level.parent_index = std::move(parent_index);
  level.check();
  return level;
}

LevelState ep_pool(const LevelState& level, double ratio, std::size_t k, std::uint64_t seed,
                   std::size_t nbr_k) {
  level.check();
  VRC_REQUIRE(ratio > 0.0 && ratio < 1.0, "ep_pool: ratio must lie in (0, 1)");
  VRC_REQUIRE(k >= 1, "ep_pool: k must be positive");
  const std::size_t n = level.points.size();
  const auto m = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
  VRC_REQUIRE(m >= 4, "ep_pool: pooled level would have " + std::to_string(m) +
                          " points (minimum 4)");
  auto idx = geo::fps_indices(level.points, m, seed);
  PointCloud coarse = level.points.subset(idx);
  const auto groups = geo::knn_between(level.points, coarse, std::min(k, n));
  Var pooled = neighbor_max(level.features, groups);
  Var position = level.position.valid() ? diff::gather_rows(level.position, idx) : Var{};
  LevelState out = make_level(std::move(coarse), pooled, nbr_k, std::move(idx));
  out.position = position;
  return out;
}

Var eu_unpool(const LevelState& coarse, const PointCloud& fine_points, std::size_t k,
              Var fine_position) {
  coarse.check();
  VRC_REQUIRE(k >= 1 && k <= coarse.points.size(),
              "eu_unpool: k=" + std::to_string(k) + " exceeds coarse level size " +
                  std::to_string(coarse.points.size()));
  const auto nbr = geo::knn_between(coarse.points, fine_points, k);
  if (coarse.position.valid() || fine_position.valid())
    return weighted_gather(coarse.features, nbr,
                           idw_weights(coarse.points, coarse.position, fine_points, fine_position, nbr));
  std::vector<double> w(nbr.rows * k);
  for (std::size_t i = 0; i < nbr.rows; ++i) {
    double* wi = w.data() + i * k;
    const geo::Vec3 p = fine_points.point(i);
    bool exact = false;
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d2 = geo::dist2(p, coarse.points.point(nbr.indices[i * k + j]));
      if (d2 == 0.0) {
        std::fill(wi, wi + k, 0.0);
        wi[j] = 1.0;
        exact = true;
        break;
      }
      wi[j] = 1.0 / (d2 + 1e-8);
      total += wi[j];
    }
    if (!exact)
      for (std::size_t j = 0; j < k; ++j) wi[j] /= total;
  }
  return weighted_gather(coarse.features, nbr, std::move(w));
}

// ---- EFE ----

EfeParams make_efe(ParamStore& store, const std::string& prefix, std::size_t channels,
                   std::size_t factor, std::size_t k) {
  VRC_REQUIRE(factor >= 2, "make_efe: expansion factor must be at least 2");
  VRC_REQUIRE(k >= 1, "make_efe: k must be positive");
  EfeParams p;
  p.channels = channels;
  p.k = k;
  for (std::size_t b = 0; b < factor; ++b)
    p.branches.push_back(
        diff::make_linear(store, prefix + ".branch" + std::to_string(b), 2 * channels, channels));
  return p;
}

Var efe_expand(Tape& tape, ParamStore& store, Var x, const PointCloud& cloud,
               const EfeParams& params) {
  require_matrix(x, "efe_expand");
  VRC_REQUIRE(x.rows() == cloud.size(), "efe_expand: cloud and features disagree on N");
  VRC_REQUIRE(x.cols() == params.channels, "efe_expand: feature width mismatch");
  VRC_REQUIRE(params.branches.size() >= 2, "efe_expand: expansion factor must be at least 2");
  Var edge = neighbor_max(x, geo::knn_index(cloud, std::min(params.k, cloud.size())));
  Var joined = diff::concat_cols(x, edge);
  std::vector<Var> parts;
  parts.reserve(params.branches.size());
  for (const Linear& branch : params.branches)
    parts.push_back(diff::relu(branch(tape, store, joined)));
  return diff::interleave_rows(parts);
}

}  // namespace vrc::rel
