#include "vrc/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vrc/errors.hpp"
#include "vrc/kernels/kernels.hpp"

namespace vrc::diff {

namespace {

void add_into(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

Shape matrix_out_shape(const Tensor& x, std::size_t cols) {
  if (x.rank() == 2) return Shape{x.rows(), cols};
  return Shape{cols};
}

void require_same(const Var& a, const Var& b, const char* op) {
  VRC_REQUIRE(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                          shape_string(a.shape()) + " vs " +
                                          shape_string(b.shape()));
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "none") return Activation::none;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Var matmul(Var x, Var weight) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  VRC_REQUIRE(wv.rank() == 2 && xv.rank() >= 1 && xv.rank() <= 2 && xv.cols() == wv.rows(),
              "matmul: shape mismatch " + shape_string(xv.shape()) + " x " +
                  shape_string(wv.shape()));
  const std::size_t n = xv.rows(), cin = wv.rows(), cout = wv.cols();
  Tensor out(matrix_out_shape(xv, cout));
  kernels::matmul(xv.data(), wv.data(), out.data(), n, cin, cout);
  return x.tape().record(
      "matmul", std::move(out), {x, weight},
      [xp = &xv, wp = &wv, n, cin, cout](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (gin[0]) kernels::matmul_a_bt_acc(g.data(), wp->data(), gin[0]->data(), n, cout, cin);
        if (gin[1]) kernels::matmul_at_b_acc(xp->data(), g.data(), gin[1]->data(), n, cin, cout);
      });
}

Var linear(Var x, Var weight, Var bias) {
  VRC_REQUIRE(bias.value().rank() == 1 && bias.value().size() == weight.value().cols(),
              "linear: bias shape " + shape_string(bias.shape()) + " does not match weight " +
                  shape_string(weight.shape()));
  return add_row(matmul(x, weight), bias);
}

Var activate(Var x, Activation kind) {
  if (kind == Activation::none) return x;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return x.tape().record("relu", std::move(out), {x},
                         [xp = &xv](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           auto d = gin[0]->data();
                           for (std::size_t i = 0; i < d.size(); ++i)
                             if ((*xp)[i] > 0.0) d[i] += g[i];
                         });
}

std::pair<Var, Var> softmax_pair(Var logits_a, Var logits_b) {
  require_same(logits_a, logits_b, "softmax_pair");
  const Tensor& av = logits_a.value();
  const Tensor& bv = logits_b.value();
  const std::size_t c = av.size();
  Tensor out(Shape{2, c});
  for (std::size_t i = 0; i < c; ++i) {
    const double m = std::max(av[i], bv[i]);
    const double ea = std::exp(av[i] - m);
    const double eb = std::exp(bv[i] - m);
    const double s = ea + eb;
    out(0, i) = ea / s;
    out(1, i) = eb / s;
  }
  // d a_c / d x_c = a_c b_c, d a_c / d y_c = -a_c b_c (and symmetrically).
  Var both = logits_a.tape().record(
      "softmax_pair", std::move(out), {logits_a, logits_b},
      [c](const Tensor& v, const Tensor& g, std::span<Tensor* const> gin) {
        for (std::size_t i = 0; i < c; ++i) {
          const double ab = v(0, i) * v(1, i);
          const double d = (g(0, i) - g(1, i)) * ab;
          if (gin[0]) (*gin[0])[i] += d;
          if (gin[1]) (*gin[1])[i] -= d;
        }
      });
  return {row(both, 0), row(both, 1)};
}

Var reduce(Var x, Reduce kind) {
  const Tensor& xv = x.value();
  VRC_REQUIRE(xv.rank() == 2, "reduce: expected N x C input, got " + shape_string(xv.shape()));
  const std::size_t n = xv.rows(), c = xv.cols();
  if (n == 0) throw ContractError("reduce: empty reduction over zero points");
  Tensor out(Shape{c});
  if (kind == Reduce::mean) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) out[j] += xv(i, j);
    for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(n);
    return x.tape().record("reduce_mean", std::move(out), {x},
                           [n, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                             if (!gin[0]) return;
                             const double inv = 1.0 / static_cast<double>(n);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < c; ++j) (*gin[0])(i, j) += g[j] * inv;
                           });
  }
  std::vector<std::size_t> arg(c, 0);
  for (std::size_t j = 0; j < c; ++j) out[j] = xv(0, j);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (xv(i, j) > out[j]) {
        out[j] = xv(i, j);
        arg[j] = i;
      }
    }
  }
  return x.tape().record("reduce_max", std::move(out), {x},
                         [arg = std::move(arg), c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (std::size_t j = 0; j < c; ++j) (*gin[0])(arg[j], j) += g[j];
                         });
}

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record("add", std::move(out), {a, b},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           add_into(gin[0], g);
                           add_into(gin[1], g);
                         });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           add_into(gin[0], g);
                           if (gin[1]) {
                             auto d = gin[1]->data();
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record("mul", std::move(out), {a, b},
                         [ap = &av, bp = &bv](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (gin[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*bp)[i];
                           if (gin[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * (*ap)[i];
                         });
}

Var scale(Var x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= s;
  return x.tape().record("scale", std::move(out), {x},
                         [s](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * s;
                         });
}

Var add_scalar(Var x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v += s;
  return x.tape().record("add_scalar", std::move(out), {x},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) { add_into(gin[0], g); });
}

Var exp(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::exp(v);
  return x.tape().record("exp", std::move(out), {x},
                         [](const Tensor& v, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * v[i];
                         });
}

Var square(Var x) { return mul(x, x); }

Var sum(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return x.tape().record("sum", Tensor::scalar(s), {x},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (double& v : gin[0]->data()) v += g[0];
                         });
}

Var clamp(Var x, double lo, double hi) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  return x.tape().record("clamp", std::move(out), {x},
                         [xp = &xv, lo, hi](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if ((*xp)[i] >= lo && (*xp)[i] <= hi) (*gin[0])[i] += g[i];
                         });
}

Var detach(Var x) { return x.tape().constant(x.value()); }

Var add_row(Var x, Var r) {
  const Tensor& xv = x.value();
  const Tensor& rv = r.value();
  VRC_REQUIRE(rv.rank() == 1 && rv.size() == xv.cols(),
              "add_row: " + shape_string(rv.shape()) + " vs " + shape_string(xv.shape()));
  Tensor out = xv;
  const std::size_t n = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += rv[j];
  return x.tape().record("add_row", std::move(out), {x, r},
                         [n, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           add_into(gin[0], g);
                           if (gin[1])
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < c; ++j) (*gin[1])[j] += g(i, j);
                         });
}

Var mul_row(Var x, Var r) {
  const Tensor& xv = x.value();
  const Tensor& rv = r.value();
  VRC_REQUIRE(rv.rank() == 1 && rv.size() == xv.cols(),
              "mul_row: " + shape_string(rv.shape()) + " vs " + shape_string(xv.shape()));
  Tensor out = xv;
  const std::size_t n = xv.rows(), c = xv.cols();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) *= rv[j];
  return x.tape().record(
      "mul_row", std::move(out), {x, r},
      [xp = &xv, rp = &rv, n, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (gin[0])
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) (*gin[0])(i, j) += g(i, j) * (*rp)[j];
        if (gin[1])
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) (*gin[1])[j] += g(i, j) * (*xp)(i, j);
      });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x},
                         [](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           auto d = gin[0]->data();
                           for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
                         });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  VRC_REQUIRE(av.rank() == bv.rank() && av.rows() == bv.rows(),
              "concat_cols: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor out(av.rank() == 2 ? Shape{n, ca + cb} : Shape{ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data().data() + i * ca, ca, out.data().data() + i * (ca + cb));
    std::copy_n(bv.data().data() + i * cb, cb, out.data().data() + i * (ca + cb) + ca);
  }
  return a.tape().record("concat_cols", std::move(out), {a, b},
                         [n, ca, cb](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           for (std::size_t i = 0; i < n; ++i) {
                             if (gin[0])
                               for (std::size_t j = 0; j < ca; ++j)
                                 (*gin[0])[i * ca + j] += g[i * (ca + cb) + j];
                             if (gin[1])
                               for (std::size_t j = 0; j < cb; ++j)
                                 (*gin[1])[i * cb + j] += g[i * (ca + cb) + ca + j];
                           }
                         });
}

Var concat_rows(std::span<const Var> parts) {
  VRC_REQUIRE(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = parts[0].value().cols();
  std::size_t n = 0;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    VRC_REQUIRE(p.value().rank() == 2 && p.value().cols() == c,
                "concat_rows: column mismatch " + shape_string(p.shape()));
    offsets.push_back(n);
    n += p.value().rows();
  }
  Tensor out(Shape{n, c});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offsets[k] * c));
  }
  return parts[0].tape().record(
      "concat_rows", std::move(out), parts,
      [offsets = std::move(offsets), c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        for (std::size_t k = 0; k < gin.size(); ++k) {
          if (!gin[k]) continue;
          auto d = gin[k]->data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[offsets[k] * c + i];
        }
      });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  VRC_REQUIRE(xv.rank() == 2 && begin + count <= xv.rows(),
              "slice_rows: range out of bounds for " + shape_string(xv.shape()));
  const std::size_t c = xv.cols();
  Tensor out(Shape{count, c});
  std::copy_n(xv.data().data() + begin * c, count * c, out.data().data());
  return x.tape().record("slice_rows", std::move(out), {x},
                         [begin, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[begin * c + i] += g[i];
                         });
}

Var gather_rows(Var x, std::span<const std::uint32_t> index) {
  const Tensor& xv = x.value();
  VRC_REQUIRE(xv.rank() == 2, "gather_rows: expected matrix, got " + shape_string(xv.shape()));
  const std::size_t c = xv.cols(), n = xv.rows();
  Tensor out(Shape{index.size(), c});
  for (std::size_t i = 0; i < index.size(); ++i) {
    VRC_REQUIRE(index[i] < n, "gather_rows: index " + std::to_string(index[i]) + " out of range");
    std::copy_n(xv.data().data() + index[i] * c, c, out.data().data() + i * c);
  }
  return x.tape().record(
      "gather_rows", std::move(out), {x},
      [idx = std::vector<std::uint32_t>(index.begin(), index.end()), c](
          const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < c; ++j) (*gin[0])[idx[i] * c + j] += g[i * c + j];
      });
}

Var row(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  VRC_REQUIRE(xv.rank() == 2 && r < xv.rows(), "row: index out of range");
  const std::size_t c = xv.cols();
  Tensor out(Shape{c});
  std::copy_n(xv.data().data() + r * c, c, out.data().data());
  return x.tape().record("row", std::move(out), {x},
                         [r, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                           if (!gin[0]) return;
                           for (std::size_t j = 0; j < c; ++j) (*gin[0])[r * c + j] += g[j];
                         });
}

Var interleave_rows(std::span<const Var> parts) {
  VRC_REQUIRE(!parts.empty(), "interleave_rows: no inputs");
  const Shape& s0 = parts[0].shape();
  VRC_REQUIRE(s0.size() == 2, "interleave_rows: expected matrices");
  for (const Var& p : parts) VRC_REQUIRE(p.shape() == s0, "interleave_rows: shape mismatch");
  const std::size_t f = parts.size(), n = s0[0], c = s0[1];
  Tensor out(Shape{n * f, c});
  for (std::size_t b = 0; b < f; ++b) {
    const Tensor& pv = parts[b].value();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pv.data().data() + i * c, c, out.data().data() + (i * f + b) * c);
  }
  return parts[0].tape().record("interleave_rows", std::move(out), parts,
                                [f, n, c](const Tensor&, const Tensor& g, std::span<Tensor* const> gin) {
                                  for (std::size_t b = 0; b < f; ++b) {
                                    if (!gin[b]) continue;
                                    for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < c; ++j)
                                        (*gin[b])[i * c + j] += g[(i * f + b) * c + j];
                                  }
                                });
}

}  // namespace vrc::diff
