// Reference implementations. Written for clarity, not speed.

#include <algorithm>
#include <numeric>

#include "vrc/kernels/kernels.hpp"

namespace vrc::kernels::serial {

void matmul(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void matmul_at_b_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < m; ++i) c[p * n + j] += a[i * k + p] * b[i * n + j];
    }
  }
}

void matmul_a_bt_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < n; ++t) c[i * k + j] += a[i * n + t] * b[j * n + t];
    }
  }
}

KnnResult knn(CSpan ref, CSpan query, std::size_t k) {
  const std::size_t nr = ref.size() / 3;
  const std::size_t nq = query.size() / 3;
  KnnResult out;
  out.k = k;
  out.indices.resize(nq * k);
  out.dist2.resize(nq * k);
  std::vector<double> d(nr);
  std::vector<Index> order(nr);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t r = 0; r < nr; ++r) {
      const double dx = query[3 * q] - ref[3 * r];
      const double dy = query[3 * q + 1] - ref[3 * r + 1];
      const double dz = query[3 * q + 2] - ref[3 * r + 2];
      d[r] = dx * dx + dy * dy + dz * dz;
    }
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index x, Index y) {
      return d[x] < d[y] || (d[x] == d[y] && x < y);
    });
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[q * k + j] = order[j];
      out.dist2[q * k + j] = d[order[j]];
    }
  }
  return out;
}

NearestResult nearest(CSpan ref, CSpan query) {
  const std::size_t nr = ref.size() / 3;
  const std::size_t nq = query.size() / 3;
  NearestResult out;
  out.index.resize(nq);
  out.dist2.resize(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    double best = 0.0;
    Index arg = 0;
    for (std::size_t r = 0; r < nr; ++r) {
      const double dx = query[3 * q] - ref[3 * r];
      const double dy = query[3 * q + 1] - ref[3 * r + 1];
      const double dz = query[3 * q + 2] - ref[3 * r + 2];
      const double dd = dx * dx + dy * dy + dz * dz;
      if (r == 0 || dd < best) {
        best = dd;
        arg = static_cast<Index>(r);
      }
    }
    out.index[q] = arg;
    out.dist2[q] = best;
  }
  return out;
}

std::size_t fps_update(CSpan pts, MSpan min_d2, std::size_t pick) {
  const std::size_t n = min_d2.size();
  const double px = pts[3 * pick], py = pts[3 * pick + 1], pz = pts[3 * pick + 2];
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pts[3 * i] - px;
    const double dy = pts[3 * i + 1] - py;
    const double dz = pts[3 * i + 2] - pz;
    min_d2[i] = std::min(min_d2[i], dx * dx + dy * dy + dz * dz);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (min_d2[i] > min_d2[best]) best = i;
  }
  return best;
}

}  // namespace vrc::kernels::serial
