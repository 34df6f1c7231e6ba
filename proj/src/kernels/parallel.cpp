#include <omp.h>

#include <algorithm>
#include <atomic>
#include <vector>

#include "vrc/kernels/kernels.hpp"

namespace vrc::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};

// Rows below this count run on the calling thread; the fork/join costs more
// than the loop.
constexpr std::size_t kMinParallelWork = 1 << 14;

inline bool worth_forking(std::size_t work) {
  return work >= kMinParallelWork && omp_get_max_threads() > 1;
}
}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b, std::memory_order_relaxed); }
Backend backend() noexcept { return g_backend.load(std::memory_order_relaxed); }

namespace parallel {

void matmul(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_forking(m * k * n))
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* ci = c.data() + i * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_at_b_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (worth_forking(m * k * n))
  for (std::ptrdiff_t pp = 0; pp < rows; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    double* cp = c.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* bi = b.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

void matmul_a_bt_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t n, std::size_t k) {
  // b is k x n; transpose once so the inner loop streams contiguous memory.
  std::vector<double> bt(n * k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t t = 0; t < n; ++t) bt[t * k + j] = b[j * n + t];
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (worth_forking(m * k * n))
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* ci = c.data() + i * k;
    const double* ai = a.data() + i * n;
    for (std::size_t t = 0; t < n; ++t) {
      const double av = ai[t];
      const double* bt_row = bt.data() + t * k;
      for (std::size_t j = 0; j < k; ++j) ci[j] += av * bt_row[j];
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
  const auto queries = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for schedule(static) if (worth_forking(nq * nr))
  for (std::ptrdiff_t qq = 0; qq < queries; ++qq) {
    const auto q = static_cast<std::size_t>(qq);
    Index* idx = out.indices.data() + q * k;
    double* dst = out.dist2.data() + q * k;
    std::size_t filled = 0;
    const double qx = query[3 * q], qy = query[3 * q + 1], qz = query[3 * q + 2];
    for (std::size_t r = 0; r < nr; ++r) {
      const double dx = qx - ref[3 * r];
      const double dy = qy - ref[3 * r + 1];
      const double dz = qz - ref[3 * r + 2];
      const double d = dx * dx + dy * dy + dz * dz;
      // Candidates arrive in increasing index order, so a strict comparison
      // keeps the lower index on equal distance.
      if (filled == k && !(d < dst[k - 1])) continue;
      std::size_t pos = filled < k ? filled++ : k - 1;
      while (pos > 0 && d < dst[pos - 1]) {
        dst[pos] = dst[pos - 1];
        idx[pos] = idx[pos - 1];
        --pos;
      }
      dst[pos] = d;
      idx[pos] = static_cast<Index>(r);
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
  const auto queries = static_cast<std::ptrdiff_t>(nq);
#pragma omp parallel for schedule(static) if (worth_forking(nq * nr))
  for (std::ptrdiff_t qq = 0; qq < queries; ++qq) {
    const auto q = static_cast<std::size_t>(qq);
    const double qx = query[3 * q], qy = query[3 * q + 1], qz = query[3 * q + 2];
    double best = 0.0;
    Index arg = 0;
    for (std::size_t r = 0; r < nr; ++r) {
      const double dx = qx - ref[3 * r];
      const double dy = qy - ref[3 * r + 1];
      const double dz = qz - ref[3 * r + 2];
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
  const int threads = worth_forking(n) ? omp_get_max_threads() : 1;
  std::vector<std::size_t> best(static_cast<std::size_t>(threads), 0);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel num_threads(threads)
  {
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
    std::size_t local = n;
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < count; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const double dx = pts[3 * i] - px;
      const double dy = pts[3 * i + 1] - py;
      const double dz = pts[3 * i + 2] - pz;
      min_d2[i] = std::min(min_d2[i], dx * dx + dy * dy + dz * dz);
      if (local == n || min_d2[i] > min_d2[local]) local = i;
    }
    best[tid] = local;
  }
  // Static chunks are ordered by thread id, so a strict comparison in thread
  // order reproduces the serial lowest-index tie rule.
  std::size_t arg = n;
  for (std::size_t b : best) {
    if (b == n) continue;
    if (arg == n || min_d2[b] > min_d2[arg]) arg = b;
  }
  return arg == n ? 0 : arg;
}

}  // namespace parallel

#define VRC_DISPATCH(fn, ...) \
  return backend() == Backend::serial ? serial::fn(__VA_ARGS__) : parallel::fn(__VA_ARGS__)

void matmul(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n) {
  VRC_DISPATCH(matmul, a, b, c, m, k, n);
}
void matmul_at_b_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n) {
  VRC_DISPATCH(matmul_at_b_acc, a, b, c, m, k, n);
}
void matmul_a_bt_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t n, std::size_t k) {
  VRC_DISPATCH(matmul_a_bt_acc, a, b, c, m, n, k);
}
KnnResult knn(CSpan ref, CSpan query, std::size_t k) { VRC_DISPATCH(knn, ref, query, k); }
NearestResult nearest(CSpan ref, CSpan query) { VRC_DISPATCH(nearest, ref, query); }
std::size_t fps_update(CSpan pts, MSpan min_d2, std::size_t pick) {
  VRC_DISPATCH(fps_update, pts, min_d2, pick);
}

#undef VRC_DISPATCH

}  // namespace vrc::kernels
