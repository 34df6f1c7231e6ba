#pragma once

// Data-parallel inner loops used by the autodiff ops and the point-set
// algorithms. Every kernel exists twice: a straightforward serial reference
// and an OpenMP version that partitions output rows across threads. Both
// accumulate each output element in the same order, so their results are
// bit-identical; tests compare them with operator==.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vrc::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b) noexcept;
Backend backend() noexcept;

class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) noexcept : previous_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

using Index = std::uint32_t;

struct KnnResult {
  std::size_t k = 0;
  std::vector<Index> indices;  // queries x k, nearest first
  std::vector<double> dist2;   // queries x k
};

struct NearestResult {
  std::vector<Index> index;  // per query, nearest reference point
  std::vector<double> dist2;
};

using CSpan = std::span<const double>;
using MSpan = std::span<double>;

namespace serial {
void matmul(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t n, std::size_t k);
KnnResult knn(CSpan ref, CSpan query, std::size_t k);
NearestResult nearest(CSpan ref, CSpan query);
std::size_t fps_update(CSpan pts, MSpan min_d2, std::size_t pick);
}  // namespace serial

namespace parallel {
void matmul(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t n, std::size_t k);
KnnResult knn(CSpan ref, CSpan query, std::size_t k);
NearestResult nearest(CSpan ref, CSpan query);
std::size_t fps_update(CSpan pts, MSpan min_d2, std::size_t pick);
}  // namespace parallel

// c[m x n] = a[m x k] * b[k x n]
void matmul(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n);
// c[k x n] += a[m x k]^T * b[m x n]
void matmul_at_b_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t k, std::size_t n);
// c[m x k] += a[m x n] * b[k x n]^T
void matmul_a_bt_acc(CSpan a, CSpan b, MSpan c, std::size_t m, std::size_t n, std::size_t k);

// k nearest reference points (xyz triplets) for every query, ordered by
// (squared distance, index).
KnnResult knn(CSpan ref, CSpan query, std::size_t k);
NearestResult nearest(CSpan ref, CSpan query);

// Farthest-point step: min_d2[i] = min(min_d2[i], |p_i - p_pick|^2), then
// returns the index of the largest min_d2 (lowest index on ties).
std::size_t fps_update(CSpan pts, MSpan min_d2, std::size_t pick);

}  // namespace vrc::kernels
