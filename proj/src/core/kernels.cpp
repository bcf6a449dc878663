#include "dancerl/core/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dancerl::kernels {

namespace {

inline void matmul_rows(const double* a, const double* b, double* c, std::size_t r0,
                        std::size_t r1, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void matmul_bt_rows(const double* a, const double* b, double* c, std::size_t r0,
                           std::size_t r1, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = r0; i < r1; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

// Rows of C are indexed by p (the shared dimension of A), so each output row
// only reads column p of A: iteration order over i is fixed per output row.
inline void matmul_at_rows(const double* a, const double* b, double* c, std::size_t p0,
                           std::size_t p1, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = p0; p < p1; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  matmul_rows(a, b, c, 0, m, k, n, accumulate);
}

void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  matmul_bt_rows(a, b, c, 0, m, k, n, accumulate);
}

void matmul_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  matmul_at_rows(a, b, c, 0, k, m, k, n);
}

}  // namespace serial

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
#ifdef _OPENMP
  if (m * k * n >= kParallelThreshold && m > 1 && !omp_in_parallel()) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) matmul_rows(a, b, c, i, i + 1, k, n, accumulate);
    return;
  }
#endif
  matmul_rows(a, b, c, 0, m, k, n, accumulate);
}

void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
#ifdef _OPENMP
  if (m * k * n >= kParallelThreshold && m > 1 && !omp_in_parallel()) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) matmul_bt_rows(a, b, c, i, i + 1, k, n, accumulate);
    return;
  }
#endif
  matmul_bt_rows(a, b, c, 0, m, k, n, accumulate);
}

void matmul_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
#ifdef _OPENMP
  if (m * k * n >= kParallelThreshold && k > 1 && !omp_in_parallel()) {
#pragma omp parallel for schedule(static)
    for (std::size_t p = 0; p < k; ++p) matmul_at_rows(a, b, c, p, p + 1, m, k, n);
    return;
  }
#endif
  matmul_at_rows(a, b, c, 0, k, m, k, n);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
#ifdef _OPENMP
  if (n > 1 && !omp_in_parallel()) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dancerl::kernels
