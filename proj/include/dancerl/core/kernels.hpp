#pragma once

#include <cstddef>
#include <functional>

// Dense kernels used by every layer. Each kernel has a serial reference in
// kernels::serial and an OpenMP version in kernels. The parallel versions
// split work across output rows only, so every output element is produced
// by the same sequence of floating-point operations as the serial one and
// results are bit-identical regardless of thread count.
namespace dancerl::kernels {

namespace serial {

// C[m x n] (+)= A[m x k] * B[k x n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);

// C[m x n] (+)= A[m x k] * B[n x k]^T
void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);

// C[k x n] += A[m x k]^T * B[m x n]
void matmul_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

}  // namespace serial

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);
void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_at_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

// Runs body(i) for i in [0, n). Iterations must write disjoint outputs.
// With OpenMP enabled the loop is distributed across threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Number of worker threads parallel_for may use.
int max_threads();

// Work below this many multiply-adds stays serial inside the OpenMP kernels.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace dancerl::kernels
