#pragma once

#include <cstddef>

namespace fcdn::detail {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C.
//
// Backed by OpenBLAS when it can be loaded, otherwise by a plain blocked
// loop. The library is opened lazily (dlopen) rather than linked: OpenBLAS
// selects its compute kernels from a load-time constructor, and on
// hypervisors that mask the CPU model its detection falls back to SSE2-era
// code paths. Deferring the load lets us pin OPENBLAS_CORETYPE from cpuid
// first. Thread count is forced to 1; all math in the library is
// single-threaded and run-to-run deterministic.
void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, float alpha, const float* a,
          size_t lda, const float* b, size_t ldb, float beta, float* c, size_t ldc);
void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, double alpha,
          const double* a, size_t lda, const double* b, size_t ldb, double beta, double* c,
          size_t ldc);

// True when the OpenBLAS backend is active (exposed for diagnostics).
bool blas_backend_loaded();

}  // namespace fcdn::detail
