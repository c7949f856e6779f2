#include "fcdn/blas.hpp"

#include <dlfcn.h>

#include <cstdlib>
#include <vector>

namespace fcdn::detail {

namespace {

// CBLAS ABI constants (row-major / transpose flags are plain ints).
constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

using SgemmFn = void (*)(int, int, int, int, int, int, float, const float*, int, const float*,
                         int, float, float*, int);
using DgemmFn = void (*)(int, int, int, int, int, int, double, const double*, int,
                         const double*, int, double, double*, int);
using SetThreadsFn = void (*)(int);

struct Backend {
  SgemmFn sgemm{nullptr};
  DgemmFn dgemm{nullptr};

  Backend() {
#if defined(__x86_64__) && defined(__GNUC__)
    if (getenv("OPENBLAS_CORETYPE") == nullptr) {
      if (__builtin_cpu_supports("avx512f")) {
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
      } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
      }
    }
#endif
    void* lib = nullptr;
    for (const char* name : {"libopenblas.so.0", "libopenblas.so"}) {
      lib = dlopen(name, RTLD_NOW | RTLD_LOCAL);
      if (lib) break;
    }
    if (!lib) return;
    auto* set_threads = reinterpret_cast<SetThreadsFn>(dlsym(lib, "openblas_set_num_threads"));
    if (set_threads) set_threads(1);
    sgemm = reinterpret_cast<SgemmFn>(dlsym(lib, "cblas_sgemm"));
    dgemm = reinterpret_cast<DgemmFn>(dlsym(lib, "cblas_dgemm"));
  }
};

const Backend& backend() {
  static const Backend b;
  return b;
}

// Fallback path: explicit loops over op(A) rows times op(B) columns,
// accumulating along k in the inner dimension that is contiguous for the
// non-transposed layout.
template <typename S>
void gemm_fallback(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, S alpha,
                   const S* a, size_t lda, const S* b, size_t ldb, S beta, S* c, size_t ldc) {
  auto a_at = [&](size_t i, size_t p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
  for (size_t i = 0; i < m; ++i) {
    S* crow = c + i * ldc;
    if (beta == S(0)) {
      for (size_t j = 0; j < n; ++j) crow[j] = S(0);
    } else if (beta != S(1)) {
      for (size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    if (!trans_b) {
      for (size_t p = 0; p < k; ++p) {
        const S av = alpha * a_at(i, p);
        const S* brow = b + p * ldb;
        for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (size_t j = 0; j < n; ++j) {
        const S* bcol = b + j * ldb;
        S acc = S(0);
        for (size_t p = 0; p < k; ++p) acc += a_at(i, p) * bcol[p];
        crow[j] += alpha * acc;
      }
    }
  }
}

}  // namespace

bool blas_backend_loaded() {
  return backend().sgemm != nullptr && backend().dgemm != nullptr;
}

void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, float alpha, const float* a,
          size_t lda, const float* b, size_t ldb, float beta, float* c, size_t ldc) {
  if (backend().sgemm) {
    backend().sgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans,
                    static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                    static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                    static_cast<int>(ldc));
    return;
  }
  gemm_fallback(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, size_t m, size_t n, size_t k, double alpha,
          const double* a, size_t lda, const double* b, size_t ldb, double beta, double* c,
          size_t ldc) {
  if (backend().dgemm) {
    backend().dgemm(kRowMajor, trans_a ? kTrans : kNoTrans, trans_b ? kTrans : kNoTrans,
                    static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                    static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                    static_cast<int>(ldc));
    return;
  }
  gemm_fallback(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace fcdn::detail
