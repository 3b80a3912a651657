#include "octpredict/gemm.hpp"

#include <cblas.h>
#include <dlfcn.h>
#include <malloc.h>

#include <cstdlib>
#include <stdexcept>

namespace oct {

namespace {

using SgemmFn = void (*)(CBLAS_ORDER, CBLAS_TRANSPOSE, CBLAS_TRANSPOSE, int, int, int, float,
                         const float*, int, const float*, int, float, float*, int);
using DgemmFn = void (*)(CBLAS_ORDER, CBLAS_TRANSPOSE, CBLAS_TRANSPOSE, int, int, int, double,
                         const double*, int, const double*, int, double, double*, int);

struct Blas {
    SgemmFn sgemm;
    DgemmFn dgemm;
};

Blas load_blas() {
    // OpenBLAS selects its compute kernel from the CPU model number in a
    // constructor that runs when the library is loaded. On CPUs it does not
    // recognize it falls back to a generic SSE kernel, which is several times
    // slower than the vector units allow. Loading the library lazily lets us
    // steer the selection by instruction-set support before that happens.
    if (!std::getenv("OPENBLAS_CORETYPE")) {
        if (__builtin_cpu_supports("avx512f"))
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
        else if (__builtin_cpu_supports("avx2"))
            setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
    }
    void* handle = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_GLOBAL);
    if (!handle) handle = dlopen("libopenblas.so", RTLD_NOW | RTLD_GLOBAL);
    if (!handle) throw std::runtime_error("failed to load libopenblas");

    // Pinned to one thread: reductions must be bitwise reproducible.
    auto set_threads = reinterpret_cast<void (*)(int)>(dlsym(handle, "openblas_set_num_threads"));
    if (set_threads) set_threads(1);

    Blas blas;
    blas.sgemm = reinterpret_cast<SgemmFn>(dlsym(handle, "cblas_sgemm"));
    blas.dgemm = reinterpret_cast<DgemmFn>(dlsym(handle, "cblas_dgemm"));
    if (!blas.sgemm || !blas.dgemm) throw std::runtime_error("libopenblas is missing cblas_sgemm/cblas_dgemm");

    // Large activation buffers are allocated and freed every step; keeping
    // them on the heap instead of mmap avoids constant page-fault churn.
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    return blas;
}

const Blas& blas() {
    static const Blas b = load_blas();
    return b;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          float alpha, const float* a, const float* b, float beta, float* c) {
    blas().sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                 static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                 static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
                 static_cast<int>(n));
}

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          double alpha, const double* a, const double* b, double beta, double* c) {
    blas().dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
                 static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                 static_cast<int>(trans_a ? m : k), b, static_cast<int>(trans_b ? k : n), beta, c,
                 static_cast<int>(n));
}

}  // namespace oct
