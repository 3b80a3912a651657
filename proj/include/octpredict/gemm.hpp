#pragma once

#include <cstdint>

namespace oct {

// Row-major C = alpha * op(A) * op(B) + beta * C with op(A): M x K, op(B): K x N.
// Backed by single-threaded BLAS so results are independent of thread count.
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          float alpha, const float* a, const float* b, float beta, float* c);
void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k,
          double alpha, const double* a, const double* b, double beta, double* c);

}  // namespace oct
