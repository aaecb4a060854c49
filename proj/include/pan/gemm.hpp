#pragma once

#include <cstddef>

namespace pan {

/// C = alpha * op(A) * op(B) + beta * C, row-major, contiguous leading dims.
/// op(A) is M x K, op(B) is K x N, C is M x N.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, const float* b, float beta, float* c);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, const double* b, double beta, double* c);

/// Pins the BLAS backend to one thread so results are bit-reproducible.
void init_numeric_backend();

}  // namespace pan
