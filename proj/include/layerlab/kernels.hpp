// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense kernels used by the tensor/tape layer. Every parallel kernel has a
// serial twin with the identical accumulation order, so results are bitwise
// equal at any thread count; tests assert this and tools/bench_kernels
// compares their throughput.
namespace layerlab::kernels {

// C[m x n] = op_a(A) * op_b(B) + beta * C, row-major contiguous storage.
// op_a(A) is A [m x k] when !trans_a, else A stored [k x m].
// op_b(B) is B [k x n] when !trans_b, else B stored [n x k].
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta);
void gemm_serial(bool trans_a, bool trans_b, int m, int n, int k,
                 const double* a, const double* b, double* c, double beta);

// out = ca*a + cb*b
void lincomb(std::size_t n, double ca, const double* a, double cb,
             const double* b, double* out);
void lincomb_serial(std::size_t n, double ca, const double* a, double cb,
                    const double* b, double* out);

void vmul(std::size_t n, const double* a, const double* b, double* out);
void vmul_serial(std::size_t n, const double* a, const double* b, double* out);

void vtanh(std::size_t n, const double* a, double* out);
void vtanh_serial(std::size_t n, const double* a, double* out);

void vexp(std::size_t n, const double* a, double* out);
void vsqrt(std::size_t n, const double* a, double* out);
void vscale(std::size_t n, double c, const double* a, double* out);
void vclip(std::size_t n, double lo, double hi, const double* a, double* out);
void vmin(std::size_t n, const double* a, const double* b, double* out);

// y += alpha * x, serial (used by gradient accumulation; order matters).
void axpy(std::size_t n, double alpha, const double* x, double* y);

// Row-major [m x n] + row vector [n] broadcast over rows.
void add_rowvec(int m, int n, const double* a, const double* v, double* out);
void add_rowvec_serial(int m, int n, const double* a, const double* v,
                       double* out);

double reduce_sum(std::size_t n, const double* a);           // serial, in order
void row_sum(int m, int n, const double* a, double* out);    // [m x n] -> [m]
void col_sum(int m, int n, const double* a, double* out);    // [m x n] -> [n]

// Per-row Gaussian transition log-density, summed over the first `cols_used`
// columns of each row: sum_d -(x[d]-mu[d])^2/(2 s^2) - (log s + log(2 pi)/2).
// `s` is the transition scale sigma_t * sqrt(dt). Both the eager samplers and
// the tape op call this one function so replayed values are bitwise equal.
void gauss_logpdf_rows(int m, int n, int cols_used, const double* x,
                       const double* mu, double s, double* out);
void gauss_logpdf_rows_serial(int m, int n, int cols_used, const double* x,
                              const double* mu, double s, double* out);

}  // namespace layerlab::kernels
