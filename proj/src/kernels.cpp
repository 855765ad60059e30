// SPDX-License-Identifier: Apache-2.0
#include "layerlab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace layerlab::kernels {

namespace {

// Parallelising tiny loops costs more than it saves.
constexpr std::size_t kParallelCutoff = 1 << 14;

// One output row of C; k accumulates in increasing order for every element,
// which keeps serial and parallel variants bitwise identical.
inline void gemm_row(bool trans_a, bool trans_b, int i, int n, int k, int m,
                     const double* a, const double* b, double* crow,
                     double beta) {
    if (beta == 0.0) {
        std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
        for (int j = 0; j < n; ++j) crow[j] *= beta;
    }
    if (!trans_b) {
        // axpy over rows of B: crow += a_ik * B[k,:]
        for (int p = 0; p < k; ++p) {
            const double aik = trans_a ? a[static_cast<std::size_t>(p) * m + i]
                                       : a[static_cast<std::size_t>(i) * k + p];
            if (aik == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    } else {
        // B stored [n x k]: dot products against contiguous rows of B.
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            if (!trans_a) {
                const double* arow = a + static_cast<std::size_t>(i) * k;
                for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            } else {
                for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(p) * m + i] * brow[p];
            }
            crow[j] += acc;
        }
    }
}

}  // namespace

void gemm_serial(bool trans_a, bool trans_b, int m, int n, int k,
                 const double* a, const double* b, double* c, double beta) {
    for (int i = 0; i < m; ++i) {
        gemm_row(trans_a, trans_b, i, n, k, m, a, b,
                 c + static_cast<std::size_t>(i) * n, beta);
    }
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          const double* b, double* c, double beta) {
    const std::size_t work = static_cast<std::size_t>(m) * n * k;
    if (work < kParallelCutoff) {
        gemm_serial(trans_a, trans_b, m, n, k, a, b, c, beta);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        gemm_row(trans_a, trans_b, i, n, k, m, a, b,
                 c + static_cast<std::size_t>(i) * n, beta);
    }
}

void lincomb_serial(std::size_t n, double ca, const double* a, double cb,
                    const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ca * a[i] + cb * b[i];
}

void lincomb(std::size_t n, double ca, const double* a, double cb,
             const double* b, double* out) {
    if (n < kParallelCutoff) {
        lincomb_serial(n, ca, a, cb, b, out);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        out[i] = ca * a[i] + cb * b[i];
}

void vmul_serial(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vmul(std::size_t n, const double* a, const double* b, double* out) {
    if (n < kParallelCutoff) {
        vmul_serial(n, a, b, out);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        out[i] = a[i] * b[i];
}

void vtanh_serial(std::size_t n, const double* a, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::tanh(a[i]);
}

void vtanh(std::size_t n, const double* a, double* out) {
    if (n < kParallelCutoff / 4) {  // tanh is compute-heavy, parallelise earlier
        vtanh_serial(n, a, out);
        return;
    }
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
        out[i] = std::tanh(a[i]);
}

void vexp(std::size_t n, const double* a, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
}

void vsqrt(std::size_t n, const double* a, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
}

void vscale(std::size_t n, double c, const double* a, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = c * a[i];
}

void vclip(std::size_t n, double lo, double hi, const double* a, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(a[i], lo, hi);
}

void vmin(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min(a[i], b[i]);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_rowvec_serial(int m, int n, const double* a, const double* v,
                       double* out) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        double* orow = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = arow[j] + v[j];
    }
}

void add_rowvec(int m, int n, const double* a, const double* v, double* out) {
    if (static_cast<std::size_t>(m) * n < kParallelCutoff) {
        add_rowvec_serial(m, n, a, v, out);
        return;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        double* orow = out + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = arow[j] + v[j];
    }
}

double reduce_sum(std::size_t n, const double* a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

void row_sum(int m, int n, const double* a, double* out) {
    for (int i = 0; i < m; ++i)
        out[i] = reduce_sum(static_cast<std::size_t>(n),
                            a + static_cast<std::size_t>(i) * n);
}

void col_sum(int m, int n, const double* a, double* out) {
    std::fill(out, out + n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) out[j] += arow[j];
    }
}

namespace {

inline double gauss_logpdf_row_one(int cols_used, const double* x,
                                   const double* mu, double inv_two_var,
                                   double log_norm) {
    double acc = 0.0;
    for (int d = 0; d < cols_used; ++d) {
        const double dev = x[d] - mu[d];
        acc += -dev * dev * inv_two_var - log_norm;
    }
    return acc;
}

}  // namespace

void gauss_logpdf_rows_serial(int m, int n, int cols_used, const double* x,
                              const double* mu, double s, double* out) {
    const double inv_two_var = 1.0 / (2.0 * s * s);
    const double log_norm = std::log(s) + 0.5 * std::log(2.0 * std::numbers::pi);
    for (int i = 0; i < m; ++i)
        out[i] = gauss_logpdf_row_one(cols_used, x + static_cast<std::size_t>(i) * n,
                                      mu + static_cast<std::size_t>(i) * n,
                                      inv_two_var, log_norm);
}

void gauss_logpdf_rows(int m, int n, int cols_used, const double* x,
                       const double* mu, double s, double* out) {
    const double inv_two_var = 1.0 / (2.0 * s * s);
    const double log_norm = std::log(s) + 0.5 * std::log(2.0 * std::numbers::pi);
#pragma omp parallel for schedule(static) if (m > 1)
    for (int i = 0; i < m; ++i)
        out[i] = gauss_logpdf_row_one(cols_used, x + static_cast<std::size_t>(i) * n,
                                      mu + static_cast<std::size_t>(i) * n,
                                      inv_two_var, log_norm);
}

}  // namespace layerlab::kernels
