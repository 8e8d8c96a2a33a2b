#include "wayflow/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

// AVX2+FMA variants, 4 doubles per ymm register. This file is compiled with
// -mavx2 -mfma; callers must check cpu support before dispatching here.

namespace wayflow::kernels::detail {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

void add_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                                _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_v(const double* a, double s, double* out, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    }
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_v(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_v(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                               acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                               _mm256_loadu_pd(b + i + 4), acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_v(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double sumsq_v(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(a + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

// Rank-1 update style: C(i, :) += A(i, p) * B(p, :), vectorized over columns,
// two rows in flight so each B row load feeds two FMA chains.
void matmul_rows_v(const double* A, const double* B, double* C, std::size_t r0,
                   std::size_t r1, std::size_t k, std::size_t n,
                   bool accumulate) {
    if (!accumulate) {
        for (std::size_t i = r0; i < r1; ++i) {
            double* crow = C + i * n;
            std::size_t j = 0;
            const __m256d z = _mm256_setzero_pd();
            for (; j + 4 <= n; j += 4) _mm256_storeu_pd(crow + j, z);
            for (; j < n; ++j) crow[j] = 0.0;
        }
    }
    std::size_t i = r0;
    for (; i + 2 <= r1; i += 2) {
        double* c0 = C + i * n;
        double* c1 = C + (i + 1) * n;
        const double* a0 = A + i * k;
        const double* a1 = A + (i + 1) * k;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d va0 = _mm256_set1_pd(a0[p]);
            const __m256d va1 = _mm256_set1_pd(a1[p]);
            const double* brow = B + p * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                const __m256d b0 = _mm256_loadu_pd(brow + j);
                const __m256d b1 = _mm256_loadu_pd(brow + j + 4);
                _mm256_storeu_pd(
                    c0 + j, _mm256_fmadd_pd(va0, b0, _mm256_loadu_pd(c0 + j)));
                _mm256_storeu_pd(
                    c0 + j + 4,
                    _mm256_fmadd_pd(va0, b1, _mm256_loadu_pd(c0 + j + 4)));
                _mm256_storeu_pd(
                    c1 + j, _mm256_fmadd_pd(va1, b0, _mm256_loadu_pd(c1 + j)));
                _mm256_storeu_pd(
                    c1 + j + 4,
                    _mm256_fmadd_pd(va1, b1, _mm256_loadu_pd(c1 + j + 4)));
            }
            for (; j + 4 <= n; j += 4) {
                const __m256d b0 = _mm256_loadu_pd(brow + j);
                _mm256_storeu_pd(
                    c0 + j, _mm256_fmadd_pd(va0, b0, _mm256_loadu_pd(c0 + j)));
                _mm256_storeu_pd(
                    c1 + j, _mm256_fmadd_pd(va1, b0, _mm256_loadu_pd(c1 + j)));
            }
            for (; j < n; ++j) {
                c0[j] += a0[p] * brow[j];
                c1[j] += a1[p] * brow[j];
            }
        }
    }
    for (; i < r1; ++i) {
        double* crow = C + i * n;
        const double* arow = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d va = _mm256_set1_pd(arow[p]);
            const double* brow = B + p * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                _mm256_storeu_pd(crow + j,
                                 _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j),
                                                 _mm256_loadu_pd(crow + j)));
            }
            for (; j < n; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

}  // namespace

const KernelTable& avx2_table() {
    static const KernelTable t = {add_v,  sub_v, mul_v,   scale_v,
                                  axpy_v, dot_v, sum_v,   sumsq_v,
                                  matmul_rows_v};
    return t;
}

}  // namespace wayflow::kernels::detail

#endif  // x86-64
