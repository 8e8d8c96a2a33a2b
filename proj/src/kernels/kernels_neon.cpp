#include "wayflow/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

// NEON variants, 2 doubles per q register.

namespace wayflow::kernels::detail {
namespace {

void add_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_v(const double* a, const double* b, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_v(const double* a, double s, double* out, std::size_t n) {
    const float64x2_t vs = vdupq_n_f64(s);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vs));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_v(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_v(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_v(const double* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double sumsq_v(const double* a, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t v = vld1q_f64(a + i);
        acc = vfmaq_f64(acc, v, v);
    }
    double s = vaddvq_f64(acc);
    for (; i < n; ++i) s += a[i] * a[i];
    return s;
}

void matmul_rows_v(const double* A, const double* B, double* C, std::size_t r0,
                   std::size_t r1, std::size_t k, std::size_t n,
                   bool accumulate) {
    for (std::size_t i = r0; i < r1; ++i) {
        double* crow = C + i * n;
        if (!accumulate)
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        const double* arow = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const float64x2_t va = vdupq_n_f64(arow[p]);
            const double* brow = B + p * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                vst1q_f64(crow + j,
                          vfmaq_f64(vld1q_f64(crow + j), va, vld1q_f64(brow + j)));
                vst1q_f64(crow + j + 2, vfmaq_f64(vld1q_f64(crow + j + 2), va,
                                                  vld1q_f64(brow + j + 2)));
            }
            for (; j + 2 <= n; j += 2) {
                vst1q_f64(crow + j,
                          vfmaq_f64(vld1q_f64(crow + j), va, vld1q_f64(brow + j)));
            }
            for (; j < n; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

}  // namespace

const KernelTable& neon_table() {
    static const KernelTable t = {add_v,  sub_v, mul_v,   scale_v,
                                  axpy_v, dot_v, sum_v,   sumsq_v,
                                  matmul_rows_v};
    return t;
}

}  // namespace wayflow::kernels::detail

#endif  // aarch64
