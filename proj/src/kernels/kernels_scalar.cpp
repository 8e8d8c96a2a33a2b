#include "wayflow/kernels.hpp"

// Reference kernels. Plain sequential loops; the ground truth the SIMD
// variants are tested against.

namespace wayflow::kernels::detail {
namespace {

void add_s(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_s(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_s(const double* a, const double* b, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_s(const double* a, double s, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_s(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_s(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_s(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double sumsq_s(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

// C rows [r0, r1): ikj order so B is streamed row-wise.
void matmul_rows_s(const double* A, const double* B, double* C, std::size_t r0,
                   std::size_t r1, std::size_t k, std::size_t n,
                   bool accumulate) {
    for (std::size_t i = r0; i < r1; ++i) {
        double* crow = C + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t = {add_s,  sub_s, mul_s,   scale_s,
                                  axpy_s, dot_s, sum_s,   sumsq_s,
                                  matmul_rows_s};
    return t;
}

}  // namespace wayflow::kernels::detail
