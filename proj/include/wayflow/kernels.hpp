#pragma once

#include <cstddef>
#include <string>

// Double-precision array kernels behind all tensor arithmetic.
//
// Every kernel has a scalar reference implementation plus SIMD variants
// (AVX2+FMA on x86-64, NEON on aarch64) selected once at runtime from CPU
// features. Elementwise kernels are bit-identical across variants; reduction
// kernels (dot/sum/sumsq/matmul) may differ by floating-point association and
// are equivalence-tested against the scalar reference at tight tolerance.
// Within one process the selected variant never changes, so results stay
// reproducible run to run.

namespace wayflow::kernels {

enum class Backend { scalar, avx2, neon };

// Currently active backend (auto-detected on first use).
Backend active_backend();
const char* backend_name(Backend b);

// Force a specific backend; throws ValueError if unsupported on this CPU.
void force_backend(Backend b);
// Back to auto-detection.
void reset_backend();

// out[i] = a[i] + b[i]
void add(const double* a, const double* b, double* out, std::size_t n);
// out[i] = a[i] - b[i]
void sub(const double* a, const double* b, double* out, std::size_t n);
// out[i] = a[i] * b[i]
void mul(const double* a, const double* b, double* out, std::size_t n);
// out[i] = a[i] * s
void scale(const double* a, double s, double* out, std::size_t n);
// y[i] += a * x[i]
void axpy(double a, const double* x, double* y, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double sumsq(const double* a, std::size_t n);

// C (m x n) = A (m x k) * B (k x n), row-major. accumulate=true adds into C.
// Large problems split across worker threads by output row; the split never
// changes any element's summation order, so results are thread-count
// independent.
void matmul(const double* A, const double* B, double* C, std::size_t m,
            std::size_t k, std::size_t n, bool accumulate = false);

// AT (cols x rows) = transpose of A (rows x cols).
void transpose(const double* A, double* AT, std::size_t rows, std::size_t cols);

namespace detail {
// Per-backend entry points, exposed for equivalence tests.
struct KernelTable {
    void (*add)(const double*, const double*, double*, std::size_t);
    void (*sub)(const double*, const double*, double*, std::size_t);
    void (*mul)(const double*, const double*, double*, std::size_t);
    void (*scale)(const double*, double, double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*sumsq)(const double*, std::size_t);
    // Single-threaded matmul tile: rows [r0, r1) of C.
    void (*matmul_rows)(const double*, const double*, double*, std::size_t r0,
                        std::size_t r1, std::size_t k, std::size_t n,
                        bool accumulate);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace wayflow::kernels
