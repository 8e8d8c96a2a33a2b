#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wayflow/kernels.hpp"
#include "wayflow/rng.hpp"
#include "wayflow/tensor.hpp"

using namespace wayflow;
namespace K = wayflow::kernels;

namespace {

std::vector<double> random_vec(size_t n, RngStream& rng, double scl = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scl * rng.normal();
    return v;
}

bool simd_available() {
#if defined(__x86_64__) || defined(_M_X64)
    return K::active_backend() == K::Backend::avx2;
#elif defined(__aarch64__)
    return K::active_backend() == K::Backend::neon;
#else
    return false;
#endif
}

const K::detail::KernelTable& simd_table() {
#if defined(__x86_64__) || defined(_M_X64)
    return K::detail::avx2_table();
#elif defined(__aarch64__)
    return K::detail::neon_table();
#else
    return K::detail::scalar_table();
#endif
}

}  // namespace

TEST_CASE("elementwise kernels are bit-identical across backends") {
    if (!simd_available()) return;
    RngStream rng(11);
    const auto& ref = K::detail::scalar_table();
    const auto& vec = simd_table();
    // Sizes straddle the vector width to hit all remainder paths.
    for (size_t n : {1u, 3u, 4u, 5u, 7u, 8u, 16u, 31u, 257u}) {
        auto a = random_vec(n, rng), b = random_vec(n, rng);
        std::vector<double> r1(n), r2(n);
        ref.add(a.data(), b.data(), r1.data(), n);
        vec.add(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);
        ref.sub(a.data(), b.data(), r1.data(), n);
        vec.sub(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);
        ref.mul(a.data(), b.data(), r1.data(), n);
        vec.mul(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);
        ref.scale(a.data(), 1.7, r1.data(), n);
        vec.scale(a.data(), 1.7, r2.data(), n);
        CHECK(r1 == r2);
    }
}

TEST_CASE("reduction kernels agree with scalar reference at tight tolerance") {
    if (!simd_available()) return;
    RngStream rng(12);
    const auto& ref = K::detail::scalar_table();
    const auto& vec = simd_table();
    for (size_t n : {1u, 5u, 8u, 9u, 64u, 1000u, 4097u}) {
        auto a = random_vec(n, rng), b = random_vec(n, rng);
        const double d1 = ref.dot(a.data(), b.data(), n);
        const double d2 = vec.dot(a.data(), b.data(), n);
        CHECK(std::abs(d1 - d2) <=
              1e-13 * (std::abs(d1) + static_cast<double>(n)));
        const double s1 = ref.sum(a.data(), n);
        const double s2 = vec.sum(a.data(), n);
        CHECK(std::abs(s1 - s2) <=
              1e-13 * (std::abs(s1) + static_cast<double>(n)));
        const double q1 = ref.sumsq(a.data(), n);
        const double q2 = vec.sumsq(a.data(), n);
        CHECK(std::abs(q1 - q2) <= 1e-13 * (q1 + static_cast<double>(n)));
    }
}

TEST_CASE("axpy variants match") {
    if (!simd_available()) return;
    RngStream rng(13);
    for (size_t n : {2u, 4u, 6u, 33u}) {
        auto x = random_vec(n, rng);
        auto y1 = random_vec(n, rng);
        auto y2 = y1;
        K::detail::scalar_table().axpy(-0.37, x.data(), y1.data(), n);
        simd_table().axpy(-0.37, x.data(), y2.data(), n);
        for (size_t i = 0; i < n; ++i)
            CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
    }
}

TEST_CASE("matmul variants agree across shapes, including tails") {
    if (!simd_available()) return;
    RngStream rng(14);
    struct Shape {
        size_t m, k, n;
    };
    for (Shape s : {Shape{1, 1, 1}, Shape{3, 5, 7}, Shape{4, 16, 12},
                    Shape{17, 33, 9}, Shape{64, 48, 65}}) {
        auto a = random_vec(s.m * s.k, rng);
        auto b = random_vec(s.k * s.n, rng);
        std::vector<double> c1(s.m * s.n), c2(s.m * s.n);
        K::detail::scalar_table().matmul_rows(a.data(), b.data(), c1.data(), 0,
                                              s.m, s.k, s.n, false);
        simd_table().matmul_rows(a.data(), b.data(), c2.data(), 0, s.m, s.k,
                                 s.n, false);
        for (size_t i = 0; i < c1.size(); ++i)
            CHECK(std::abs(c1[i] - c2[i]) <=
                  1e-12 * (1.0 + std::abs(c1[i])));
    }
}

TEST_CASE("matmul accumulate adds into the output") {
    RngStream rng(15);
    auto a = random_vec(6 * 4, rng);
    auto b = random_vec(4 * 5, rng);
    std::vector<double> base(6 * 5, 0.5), once(6 * 5), acc(6 * 5, 0.5);
    K::matmul(a.data(), b.data(), once.data(), 6, 4, 5, false);
    K::matmul(a.data(), b.data(), acc.data(), 6, 4, 5, true);
    for (size_t i = 0; i < acc.size(); ++i)
        CHECK(acc[i] == doctest::Approx(base[i] + once[i]).epsilon(1e-14));
}

TEST_CASE("threaded matmul equals single-chunk result") {
    RngStream rng(16);
    // Big enough to cross the parallel threshold.
    const size_t m = 96, k = 128, n = 96;
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    std::vector<double> c1(m * n), c2(m * n);
    K::matmul(a.data(), b.data(), c1.data(), m, k, n, false);
    const auto& ref = K::detail::scalar_table();
    const auto& cur = K::active_backend() == K::Backend::scalar
                          ? ref
                          : simd_table();
    cur.matmul_rows(a.data(), b.data(), c2.data(), 0, m, k, n, false);
    CHECK(c1 == c2);  // row split never changes per-element summation order
}

TEST_CASE("transpose round-trips") {
    RngStream rng(17);
    Tensor a = Tensor::randn({7, 13}, rng);
    Tensor at = transpose2d(a);
    Tensor back = transpose2d(at);
    CHECK(back.vec() == a.vec());
    CHECK(at.dim(0) == 13);
    CHECK(at.dim(1) == 7);
}

TEST_CASE("forced backend switches and restores") {
    const K::Backend detected = K::active_backend();
    K::force_backend(K::Backend::scalar);
    CHECK(K::active_backend() == K::Backend::scalar);
    K::reset_backend();
    CHECK(K::active_backend() == detected);
}

TEST_CASE("tensor shape and data invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
    CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
    Tensor t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.shape_str() == "[2, 3]");
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.dim(0) == 3);
}

TEST_CASE("checked mode rejects non-finite values at construction") {
    Tensor::set_checked(true);
    std::vector<double> bad = {1.0, std::nan(""), 2.0};
    CHECK_THROWS_AS(Tensor({3}, bad), NumericError);
    std::vector<double> inf = {1.0, INFINITY};
    CHECK_THROWS_AS(Tensor({2}, inf), NumericError);
    Tensor::set_checked(false);
    CHECK_NOTHROW(Tensor({3}, bad));
}

TEST_CASE("matmul and elementwise tensor helpers shape-check") {
    Tensor a({2, 3}), b({3, 4}), c({2, 2});
    CHECK_NOTHROW(matmul(a, b));
    CHECK_THROWS_AS(matmul(a, c), ShapeError);
    CHECK_THROWS_AS(add(a, c), ShapeError);
}
