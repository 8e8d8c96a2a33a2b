#include "wayflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wayflow/kernels.hpp"

namespace wayflow::linalg {

EigResult eigh_symmetric(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw ShapeError("eigh: expected a square matrix, got " +
                         a.shape_str());
    const int64_t n = a.dim(0);
    Tensor m = a;  // working copy, driven to diagonal
    Tensor v({n, n});
    for (int64_t i = 0; i < n; ++i) v.at(i, i) = 1.0;

    double off = 0.0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = i + 1; j < n; ++j) off += 2.0 * m.at(i, j) * m.at(i, j);
    const double frob = std::sqrt(sumsq(m));
    const double tol = std::max(1e-300, frob * 1e-15);

    for (int sweep = 0; sweep < 100 && std::sqrt(off) > tol; ++sweep) {
        for (int64_t p = 0; p < n - 1; ++p) {
            for (int64_t q = p + 1; q < n; ++q) {
                const double apq = m.at(p, q);
                if (std::abs(apq) <= tol / static_cast<double>(n * n)) continue;
                const double app = m.at(p, p), aqq = m.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                // smaller-magnitude tangent root keeps rotations stable
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) +
                                  std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int64_t i = 0; i < n; ++i) {
                    const double mip = m.at(i, p), miq = m.at(i, q);
                    m.at(i, p) = c * mip - s * miq;
                    m.at(i, q) = s * mip + c * miq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double mpi = m.at(p, i), mqi = m.at(q, i);
                    m.at(p, i) = c * mpi - s * mqi;
                    m.at(q, i) = s * mpi + c * mqi;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double vip = v.at(i, p), viq = v.at(i, q);
                    v.at(i, p) = c * vip - s * viq;
                    v.at(i, q) = s * vip + c * viq;
                }
            }
        }
        off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j)
                off += 2.0 * m.at(i, j) * m.at(i, j);
    }

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
        return m.at(x, x) > m.at(y, y);
    });

    EigResult res;
    res.values.resize(static_cast<size_t>(n));
    res.vectors = Tensor({n, n});
    for (int64_t k = 0; k < n; ++k) {
        res.values[static_cast<size_t>(k)] = m.at(order[k], order[k]);
        for (int64_t i = 0; i < n; ++i)
            res.vectors.at(i, k) = v.at(i, order[k]);
    }
    return res;
}

Tensor random_orthonormal_rows(int64_t count, int64_t dim, RngStream& rng) {
    if (count > dim)
        throw ValueError("cannot draw " + std::to_string(count) +
                         " orthonormal rows in dimension " +
                         std::to_string(dim));
    Tensor rows({count, dim});
    for (int64_t r = 0; r < count; ++r) {
        for (int attempt = 0;; ++attempt) {
            for (int64_t c = 0; c < dim; ++c) rows.at(r, c) = rng.normal();
            for (int64_t p = 0; p < r; ++p) {
                const double proj =
                    kernels::dot(rows.data() + r * dim, rows.data() + p * dim,
                                 dim);
                kernels::axpy(-proj, rows.data() + p * dim,
                              rows.data() + r * dim, dim);
            }
            const double nrm =
                std::sqrt(kernels::sumsq(rows.data() + r * dim, dim));
            if (nrm > 1e-8) {
                kernels::scale(rows.data() + r * dim, 1.0 / nrm,
                               rows.data() + r * dim, dim);
                break;
            }
            if (attempt > 64)
                throw NumericError("orthonormalization failed to converge");
        }
    }
    return rows;
}

}  // namespace wayflow::linalg
