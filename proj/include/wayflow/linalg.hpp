#pragma once

#include <vector>

#include "wayflow/tensor.hpp"

namespace wayflow::linalg {

struct EigResult {
    std::vector<double> values;  // descending
    Tensor vectors;              // [D, D], column i pairs with values[i]
};

// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Deterministic; columns form an orthonormal basis even in the presence of
// repeated or zero eigenvalues.
EigResult eigh_symmetric(const Tensor& a);

// Gram-Schmidt orthonormalization of `count` rows drawn from `rng`
// (dimension `dim`); retries degenerate draws.
Tensor random_orthonormal_rows(int64_t count, int64_t dim, RngStream& rng);

}  // namespace wayflow::linalg
