#pragma once

#include <stdexcept>
#include <string>

namespace wayflow {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer shape disagreements.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid argument values (out-of-range t, bad label, non-positive dims).
struct ValueError : Error {
    using Error::Error;
};

// Operation called in the wrong order (e.g. reading gradients before backward).
struct StateError : Error {
    using Error::Error;
};

// Broken files, corrupt checkpoints, unusable datasets.
struct DataError : Error {
    using Error::Error;
};

// NaN/Inf detected mid-computation.
struct NumericError : Error {
    using Error::Error;
};

// Bad command-line usage.
struct UsageError : Error {
    using Error::Error;
};

// A diagnostic metric is undefined for the given inputs (near-zero vectors).
struct MetricUndefined : Error {
    using Error::Error;
};

}  // namespace wayflow
