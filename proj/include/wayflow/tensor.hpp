#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "wayflow/errors.hpp"
#include "wayflow/rng.hpp"

namespace wayflow {

// Dense row-major multi-dimensional array of doubles. The single value
// carrier for images, token sequences, parameters and gradients.
//
// When checked mode is on (tests), construction rejects NaN/Inf.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor scalar(double v);
    static Tensor randn(std::vector<int64_t> shape, RngStream& rng);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D accessors (rows x cols).
    double& at(int64_t r, int64_t c) {
        return data_[static_cast<size_t>(r * shape_[1] + c)];
    }
    double at(int64_t r, int64_t c) const {
        return data_[static_cast<size_t>(r * shape_[1] + c)];
    }

    // Same data, new shape; element count must match.
    Tensor reshaped(std::vector<int64_t> shape) const;

    void fill(double v);
    bool all_finite() const;
    // Throws NumericError naming `what` if any element is NaN/Inf.
    void require_finite(const std::string& what) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    // Checked mode: validate finiteness at construction. Off by default.
    static void set_checked(bool on);
    static bool checked();

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int64_t>& shape);

// Elementwise helpers on plain tensors (shape-checked).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double sum(const Tensor& a);
double mean(const Tensor& a);
double sumsq(const Tensor& a);
double norm2(const Tensor& a);
double dot_flat(const Tensor& a, const Tensor& b);
// C = A (m x k) * B (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& a);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace wayflow
