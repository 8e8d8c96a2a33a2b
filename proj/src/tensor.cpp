#include "wayflow/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "wayflow/kernels.hpp"

namespace wayflow {

namespace {
std::atomic<bool> g_checked{false};
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor extents must be positive");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)),
      data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw ShapeError("tensor data length does not match shape " +
                         shape_str());
    if (checked()) require_finite("tensor construction");
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    return Tensor(std::move(shape));
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    if (checked()) t.require_finite("tensor construction");
    return t;
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

Tensor Tensor::randn(std::vector<int64_t> shape, RngStream& rng) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = rng.normal();
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("reshape element count mismatch");
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::require_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError("non-finite value in " + what);
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i)
        os << (i ? ", " : "") << shape_[i];
    os << "]";
    return os.str();
}

void Tensor::set_checked(bool on) { g_checked.store(on); }
bool Tensor::checked() { return g_checked.load(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " +
                         a.shape_str() + " vs " + b.shape_str());
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    kernels::add(a.data(), b.data(), out.data(), a.numel());
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    kernels::sub(a.data(), b.data(), out.data(), a.numel());
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    kernels::mul(a.data(), b.data(), out.data(), a.numel());
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out(a.shape());
    kernels::scale(a.data(), s, out.data(), a.numel());
    return out;
}

double sum(const Tensor& a) { return kernels::sum(a.data(), a.numel()); }

double mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return sum(a) / static_cast<double>(a.numel());
}

double sumsq(const Tensor& a) { return kernels::sumsq(a.data(), a.numel()); }

double norm2(const Tensor& a) { return std::sqrt(sumsq(a)); }

double dot_flat(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    return kernels::dot(a.data(), b.data(), a.numel());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 tensors");
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul inner dimension mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
    Tensor c({a.dim(0), b.dim(1)});
    kernels::matmul(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor transpose2d(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose expects rank-2 tensor");
    Tensor at({a.dim(1), a.dim(0)});
    kernels::transpose(a.data(), at.data(), a.dim(0), a.dim(1));
    return at;
}

}  // namespace wayflow
