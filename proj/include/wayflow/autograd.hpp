#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "wayflow/tensor.hpp"

namespace wayflow::ag {

// Reverse-mode tape over Tensor ops. Each op returns a new graph node holding
// its value; backward() runs the recorded closures in reverse topological
// order and accumulates gradients into the leaves.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_op;

    // Zero-initialized gradient buffer on first touch.
    Tensor& ensure_grad() {
        if (!grad_ready) {
            grad = Tensor::zeros(value.shape());
            grad_ready = true;
        }
        return grad;
    }
};

// Graph recording can be switched off for inference (sampling); ops then
// keep values only and drop parents/closures.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var constant(Tensor v);
Var leaf(Tensor v, bool requires_grad = true);

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// y = a * s
Var scale(const Var& a, double s);
// y = a + s (elementwise constant shift)
Var add_scalar(const Var& a, double s);

// x: [R, C], b: [C]; adds b to every row.
Var add_bias(const Var& x, const Var& b);
// x: [R, C], g: [C]; multiplies every row by g.
Var mul_row(const Var& x, const Var& g);

// Rank-2 matrix product.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Column/row windows of a rank-2 tensor (copying views).
Var slice_cols(const Var& x, int64_t c0, int64_t c1);
Var slice_rows(const Var& x, int64_t r0, int64_t r1);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);

// x: [B, C] -> [B*reps, C], each row repeated `reps` times consecutively.
Var repeat_rows(const Var& x, int64_t reps);

// table: [R, C]; out: [len(idx), C]. Backward scatter-adds into the table.
Var gather_rows(const Var& table, const std::vector<int64_t>& idx);

// Last-axis RMS normalization without gain: y = x / sqrt(mean(x^2) + eps).
Var rms_norm(const Var& x, double eps);

// Row-wise softmax with max subtraction.
Var softmax_rows(const Var& x);

// tanh-form smooth GELU: 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
Var gelu_tanh(const Var& x);

// Multiplies each contiguous block of `block` elements by s[block_index].
// The scales are constants (not differentiated).
Var scale_blocks(const Var& x, int64_t block, const std::vector<double>& s);

Var sum_all(const Var& x);
Var mean_all(const Var& x);

// tokens: [B*N, P*P*3] -> images [B, H, W, 3] (patches row-major over the
// grid, pixels row-major within a patch, channel-last).
Var unpatchify(const Var& tokens, int64_t batch, int64_t height, int64_t width,
               int64_t patch);

// Runs reverse accumulation from a scalar loss.
void backward(const Var& loss);

}  // namespace wayflow::ag
