#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "wayflow/autograd.hpp"
#include "wayflow/flow.hpp"
#include "wayflow/rng.hpp"
#include "wayflow/tensor.hpp"

namespace wayflow::nn {

constexpr double kRmsEps = 1e-6;

struct AttentionConfig {
    int64_t hidden_dim = 0;
    int64_t heads = 1;
    int64_t depth = 1;

    void validate() const;
};

// Named parameter collection with per-parameter gradient accumulators.
// Iteration order is lexicographic by name (std::map), so every walk over
// the store is deterministic.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;

    // Zeroes (allocating on demand) every gradient accumulator.
    void zero_grads();
    // Throws StateError until a backward pass has deposited gradients.
    Tensor& grad(const std::string& name);
    const Tensor& grad(const std::string& name) const;
    bool grads_valid() const { return grads_valid_; }
    void mark_grads_valid() { grads_valid_ = true; }

    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    std::map<std::string, Tensor>& grads() { return grads_; }

    int64_t total_elements() const;
    double grad_norm() const;

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
    bool grads_valid_ = false;
};

// One forward/backward pass over a store. Parameters become graph leaves on
// first use; after backward the accumulated leaf gradients are folded back
// into the store. A non-trainable context produces constant leaves, so
// gradients never flow into a frozen model.
class GraphContext {
public:
    GraphContext(ParamStore& store, bool trainable);

    ag::Var param(const std::string& name);
    bool trainable() const { return trainable_; }
    ParamStore& store() { return *store_; }

    // ag::backward(loss) + gradient harvest into the store.
    void backward(const ag::Var& loss);

private:
    ParamStore* store_;
    bool trainable_;
    std::map<std::string, ag::Var> leaves_;
};

enum class Init { zeros, trunc_normal, ones };

// Truncated normal (+-2 sigma), std 0.02.
Tensor init_tensor(std::vector<int64_t> shape, Init kind, RngStream& rng);

struct Linear {
    std::string w_name, b_name;
    int64_t in = 0, out = 0;
    bool bias = true;

    static Linear create(ParamStore& store, RngStream& rng,
                         const std::string& prefix, int64_t in, int64_t out,
                         Init w_init, bool bias = true);
    // x: [R, in] -> [R, out]
    ag::Var apply(GraphContext& ctx, const ag::Var& x) const;
};

// Last-axis RMS normalization with learnable gain.
struct RmsNorm {
    std::string gain_name;
    int64_t dim = 0;

    static RmsNorm create(ParamStore& store, const std::string& prefix,
                          int64_t dim);
    ag::Var apply(GraphContext& ctx, const ag::Var& x) const;
};

// Gain-free functional form used inside transformer blocks.
ag::Var rms_norm(const ag::Var& x);

// Full bidirectional multi-head self-attention over per-sample token blocks.
struct SelfAttention {
    Linear qkv, proj;
    int64_t dim = 0, heads = 1;

    static SelfAttention create(ParamStore& store, RngStream& rng,
                                const std::string& prefix, int64_t dim,
                                int64_t heads);
    // x: [B*N, dim], every consecutive `tokens` rows form one sample.
    ag::Var apply(GraphContext& ctx, const ag::Var& x, int64_t tokens) const;
};

struct Mlp {
    Linear fc1, fc2;

    static Mlp create(ParamStore& store, RngStream& rng,
                      const std::string& prefix, int64_t dim,
                      int64_t hidden_mult = 4);
    ag::Var apply(GraphContext& ctx, const ag::Var& x) const;
};

// Timestep + class conditioning e(t, y): sinusoidal(t) -> 2-layer MLP, plus
// a learned class table with one extra row for the null (dropped) class.
struct ConditionEmbed {
    Linear fc1, fc2;
    std::string table_name;
    int64_t dim = 0, num_classes = 0, freq_dim = 0;

    static ConditionEmbed create(ParamStore& store, RngStream& rng,
                                 const std::string& prefix, int64_t dim,
                                 int64_t num_classes);
    // -> [B, dim]
    ag::Var apply(GraphContext& ctx, const std::vector<double>& t,
                  const std::vector<int>& y) const;

    static Tensor timestep_features(const std::vector<double>& t,
                                    int64_t freq_dim);
};

// Transformer block with per-token modulation. Six modulation maps come from
// one zero-initialized linear over the spatial condition, so a fresh block is
// exactly the identity on its tokens.
struct AdaLnBlock {
    Linear mod;
    SelfAttention attn;
    Mlp mlp;
    int64_t dim = 0;

    static AdaLnBlock create(ParamStore& store, RngStream& rng,
                             const std::string& prefix, int64_t dim,
                             int64_t heads);

    // Six [B*N, dim] maps in order g1, b1, a1, g2, b2, a2.
    std::array<ag::Var, 6> modulation(GraphContext& ctx,
                                      const ag::Var& c_s) const;
    // (1 + gamma) * x + beta, all per token per channel.
    static ag::Var modulate(const ag::Var& x, const ag::Var& gamma,
                            const ag::Var& beta);
    ag::Var apply(GraphContext& ctx, const ag::Var& h, const ag::Var& c_s,
                  int64_t tokens) const;
};

// 2-D fixed sin/cos position table, [tokens, dim]; dim must be divisible by 4.
Tensor sincos_position_embedding(int64_t grid_h, int64_t grid_w, int64_t dim);

// [B, H, W, 3] -> [B*N, patch*patch*3], inverse of ag::unpatchify's layout.
Tensor patchify_images(const Tensor& images, int64_t patch);
// Plain-tensor inverse (sampling path).
Tensor unpatchify_tokens(const Tensor& tokens, int64_t batch, int64_t height,
                         int64_t width, int64_t patch);

}  // namespace wayflow::nn
