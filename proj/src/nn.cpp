#include "wayflow/nn.hpp"

#include <cmath>

#include "wayflow/kernels.hpp"

namespace wayflow::nn {

void AttentionConfig::validate() const {
    if (hidden_dim <= 0 || heads <= 0 || depth <= 0)
        throw ValueError("attention config: dimensions must be positive");
    if (hidden_dim % heads != 0)
        throw ValueError("attention config: hidden_dim not divisible by heads");
}

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    auto [it, fresh] = params_.emplace(name, std::move(init));
    if (!fresh) throw ValueError("duplicate parameter name: " + name);
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValueError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValueError("unknown parameter: " + name);
    return it->second;
}

bool ParamStore::has(const std::string& name) const {
    return params_.count(name) != 0;
}

void ParamStore::zero_grads() {
    for (const auto& [name, p] : params_) {
        auto it = grads_.find(name);
        if (it == grads_.end())
            grads_.emplace(name, Tensor::zeros(p.shape()));
        else
            it->second.fill(0.0);
    }
    grads_valid_ = false;
}

Tensor& ParamStore::grad(const std::string& name) {
    if (!grads_valid_)
        throw StateError("gradients read before a backward pass");
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ValueError("unknown gradient: " + name);
    return it->second;
}

const Tensor& ParamStore::grad(const std::string& name) const {
    if (!grads_valid_)
        throw StateError("gradients read before a backward pass");
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ValueError("unknown gradient: " + name);
    return it->second;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.numel();
    return n;
}

double ParamStore::grad_norm() const {
    double ss = 0.0;
    for (const auto& [name, g] : grads_) ss += sumsq(g);
    return std::sqrt(ss);
}

GraphContext::GraphContext(ParamStore& store, bool trainable)
    : store_(&store), trainable_(trainable) {}

ag::Var GraphContext::param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    ag::Var v = ag::leaf(store_->get(name), trainable_);
    leaves_.emplace(name, v);
    return v;
}

void GraphContext::backward(const ag::Var& loss) {
    ag::backward(loss);
    if (store_->grads().empty()) store_->zero_grads();
    for (auto& [name, leaf] : leaves_) {
        if (!leaf->grad_ready) continue;
        auto it = store_->grads().find(name);
        if (it == store_->grads().end())
            it = store_->grads().emplace(name, Tensor::zeros(leaf->value.shape()))
                     .first;
        Tensor& g = it->second;
        kernels::add(g.data(), leaf->grad.data(), g.data(), g.numel());
    }
    store_->mark_grads_valid();
}

Tensor init_tensor(std::vector<int64_t> shape, Init kind, RngStream& rng) {
    Tensor t(std::move(shape));
    switch (kind) {
        case Init::zeros:
            break;
        case Init::ones:
            t.fill(1.0);
            break;
        case Init::trunc_normal:
            for (auto& x : t.vec()) {
                double z;
                do {
                    z = rng.normal();
                } while (std::abs(z) > 2.0);
                x = 0.02 * z;
            }
            break;
    }
    return t;
}

Linear Linear::create(ParamStore& store, RngStream& rng,
                      const std::string& prefix, int64_t in, int64_t out,
                      Init w_init, bool bias) {
    Linear l;
    l.w_name = prefix + ".w";
    l.b_name = prefix + ".b";
    l.in = in;
    l.out = out;
    l.bias = bias;
    store.add(l.w_name, init_tensor({in, out}, w_init, rng));
    if (bias) store.add(l.b_name, Tensor::zeros({out}));
    return l;
}

ag::Var Linear::apply(GraphContext& ctx, const ag::Var& x) const {
    if (x->value.rank() != 2 || x->value.dim(1) != in)
        throw ShapeError("linear " + w_name + ": input " +
                         x->value.shape_str() + " does not match in=" +
                         std::to_string(in));
    ag::Var y = ag::matmul(x, ctx.param(w_name));
    if (bias) y = ag::add_bias(y, ctx.param(b_name));
    return y;
}

RmsNorm RmsNorm::create(ParamStore& store, const std::string& prefix,
                        int64_t dim) {
    RmsNorm n;
    n.gain_name = prefix + ".gain";
    n.dim = dim;
    store.add(n.gain_name, Tensor::full({dim}, 1.0));
    return n;
}

ag::Var RmsNorm::apply(GraphContext& ctx, const ag::Var& x) const {
    return ag::mul_row(ag::rms_norm(x, kRmsEps), ctx.param(gain_name));
}

ag::Var rms_norm(const ag::Var& x) { return ag::rms_norm(x, kRmsEps); }

SelfAttention SelfAttention::create(ParamStore& store, RngStream& rng,
                                    const std::string& prefix, int64_t dim,
                                    int64_t heads) {
    if (dim % heads != 0)
        throw ValueError("attention: dim not divisible by heads");
    SelfAttention a;
    a.dim = dim;
    a.heads = heads;
    a.qkv = Linear::create(store, rng, prefix + ".qkv", dim, 3 * dim,
                           Init::trunc_normal);
    a.proj = Linear::create(store, rng, prefix + ".proj", dim, dim,
                            Init::trunc_normal);
    return a;
}

ag::Var SelfAttention::apply(GraphContext& ctx, const ag::Var& x,
                             int64_t tokens) const {
    const int64_t rows = x->value.dim(0);
    if (tokens < 1 || rows % tokens != 0)
        throw ShapeError("attention: row count not a multiple of tokens");
    const int64_t batch = rows / tokens;
    const int64_t dh = dim / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ag::Var qkv_all = qkv.apply(ctx, x);  // [B*N, 3*dim]
    std::vector<ag::Var> sample_outs;
    sample_outs.reserve(batch);
    for (int64_t b = 0; b < batch; ++b) {
        ag::Var rows_b = ag::slice_rows(qkv_all, b * tokens, (b + 1) * tokens);
        std::vector<ag::Var> head_outs;
        head_outs.reserve(heads);
        for (int64_t h = 0; h < heads; ++h) {
            ag::Var q = ag::slice_cols(rows_b, h * dh, (h + 1) * dh);
            ag::Var k =
                ag::slice_cols(rows_b, dim + h * dh, dim + (h + 1) * dh);
            ag::Var v = ag::slice_cols(rows_b, 2 * dim + h * dh,
                                       2 * dim + (h + 1) * dh);
            ag::Var scores =
                ag::scale(ag::matmul(q, ag::transpose(k)), att_scale);
            ag::Var attn = ag::softmax_rows(scores);
            head_outs.push_back(ag::matmul(attn, v));
        }
        sample_outs.push_back(ag::concat_cols(head_outs));
    }
    ag::Var merged =
        batch == 1 ? sample_outs[0] : ag::concat_rows(sample_outs);
    return proj.apply(ctx, merged);
}

Mlp Mlp::create(ParamStore& store, RngStream& rng, const std::string& prefix,
                int64_t dim, int64_t hidden_mult) {
    Mlp m;
    m.fc1 = Linear::create(store, rng, prefix + ".fc1", dim,
                           dim * hidden_mult, Init::trunc_normal);
    m.fc2 = Linear::create(store, rng, prefix + ".fc2", dim * hidden_mult, dim,
                           Init::trunc_normal);
    return m;
}

ag::Var Mlp::apply(GraphContext& ctx, const ag::Var& x) const {
    return fc2.apply(ctx, ag::gelu_tanh(fc1.apply(ctx, x)));
}

ConditionEmbed ConditionEmbed::create(ParamStore& store, RngStream& rng,
                                      const std::string& prefix, int64_t dim,
                                      int64_t num_classes) {
    if (num_classes < 1) throw ValueError("condition embed: need >= 1 class");
    ConditionEmbed e;
    e.dim = dim;
    e.num_classes = num_classes;
    e.freq_dim = std::max<int64_t>(8, dim - dim % 2);
    e.fc1 = Linear::create(store, rng, prefix + ".time_fc1", e.freq_dim, dim,
                           Init::trunc_normal);
    e.fc2 = Linear::create(store, rng, prefix + ".time_fc2", dim, dim,
                           Init::trunc_normal);
    e.table_name = prefix + ".class_table";
    store.add(e.table_name,
              init_tensor({num_classes + 1, dim}, Init::trunc_normal, rng));
    return e;
}

Tensor ConditionEmbed::timestep_features(const std::vector<double>& t,
                                         int64_t freq_dim) {
    const int64_t half = freq_dim / 2;
    Tensor out({static_cast<int64_t>(t.size()), freq_dim});
    for (size_t b = 0; b < t.size(); ++b) {
        // t in [0,1] stretched so the highest frequency resolves ~1e-3 steps.
        const double tv = t[b] * 1000.0;
        for (int64_t i = 0; i < half; ++i) {
            const double freq = std::exp(
                -std::log(10000.0) * static_cast<double>(i) /
                static_cast<double>(half));
            const double a = tv * freq;
            out.at(static_cast<int64_t>(b), i) = std::cos(a);
            out.at(static_cast<int64_t>(b), half + i) = std::sin(a);
        }
    }
    return out;
}

ag::Var ConditionEmbed::apply(GraphContext& ctx, const std::vector<double>& t,
                              const std::vector<int>& y) const {
    if (t.size() != y.size())
        throw ShapeError("condition embed: t/y length mismatch");
    std::vector<int64_t> rows(y.size());
    for (size_t i = 0; i < y.size(); ++i) {
        if (y[i] == flow::kNullClass)
            rows[i] = num_classes;  // learned null embedding
        else if (y[i] >= 0 && y[i] < num_classes)
            rows[i] = y[i];
        else
            throw ValueError("condition embed: unknown label " +
                             std::to_string(y[i]));
    }
    ag::Var tf = ag::constant(timestep_features(t, freq_dim));
    ag::Var te = fc2.apply(ctx, ag::gelu_tanh(fc1.apply(ctx, tf)));
    ag::Var ce = ag::gather_rows(ctx.param(table_name), rows);
    return ag::add(te, ce);
}

AdaLnBlock AdaLnBlock::create(ParamStore& store, RngStream& rng,
                              const std::string& prefix, int64_t dim,
                              int64_t heads) {
    AdaLnBlock b;
    b.dim = dim;
    b.mod = Linear::create(store, rng, prefix + ".mod", dim, 6 * dim,
                           Init::zeros);
    b.attn = SelfAttention::create(store, rng, prefix + ".attn", dim, heads);
    b.mlp = Mlp::create(store, rng, prefix + ".mlp", dim);
    return b;
}

std::array<ag::Var, 6> AdaLnBlock::modulation(GraphContext& ctx,
                                              const ag::Var& c_s) const {
    ag::Var m = mod.apply(ctx, c_s);
    std::array<ag::Var, 6> out;
    for (int i = 0; i < 6; ++i)
        out[static_cast<size_t>(i)] =
            ag::slice_cols(m, i * dim, (i + 1) * dim);
    return out;
}

ag::Var AdaLnBlock::modulate(const ag::Var& x, const ag::Var& gamma,
                             const ag::Var& beta) {
    return ag::add(ag::mul(x, ag::add_scalar(gamma, 1.0)), beta);
}

ag::Var AdaLnBlock::apply(GraphContext& ctx, const ag::Var& h,
                          const ag::Var& c_s, int64_t tokens) const {
    if (!h->value.same_shape(c_s->value))
        throw ShapeError("block: condition shape " + c_s->value.shape_str() +
                         " does not match tokens " + h->value.shape_str());
    auto [g1, b1, a1, g2, b2, a2] = modulation(ctx, c_s);
    ag::Var attn_in = modulate(rms_norm(h), g1, b1);
    ag::Var h_mid = ag::add(h, ag::mul(a1, attn.apply(ctx, attn_in, tokens)));
    ag::Var mlp_in = modulate(rms_norm(h_mid), g2, b2);
    return ag::add(h_mid, ag::mul(a2, mlp.apply(ctx, mlp_in)));
}

Tensor sincos_position_embedding(int64_t grid_h, int64_t grid_w, int64_t dim) {
    if (dim % 4 != 0)
        throw ValueError("position embedding needs dim divisible by 4");
    const int64_t quarter = dim / 4;
    Tensor out({grid_h * grid_w, dim});
    for (int64_t gy = 0; gy < grid_h; ++gy) {
        for (int64_t gx = 0; gx < grid_w; ++gx) {
            double* row = out.data() + (gy * grid_w + gx) * dim;
            for (int64_t i = 0; i < quarter; ++i) {
                const double freq =
                    1.0 / std::pow(10000.0, static_cast<double>(i) /
                                                static_cast<double>(quarter));
                row[i] = std::sin(static_cast<double>(gy) * freq);
                row[quarter + i] = std::cos(static_cast<double>(gy) * freq);
                row[2 * quarter + i] = std::sin(static_cast<double>(gx) * freq);
                row[3 * quarter + i] = std::cos(static_cast<double>(gx) * freq);
            }
        }
    }
    return out;
}

Tensor patchify_images(const Tensor& images, int64_t patch) {
    if (images.rank() != 4 || images.dim(3) != 3)
        throw ShapeError("patchify expects [B, H, W, 3]");
    const int64_t batch = images.dim(0), h = images.dim(1), w = images.dim(2);
    if (h % patch != 0 || w % patch != 0)
        throw ShapeError("image size not divisible by patch size");
    const int64_t grid_w = w / patch;
    const int64_t tokens = (h / patch) * grid_w;
    const int64_t plen = patch * patch * 3;
    Tensor out({batch * tokens, plen});
    for (int64_t b = 0; b < batch; ++b) {
        const double* img = images.data() + b * h * w * 3;
        for (int64_t tkn = 0; tkn < tokens; ++tkn) {
            const int64_t gr = tkn / grid_w, gc = tkn % grid_w;
            double* dst = out.data() + (b * tokens + tkn) * plen;
            for (int64_t py = 0; py < patch; ++py)
                for (int64_t px = 0; px < patch; ++px)
                    for (int64_t c = 0; c < 3; ++c)
                        dst[(py * patch + px) * 3 + c] =
                            img[((gr * patch + py) * w + gc * patch + px) * 3 +
                                c];
        }
    }
    return out;
}

Tensor unpatchify_tokens(const Tensor& tokens, int64_t batch, int64_t height,
                         int64_t width, int64_t patch) {
    ag::Var v = ag::unpatchify(ag::constant(tokens), batch, height, width,
                               patch);
    return v->value;
}

}  // namespace wayflow::nn
