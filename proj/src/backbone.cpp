#include "wayflow/backbone.hpp"

namespace wayflow {

const char* injection_name(WaypointInjection m) {
    switch (m) {
        case WaypointInjection::adaln: return "adaln";
        case WaypointInjection::channel_concat: return "channel-concat";
        case WaypointInjection::in_context: return "in-context";
    }
    return "?";
}

WaypointInjection injection_from_name(const std::string& name) {
    if (name == "adaln") return WaypointInjection::adaln;
    if (name == "channel-concat") return WaypointInjection::channel_concat;
    if (name == "in-context") return WaypointInjection::in_context;
    throw ValueError("unknown waypoint injection mode: " + name);
}

void PixelGeneratorConfig::validate() const {
    if (depth < 1 || hidden_dim < 1 || heads < 1 || bottleneck < 1 ||
        waypoint_dim < 1)
        throw ValueError("pixel generator config: positive dims required");
    if (hidden_dim % heads != 0)
        throw ValueError("pixel generator config: hidden_dim % heads != 0");
    if (hidden_dim % 4 != 0)
        throw ValueError("pixel generator config: hidden_dim % 4 != 0");
    if (image_size % patch_size != 0)
        throw ValueError(
            "pixel generator config: image size not divisible by patch");
    if (num_classes < 1)
        throw ValueError("pixel generator config: need num_classes >= 1");
}

PixelGenerator::PixelGenerator(PixelGeneratorConfig cfg, uint64_t param_seed)
    : cfg_(cfg) {
    cfg_.validate();
    RngStream rng(param_seed);
    const int64_t embed_in =
        cfg_.injection == WaypointInjection::channel_concat
            ? cfg_.patch_len() + cfg_.waypoint_dim
            : cfg_.patch_len();
    patch_fc1_ = nn::Linear::create(store_, rng, "patch.fc1", embed_in,
                                    cfg_.bottleneck, nn::Init::trunc_normal);
    patch_fc2_ = nn::Linear::create(store_, rng, "patch.fc2", cfg_.bottleneck,
                                    cfg_.hidden_dim, nn::Init::trunc_normal);
    cond_ = nn::ConditionEmbed::create(store_, rng, "cond", cfg_.hidden_dim,
                                       cfg_.num_classes);
    if (cfg_.injection == WaypointInjection::adaln)
        wp_proj_ = nn::Linear::create(store_, rng, "wpproj", cfg_.waypoint_dim,
                                      cfg_.hidden_dim, nn::Init::trunc_normal,
                                      /*bias=*/false);
    if (cfg_.injection == WaypointInjection::in_context)
        ctx_proj_ = nn::Linear::create(store_, rng, "ctxproj",
                                       cfg_.waypoint_dim, cfg_.hidden_dim,
                                       nn::Init::trunc_normal, /*bias=*/false);
    for (int64_t l = 0; l < cfg_.depth; ++l)
        blocks_.push_back(nn::AdaLnBlock::create(
            store_, rng, "block" + std::to_string(l), cfg_.hidden_dim,
            cfg_.heads));
    head_norm_ = nn::RmsNorm::create(store_, "head.norm", cfg_.hidden_dim);
    head_mid_ = nn::Linear::create(store_, rng, "head.mid", cfg_.hidden_dim,
                                   cfg_.bottleneck, nn::Init::trunc_normal);
    head_out_ = nn::Linear::create(store_, rng, "head.out", cfg_.bottleneck,
                                   cfg_.patch_len(), nn::Init::zeros);
    pos_ = nn::sincos_position_embedding(cfg_.grid(), cfg_.grid(),
                                         cfg_.hidden_dim);
}

ag::Var PixelGenerator::embed_tokens(nn::GraphContext& ctx, const Tensor& z_t,
                                     const Tensor& s_hat) const {
    const int64_t batch = z_t.dim(0);
    const int64_t n = cfg_.tokens();
    Tensor patches = nn::patchify_images(z_t, cfg_.patch_size);
    ag::Var tok_in;
    if (cfg_.injection == WaypointInjection::channel_concat) {
        tok_in = ag::concat_cols(
            {ag::constant(std::move(patches)), ag::constant(s_hat)});
    } else {
        tok_in = ag::constant(std::move(patches));
    }
    ag::Var h = patch_fc2_.apply(ctx, patch_fc1_.apply(ctx, tok_in));
    Tensor pos_tiled({batch * n, cfg_.hidden_dim});
    for (int64_t b = 0; b < batch; ++b)
        std::copy(pos_.data(), pos_.data() + pos_.numel(),
                  pos_tiled.data() + b * pos_.numel());
    return ag::add(h, ag::constant(std::move(pos_tiled)));
}

ag::Var PixelGenerator::spatial_condition(nn::GraphContext& ctx,
                                          const std::vector<double>& t,
                                          const std::vector<int>& y,
                                          const Tensor& s_hat) const {
    if (cfg_.injection != WaypointInjection::adaln)
        throw StateError("spatial_condition: only defined for adaln mode");
    ag::Var e = cond_.apply(ctx, t, y);
    ag::Var e_tok = ag::repeat_rows(e, cfg_.tokens());
    ag::Var proj = wp_proj_.apply(ctx, ag::constant(s_hat));
    return ag::add(e_tok, proj);
}

ag::Var PixelGenerator::forward(nn::GraphContext& ctx, const Tensor& z_t,
                                const std::vector<double>& t,
                                const std::vector<int>& y,
                                const Tensor& s_hat) const {
    if (z_t.rank() != 4 || z_t.dim(1) != cfg_.image_size ||
        z_t.dim(2) != cfg_.image_size || z_t.dim(3) != 3)
        throw ShapeError("pixel generator: state " + z_t.shape_str() +
                         " does not match configured image size");
    const int64_t batch = z_t.dim(0);
    const int64_t n = cfg_.tokens();
    if (static_cast<int64_t>(t.size()) != batch ||
        static_cast<int64_t>(y.size()) != batch)
        throw ShapeError("pixel generator: conditioning length mismatch");
    if (s_hat.rank() != 2 || s_hat.dim(0) != batch * n ||
        s_hat.dim(1) != cfg_.waypoint_dim)
        throw ShapeError("pixel generator: waypoint tensor " +
                         s_hat.shape_str() + " does not match token grid");

    ag::Var h = embed_tokens(ctx, z_t, s_hat);
    ag::Var e = cond_.apply(ctx, t, y);

    if (cfg_.injection == WaypointInjection::adaln) {
        ag::Var c_s = ag::add(ag::repeat_rows(e, n),
                              wp_proj_.apply(ctx, ag::constant(s_hat)));
        for (const auto& blk : blocks_) h = blk.apply(ctx, h, c_s, n);
    } else if (cfg_.injection == WaypointInjection::channel_concat) {
        ag::Var c_s = ag::repeat_rows(e, n);
        for (const auto& blk : blocks_) h = blk.apply(ctx, h, c_s, n);
    } else {
        // waypoint tokens prefixed per sample; attention spans 2N tokens
        ag::Var prefix = ctx_proj_.apply(ctx, ag::constant(s_hat));
        std::vector<ag::Var> seqs;
        seqs.reserve(batch);
        for (int64_t b = 0; b < batch; ++b)
            seqs.push_back(ag::concat_rows(
                {ag::slice_rows(prefix, b * n, (b + 1) * n),
                 ag::slice_rows(h, b * n, (b + 1) * n)}));
        h = batch == 1 ? seqs[0] : ag::concat_rows(seqs);
        ag::Var c_s = ag::repeat_rows(e, 2 * n);
        for (const auto& blk : blocks_) h = blk.apply(ctx, h, c_s, 2 * n);
        // drop the prefix tokens again
        std::vector<ag::Var> imgs;
        imgs.reserve(batch);
        for (int64_t b = 0; b < batch; ++b)
            imgs.push_back(ag::slice_rows(h, b * 2 * n + n, (b + 1) * 2 * n));
        h = batch == 1 ? imgs[0] : ag::concat_rows(imgs);
    }

    ag::Var readout = head_out_.apply(
        ctx, head_mid_.apply(ctx, head_norm_.apply(ctx, h)));
    return ag::unpatchify(readout, batch, cfg_.image_size, cfg_.image_size,
                          cfg_.patch_size);
}

Tensor PixelGenerator::predict(const Tensor& z_t, const std::vector<double>& t,
                               const std::vector<int>& y,
                               const Tensor& s_hat) const {
    ag::NoGradGuard ng;
    nn::GraphContext ctx(const_cast<nn::ParamStore&>(store_), false);
    return forward(ctx, z_t, t, y, s_hat)->value;
}

}  // namespace wayflow
