#include "wayflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "wayflow/kernels.hpp"

namespace wayflow {

namespace {

constexpr double kAdamEps = 1e-8;

// rng stream tags, combined with the step/epoch index
constexpr uint64_t kTagShuffle = 0x5000000000ULL;
constexpr uint64_t kTagTime = 0x1000000000ULL;
constexpr uint64_t kTagDrop = 0x2000000000ULL;
constexpr uint64_t kTagEpsImg = 0x3000000000ULL;
constexpr uint64_t kTagEpsSem = 0x4000000000ULL;

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1)
        throw ValueError("train config: epochs and batch size must be >= 1");
    if (base_lr <= 0.0) throw ValueError("train config: base_lr must be > 0");
    if (warmup_epochs < 0)
        throw ValueError("train config: warmup epochs must be >= 0");
    if (label_drop_prob < 0.0 || label_drop_prob > 1.0)
        throw ValueError("train config: label drop prob must lie in [0, 1]");
    if (ema_decay < 0.0 || ema_decay > 1.0)
        throw ValueError("train config: ema decay must lie in [0, 1]");
    if (time_sampler.sigma < 0.0)
        throw ValueError("train config: time sampler sigma must be >= 0");
    if (noise_scale_coeff <= 0.0)
        throw ValueError("train config: noise scale coefficient must be > 0");
}

TrainConfig train_config_from(ConfigMap& cfg) {
    TrainConfig tc;
    const std::string stage = cfg.get_string("train_stage", "waypoints");
    if (stage == "waypoints")
        tc.stage = TrainStage::waypoints;
    else if (stage == "pixel")
        tc.stage = TrainStage::pixel;
    else
        throw DataError("train_stage must be 'waypoints' or 'pixel'");
    tc.epochs = cfg.get_int("train_epochs", tc.epochs);
    tc.batch_size = cfg.get_int("train_batch_size", tc.batch_size);
    tc.base_lr = cfg.get_double("train_base_lr", tc.base_lr);
    tc.warmup_epochs = cfg.get_int("train_warmup_epochs", tc.warmup_epochs);
    tc.beta1 = cfg.get_double("train_beta1", tc.beta1);
    tc.beta2 = cfg.get_double("train_beta2", tc.beta2);
    tc.weight_decay = cfg.get_double("train_weight_decay", tc.weight_decay);
    tc.ema_decay = cfg.get_double("train_ema_decay", tc.ema_decay);
    tc.label_drop_prob =
        cfg.get_double("train_label_drop_prob", tc.label_drop_prob);
    tc.seed = cfg.get_u64("train_seed", tc.seed);
    tc.time_sampler.mu = cfg.get_double("train_time_mu", tc.time_sampler.mu);
    tc.time_sampler.sigma =
        cfg.get_double("train_time_sigma", tc.time_sampler.sigma);
    tc.clamp.tau_eps = cfg.get_double("train_tau_eps", tc.clamp.tau_eps);
    tc.noise_scale_coeff =
        cfg.get_double("train_noise_scale_coeff", tc.noise_scale_coeff);
    tc.log_every = cfg.get_int("train_log_every", tc.log_every);
    tc.validate();
    return tc;
}

void train_config_echo(const TrainConfig& tc, ConfigMap& cfg) {
    cfg.set("train_stage",
            tc.stage == TrainStage::waypoints ? "waypoints" : "pixel");
    cfg.set_int("train_epochs", tc.epochs);
    cfg.set_int("train_batch_size", tc.batch_size);
    cfg.set_double("train_base_lr", tc.base_lr);
    cfg.set_int("train_warmup_epochs", tc.warmup_epochs);
    cfg.set_double("train_beta1", tc.beta1);
    cfg.set_double("train_beta2", tc.beta2);
    cfg.set_double("train_weight_decay", tc.weight_decay);
    cfg.set_double("train_ema_decay", tc.ema_decay);
    cfg.set_double("train_label_drop_prob", tc.label_drop_prob);
    cfg.set("train_seed", std::to_string(tc.seed));
    cfg.set_double("train_time_mu", tc.time_sampler.mu);
    cfg.set_double("train_time_sigma", tc.time_sampler.sigma);
    cfg.set_double("train_tau_eps", tc.clamp.tau_eps);
    cfg.set_double("train_noise_scale_coeff", tc.noise_scale_coeff);
    cfg.set_int("train_log_every", tc.log_every);
}

void adamw_step(nn::ParamStore& params, AdamState& state, double lr,
                double beta1, double beta2, double weight_decay) {
    if (!params.grads_valid())
        throw StateError("optimizer step before a backward pass");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params.params()) {
        const Tensor& g = params.grad(name);
        if (!g.same_shape(p))
            throw ShapeError("optimizer: gradient shape mismatch for " + name);
        auto mit = state.m.find(name);
        if (mit == state.m.end())
            mit = state.m.emplace(name, Tensor::zeros(p.shape())).first;
        auto vit = state.v.find(name);
        if (vit == state.v.end())
            vit = state.v.emplace(name, Tensor::zeros(p.shape())).first;
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
            if (weight_decay != 0.0) p[i] -= lr * weight_decay * p[i];
        }
    }
}

EmaShadow EmaShadow::init_from(const nn::ParamStore& params, double decay) {
    EmaShadow ema;
    ema.decay = decay;
    for (const auto& [name, p] : params.params()) ema.shadow.emplace(name, p);
    return ema;
}

void EmaShadow::update(const nn::ParamStore& params) {
    for (const auto& [name, p] : params.params()) {
        auto it = shadow.find(name);
        if (it == shadow.end())
            throw StateError("ema shadow missing parameter: " + name);
        Tensor& s = it->second;
        for (int64_t i = 0; i < p.numel(); ++i)
            s[i] = decay * s[i] + (1.0 - decay) * p[i];
    }
}

double lr_schedule(int64_t step, int64_t steps_per_epoch,
                   const TrainConfig& cfg) {
    const int64_t warmup = cfg.warmup_epochs * steps_per_epoch;
    if (warmup <= 0 || step >= warmup) return cfg.base_lr;
    return cfg.base_lr * static_cast<double>(step + 1) /
           static_cast<double>(warmup);
}

std::vector<int64_t> train_epoch_permutation(const Dataset& data,
                                             uint64_t seed, int64_t epoch) {
    std::vector<int64_t> perm(data.size());
    std::iota(perm.begin(), perm.end(), 0);
    RngStream rng(mix_seed(seed, kTagShuffle + static_cast<uint64_t>(epoch)));
    for (size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    return perm;
}

TrainBatch draw_train_batch(const Dataset& data,
                            const std::vector<int64_t>& perm,
                            int64_t batch_index, const TrainConfig& cfg,
                            int64_t step) {
    const int64_t bs = cfg.batch_size;
    const int64_t side = data.image_size;
    RngStream time_rng(mix_seed(cfg.seed, kTagTime + static_cast<uint64_t>(step)));
    RngStream drop_rng(mix_seed(cfg.seed, kTagDrop + static_cast<uint64_t>(step)));
    RngStream eps_rng(mix_seed(cfg.seed, kTagEpsImg + static_cast<uint64_t>(step)));
    const double ns =
        cfg.noise_scale_coeff * flow::noise_scale(side);

    TrainBatch batch;
    batch.x = Tensor({bs, side, side, 3});
    batch.eps = Tensor({bs, side, side, 3});
    batch.z = Tensor({bs, side, side, 3});
    const int64_t block = side * side * 3;
    for (int64_t b = 0; b < bs; ++b) {
        const int64_t idx = perm[static_cast<size_t>(
            (batch_index * bs + b) % static_cast<int64_t>(perm.size()))];
        batch.indices.push_back(idx);
        const Tensor& img = data.images[static_cast<size_t>(idx)];
        std::copy(img.data(), img.data() + block, batch.x.data() + b * block);

        const double t = flow::sample_time(cfg.time_sampler, time_rng);
        batch.t.push_back(t);
        int y = data.labels[static_cast<size_t>(idx)];
        if (cfg.label_drop_prob > 0.0 &&
            drop_rng.uniform() < cfg.label_drop_prob)
            y = flow::kNullClass;
        batch.labels.push_back(y);

        for (int64_t i = 0; i < block; ++i) {
            const double e = ns * eps_rng.normal();
            batch.eps[b * block + i] = e;
            batch.z[b * block + i] =
                t * batch.x[b * block + i] + (1.0 - t) * e;
        }
    }
    return batch;
}

Tensor draw_semantic_noise(const TrainConfig& cfg, int64_t step, int64_t rows,
                           int64_t dim) {
    RngStream rng(mix_seed(cfg.seed, kTagEpsSem + static_cast<uint64_t>(step)));
    return Tensor::randn({rows, dim}, rng);
}

void train_waypoints(WaypointGenerator& model, AdamState& opt, EmaShadow& ema,
                     const Dataset& data, const ToyFeatureExtractor& ext,
                     const WaypointProjection& proj, const TrainConfig& cfg,
                     const TrainHooks& hooks) {
    cfg.validate();
    if (data.size() == 0) throw DataError("training data is empty");
    if (data.image_size != model.config().image_size)
        throw ShapeError("dataset image size does not match the model");
    if (ext.patch() != model.config().patch_size)
        throw ShapeError(
            "extractor patch size must equal the generator patch size");
    if (proj.dim() != model.config().waypoint_dim)
        throw ShapeError("projection dim does not match the model");

    // waypoint targets are fixed: precompute once
    const int64_t n = model.config().tokens();
    const int64_t d = proj.dim();
    std::vector<Tensor> s0_cache;
    s0_cache.reserve(data.size());
    for (const Tensor& img : data.images)
        s0_cache.push_back(project_waypoint(ext.features(img), proj));

    const int64_t steps_per_epoch =
        std::max<int64_t>(1, static_cast<int64_t>(data.size()) / cfg.batch_size);
    const int64_t bs = cfg.batch_size;

    for (int64_t epoch_i = 0; epoch_i < cfg.epochs; ++epoch_i) {
        const int64_t epoch = opt.step / steps_per_epoch;
        const std::vector<int64_t> perm =
            train_epoch_permutation(data, cfg.seed, epoch);
        for (int64_t bi = 0; bi < steps_per_epoch; ++bi) {
            const int64_t step = opt.step;
            TrainBatch batch = draw_train_batch(data, perm, bi, cfg, step);

            Tensor s0({bs * n, d});
            for (int64_t b = 0; b < bs; ++b) {
                const Tensor& s =
                    s0_cache[static_cast<size_t>(batch.indices[static_cast<size_t>(b)])];
                std::copy(s.data(), s.data() + s.numel(),
                          s0.data() + b * n * d);
            }
            Tensor eps_sem = draw_semantic_noise(cfg, step, bs * n, d);

            nn::GraphContext ctx(model.params(), true);
            ag::Var s_hat = model.forward(ctx, batch.z, batch.t, batch.labels);
            ag::Var loss =
                flow::sem_v_loss_graph(s_hat, s0, eps_sem, batch.t, n,
                                       cfg.clamp);
            model.params().zero_grads();
            ctx.backward(loss);

            const double lr = lr_schedule(step, steps_per_epoch, cfg);
            const double gnorm = model.params().grad_norm();
            adamw_step(model.params(), opt, lr, cfg.beta1, cfg.beta2,
                       cfg.weight_decay);
            ema.update(model.params());

            if (hooks.on_step)
                hooks.on_step({step, epoch, loss->value[0], lr, gnorm});
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch_i);
    }
}

void train_pixel(PixelGenerator& model, AdamState& opt, EmaShadow& ema,
                 const WaypointGenerator* frozen_waypoints,
                 const Dataset& data, const TrainConfig& cfg,
                 const TrainHooks& hooks) {
    cfg.validate();
    if (data.size() == 0) throw DataError("training data is empty");
    if (data.image_size != model.config().image_size)
        throw ShapeError("dataset image size does not match the model");
    if (frozen_waypoints != nullptr) {
        const auto& wc = frozen_waypoints->config();
        if (wc.image_size != model.config().image_size ||
            wc.patch_size != model.config().patch_size ||
            wc.waypoint_dim != model.config().waypoint_dim)
            throw ShapeError(
                "waypoint checkpoint dimensions do not match the pixel "
                "generator");
    }

    const int64_t n = model.config().tokens();
    const int64_t d = model.config().waypoint_dim;
    const int64_t steps_per_epoch =
        std::max<int64_t>(1, static_cast<int64_t>(data.size()) / cfg.batch_size);
    const int64_t bs = cfg.batch_size;

    for (int64_t epoch_i = 0; epoch_i < cfg.epochs; ++epoch_i) {
        const int64_t epoch = opt.step / steps_per_epoch;
        const std::vector<int64_t> perm =
            train_epoch_permutation(data, cfg.seed, epoch);
        for (int64_t bi = 0; bi < steps_per_epoch; ++bi) {
            const int64_t step = opt.step;
            TrainBatch batch = draw_train_batch(data, perm, bi, cfg, step);

            // same (possibly dropped) labels feed both models
            Tensor s_hat =
                frozen_waypoints != nullptr
                    ? frozen_waypoints->predict(batch.z, batch.t, batch.labels)
                    : Tensor::zeros({bs * n, d});

            nn::GraphContext ctx(model.params(), true);
            ag::Var x_hat =
                model.forward(ctx, batch.z, batch.t, batch.labels, s_hat);
            ag::Var loss =
                flow::v_loss_graph(x_hat, batch.x, batch.eps, batch.t,
                                   cfg.clamp);
            model.params().zero_grads();
            ctx.backward(loss);

            const double lr = lr_schedule(step, steps_per_epoch, cfg);
            const double gnorm = model.params().grad_norm();
            adamw_step(model.params(), opt, lr, cfg.beta1, cfg.beta2,
                       cfg.weight_decay);
            ema.update(model.params());

            if (hooks.on_step)
                hooks.on_step({step, epoch, loss->value[0], lr, gnorm});
        }
        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch_i);
    }
}

// --- checkpoint packing ---

namespace {

void pack_map(Checkpoint& ckpt, const std::string& prefix,
              const std::map<std::string, Tensor>& tensors) {
    for (const auto& [name, t] : tensors) ckpt.tensors.emplace(prefix + name, t);
}

void pack_adam(Checkpoint& ckpt, const std::string& prefix,
               const AdamState& opt) {
    pack_map(ckpt, prefix + "opt/m/", opt.m);
    pack_map(ckpt, prefix + "opt/v/", opt.v);
}

AdamState unpack_adam(const Checkpoint& ckpt, const std::string& prefix,
                      ConfigMap& cfg, const std::string& step_key) {
    AdamState opt;
    opt.m = ckpt.with_prefix(prefix + "opt/m/");
    opt.v = ckpt.with_prefix(prefix + "opt/v/");
    opt.step = cfg.get_int(step_key, 0);
    return opt;
}

void pack_projection(Checkpoint& ckpt, const WaypointProjection& proj) {
    ckpt.tensors.emplace("proj/basis", proj.basis);
    ckpt.tensors.emplace("proj/mean", proj.mean);
    ckpt.tensors.emplace("proj/scale", proj.scale);
    ckpt.tensors.emplace("proj/eigenvalues", proj.eigenvalues);
}

WaypointProjection unpack_projection(const Checkpoint& ckpt, ConfigMap& cfg) {
    WaypointProjection proj;
    proj.basis = ckpt.get("proj/basis");
    proj.mean = ckpt.get("proj/mean");
    proj.scale = ckpt.get("proj/scale");
    proj.eigenvalues = ckpt.get("proj/eigenvalues");
    proj.normalized = cfg.get_bool("proj_normalized", true);
    proj.rank_deficient = cfg.get_bool("proj_rank_deficient", false);
    return proj;
}

void echo_extractor(ConfigMap& cfg, const ExtractorSpec& ext) {
    cfg.set_int("ext_patch", ext.patch);
    cfg.set_int("ext_dim", ext.dim);
    cfg.set("ext_seed", std::to_string(ext.seed));
}

ExtractorSpec read_extractor(ConfigMap& cfg) {
    ExtractorSpec ext;
    ext.patch = cfg.get_int("ext_patch", ext.patch);
    ext.dim = cfg.get_int("ext_dim", ext.dim);
    ext.seed = cfg.get_u64("ext_seed", ext.seed);
    return ext;
}

void echo_wp_config(ConfigMap& cfg, const WaypointGeneratorConfig& wc,
                    const std::string& prefix) {
    cfg.set_int(prefix + "depth", wc.depth);
    cfg.set_int(prefix + "hidden", wc.hidden_dim);
    cfg.set_int(prefix + "heads", wc.heads);
    cfg.set_int(prefix + "patch", wc.patch_size);
    cfg.set_int(prefix + "bottleneck", wc.bottleneck);
    cfg.set_int(prefix + "classes", wc.num_classes);
    cfg.set_int(prefix + "image", wc.image_size);
    cfg.set_int(prefix + "wp_dim", wc.waypoint_dim);
}

WaypointGeneratorConfig read_wp_config(ConfigMap& cfg,
                                       const std::string& prefix) {
    WaypointGeneratorConfig wc;
    wc.depth = cfg.get_int(prefix + "depth", wc.depth);
    wc.hidden_dim = cfg.get_int(prefix + "hidden", wc.hidden_dim);
    wc.heads = cfg.get_int(prefix + "heads", wc.heads);
    wc.patch_size = cfg.get_int(prefix + "patch", wc.patch_size);
    wc.bottleneck = cfg.get_int(prefix + "bottleneck", wc.bottleneck);
    wc.num_classes = cfg.get_int(prefix + "classes", wc.num_classes);
    wc.image_size = cfg.get_int(prefix + "image", wc.image_size);
    wc.waypoint_dim = cfg.get_int(prefix + "wp_dim", wc.waypoint_dim);
    return wc;
}

void echo_px_config(ConfigMap& cfg, const PixelGeneratorConfig& pc) {
    cfg.set_int("px_depth", pc.depth);
    cfg.set_int("px_hidden", pc.hidden_dim);
    cfg.set_int("px_heads", pc.heads);
    cfg.set_int("px_patch", pc.patch_size);
    cfg.set_int("px_bottleneck", pc.bottleneck);
    cfg.set_int("px_classes", pc.num_classes);
    cfg.set_int("px_image", pc.image_size);
    cfg.set_int("px_wp_dim", pc.waypoint_dim);
    cfg.set("px_injection", injection_name(pc.injection));
}

PixelGeneratorConfig read_px_config(ConfigMap& cfg) {
    PixelGeneratorConfig pc;
    pc.depth = cfg.get_int("px_depth", pc.depth);
    pc.hidden_dim = cfg.get_int("px_hidden", pc.hidden_dim);
    pc.heads = cfg.get_int("px_heads", pc.heads);
    pc.patch_size = cfg.get_int("px_patch", pc.patch_size);
    pc.bottleneck = cfg.get_int("px_bottleneck", pc.bottleneck);
    pc.num_classes = cfg.get_int("px_classes", pc.num_classes);
    pc.image_size = cfg.get_int("px_image", pc.image_size);
    pc.waypoint_dim = cfg.get_int("px_wp_dim", pc.waypoint_dim);
    pc.injection = injection_from_name(cfg.get_string("px_injection", "adaln"));
    return pc;
}

}  // namespace

void overwrite_params(nn::ParamStore& store,
                      const std::map<std::string, Tensor>& tensors) {
    if (tensors.size() != store.params().size())
        throw DataError("checkpoint dimension mismatch: expected " +
                        std::to_string(store.params().size()) +
                        " tensors, found " + std::to_string(tensors.size()));
    for (auto& [name, p] : store.params()) {
        auto it = tensors.find(name);
        if (it == tensors.end())
            throw DataError("checkpoint is missing parameter: " + name);
        if (!it->second.same_shape(p))
            throw DataError("checkpoint dimension mismatch for " + name +
                            ": " + it->second.shape_str() + " vs " +
                            p.shape_str());
        p = it->second;
    }
}

Checkpoint make_projection_checkpoint(const WaypointProjection& proj,
                                      const ExtractorSpec& ext) {
    Checkpoint ckpt;
    ConfigMap cfg;
    cfg.set("kind", "waypoint-projection");
    cfg.set_int("proj_dim", proj.dim());
    cfg.set_int("proj_feature_dim", proj.feature_dim());
    cfg.set("proj_normalized", proj.normalized ? "true" : "false");
    cfg.set("proj_rank_deficient", proj.rank_deficient ? "true" : "false");
    echo_extractor(cfg, ext);
    ckpt.config_text = cfg.serialize();
    pack_projection(ckpt, proj);
    return ckpt;
}

WaypointProjection projection_from_checkpoint(const Checkpoint& ckpt,
                                              ExtractorSpec* ext_out) {
    ConfigMap cfg = ConfigMap::parse_text(ckpt.config_text);
    const std::string kind = cfg.get_string("kind", "");
    if (kind != "waypoint-projection" && kind != "waypoint-generator")
        throw DataError("checkpoint does not carry a waypoint projection");
    WaypointProjection proj = unpack_projection(ckpt, cfg);
    if (ext_out != nullptr) *ext_out = read_extractor(cfg);
    return proj;
}

Checkpoint make_waypoint_checkpoint(const WaypointGenerator& model,
                                    const EmaShadow& ema, const AdamState& opt,
                                    const WaypointProjection& proj,
                                    const ExtractorSpec& ext,
                                    const std::string& extra_config) {
    Checkpoint ckpt;
    ConfigMap cfg = ConfigMap::parse_text(extra_config);
    cfg.set("kind", "waypoint-generator");
    echo_wp_config(cfg, model.config(), "wp_");
    cfg.set_double("ema_decay", ema.decay);
    cfg.set_int("opt_step", opt.step);
    cfg.set("proj_normalized", proj.normalized ? "true" : "false");
    cfg.set("proj_rank_deficient", proj.rank_deficient ? "true" : "false");
    echo_extractor(cfg, ext);
    ckpt.config_text = cfg.serialize();
    pack_map(ckpt, "param/", model.params().params());
    pack_map(ckpt, "ema/", ema.shadow);
    pack_adam(ckpt, "", opt);
    pack_projection(ckpt, proj);
    return ckpt;
}

LoadedWaypointGenerator load_waypoint_checkpoint(const std::string& path) {
    Checkpoint ckpt = read_checkpoint(path);
    ConfigMap cfg = ConfigMap::parse_text(ckpt.config_text);
    if (cfg.get_string("kind", "") != "waypoint-generator")
        throw DataError("not a waypoint-generator checkpoint: " + path);

    LoadedWaypointGenerator out;
    out.config_text = ckpt.config_text;
    out.cfg = read_wp_config(cfg, "wp_");
    out.model = std::make_unique<WaypointGenerator>(out.cfg, 0);
    overwrite_params(out.model->params(), ckpt.with_prefix("param/"));
    out.ema.decay = cfg.get_double("ema_decay", 0.9999);
    out.ema.shadow = ckpt.with_prefix("ema/");
    out.opt = unpack_adam(ckpt, "", cfg, "opt_step");
    out.proj = unpack_projection(ckpt, cfg);
    out.ext = read_extractor(cfg);
    return out;
}

Checkpoint make_pixel_checkpoint(const PixelGenerator& model,
                                 const EmaShadow& ema, const AdamState& opt,
                                 const WaypointGenerator* frozen_waypoints,
                                 const std::string& extra_config) {
    Checkpoint ckpt;
    ConfigMap cfg = ConfigMap::parse_text(extra_config);
    cfg.set("kind", "pixel-generator");
    echo_px_config(cfg, model.config());
    cfg.set_double("ema_decay", ema.decay);
    cfg.set_int("opt_step", opt.step);
    cfg.set("waypoints_enabled",
            frozen_waypoints != nullptr ? "true" : "false");
    if (frozen_waypoints != nullptr)
        echo_wp_config(cfg, frozen_waypoints->config(), "wp_");
    ckpt.config_text = cfg.serialize();
    pack_map(ckpt, "param/", model.params().params());
    pack_map(ckpt, "ema/", ema.shadow);
    pack_adam(ckpt, "", opt);
    if (frozen_waypoints != nullptr)
        pack_map(ckpt, "wp/param/", frozen_waypoints->params().params());
    return ckpt;
}

GeneratorBundle LoadedPixelGenerator::ema_bundle() {
    if (!ema_model_) {
        ema_model_ = std::make_unique<PixelGenerator>(cfg, 0);
        overwrite_params(ema_model_->params(), ema.shadow);
    }
    return {waypoints_enabled ? frozen_waypoints.get() : nullptr,
            ema_model_.get()};
}

LoadedPixelGenerator load_pixel_checkpoint(const std::string& path) {
    Checkpoint ckpt = read_checkpoint(path);
    ConfigMap cfg = ConfigMap::parse_text(ckpt.config_text);
    if (cfg.get_string("kind", "") != "pixel-generator")
        throw DataError("not a pixel-generator checkpoint: " + path);

    LoadedPixelGenerator out;
    out.config_text = ckpt.config_text;
    out.cfg = read_px_config(cfg);
    out.model = std::make_unique<PixelGenerator>(out.cfg, 0);
    overwrite_params(out.model->params(), ckpt.with_prefix("param/"));
    out.ema.decay = cfg.get_double("ema_decay", 0.9999);
    out.ema.shadow = ckpt.with_prefix("ema/");
    out.opt = unpack_adam(ckpt, "", cfg, "opt_step");
    out.waypoints_enabled = cfg.get_bool("waypoints_enabled", false);
    if (out.waypoints_enabled) {
        WaypointGeneratorConfig wc = read_wp_config(cfg, "wp_");
        out.frozen_waypoints = std::make_unique<WaypointGenerator>(wc, 0);
        overwrite_params(out.frozen_waypoints->params(),
                         ckpt.with_prefix("wp/param/"));
    }
    return out;
}

}  // namespace wayflow
