#include "wayflow/flow.hpp"

#include <cmath>

#include "wayflow/kernels.hpp"

namespace wayflow::flow {

Tensor interpolate(const Tensor& x, const Tensor& eps, double t) {
    require_same_shape(x, eps, "interpolate");
    if (t < 0.0 || t > 1.0)
        throw ValueError("interpolate: t must lie in [0, 1]");
    Tensor out = scale(x, t);
    kernels::axpy(1.0 - t, eps.data(), out.data(), out.numel());
    return out;
}

Tensor true_velocity(const Tensor& x, const Tensor& eps) {
    return sub(x, eps);
}

Tensor velocity_from_xpred(const Tensor& x_hat, const Tensor& z_t, double t,
                           const ClampConfig& clamp) {
    require_same_shape(x_hat, z_t, "velocity_from_xpred");
    return scale(sub(x_hat, z_t), 1.0 / clamped_denom(t, clamp));
}

double v_loss(const Tensor& x_hat, const Tensor& x, const Tensor& eps,
              double t, const ClampConfig& clamp) {
    require_same_shape(x_hat, x, "v_loss");
    const Tensor z_t = interpolate(x, eps, t);
    const Tensor v_hat = velocity_from_xpred(x_hat, z_t, t, clamp);
    const Tensor v = true_velocity(x, eps);
    const Tensor r = sub(v_hat, v);
    return sumsq(r) / static_cast<double>(r.numel());
}

double sem_v_loss(const Tensor& s_hat, const Tensor& s0, const Tensor& eps_sem,
                  double t, const ClampConfig& clamp) {
    require_same_shape(s_hat, s0, "sem_v_loss");
    const Tensor z_sem = interpolate(s0, eps_sem, t);
    const double inv = 1.0 / clamped_denom(t, clamp);
    const Tensor v_hat = scale(sub(s_hat, z_sem), inv);
    const Tensor v = scale(sub(s0, z_sem), inv);
    const Tensor r = sub(v_hat, v);
    return sumsq(r) / static_cast<double>(r.numel());
}

double sample_time(const TimeSamplerConfig& cfg, RngStream& rng) {
    if (cfg.sigma < 0.0) throw ValueError("sample_time: sigma must be >= 0");
    const double logit = cfg.mu + cfg.sigma * rng.normal();
    return 1.0 / (1.0 + std::exp(-logit));
}

double noise_scale(int64_t image_size) {
    if (image_size <= 0) throw ValueError("noise_scale: bad image size");
    return static_cast<double>(image_size) / 256.0;
}

ag::Var v_loss_graph(const ag::Var& x_hat, const Tensor& x, const Tensor& eps,
                     const std::vector<double>& t, const ClampConfig& clamp) {
    require_same_shape(x_hat->value, x, "v_loss_graph");
    require_same_shape(x, eps, "v_loss_graph");
    const int64_t batch = static_cast<int64_t>(t.size());
    if (batch == 0 || x.numel() % batch != 0)
        throw ShapeError("v_loss_graph: batch layout mismatch");
    const int64_t block = x.numel() / batch;

    std::vector<double> inv_denom(t.size());
    for (size_t i = 0; i < t.size(); ++i)
        inv_denom[i] = 1.0 / clamped_denom(t[i], clamp);

    // Target v and state z_t per sample, packed as one constant tensor each.
    Tensor z_t(x.shape());
    Tensor v(x.shape());
    for (int64_t b = 0; b < batch; ++b) {
        const double tb = t[static_cast<size_t>(b)];
        for (int64_t i = b * block; i < (b + 1) * block; ++i) {
            z_t[i] = tb * x[i] + (1.0 - tb) * eps[i];
            v[i] = x[i] - eps[i];
        }
    }

    ag::Var diff = ag::sub(x_hat, ag::constant(std::move(z_t)));
    ag::Var v_hat = ag::scale_blocks(diff, block, inv_denom);
    ag::Var r = ag::sub(v_hat, ag::constant(std::move(v)));
    return ag::mean_all(ag::mul(r, r));
}

ag::Var sem_v_loss_graph(const ag::Var& s_hat, const Tensor& s0,
                         const Tensor& eps_sem, const std::vector<double>& t,
                         int64_t tokens_per_sample, const ClampConfig& clamp) {
    require_same_shape(s_hat->value, s0, "sem_v_loss_graph");
    require_same_shape(s0, eps_sem, "sem_v_loss_graph");
    const int64_t batch = static_cast<int64_t>(t.size());
    if (s0.rank() != 2 || s0.dim(0) != batch * tokens_per_sample)
        throw ShapeError("sem_v_loss_graph: token layout mismatch");
    const int64_t block = tokens_per_sample * s0.dim(1);

    std::vector<double> inv_denom(t.size());
    for (size_t i = 0; i < t.size(); ++i)
        inv_denom[i] = 1.0 / clamped_denom(t[i], clamp);

    Tensor z_sem(s0.shape());
    Tensor v(s0.shape());
    for (int64_t b = 0; b < batch; ++b) {
        const double tb = t[static_cast<size_t>(b)];
        const double inv = inv_denom[static_cast<size_t>(b)];
        for (int64_t i = b * block; i < (b + 1) * block; ++i) {
            z_sem[i] = tb * s0[i] + (1.0 - tb) * eps_sem[i];
            v[i] = (s0[i] - z_sem[i]) * inv;
        }
    }

    ag::Var diff = ag::sub(s_hat, ag::constant(std::move(z_sem)));
    ag::Var v_hat = ag::scale_blocks(diff, block, inv_denom);
    ag::Var r = ag::sub(v_hat, ag::constant(std::move(v)));
    return ag::mean_all(ag::mul(r, r));
}

}  // namespace wayflow::flow
