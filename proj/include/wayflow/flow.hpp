#pragma once

#include <vector>

#include "wayflow/autograd.hpp"
#include "wayflow/rng.hpp"
#include "wayflow/tensor.hpp"

namespace wayflow::flow {

// Label sentinel for the unconditional (class-dropped) branch.
constexpr int kNullClass = -1;

// Noisy sample with its position on the path and conditioning label.
struct FlowState {
    Tensor z_t;
    double t = 0.0;
    int y = kNullClass;
};

// logit(t) ~ N(mu, sigma^2)
struct TimeSamplerConfig {
    double mu = -0.8;
    double sigma = 0.8;
};

// Floor for the (1 - t) divisor in velocity construction.
struct ClampConfig {
    double tau_eps = 0.05;
};

inline double clamped_denom(double t, const ClampConfig& c) {
    const double d = 1.0 - t;
    return d > c.tau_eps ? d : c.tau_eps;
}

// z_t = t*x + (1-t)*eps
Tensor interpolate(const Tensor& x, const Tensor& eps, double t);

// v = x - eps
Tensor true_velocity(const Tensor& x, const Tensor& eps);

// v_hat = (x_hat - z_t) / max(1-t, tau_eps)
Tensor velocity_from_xpred(const Tensor& x_hat, const Tensor& z_t, double t,
                           const ClampConfig& clamp);

// Mean squared velocity error for one sample; z_t is recomputed from
// (x, eps, t) so the target and estimate share the same state.
double v_loss(const Tensor& x_hat, const Tensor& x, const Tensor& eps,
              double t, const ClampConfig& clamp);

// Semantic-space analogue on waypoints; eps_sem lives in waypoint space.
double sem_v_loss(const Tensor& s_hat, const Tensor& s0, const Tensor& eps_sem,
                  double t, const ClampConfig& clamp);

// t = logistic(mu + sigma * g), g ~ N(0,1); always strictly inside (0,1).
double sample_time(const TimeSamplerConfig& cfg, RngStream& rng);

// Noise std multiplier, linear in resolution.
double noise_scale(int64_t image_size);

// --- Batched differentiable losses (training path) ---
//
// Both build the full velocity-matching residual on the graph so gradients
// flow through x_hat / s_hat only; states and targets are constants.
// `t` holds one timestep per sample; tensors are batch-major with
// `block` elements per sample.

// x_hat: [B, ...]; x, eps: same shape. Returns scalar Var.
ag::Var v_loss_graph(const ag::Var& x_hat, const Tensor& x, const Tensor& eps,
                     const std::vector<double>& t, const ClampConfig& clamp);

// s_hat: [B*N, d]; s0, eps_sem: same shape. N tokens per sample.
ag::Var sem_v_loss_graph(const ag::Var& s_hat, const Tensor& s0,
                         const Tensor& eps_sem, const std::vector<double>& t,
                         int64_t tokens_per_sample, const ClampConfig& clamp);

}  // namespace wayflow::flow
