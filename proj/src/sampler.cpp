#include "wayflow/sampler.hpp"

#include <fstream>

#include <json.hpp>

#include "wayflow/kernels.hpp"

namespace wayflow {

Solver solver_from_name(const std::string& name) {
    if (name == "euler") return Solver::euler;
    if (name == "heun") return Solver::heun;
    throw ValueError("unknown solver: " + name);
}

const char* solver_name(Solver s) {
    return s == Solver::euler ? "euler" : "heun";
}

void SamplerConfig::validate() const {
    if (steps < 1) throw ValueError("sampler: steps must be >= 1");
    if (cfg_scale < 0.0) throw ValueError("sampler: cfg scale must be >= 0");
    if (!(0.0 <= cfg_t_lo && cfg_t_lo < cfg_t_hi && cfg_t_hi <= 1.0))
        throw ValueError("sampler: cfg interval must satisfy 0 <= lo < hi <= 1");
    if (!(clamp.tau_eps > 0.0 && clamp.tau_eps < 1.0))
        throw ValueError("sampler: clamp must lie in (0, 1)");
    if (noise_scale_coeff <= 0.0)
        throw ValueError("sampler: noise scale coefficient must be > 0");
}

Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, double w) {
    require_same_shape(v_uncond, v_cond, "cfg_combine");
    // endpoints must be exact, not merely close
    if (w == 1.0) return v_cond;
    if (w == 0.0) return v_uncond;
    // v_u + w (v_c - v_u)
    Tensor res = scale(sub(v_cond, v_uncond), w);
    kernels::add(res.data(), v_uncond.data(), res.data(), res.numel());
    return res;
}

namespace {

Tensor predict_waypoints(const GeneratorBundle& models, const Tensor& z,
                         double t, const std::vector<int>& y) {
    if (models.waypoints == nullptr)
        return Tensor::zeros({z.dim(0) * models.tokens(),
                              models.waypoint_dim()});
    std::vector<double> tv(static_cast<size_t>(z.dim(0)), t);
    return models.waypoints->predict(z, tv, y);
}

struct BranchEval {
    Tensor v;
    Tensor s_hat;
};

BranchEval eval_branch(const GeneratorBundle& models, const Tensor& z,
                       double t, const std::vector<int>& y,
                       const flow::ClampConfig& clamp) {
    BranchEval out;
    out.s_hat = predict_waypoints(models, z, t, y);
    std::vector<double> tv(static_cast<size_t>(z.dim(0)), t);
    Tensor x_hat = models.pixel->predict(z, tv, y, out.s_hat);
    out.v = flow::velocity_from_xpred(x_hat, z, t, clamp);
    return out;
}

}  // namespace

VelocityEval guided_velocity(const GeneratorBundle& models, const Tensor& z,
                             double t, const std::vector<int>& y,
                             const SamplerConfig& cfg) {
    if (models.pixel == nullptr) throw StateError("guided_velocity: no model");
    VelocityEval ev;
    BranchEval cond = eval_branch(models, z, t, y, cfg.clamp);
    ev.v_cond = cond.v;
    ev.s_hat = std::move(cond.s_hat);

    const bool in_interval = t >= cfg.cfg_t_lo && t < cfg.cfg_t_hi;
    if (cfg.cfg_scale != 1.0 && in_interval) {
        std::vector<int> null_y(y.size(), flow::kNullClass);
        BranchEval uncond = eval_branch(models, z, t, null_y, cfg.clamp);
        ev.v = cfg_combine(uncond.v, ev.v_cond, cfg.cfg_scale);
        ev.v_uncond = std::move(uncond.v);
    } else {
        ev.v = ev.v_cond;
    }
    return ev;
}

Tensor euler_step(const Tensor& z, double t, double t_next, const Tensor& v) {
    require_same_shape(z, v, "euler_step");
    Tensor out = z;
    kernels::axpy(t_next - t, v.data(), out.data(), out.numel());
    return out;
}

Tensor heun_step(const Tensor& z, double t, double t_next,
                 const std::function<Tensor(const Tensor&, double)>& velocity_fn) {
    const double dt = t_next - t;
    const Tensor v0 = velocity_fn(z, t);
    Tensor predictor = z;
    kernels::axpy(dt, v0.data(), predictor.data(), predictor.numel());
    const Tensor v1 = velocity_fn(predictor, t_next);
    // z + dt * (v0 + v1) / 2; summing the velocities first keeps the step
    // bit-equal to Euler when the field is constant
    Tensor out = z;
    Tensor vsum = add(v0, v1);
    kernels::axpy(0.5 * dt, vsum.data(), out.data(), out.numel());
    return out;
}

SampleResult sample(const GeneratorBundle& models, int y,
                    const SamplerConfig& cfg) {
    cfg.validate();
    if (models.pixel == nullptr) throw StateError("sample: no pixel model");
    const int64_t size = models.image_size();
    const int64_t steps = cfg.steps;

    RngStream rng(cfg.seed);
    Tensor z = Tensor::randn({1, size, size, 3}, rng);
    kernels::scale(z.data(), cfg.noise_scale_coeff * flow::noise_scale(size),
                   z.data(), z.numel());

    const std::vector<int> yv = {y};
    SampleResult result;
    result.trace.steps.reserve(static_cast<size_t>(steps));

    auto vel = [&](const Tensor& state, double tt) {
        return guided_velocity(models, state, tt, yv, cfg).v;
    };

    for (int64_t k = 0; k < steps; ++k) {
        const double t_k = static_cast<double>(k) / static_cast<double>(steps);
        const double t_k1 =
            static_cast<double>(k + 1) / static_cast<double>(steps);

        VelocityEval ev = guided_velocity(models, z, t_k, yv, cfg);
        TrajectoryStep record;
        record.t = t_k;
        record.z = z;
        record.s_hat = ev.s_hat;
        record.v_cond = ev.v_cond;
        record.v_uncond = ev.v_uncond;
        result.trace.steps.push_back(std::move(record));

        if (cfg.solver == Solver::euler) {
            z = euler_step(z, t_k, t_k1, ev.v);
        } else {
            // reuse the predictor-point velocity already evaluated; the
            // update mirrors heun_step exactly
            Tensor predictor = euler_step(z, t_k, t_k1, ev.v);
            Tensor v1 = vel(predictor, t_k1);
            Tensor out = z;
            Tensor vsum = add(ev.v, v1);
            kernels::axpy(0.5 * (t_k1 - t_k), vsum.data(), out.data(),
                          out.numel());
            z = std::move(out);
        }
        if (!z.all_finite())
            throw NumericError("sampling diverged (NaN/Inf) at step " +
                               std::to_string(k));
    }

    result.image = z.reshaped({size, size, 3});
    return result;
}

void append_trace_jsonl(const TrajectoryRecord& trace, int64_t sample_index,
                        const std::string& path) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw DataError("cannot open trace file: " + path);
    for (size_t k = 0; k < trace.steps.size(); ++k) {
        const TrajectoryStep& s = trace.steps[k];
        nlohmann::json j;
        j["sample"] = sample_index;
        j["step"] = k;
        j["t"] = s.t;
        j["z_norm"] = norm2(s.z);
        j["s_norm"] = norm2(s.s_hat);
        j["v_cond_norm"] = norm2(s.v_cond);
        if (s.v_uncond) j["v_uncond_norm"] = norm2(*s.v_uncond);
        out << j.dump() << "\n";
    }
}

}  // namespace wayflow
