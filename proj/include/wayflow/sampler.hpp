#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wayflow/backbone.hpp"
#include "wayflow/flow.hpp"
#include "wayflow/waypoints.hpp"

namespace wayflow {

enum class Solver { euler, heun };

Solver solver_from_name(const std::string& name);
const char* solver_name(Solver s);

struct SamplerConfig {
    int64_t steps = 50;
    Solver solver = Solver::heun;
    double cfg_scale = 1.0;
    double cfg_t_lo = 0.1;   // guidance applies on [t_lo, t_hi)
    double cfg_t_hi = 1.0;
    uint64_t seed = 0;
    flow::ClampConfig clamp;
    // multiplies the resolution-linear noise scale of the prior draw; must
    // match the coefficient the model was trained with
    double noise_scale_coeff = 1.0;

    void validate() const;
};

// Trained generator pair. A null waypoint generator means the plain baseline:
// the pixel model runs with all-zero waypoints.
struct GeneratorBundle {
    const WaypointGenerator* waypoints = nullptr;
    const PixelGenerator* pixel = nullptr;

    int64_t image_size() const { return pixel->config().image_size; }
    int64_t tokens() const { return pixel->config().tokens(); }
    int64_t waypoint_dim() const { return pixel->config().waypoint_dim; }
    int64_t num_classes() const { return pixel->config().num_classes; }
};

// v_cfg = v_uncond + w * (v_cond - v_uncond)
Tensor cfg_combine(const Tensor& v_uncond, const Tensor& v_cond, double w);

struct VelocityEval {
    Tensor v;        // guided velocity actually used by the ODE
    Tensor v_cond;   // conditional branch
    Tensor s_hat;    // recalibrated waypoints of the conditional branch
    std::optional<Tensor> v_uncond;  // present only when CFG fired
};

// One velocity-field evaluation at (z, t): waypoint recalibration, x-
// prediction, analytic velocity, optional guidance. All samples in the batch
// share t and the label vector y.
VelocityEval guided_velocity(const GeneratorBundle& models, const Tensor& z,
                             double t, const std::vector<int>& y,
                             const SamplerConfig& cfg);

// z + (t_next - t) * v
Tensor euler_step(const Tensor& z, double t, double t_next, const Tensor& v);

// Explicit trapezoidal step; velocity_fn is re-evaluated at the predictor
// state, so waypoints recalibrate inside the corrector too.
Tensor heun_step(const Tensor& z, double t, double t_next,
                 const std::function<Tensor(const Tensor&, double)>& velocity_fn);

struct TrajectoryStep {
    double t = 0.0;
    Tensor z;       // state the step was taken from
    Tensor s_hat;   // waypoints recalibrated at that state
    Tensor v_cond;  // conditional velocity at that state
    std::optional<Tensor> v_uncond;
};

struct TrajectoryRecord {
    std::vector<TrajectoryStep> steps;
};

struct SampleResult {
    Tensor image;  // [H, W, 3], unclamped model output
    TrajectoryRecord trace;
};

// Integrates the ODE from noise to t=1 for one image of class y.
// Deterministic for a fixed cfg.seed; aborts with the step index if the
// state goes non-finite.
SampleResult sample(const GeneratorBundle& models, int y,
                    const SamplerConfig& cfg);

// One JSON object per step: index, t and the state/waypoint/velocity norms.
void append_trace_jsonl(const TrajectoryRecord& trace, int64_t sample_index,
                        const std::string& path);

}  // namespace wayflow
