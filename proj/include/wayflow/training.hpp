#pragma once

#include <functional>
#include <memory>

#include "wayflow/backbone.hpp"
#include "wayflow/checkpoint.hpp"
#include "wayflow/config.hpp"
#include "wayflow/dataset.hpp"
#include "wayflow/sampler.hpp"
#include "wayflow/waypoints.hpp"

namespace wayflow {

enum class TrainStage { waypoints, pixel };

struct TrainConfig {
    TrainStage stage = TrainStage::waypoints;
    int64_t epochs = 10;
    int64_t batch_size = 16;
    double base_lr = 5e-5;
    int64_t warmup_epochs = 5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.0;
    double ema_decay = 0.9999;
    double label_drop_prob = 0.1;
    uint64_t seed = 0;
    flow::TimeSamplerConfig time_sampler;  // logit-normal(-0.8, 0.8)
    flow::ClampConfig clamp;               // tau_eps 0.05
    double noise_scale_coeff = 1.0;        // multiplies image_size/256
    int64_t log_every = 10;

    void validate() const;
};

// Reads train_* keys from a config map (missing keys keep defaults).
TrainConfig train_config_from(ConfigMap& cfg);
// Writes the effective values back as train_* keys.
void train_config_echo(const TrainConfig& tc, ConfigMap& cfg);

struct AdamState {
    std::map<std::string, Tensor> m, v;
    int64_t step = 0;
};

// Decoupled-weight-decay adaptive update with bias correction. Consumes the
// gradients currently held by the store.
void adamw_step(nn::ParamStore& params, AdamState& state, double lr,
                double beta1, double beta2, double weight_decay);

struct EmaShadow {
    std::map<std::string, Tensor> shadow;
    double decay = 0.9999;

    static EmaShadow init_from(const nn::ParamStore& params, double decay);
    // shadow <- decay * shadow + (1 - decay) * params
    void update(const nn::ParamStore& params);
};

// Linear ramp to base_lr across the warmup epochs, constant afterwards.
// lr(0) = base_lr / warmup_steps by convention.
double lr_schedule(int64_t step, int64_t steps_per_epoch,
                   const TrainConfig& cfg);

// One training batch with its noisy states, fully determined by
// (config seed, step index). Exposed so tests and tools can re-derive the
// exact inputs any training step saw.
struct TrainBatch {
    Tensor x;                 // [B, H, W, 3]
    Tensor z;                 // interpolated noisy state
    Tensor eps;               // scaled noise mixed into z
    std::vector<double> t;    // per-sample timesteps
    std::vector<int> labels;  // after label drop
    std::vector<int64_t> indices;
};

std::vector<int64_t> train_epoch_permutation(const Dataset& data,
                                             uint64_t seed, int64_t epoch);

TrainBatch draw_train_batch(const Dataset& data,
                            const std::vector<int64_t>& perm,
                            int64_t batch_index, const TrainConfig& cfg,
                            int64_t step);

// Semantic noise for a stage-1 step, keyed the same way.
Tensor draw_semantic_noise(const TrainConfig& cfg, int64_t step,
                           int64_t rows, int64_t dim);

struct StepLog {
    int64_t step = 0;
    int64_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

struct TrainHooks {
    std::function<void(const StepLog&)> on_step;      // every step
    std::function<void(int64_t epoch)> on_epoch_end;  // checkpoint cadence
};

// Stage 1: velocity matching in waypoint space against PCA targets from the
// frozen extractor. Every random draw is keyed on (seed, step), so training
// resumed from any step reproduces the original run exactly.
void train_waypoints(WaypointGenerator& model, AdamState& opt, EmaShadow& ema,
                     const Dataset& data, const ToyFeatureExtractor& ext,
                     const WaypointProjection& proj, const TrainConfig& cfg,
                     const TrainHooks& hooks = {});

// Stage 2: pixel velocity matching conditioned on waypoints predicted by the
// frozen generator (pass nullptr to train the plain baseline with zero
// waypoints). The label-drop mask is shared between both models per sample.
void train_pixel(PixelGenerator& model, AdamState& opt, EmaShadow& ema,
                 const WaypointGenerator* frozen_waypoints,
                 const Dataset& data, const TrainConfig& cfg,
                 const TrainHooks& hooks = {});

// --- checkpoint packing ---

struct ExtractorSpec {
    int64_t patch = 8;
    int64_t dim = 128;
    uint64_t seed = 0;
};

void overwrite_params(nn::ParamStore& store,
                      const std::map<std::string, Tensor>& tensors);

Checkpoint make_projection_checkpoint(const WaypointProjection& proj,
                                      const ExtractorSpec& ext);
WaypointProjection projection_from_checkpoint(const Checkpoint& ckpt,
                                              ExtractorSpec* ext_out);

Checkpoint make_waypoint_checkpoint(const WaypointGenerator& model,
                                    const EmaShadow& ema, const AdamState& opt,
                                    const WaypointProjection& proj,
                                    const ExtractorSpec& ext,
                                    const std::string& extra_config);

struct LoadedWaypointGenerator {
    WaypointGeneratorConfig cfg;
    std::unique_ptr<WaypointGenerator> model;  // live weights
    EmaShadow ema;
    AdamState opt;
    WaypointProjection proj;
    ExtractorSpec ext;
    std::string config_text;
};

LoadedWaypointGenerator load_waypoint_checkpoint(const std::string& path);

Checkpoint make_pixel_checkpoint(const PixelGenerator& model,
                                 const EmaShadow& ema, const AdamState& opt,
                                 const WaypointGenerator* frozen_waypoints,
                                 const std::string& extra_config);

struct LoadedPixelGenerator {
    PixelGeneratorConfig cfg;
    std::unique_ptr<PixelGenerator> model;  // live weights
    EmaShadow ema;
    AdamState opt;
    bool waypoints_enabled = false;
    std::unique_ptr<WaypointGenerator> frozen_waypoints;  // EMA weights
    std::string config_text;

    // Bundle over EMA weights for sampling/diagnostics. The returned models
    // alias memory owned by this struct.
    GeneratorBundle ema_bundle();

private:
    std::unique_ptr<PixelGenerator> ema_model_;
};

LoadedPixelGenerator load_pixel_checkpoint(const std::string& path);

}  // namespace wayflow
