#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wayflow/nn.hpp"
#include "wayflow/tensor.hpp"

namespace wayflow {

// Fitted projection from frozen feature space onto the leading principal
// directions: s = ((phi - mean) * basis) / scale, per token.
struct WaypointProjection {
    Tensor basis;        // [D, d], orthonormal columns, variance-descending
    Tensor mean;         // [D]
    Tensor scale;        // [d] per-dimension divisors (1.0 when disabled)
    Tensor eigenvalues;  // [d] explained variances of the kept directions
    bool normalized = true;
    bool rank_deficient = false;

    int64_t feature_dim() const { return basis.dim(0); }
    int64_t dim() const { return basis.dim(1); }
};

// PCA fit on M feature rows. Requires M > d and d <= D. A covariance of rank
// below d is padded with the remaining orthonormal eigenbasis and flagged on
// the result instead of failing.
WaypointProjection fit_pca(const Tensor& features, int64_t d,
                           bool normalize = true);

// phi: [N, D] -> [N, d]
Tensor project_waypoint(const Tensor& phi, const WaypointProjection& proj);

// s: [N, d] -> [N, D]; inverse of project_waypoint up to the discarded
// directions.
Tensor reconstruct_features(const Tensor& s, const WaypointProjection& proj);

// Deterministic frozen stand-in for a pretrained feature backbone:
// per-patch fixed random orthogonal map followed by tanh. The seed pins the
// map; the same image always yields bit-identical features.
class ToyFeatureExtractor {
public:
    ToyFeatureExtractor(int64_t patch, int64_t dim, uint64_t seed);

    // image: [H, W, 3] -> [N, dim]
    Tensor features(const Tensor& image) const;

    int64_t patch() const { return patch_; }
    int64_t dim() const { return dim_; }
    uint64_t seed() const { return seed_; }

private:
    int64_t patch_, dim_;
    uint64_t seed_;
    Tensor weight_;  // [patch*patch*3, dim], orthonormal columns
};

// Lightweight transformer predicting clean waypoints from the noisy pixel
// state, conditioned on (t, y) through globally shared AdaLN modulation.
struct WaypointGeneratorConfig {
    int64_t depth = 2;
    int64_t hidden_dim = 64;
    int64_t heads = 4;
    int64_t patch_size = 8;
    int64_t bottleneck = 64;
    int64_t num_classes = 0;
    int64_t image_size = 32;
    int64_t waypoint_dim = 16;

    void validate() const;
    int64_t grid() const { return image_size / patch_size; }
    int64_t tokens() const { return grid() * grid(); }
    int64_t patch_len() const { return patch_size * patch_size * 3; }
};

class WaypointGenerator {
public:
    WaypointGenerator(WaypointGeneratorConfig cfg, uint64_t param_seed);

    // z_t: [B, H, W, 3] -> [B*N, waypoint_dim]
    ag::Var forward(nn::GraphContext& ctx, const Tensor& z_t,
                    const std::vector<double>& t,
                    const std::vector<int>& y) const;

    // Inference path; no graph is recorded.
    Tensor predict(const Tensor& z_t, const std::vector<double>& t,
                   const std::vector<int>& y) const;

    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }
    const WaypointGeneratorConfig& config() const { return cfg_; }

private:
    WaypointGeneratorConfig cfg_;
    nn::ParamStore store_;
    nn::Linear patch_fc1_, patch_fc2_;
    nn::ConditionEmbed cond_;
    std::vector<nn::AdaLnBlock> blocks_;
    nn::RmsNorm head_norm_;
    nn::Linear head_;
    Tensor pos_;  // fixed [N, hidden] sin/cos table
};

}  // namespace wayflow
