#pragma once

#include <string>
#include <vector>

#include "wayflow/nn.hpp"
#include "wayflow/tensor.hpp"

namespace wayflow {

// How predicted waypoints enter the pixel generator. The per-token AdaLN
// route is the primary design; the concat variants exist for comparison only
// and share the rest of the pipeline.
enum class WaypointInjection { adaln, channel_concat, in_context };

const char* injection_name(WaypointInjection m);
WaypointInjection injection_from_name(const std::string& name);

struct PixelGeneratorConfig {
    int64_t depth = 4;
    int64_t hidden_dim = 128;
    int64_t heads = 8;
    int64_t patch_size = 16;
    int64_t bottleneck = 128;
    int64_t num_classes = 0;
    int64_t image_size = 32;
    int64_t waypoint_dim = 16;
    WaypointInjection injection = WaypointInjection::adaln;

    void validate() const;
    int64_t grid() const { return image_size / patch_size; }
    int64_t tokens() const { return grid() * grid(); }
    int64_t patch_len() const { return patch_size * patch_size * 3; }
};

// x-prediction backbone: patchify -> modulated transformer blocks -> zero-
// initialized readout -> unpatchify. A freshly initialized model maps any
// input to exactly zero and every block acts as the identity.
class PixelGenerator {
public:
    PixelGenerator(PixelGeneratorConfig cfg, uint64_t param_seed);

    // z_t: [B, H, W, 3]; s_hat: [B*N, waypoint_dim] (zeros when waypoints
    // are disabled) -> predicted clean image [B, H, W, 3].
    ag::Var forward(nn::GraphContext& ctx, const Tensor& z_t,
                    const std::vector<double>& t, const std::vector<int>& y,
                    const Tensor& s_hat) const;

    // Inference path; no graph recorded.
    Tensor predict(const Tensor& z_t, const std::vector<double>& t,
                   const std::vector<int>& y, const Tensor& s_hat) const;

    // c_s = e(t, y) broadcast per token + Proj(s_hat); exposed for tests and
    // diagnostics of the conditioning pathway.
    ag::Var spatial_condition(nn::GraphContext& ctx,
                              const std::vector<double>& t,
                              const std::vector<int>& y,
                              const Tensor& s_hat) const;

    nn::ParamStore& params() { return store_; }
    const nn::ParamStore& params() const { return store_; }
    const PixelGeneratorConfig& config() const { return cfg_; }
    const std::vector<nn::AdaLnBlock>& blocks() const { return blocks_; }
    const Tensor& position_table() const { return pos_; }

private:
    ag::Var embed_tokens(nn::GraphContext& ctx, const Tensor& z_t,
                         const Tensor& s_hat) const;

    PixelGeneratorConfig cfg_;
    nn::ParamStore store_;
    nn::Linear patch_fc1_, patch_fc2_;
    nn::ConditionEmbed cond_;
    nn::Linear wp_proj_;   // waypoint_dim -> hidden, bias-free (adaln)
    nn::Linear ctx_proj_;  // waypoint_dim -> hidden, bias-free (in_context)
    std::vector<nn::AdaLnBlock> blocks_;
    nn::RmsNorm head_norm_;
    nn::Linear head_mid_, head_out_;
    Tensor pos_;
};

}  // namespace wayflow
