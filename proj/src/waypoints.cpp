#include "wayflow/waypoints.hpp"

#include <cmath>

#include "wayflow/kernels.hpp"
#include "wayflow/linalg.hpp"

namespace wayflow {

WaypointProjection fit_pca(const Tensor& features, int64_t d, bool normalize) {
    if (features.rank() != 2)
        throw ShapeError("fit_pca expects [M, D] features");
    const int64_t m = features.dim(0), dim = features.dim(1);
    if (d < 1 || d > dim)
        throw ValueError("fit_pca: requested dim " + std::to_string(d) +
                         " exceeds feature dim " + std::to_string(dim));
    if (m <= d)
        throw DataError("fit_pca: need more than " + std::to_string(d) +
                        " samples, got " + std::to_string(m));

    Tensor mu({dim});
    for (int64_t r = 0; r < m; ++r)
        kernels::add(mu.data(), features.data() + r * dim, mu.data(), dim);
    kernels::scale(mu.data(), 1.0 / static_cast<double>(m), mu.data(), dim);

    Tensor centered(features.shape());
    for (int64_t r = 0; r < m; ++r)
        kernels::sub(features.data() + r * dim, mu.data(),
                     centered.data() + r * dim, dim);

    // sample covariance (divisor M-1)
    Tensor cov = matmul(transpose2d(centered), centered);
    kernels::scale(cov.data(), 1.0 / static_cast<double>(m - 1), cov.data(),
                   cov.numel());

    linalg::EigResult eig = linalg::eigh_symmetric(cov);

    WaypointProjection proj;
    proj.basis = Tensor({dim, d});
    proj.mean = mu;
    proj.eigenvalues = Tensor({d});
    proj.scale = Tensor::full({d}, 1.0);
    proj.normalized = normalize;

    const double lead = std::max(eig.values.empty() ? 0.0 : eig.values[0], 0.0);
    const double rank_tol = std::max(lead, 1.0) * 1e-12;
    int64_t rank = 0;
    for (double v : eig.values)
        if (v > rank_tol) ++rank;
    proj.rank_deficient = rank < d;

    for (int64_t k = 0; k < d; ++k) {
        // sign convention: largest-magnitude entry positive (first on ties)
        int64_t arg = 0;
        double best = 0.0;
        for (int64_t i = 0; i < dim; ++i) {
            const double mag = std::abs(eig.vectors.at(i, k));
            if (mag > best + 1e-15) {
                best = mag;
                arg = i;
            }
        }
        const double sgn = eig.vectors.at(arg, k) < 0.0 ? -1.0 : 1.0;
        for (int64_t i = 0; i < dim; ++i)
            proj.basis.at(i, k) = sgn * eig.vectors.at(i, k);
        const double ev = std::max(eig.values[static_cast<size_t>(k)], 0.0);
        proj.eigenvalues[k] = ev;
        if (normalize && ev > rank_tol) proj.scale[k] = std::sqrt(ev);
    }
    return proj;
}

Tensor project_waypoint(const Tensor& phi, const WaypointProjection& proj) {
    if (phi.rank() != 2 || phi.dim(1) != proj.feature_dim())
        throw ShapeError("project_waypoint: features " + phi.shape_str() +
                         " do not match projection dim " +
                         std::to_string(proj.feature_dim()));
    const int64_t n = phi.dim(0), dim = proj.feature_dim(), d = proj.dim();
    Tensor centered(phi.shape());
    for (int64_t r = 0; r < n; ++r)
        kernels::sub(phi.data() + r * dim, proj.mean.data(),
                     centered.data() + r * dim, dim);
    Tensor s = matmul(centered, proj.basis);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t k = 0; k < d; ++k) s.at(r, k) /= proj.scale[k];
    return s;
}

Tensor reconstruct_features(const Tensor& s, const WaypointProjection& proj) {
    if (s.rank() != 2 || s.dim(1) != proj.dim())
        throw ShapeError("reconstruct_features: waypoint shape mismatch");
    const int64_t n = s.dim(0), d = proj.dim(), dim = proj.feature_dim();
    Tensor unscaled(s.shape());
    for (int64_t r = 0; r < n; ++r)
        for (int64_t k = 0; k < d; ++k)
            unscaled.at(r, k) = s.at(r, k) * proj.scale[k];
    Tensor phi = matmul(unscaled, transpose2d(proj.basis));
    for (int64_t r = 0; r < n; ++r)
        kernels::add(phi.data() + r * dim, proj.mean.data(),
                     phi.data() + r * dim, dim);
    return phi;
}

ToyFeatureExtractor::ToyFeatureExtractor(int64_t patch, int64_t dim,
                                         uint64_t seed)
    : patch_(patch), dim_(dim), seed_(seed) {
    if (patch < 1) throw ValueError("extractor: patch must be positive");
    const int64_t plen = patch * patch * 3;
    if (dim < 1 || dim > plen)
        throw ValueError("extractor: feature dim must lie in [1, " +
                         std::to_string(plen) + "]");
    RngStream rng(mix_seed(seed, 0x77617970));
    // rows of [dim, plen] orthonormal; stored transposed for the matmul
    Tensor rows = linalg::random_orthonormal_rows(dim, plen, rng);
    weight_ = transpose2d(rows);
}

Tensor ToyFeatureExtractor::features(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw ShapeError("extractor expects [H, W, 3]");
    if (image.dim(0) % patch_ != 0 || image.dim(1) % patch_ != 0)
        throw ShapeError("extractor: image size not divisible by patch size");
    Tensor batched = image.reshaped({1, image.dim(0), image.dim(1), 3});
    Tensor patches = nn::patchify_images(batched, patch_);
    Tensor out = matmul(patches, weight_);
    // fixed gain keeps tanh in its curved region for typical pixel patches
    for (auto& v : out.vec()) v = std::tanh(2.0 * v);
    return out;
}

void WaypointGeneratorConfig::validate() const {
    if (depth < 1 || hidden_dim < 1 || heads < 1 || waypoint_dim < 1)
        throw ValueError("waypoint generator config: positive dims required");
    if (hidden_dim % heads != 0)
        throw ValueError("waypoint generator config: hidden_dim % heads != 0");
    if (hidden_dim % 4 != 0)
        throw ValueError("waypoint generator config: hidden_dim % 4 != 0");
    if (image_size % patch_size != 0)
        throw ValueError(
            "waypoint generator config: image size not divisible by patch");
    if (num_classes < 1)
        throw ValueError("waypoint generator config: need num_classes >= 1");
}

WaypointGenerator::WaypointGenerator(WaypointGeneratorConfig cfg,
                                     uint64_t param_seed)
    : cfg_(cfg) {
    cfg_.validate();
    RngStream rng(param_seed);
    patch_fc1_ = nn::Linear::create(store_, rng, "patch.fc1", cfg_.patch_len(),
                                    cfg_.bottleneck, nn::Init::trunc_normal);
    patch_fc2_ = nn::Linear::create(store_, rng, "patch.fc2", cfg_.bottleneck,
                                    cfg_.hidden_dim, nn::Init::trunc_normal);
    cond_ = nn::ConditionEmbed::create(store_, rng, "cond", cfg_.hidden_dim,
                                       cfg_.num_classes);
    for (int64_t l = 0; l < cfg_.depth; ++l)
        blocks_.push_back(nn::AdaLnBlock::create(
            store_, rng, "block" + std::to_string(l), cfg_.hidden_dim,
            cfg_.heads));
    head_norm_ = nn::RmsNorm::create(store_, "head.norm", cfg_.hidden_dim);
    head_ = nn::Linear::create(store_, rng, "head.out", cfg_.hidden_dim,
                               cfg_.waypoint_dim, nn::Init::zeros);
    pos_ = nn::sincos_position_embedding(cfg_.grid(), cfg_.grid(),
                                         cfg_.hidden_dim);
}

ag::Var WaypointGenerator::forward(nn::GraphContext& ctx, const Tensor& z_t,
                                   const std::vector<double>& t,
                                   const std::vector<int>& y) const {
    if (z_t.rank() != 4 || z_t.dim(1) != cfg_.image_size ||
        z_t.dim(2) != cfg_.image_size || z_t.dim(3) != 3)
        throw ShapeError("waypoint generator: state " + z_t.shape_str() +
                         " does not match configured image size");
    const int64_t batch = z_t.dim(0);
    if (static_cast<int64_t>(t.size()) != batch ||
        static_cast<int64_t>(y.size()) != batch)
        throw ShapeError("waypoint generator: conditioning length mismatch");
    const int64_t n = cfg_.tokens();

    Tensor pos_tiled({batch * n, cfg_.hidden_dim});
    for (int64_t b = 0; b < batch; ++b)
        std::copy(pos_.data(), pos_.data() + pos_.numel(),
                  pos_tiled.data() + b * pos_.numel());

    ag::Var tokens =
        ag::constant(nn::patchify_images(z_t, cfg_.patch_size));
    ag::Var h = patch_fc2_.apply(ctx, patch_fc1_.apply(ctx, tokens));
    h = ag::add(h, ag::constant(std::move(pos_tiled)));

    ag::Var e = cond_.apply(ctx, t, y);
    ag::Var c_s = ag::repeat_rows(e, n);  // globally shared condition
    for (const auto& blk : blocks_) h = blk.apply(ctx, h, c_s, n);

    return head_.apply(ctx, head_norm_.apply(ctx, h));
}

Tensor WaypointGenerator::predict(const Tensor& z_t,
                                  const std::vector<double>& t,
                                  const std::vector<int>& y) const {
    ag::NoGradGuard ng;
    nn::GraphContext ctx(const_cast<nn::ParamStore&>(store_), false);
    return forward(ctx, z_t, t, y)->value;
}

}  // namespace wayflow
