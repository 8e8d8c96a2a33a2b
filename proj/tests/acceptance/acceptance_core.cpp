// Acceptance suite, part 1: gradient contract, architectural identities,
// solver order, PCA oracle, variance decomposition, time sampler, guidance
// contracts and conflict metrics.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "../fd_check.hpp"
#include "../reference_blocks.hpp"
#include "acceptance_util.hpp"
#include "wayflow/diagnostics.hpp"
#include "wayflow/kernels.hpp"
#include "wayflow/linalg.hpp"
#include "wayflow/training.hpp"

using namespace wayflow;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

void nudge_zero_layers(nn::ParamStore& store, uint64_t seed) {
    RngStream rng(seed);
    for (auto& [name, p] : store.params()) {
        const bool zero_init = name.find(".mod.") != std::string::npos ||
                               name.find("head.out") != std::string::npos;
        if (zero_init)
            for (auto& v : p.vec()) v = 0.02 * rng.normal();
    }
}

}  // namespace

TEST_CASE("criterion 1: gradient suite vs central finite differences") {
    const auto t0 = std::chrono::steady_clock::now();

    // pixel generator: depth 2, hidden 16
    PixelGeneratorConfig pc;
    pc.depth = 2;
    pc.hidden_dim = 16;
    pc.heads = 2;
    pc.patch_size = 8;
    pc.bottleneck = 8;
    pc.num_classes = 3;
    pc.image_size = 16;
    pc.waypoint_dim = 6;
    PixelGenerator px(pc, 101);
    nudge_zero_layers(px.params(), 102);

    RngStream rng(103);
    flow::ClampConfig clamp;
    const std::vector<double> t = {0.37};
    const std::vector<int> y = {1};
    Tensor x = Tensor::randn({1, 16, 16, 3}, rng);
    Tensor eps = Tensor::randn({1, 16, 16, 3}, rng);
    Tensor z = flow::interpolate(x, eps, t[0]);
    Tensor s_hat = Tensor::randn({pc.tokens(), pc.waypoint_dim}, rng);

    px.params().zero_grads();
    nn::GraphContext pctx(px.params(), true);
    pctx.backward(
        flow::v_loss_graph(px.forward(pctx, z, t, y, s_hat), x, eps, t, clamp));
    auto px_eval = [&]() {
        ag::NoGradGuard ng;
        nn::GraphContext c(px.params(), false);
        return flow::v_loss_graph(px.forward(c, z, t, y, s_hat), x, eps, t,
                                  clamp)
            ->value[0];
    };
    fd::Report rp = fd::compare_param_grads(px.params(), px_eval);

    // waypoint generator: depth 1, hidden 32
    WaypointGeneratorConfig wc;
    wc.depth = 1;
    wc.hidden_dim = 32;
    wc.heads = 4;
    wc.patch_size = 8;
    wc.bottleneck = 8;
    wc.num_classes = 3;
    wc.image_size = 16;
    wc.waypoint_dim = 6;
    WaypointGenerator wp(wc, 104);
    nudge_zero_layers(wp.params(), 105);

    Tensor s0 = Tensor::randn({wc.tokens(), wc.waypoint_dim}, rng);
    Tensor eps_sem = Tensor::randn({wc.tokens(), wc.waypoint_dim}, rng);
    wp.params().zero_grads();
    nn::GraphContext wctx(wp.params(), true);
    wctx.backward(flow::sem_v_loss_graph(wp.forward(wctx, z, t, y), s0,
                                         eps_sem, t, wc.tokens(), clamp));
    auto wp_eval = [&]() {
        ag::NoGradGuard ng;
        nn::GraphContext c(wp.params(), false);
        return flow::sem_v_loss_graph(wp.forward(c, z, t, y), s0, eps_sem, t,
                                      wc.tokens(), clamp)
            ->value[0];
    };
    fd::Report rw = fd::compare_param_grads(wp.params(), wp_eval);

    const double secs = seconds_since(t0);
    const bool pass = rp.failed == 0 && rw.failed == 0 && secs < 120.0;
    report_criterion(
        1, pass,
        "L_img grads " + std::to_string(rp.checked) + " checked / " +
            std::to_string(rp.failed) + " failed; L_sem grads " +
            std::to_string(rw.checked) + " checked / " +
            std::to_string(rw.failed) + " failed; " + std::to_string(secs) +
            " s");
    CAPTURE(rp.worst);
    CAPTURE(rw.worst);
    CHECK(rp.failed == 0);
    CHECK(rw.failed == 0);
    CHECK(rp.checked == px.params().total_elements());
    CHECK(rw.checked == wp.params().total_elements());
    CHECK(secs < 120.0);
}

TEST_CASE("criterion 2: AdaLN-Zero identity at initialization") {
    PixelGeneratorConfig pc;
    pc.depth = 3;
    pc.hidden_dim = 16;
    pc.heads = 2;
    pc.patch_size = 8;
    pc.bottleneck = 8;
    pc.num_classes = 4;
    pc.image_size = 16;
    pc.waypoint_dim = 4;
    PixelGenerator gen(pc, 201);

    RngStream rng(202);
    Tensor z = Tensor::randn({2, 16, 16, 3}, rng);
    Tensor s = Tensor::randn({2 * pc.tokens(), pc.waypoint_dim}, rng);
    Tensor out = gen.predict(z, {0.2, 0.8}, {0, 3}, s);
    bool zero_out = true;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] != 0.0) zero_out = false;

    bool blocks_identity = true;
    {
        ag::NoGradGuard ng;
        nn::GraphContext ctx(gen.params(), false);
        Tensor h = Tensor::randn({pc.tokens(), pc.hidden_dim}, rng);
        Tensor cs = Tensor::randn({pc.tokens(), pc.hidden_dim}, rng);
        for (const auto& blk : gen.blocks()) {
            ag::Var o =
                blk.apply(ctx, ag::constant(h), ag::constant(cs), pc.tokens());
            for (int64_t i = 0; i < h.numel(); ++i)
                if (std::abs(o->value[i] - h[i]) > 1e-12)
                    blocks_identity = false;
        }
    }
    const bool pass = zero_out && blocks_identity;
    report_criterion(2, pass,
                     std::string("fresh backbone output exactly zero: ") +
                         (zero_out ? "yes" : "no") +
                         "; all blocks identity <= 1e-12: " +
                         (blocks_identity ? "yes" : "no"));
    CHECK(zero_out);
    CHECK(blocks_identity);
}

TEST_CASE("criterion 3: per-token modulation reduces to global AdaLN") {
    nn::ParamStore store;
    RngStream rng(301);
    nn::AdaLnBlock blk = nn::AdaLnBlock::create(store, rng, "blk", 12, 3);
    store.get(blk.mod.w_name) =
        nn::init_tensor({12, 72}, nn::Init::trunc_normal, rng);
    store.get(blk.mod.b_name) = scale(Tensor::randn({72}, rng), 0.1);
    nn::GraphContext ctx(store, false);
    ag::NoGradGuard ng;

    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        Tensor h = Tensor::randn({6, 12}, rng);
        Tensor cvec = Tensor::randn({1, 12}, rng);
        Tensor cs({6, 12});
        for (int64_t r = 0; r < 6; ++r)
            std::copy(cvec.data(), cvec.data() + 12, cs.data() + r * 12);
        ag::Var out = blk.apply(ctx, ag::constant(h), ag::constant(cs), 6);

        Tensor mrow = refblk::linear_ref(cvec, store.get(blk.mod.w_name),
                                         &store.get(blk.mod.b_name));
        std::vector<Tensor> mv;
        for (int i = 0; i < 6; ++i) {
            Tensor v({12});
            for (int64_t c = 0; c < 12; ++c) v[c] = mrow[i * 12 + c];
            mv.push_back(v);
        }
        Tensor expect = refblk::global_adaln_block_ref(h, mv, blk, store);
        for (int64_t i = 0; i < expect.numel(); ++i)
            worst = std::max(worst, std::abs(out->value[i] - expect[i]));
    }
    const bool pass = worst <= 1e-10;
    report_criterion(3, pass,
                     "max gap to global-AdaLN reference " +
                         std::to_string(worst));
    CHECK(worst <= 1e-10);
}

TEST_CASE("criterion 4: solver convergence order") {
    auto integrate = [](Solver s, int64_t steps) {
        auto field = [](const Tensor& z, double) { return z; };
        Tensor z({1}, {1.0});
        for (int64_t k = 0; k < steps; ++k) {
            const double t0 = static_cast<double>(k) / steps;
            const double t1 = static_cast<double>(k + 1) / steps;
            z = s == Solver::euler ? euler_step(z, t0, t1, field(z, t0))
                                   : heun_step(z, t0, t1, field);
        }
        return z[0];
    };
    const double exact = std::exp(1.0);
    const double h_ratio = std::abs(integrate(Solver::heun, 25) - exact) /
                           std::abs(integrate(Solver::heun, 50) - exact);
    const double e_ratio = std::abs(integrate(Solver::euler, 25) - exact) /
                           std::abs(integrate(Solver::euler, 50) - exact);
    const bool pass = std::abs(h_ratio - 4.0) <= 0.6 &&
                      std::abs(e_ratio - 2.0) <= 0.3;
    report_criterion(4, pass,
                     "heun 25->50 error ratio " + std::to_string(h_ratio) +
                         " (want 4 +-15%), euler " + std::to_string(e_ratio) +
                         " (want 2 +-15%)");
    CHECK(h_ratio == doctest::Approx(4.0).epsilon(0.15));
    CHECK(e_ratio == doctest::Approx(2.0).epsilon(0.15));
}

namespace {

// test-local eigensolver: power iteration with deflation
Tensor oracle_topd(const Tensor& cov, int64_t d) {
    const int64_t n = cov.dim(0);
    Tensor work = cov;
    Tensor vecs({n, d});
    RngStream rng(404);
    for (int64_t k = 0; k < d; ++k) {
        std::vector<double> v(static_cast<size_t>(n));
        for (auto& x : v) x = rng.normal();
        double lambda = 0.0;
        for (int it = 0; it < 20000; ++it) {
            std::vector<double> w(static_cast<size_t>(n), 0.0);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < n; ++j)
                    w[static_cast<size_t>(i)] +=
                        work.at(i, j) * v[static_cast<size_t>(j)];
            double nrm = 0.0;
            for (double x : w) nrm += x * x;
            nrm = std::sqrt(nrm);
            if (nrm < 1e-300) break;
            double diff = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double nv = w[static_cast<size_t>(i)] / nrm;
                diff += std::abs(nv - v[static_cast<size_t>(i)]);
                v[static_cast<size_t>(i)] = nv;
            }
            lambda = nrm;
            if (diff < 1e-14 && it > 30) break;
        }
        for (int64_t i = 0; i < n; ++i) vecs.at(i, k) = v[static_cast<size_t>(i)];
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j)
                work.at(i, j) -= lambda * v[static_cast<size_t>(i)] *
                                 v[static_cast<size_t>(j)];
    }
    return vecs;
}

}  // namespace

TEST_CASE("criterion 5: PCA subspace oracle and minimal reconstruction") {
    RngStream rng(401);
    double worst_gap = 0.0;
    bool minimal = true;
    for (int64_t dim : {3, 5, 8}) {
        const int64_t m = 64, d = 2;
        Tensor x({m, dim});
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < dim; ++c)
                x.at(r, c) =
                    rng.normal() * std::pow(1.8, static_cast<double>(dim - c));
        WaypointProjection proj = fit_pca(x, d, false);

        // sample covariance for the oracle
        Tensor mu({dim});
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < dim; ++c) mu[c] += x.at(r, c) / m;
        Tensor centered(x.shape());
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < dim; ++c)
                centered.at(r, c) = x.at(r, c) - mu[c];
        Tensor cov = matmul(transpose2d(centered), centered);
        for (auto& v : cov.vec()) v /= static_cast<double>(m - 1);

        Tensor uo = oracle_topd(cov, d);
        Tensor pa = matmul(proj.basis, transpose2d(proj.basis));
        Tensor pb = matmul(uo, transpose2d(uo));
        worst_gap = std::max(worst_gap, norm2(sub(pa, pb)));

        auto recon_err = [&](const Tensor& basis) {
            Tensor p = matmul(matmul(centered, basis), transpose2d(basis));
            return sumsq(sub(centered, p));
        };
        const double ours = recon_err(proj.basis);
        if (ours > recon_err(uo) * (1 + 1e-9)) minimal = false;
        RngStream rr(405);
        for (int trial = 0; trial < 10; ++trial) {
            Tensor rnd =
                transpose2d(linalg::random_orthonormal_rows(d, dim, rr));
            if (ours > recon_err(rnd) * (1 + 1e-9)) minimal = false;
        }
    }
    const bool pass = worst_gap < 1e-8 && minimal;
    report_criterion(5, pass,
                     "worst projector gap " + std::to_string(worst_gap) +
                         "; rank-d reconstruction minimal: " +
                         (minimal ? "yes" : "no"));
    CHECK(worst_gap < 1e-8);
    CHECK(minimal);
}

TEST_CASE("criterion 6: law of total variance on three fixed mixtures") {
    const auto t0 = std::chrono::steady_clock::now();
    struct Case {
        diag::MixtureSpec spec;
        double t;
        uint64_t seed;
    };
    std::vector<Case> cases;

    {  // two point masses with oracle tags
        diag::MixtureSpec s;
        s.components.push_back({0, {-1.0}, {-1.0}, 0.0, 0.5});
        s.components.push_back({1, {1.0}, {1.0}, 0.0, 0.5});
        cases.push_back({s, 0.5, 601});
    }
    {  // three 2-D components, two sharing a tag
        diag::MixtureSpec s;
        s.components.push_back({0, {0.0}, {-1.5, 0.5}, 0.3, 0.4});
        s.components.push_back({1, {0.0}, {-0.5, -1.0}, 0.5, 0.3});
        s.components.push_back({2, {1.0}, {1.5, 1.0}, 0.4, 0.3});
        cases.push_back({s, 0.4, 602});
    }
    {  // four 1-D components, uneven weights
        diag::MixtureSpec s;
        s.components.push_back({0, {0.0}, {-2.0}, 0.2, 0.1});
        s.components.push_back({1, {1.0}, {-0.5}, 0.6, 0.4});
        s.components.push_back({2, {2.0}, {0.8}, 0.3, 0.3});
        s.components.push_back({3, {3.0}, {2.2}, 0.5, 0.2});
        cases.push_back({s, 0.7, 603});
    }

    double worst_residual = 0.0;
    bool contraction = true;
    for (const Case& c : cases) {
        RngStream rng(c.seed);
        diag::VarianceReport rep =
            diag::variance_decomposition(c.spec, c.t, 10000, 2048, rng);
        worst_residual = std::max(worst_residual, rep.identity_residual);
        if (rep.e_oracle > rep.e_standard + 1e-9) contraction = false;
        CHECK(rep.identity_residual < 1e-3);
    }
    const double secs = seconds_since(t0);
    const bool pass = worst_residual < 1e-3 && contraction && secs < 60.0;
    report_criterion(6, pass,
                     "worst identity residual " +
                         std::to_string(worst_residual) +
                         "; contraction holds: " +
                         (contraction ? "yes" : "no") + "; " +
                         std::to_string(secs) + " s");
    CHECK(contraction);
    CHECK(secs < 60.0);
}

TEST_CASE("criterion 7: logit-normal time sampler moments") {
    RngStream rng(701);
    flow::TimeSamplerConfig cfg;  // mu -0.8 sigma 0.8
    const int n = 100000;
    double m = 0.0, m2 = 0.0;
    bool in_range = true;
    for (int i = 0; i < n; ++i) {
        const double t = flow::sample_time(cfg, rng);
        if (t <= 0.0 || t >= 1.0) in_range = false;
        const double logit = std::log(t / (1.0 - t));
        m += logit;
        m2 += logit * logit;
    }
    m /= n;
    const double sd = std::sqrt(m2 / n - m * m);
    const bool pass =
        std::abs(m + 0.8) < 0.02 && std::abs(sd - 0.8) < 0.02 && in_range;
    report_criterion(7, pass,
                     "mean(logit t) = " + std::to_string(m) +
                         ", std = " + std::to_string(sd) +
                         " (want -0.8 / 0.8 +- 0.02)");
    CHECK(std::abs(m + 0.8) < 0.02);
    CHECK(std::abs(sd - 0.8) < 0.02);
    CHECK(in_range);
}

namespace {

struct AccModels {
    WaypointGeneratorConfig wc;
    PixelGeneratorConfig pc;
    std::unique_ptr<WaypointGenerator> wp;
    std::unique_ptr<PixelGenerator> px;

    explicit AccModels(uint64_t seed, bool randomize) {
        wc.depth = 1;
        wc.hidden_dim = 16;
        wc.heads = 2;
        wc.patch_size = 8;
        wc.bottleneck = 8;
        wc.num_classes = 4;
        wc.image_size = 16;
        wc.waypoint_dim = 4;
        pc = PixelGeneratorConfig{};
        pc.depth = 1;
        pc.hidden_dim = 16;
        pc.heads = 2;
        pc.patch_size = 8;
        pc.bottleneck = 8;
        pc.num_classes = 4;
        pc.image_size = 16;
        pc.waypoint_dim = 4;
        wp = std::make_unique<WaypointGenerator>(wc, seed);
        px = std::make_unique<PixelGenerator>(pc, seed + 1);
        if (randomize) {
            RngStream rng(seed + 2);
            for (auto* s : {&wp->params(), &px->params()})
                for (auto& [name, t] : s->params())
                    for (auto& v : t.vec()) v += 0.02 * rng.normal();
        }
    }
    GeneratorBundle bundle() const { return {wp.get(), px.get()}; }
};

}  // namespace

TEST_CASE("criterion 8: classifier-free guidance contracts") {
    AccModels m(801, true);

    // w = 1 must be bit-identical to a sampler with guidance never firing
    SamplerConfig on;
    on.steps = 6;
    on.seed = 42;
    on.solver = Solver::heun;
    on.cfg_scale = 1.0;
    SampleResult with_cfg_path = sample(m.bundle(), 2, on);

    RngStream rng(on.seed);
    Tensor z = Tensor::randn({1, 16, 16, 3}, rng);
    kernels::scale(z.data(), flow::noise_scale(16), z.data(), z.numel());
    auto cond_only = [&](const Tensor& state, double t) {
        std::vector<double> tv = {t};
        std::vector<int> yv = {2};
        Tensor s = m.wp->predict(state, tv, yv);
        Tensor xh = m.px->predict(state, tv, yv, s);
        return flow::velocity_from_xpred(xh, state, t, on.clamp);
    };
    for (int64_t k = 0; k < on.steps; ++k) {
        const double t0 = static_cast<double>(k) / on.steps;
        const double t1 = static_cast<double>(k + 1) / on.steps;
        z = heun_step(z, t0, t1, cond_only);
    }
    const bool bit_identical =
        with_cfg_path.image.vec() == z.reshaped({16, 16, 3}).vec();

    // interval gate: outside [0.1, 1.0) guidance must not fire
    SamplerConfig gate;
    gate.cfg_scale = 3.0;
    RngStream r2(802);
    Tensor state = Tensor::randn({1, 16, 16, 3}, r2);
    VelocityEval below = guided_velocity(m.bundle(), state, 0.05, {1}, gate);
    VelocityEval inside = guided_velocity(m.bundle(), state, 0.5, {1}, gate);
    VelocityEval at_hi = guided_velocity(m.bundle(), state, 1.0, {1}, gate);
    const bool gate_ok = !below.v_uncond.has_value() &&
                         below.v.vec() == below.v_cond.vec() &&
                         inside.v_uncond.has_value() &&
                         !at_hi.v_uncond.has_value();

    const bool pass = bit_identical && gate_ok;
    report_criterion(8, pass,
                     std::string("w=1 bit-identical to guidance-free: ") +
                         (bit_identical ? "yes" : "no") +
                         "; interval gate honors [0.1, 1.0): " +
                         (gate_ok ? "yes" : "no"));
    CHECK(bit_identical);
    CHECK(gate_ok);
}

TEST_CASE("criterion 9: conflict metric contracts") {
    RngStream rng(901);
    Tensor v = Tensor::randn({12}, rng);
    const bool direct =
        diag::pairwise_conflict(v, v) == 0.0 &&
        std::abs(diag::pairwise_conflict(v, scale(v, -1.0)) - 1.0) < 1e-12 &&
        diag::cfg_rel_distance(v, v) == 0.0;

    AccModels zero(902, false);
    diag::ConflictConfig cc;
    cc.batches = 1;
    cc.batch_size = 4;
    cc.steps = 6;
    cc.seed = 903;
    diag::ConflictTrace trace = diag::trace_conflict(zero.bundle(), cc);
    bool zero_trace = true;
    for (const auto& p : trace.points)
        if (p.c_pair_mean != 0.0 || p.c_rel_mean != 0.0 || p.missing != 0)
            zero_trace = false;

    const bool pass = direct && zero_trace;
    report_criterion(9, pass,
                     std::string("metric endpoint values exact: ") +
                         (direct ? "yes" : "no") +
                         "; zero-init models trace identically zero: " +
                         (zero_trace ? "yes" : "no"));
    CHECK(direct);
    CHECK(zero_trace);
}
