#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wayflow/kernels.hpp"
#include "wayflow/sampler.hpp"

using namespace wayflow;

namespace {

struct ToyModels {
    WaypointGeneratorConfig wcfg;
    PixelGeneratorConfig pcfg;
    std::unique_ptr<WaypointGenerator> wp;
    std::unique_ptr<PixelGenerator> px;

    GeneratorBundle bundle() const { return {wp.get(), px.get()}; }
};

ToyModels make_models(uint64_t seed, bool randomize_weights = false) {
    ToyModels m;
    m.wcfg.depth = 1;
    m.wcfg.hidden_dim = 16;
    m.wcfg.heads = 2;
    m.wcfg.patch_size = 8;
    m.wcfg.bottleneck = 8;
    m.wcfg.num_classes = 3;
    m.wcfg.image_size = 16;
    m.wcfg.waypoint_dim = 4;
    m.pcfg.depth = 1;
    m.pcfg.hidden_dim = 16;
    m.pcfg.heads = 2;
    m.pcfg.patch_size = 8;
    m.pcfg.bottleneck = 8;
    m.pcfg.num_classes = 3;
    m.pcfg.image_size = 16;
    m.pcfg.waypoint_dim = 4;
    m.wp = std::make_unique<WaypointGenerator>(m.wcfg, seed);
    m.px = std::make_unique<PixelGenerator>(m.pcfg, seed + 1);
    if (randomize_weights) {
        RngStream rng(seed + 2);
        for (auto* store : {&m.wp->params(), &m.px->params()})
            for (auto& [name, p] : store->params())
                for (auto& v : p.vec()) v += 0.02 * rng.normal();
    }
    return m;
}

}  // namespace

TEST_CASE("cfg_combine: exact affine combination") {
    RngStream rng(1);
    Tensor u = Tensor::randn({5}, rng), c = Tensor::randn({5}, rng);
    CHECK(cfg_combine(u, c, 1.0).vec() == c.vec());
    CHECK(cfg_combine(u, c, 0.0).vec() == u.vec());
    Tensor z = Tensor::zeros({5});
    Tensor two = cfg_combine(z, c, 2.0);
    for (int64_t i = 0; i < 5; ++i)
        CHECK(two[i] == doctest::Approx(2.0 * c[i]).epsilon(1e-15));
    CHECK_THROWS_AS(cfg_combine(u, Tensor::zeros({3}), 1.0), ShapeError);
}

TEST_CASE("euler_step basics") {
    Tensor z({1}, {0.0});
    CHECK(euler_step(z, 0.0, 0.02, Tensor({1}, {1.0}))[0] ==
          doctest::Approx(0.02).epsilon(1e-15));
    RngStream rng(2);
    Tensor z2 = Tensor::randn({4}, rng);
    Tensor v0 = Tensor::zeros({4});
    CHECK(euler_step(z2, 0.1, 0.2, v0).vec() == z2.vec());
    // two half-steps with constant v equal one full step
    Tensor v = Tensor::randn({4}, rng);
    Tensor half = euler_step(euler_step(z2, 0.0, 0.5, v), 0.5, 1.0, v);
    Tensor full = euler_step(z2, 0.0, 1.0, v);
    for (int64_t i = 0; i < 4; ++i)
        CHECK(half[i] == doctest::Approx(full[i]).epsilon(1e-14));
}

TEST_CASE("heun_step: trapezoidal expansion and constant-field reduction") {
    // dz/dt = z from z=1: one step of size h gives 1 + h + h^2/2
    auto field = [](const Tensor& z, double) { return z; };
    const double h = 0.25;
    Tensor z({1}, {1.0});
    Tensor out = heun_step(z, 0.0, h, field);
    CHECK(out[0] == doctest::Approx(1.0 + h + h * h / 2).epsilon(1e-14));

    // constant field: heun == euler
    RngStream rng(3);
    Tensor c = Tensor::randn({4}, rng);
    auto const_field = [&](const Tensor&, double) { return c; };
    Tensor z2 = Tensor::randn({4}, rng);
    Tensor he = heun_step(z2, 0.2, 0.5, const_field);
    Tensor eu = euler_step(z2, 0.2, 0.5, c);
    CHECK(he.vec() == eu.vec());
}

TEST_CASE("solver order: heun error shrinks 4x, euler 2x when steps double") {
    auto field = [](const Tensor& z, double) { return z; };
    auto integrate = [&](Solver s, int64_t steps) {
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
    const double h25 = std::abs(integrate(Solver::heun, 25) - exact);
    const double h50 = std::abs(integrate(Solver::heun, 50) - exact);
    const double e25 = std::abs(integrate(Solver::euler, 25) - exact);
    const double e50 = std::abs(integrate(Solver::euler, 50) - exact);
    CHECK(h25 / h50 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(e25 / e50 == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("guided_velocity: w=1 takes the conditional-only path") {
    ToyModels m = make_models(10, true);
    RngStream rng(4);
    Tensor z = Tensor::randn({1, 16, 16, 3}, rng);
    SamplerConfig cfg;
    cfg.cfg_scale = 1.0;
    VelocityEval ev = guided_velocity(m.bundle(), z, 0.5, {1}, cfg);
    CHECK_FALSE(ev.v_uncond.has_value());
    CHECK(ev.v.vec() == ev.v_cond.vec());
}

TEST_CASE("guided_velocity: interval gate forces conditional output") {
    ToyModels m = make_models(11, true);
    RngStream rng(5);
    Tensor z = Tensor::randn({1, 16, 16, 3}, rng);
    SamplerConfig cfg;
    cfg.cfg_scale = 3.0;
    cfg.cfg_t_lo = 0.1;
    cfg.cfg_t_hi = 1.0;
    // below the interval: no guidance
    VelocityEval below = guided_velocity(m.bundle(), z, 0.05, {1}, cfg);
    CHECK_FALSE(below.v_uncond.has_value());
    CHECK(below.v.vec() == below.v_cond.vec());
    // inside: guidance fires and the output is the affine combination
    VelocityEval inside = guided_velocity(m.bundle(), z, 0.5, {1}, cfg);
    CHECK(inside.v_uncond.has_value());
    Tensor expect = cfg_combine(*inside.v_uncond, inside.v_cond, 3.0);
    CHECK(inside.v.vec() == expect.vec());
    // t_hi is exclusive
    VelocityEval edge = guided_velocity(m.bundle(), z, 1.0, {1}, cfg);
    CHECK_FALSE(edge.v_uncond.has_value());
}

TEST_CASE("zero-init models: velocity is -z / clamped(1 - t)") {
    ToyModels m = make_models(12, false);  // zero heads -> x_hat = 0, s_hat = 0
    RngStream rng(6);
    Tensor z = Tensor::randn({1, 16, 16, 3}, rng);
    SamplerConfig cfg;
    for (double t : {0.0, 0.5, 0.99}) {
        VelocityEval ev = guided_velocity(m.bundle(), z, t, {0}, cfg);
        const double denom = flow::clamped_denom(t, cfg.clamp);
        for (int64_t i = 0; i < z.numel(); ++i)
            CHECK(ev.v[i] == doctest::Approx(-z[i] / denom).epsilon(1e-12));
        CHECK(sumsq(ev.s_hat) == 0.0);
    }
}

TEST_CASE("sample: identical seeds give bit-identical outputs and traces") {
    ToyModels m = make_models(13, true);
    SamplerConfig cfg;
    cfg.steps = 5;
    cfg.seed = 42;
    cfg.solver = Solver::heun;
    cfg.cfg_scale = 2.0;
    SampleResult a = sample(m.bundle(), 1, cfg);
    SampleResult b = sample(m.bundle(), 1, cfg);
    CHECK(a.image.vec() == b.image.vec());
    REQUIRE(a.trace.steps.size() == 5);
    for (size_t k = 0; k < 5; ++k)
        CHECK(a.trace.steps[k].z.vec() == b.trace.steps[k].z.vec());
    // t grid is linear
    for (size_t k = 0; k < 5; ++k)
        CHECK(a.trace.steps[k].t == doctest::Approx(k / 5.0).epsilon(1e-15));
}

TEST_CASE("sample: K=1 Euler with zero-init models lands exactly at zero") {
    ToyModels m = make_models(14, false);
    SamplerConfig cfg;
    cfg.steps = 1;
    cfg.solver = Solver::euler;
    cfg.seed = 7;
    SampleResult r = sample(m.bundle(), 0, cfg);
    // z1 = z0 + 1 * (-z0 / 1) = 0
    for (int64_t i = 0; i < r.image.numel(); ++i) CHECK(r.image[i] == 0.0);
}

TEST_CASE("CFG no-op: w=1 equals conditional-only integration bit for bit") {
    ToyModels m = make_models(15, true);
    SamplerConfig cfg;
    cfg.steps = 4;
    cfg.seed = 99;
    cfg.solver = Solver::heun;
    cfg.cfg_scale = 1.0;
    SampleResult viacfg = sample(m.bundle(), 2, cfg);

    // hand integration that never touches the guidance machinery
    RngStream rng(cfg.seed);
    const int64_t size = 16;
    Tensor z = Tensor::randn({1, size, size, 3}, rng);
    kernels::scale(z.data(), flow::noise_scale(size), z.data(), z.numel());
    GeneratorBundle b = m.bundle();
    auto vel = [&](const Tensor& state, double t) {
        std::vector<double> tv = {t};
        std::vector<int> yv = {2};
        Tensor s = b.waypoints->predict(state, tv, yv);
        Tensor xh = b.pixel->predict(state, tv, yv, s);
        return flow::velocity_from_xpred(xh, state, t, cfg.clamp);
    };
    for (int64_t k = 0; k < cfg.steps; ++k) {
        const double t0 = static_cast<double>(k) / cfg.steps;
        const double t1 = static_cast<double>(k + 1) / cfg.steps;
        z = heun_step(z, t0, t1, vel);
    }
    CHECK(viacfg.image.vec() == z.reshaped({size, size, 3}).vec());
}

TEST_CASE("baseline bundle (no waypoint model) runs with zero waypoints") {
    ToyModels m = make_models(16, true);
    GeneratorBundle b{nullptr, m.px.get()};
    SamplerConfig cfg;
    cfg.steps = 2;
    cfg.seed = 3;
    SampleResult r = sample(b, 1, cfg);
    CHECK(r.image.all_finite());
    CHECK(sumsq(r.trace.steps[0].s_hat) == 0.0);
}

TEST_CASE("sampling aborts with step index when the state diverges") {
    ToyModels m = make_models(17, false);
    // poison the readout bias so x_hat explodes immediately
    m.px->params().get("head.out.b").fill(INFINITY);
    SamplerConfig cfg;
    cfg.steps = 3;
    cfg.seed = 8;
    cfg.solver = Solver::euler;
    try {
        sample(m.bundle(), 0, cfg);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("sampler config validation") {
    SamplerConfig cfg;
    cfg.steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    cfg = SamplerConfig{};
    cfg.cfg_t_lo = 0.9;
    cfg.cfg_t_hi = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ValueError);
    CHECK_THROWS_AS(solver_from_name("rk4"), ValueError);
    CHECK(solver_from_name("euler") == Solver::euler);
    CHECK(solver_from_name("heun") == Solver::heun);
}
