#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wayflow/diagnostics.hpp"
#include "wayflow/image_io.hpp"
#include "wayflow/training.hpp"

using namespace wayflow;
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kDefaultExtractorSeed = 1234;

void echo_config_file(const std::string& target, ConfigMap& cfg,
                      bool target_is_dir) {
    const std::string path =
        target_is_dir ? (fs::path(target) / "config_used.cfg").string()
                      : target + ".cfg";
    std::ofstream out(path);
    out << cfg.serialize();
}

std::string summary_path_for(const std::string& csv_path) {
    fs::path p(csv_path);
    p.replace_extension(".summary.json");
    return p.string();
}

// ---- subcommand payloads ----

int run_make_toy_data(int64_t classes, int64_t size, int64_t per_class,
                      uint64_t seed, const std::string& out) {
    ToyDatasetSpec spec;
    spec.num_classes = classes;
    spec.image_size = size;
    spec.samples_per_class = per_class;
    spec.seed = seed;
    Dataset data = generate_toy_dataset(spec);
    write_dataset_folder(data, out);
    ConfigMap cfg;
    cfg.set_int("classes", classes);
    cfg.set_int("size", size);
    cfg.set_int("per_class", per_class);
    cfg.set("seed", std::to_string(seed));
    echo_config_file(out, cfg, true);
    std::printf("wrote %zu images across %lld classes to %s\n", data.size(),
                static_cast<long long>(classes), out.c_str());
    return 0;
}

int run_pca_fit(const std::string& data_dir, int64_t dim,
                const std::string& out, int64_t samples, int64_t image_size,
                int64_t patch, int64_t feature_dim, uint64_t ext_seed,
                bool no_norm) {
    FolderLoadResult loaded = load_image_folder(data_dir, image_size);
    for (const std::string& w : loaded.warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());

    ExtractorSpec ext_spec{patch, feature_dim, ext_seed};
    ToyFeatureExtractor ext(patch, feature_dim, ext_seed);

    const int64_t use = samples > 0
                            ? std::min<int64_t>(samples,
                                                static_cast<int64_t>(
                                                    loaded.dataset.size()))
                            : static_cast<int64_t>(loaded.dataset.size());
    const int64_t tokens = ext.features(loaded.dataset.images[0]).dim(0);
    Tensor feats({use * tokens, feature_dim});
    for (int64_t i = 0; i < use; ++i) {
        Tensor f = ext.features(loaded.dataset.images[static_cast<size_t>(i)]);
        std::copy(f.data(), f.data() + f.numel(),
                  feats.data() + i * f.numel());
    }
    WaypointProjection proj = fit_pca(feats, dim, !no_norm);
    if (proj.rank_deficient)
        std::fprintf(stderr,
                     "warning: feature covariance rank below %lld; trailing "
                     "directions are an arbitrary orthonormal completion\n",
                     static_cast<long long>(dim));
    write_checkpoint(out, make_projection_checkpoint(proj, ext_spec));

    ConfigMap cfg;
    cfg.set("data", data_dir);
    cfg.set_int("dim", dim);
    cfg.set_int("samples", use);
    cfg.set_int("image_size", image_size);
    cfg.set_int("patch", patch);
    cfg.set_int("feature_dim", feature_dim);
    cfg.set("ext_seed", std::to_string(ext_seed));
    cfg.set("waypoint_norm", no_norm ? "false" : "true");
    echo_config_file(out, cfg, false);
    std::printf("fitted %lld-dim projection on %lld images (%lld tokens)\n",
                static_cast<long long>(dim), static_cast<long long>(use),
                static_cast<long long>(use * tokens));
    return 0;
}

struct LogMirror {
    std::ofstream csv;
    int64_t every;

    LogMirror(const std::string& path, int64_t log_every) : every(log_every) {
        csv.open(path);
        csv << "step,epoch,loss,lr,grad_norm\n";
        csv.precision(17);
    }
    void operator()(const StepLog& log) {
        csv << log.step << "," << log.epoch << "," << log.loss << "," << log.lr
            << "," << log.grad_norm << "\n";
        if (every > 0 && log.step % every == 0)
            std::printf("step %6lld epoch %4lld loss %.6f lr %.2e gnorm %.3e\n",
                        static_cast<long long>(log.step),
                        static_cast<long long>(log.epoch), log.loss, log.lr,
                        log.grad_norm);
    }
};

int run_train_waypoints(const std::string& data_dir,
                        const std::string& proj_path,
                        const std::string& config_path,
                        const std::string& out) {
    ConfigMap cfg = config_path.empty() ? ConfigMap()
                                        : ConfigMap::parse_file(config_path);
    TrainConfig tc = train_config_from(cfg);
    tc.stage = TrainStage::waypoints;

    Checkpoint proj_ckpt = read_checkpoint(proj_path);
    ExtractorSpec ext_spec;
    WaypointProjection proj = projection_from_checkpoint(proj_ckpt, &ext_spec);
    ToyFeatureExtractor ext(ext_spec.patch, ext_spec.dim, ext_spec.seed);

    const int64_t image_size = cfg.get_int("image_size", 32);
    FolderLoadResult loaded = load_image_folder(data_dir, image_size);
    for (const std::string& w : loaded.warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());

    WaypointGeneratorConfig wc;
    wc.depth = cfg.get_int("wp_depth", 2);
    wc.hidden_dim = cfg.get_int("wp_hidden", 64);
    wc.heads = cfg.get_int("wp_heads", 4);
    wc.bottleneck = cfg.get_int("wp_bottleneck", 64);
    wc.patch_size = ext_spec.patch;
    wc.num_classes = loaded.dataset.num_classes;
    wc.image_size = image_size;
    wc.waypoint_dim = proj.dim();
    cfg.require_all_consumed();

    WaypointGenerator model(wc, mix_seed(tc.seed, 1));
    AdamState opt;
    EmaShadow ema = EmaShadow::init_from(model.params(), tc.ema_decay);

    ConfigMap echo;
    train_config_echo(tc, echo);
    echo.set("data", data_dir);
    echo.set("proj", proj_path);
    echo.set_int("image_size", image_size);
    echo.set_int("wp_depth", wc.depth);
    echo.set_int("wp_hidden", wc.hidden_dim);
    echo.set_int("wp_heads", wc.heads);
    echo.set_int("wp_bottleneck", wc.bottleneck);
    echo_config_file(out, echo, false);

    LogMirror mirror(out + ".log.csv", tc.log_every);
    TrainHooks hooks;
    hooks.on_step = [&](const StepLog& log) { mirror(log); };
    hooks.on_epoch_end = [&](int64_t) {
        write_checkpoint(out, make_waypoint_checkpoint(model, ema, opt, proj,
                                                       ext_spec,
                                                       echo.serialize()));
    };
    train_waypoints(model, opt, ema, loaded.dataset, ext, proj, tc, hooks);
    write_checkpoint(out, make_waypoint_checkpoint(model, ema, opt, proj,
                                                   ext_spec, echo.serialize()));
    std::printf("trained waypoint generator for %lld steps -> %s\n",
                static_cast<long long>(opt.step), out.c_str());
    return 0;
}

int run_train_pixel(const std::string& data_dir, const std::string& wp_path,
                    const std::string& config_path, const std::string& out,
                    bool no_waypoints) {
    ConfigMap cfg = config_path.empty() ? ConfigMap()
                                        : ConfigMap::parse_file(config_path);
    TrainConfig tc = train_config_from(cfg);
    tc.stage = TrainStage::pixel;

    std::unique_ptr<WaypointGenerator> frozen;
    if (!no_waypoints) {
        if (wp_path.empty())
            throw UsageError("train-pixel needs --waypoints or --no-waypoints");
        LoadedWaypointGenerator lw = load_waypoint_checkpoint(wp_path);
        // the frozen navigator runs on its averaged weights
        frozen = std::move(lw.model);
        overwrite_params(frozen->params(), lw.ema.shadow);
    }

    const int64_t image_size = cfg.get_int("image_size", 32);
    FolderLoadResult loaded = load_image_folder(data_dir, image_size);
    for (const std::string& w : loaded.warnings)
        std::fprintf(stderr, "warning: %s\n", w.c_str());

    PixelGeneratorConfig pc;
    pc.depth = cfg.get_int("px_depth", 4);
    pc.hidden_dim = cfg.get_int("px_hidden", 128);
    pc.heads = cfg.get_int("px_heads", 8);
    pc.bottleneck = cfg.get_int("px_bottleneck", 128);
    pc.injection =
        injection_from_name(cfg.get_string("px_injection", "adaln"));
    pc.image_size = image_size;
    pc.num_classes = loaded.dataset.num_classes;
    if (frozen) {
        pc.patch_size = frozen->config().patch_size;
        pc.waypoint_dim = frozen->config().waypoint_dim;
        if (frozen->config().num_classes != pc.num_classes)
            throw DataError("waypoint checkpoint class count (" +
                            std::to_string(frozen->config().num_classes) +
                            ") does not match the dataset (" +
                            std::to_string(pc.num_classes) + ")");
        // consume the keys so configs shared between runs stay valid
        cfg.get_int("px_patch", pc.patch_size);
        cfg.get_int("px_wp_dim", pc.waypoint_dim);
    } else {
        pc.patch_size = cfg.get_int("px_patch", 8);
        pc.waypoint_dim = cfg.get_int("px_wp_dim", 16);
    }
    cfg.require_all_consumed();

    PixelGenerator model(pc, mix_seed(tc.seed, 2));
    AdamState opt;
    EmaShadow ema = EmaShadow::init_from(model.params(), tc.ema_decay);

    ConfigMap echo;
    train_config_echo(tc, echo);
    echo.set("data", data_dir);
    echo.set("waypoints", no_waypoints ? "(disabled)" : wp_path);
    echo.set_int("image_size", image_size);
    echo.set_int("px_depth", pc.depth);
    echo.set_int("px_hidden", pc.hidden_dim);
    echo.set_int("px_heads", pc.heads);
    echo.set_int("px_bottleneck", pc.bottleneck);
    echo.set_int("px_patch", pc.patch_size);
    echo.set_int("px_wp_dim", pc.waypoint_dim);
    echo.set("px_injection", injection_name(pc.injection));
    echo_config_file(out, echo, false);

    LogMirror mirror(out + ".log.csv", tc.log_every);
    TrainHooks hooks;
    hooks.on_step = [&](const StepLog& log) { mirror(log); };
    hooks.on_epoch_end = [&](int64_t) {
        write_checkpoint(out, make_pixel_checkpoint(model, ema, opt,
                                                    frozen.get(),
                                                    echo.serialize()));
    };
    train_pixel(model, opt, ema, frozen.get(), loaded.dataset, tc, hooks);
    write_checkpoint(out, make_pixel_checkpoint(model, ema, opt, frozen.get(),
                                                echo.serialize()));
    std::printf("trained pixel generator for %lld steps -> %s\n",
                static_cast<long long>(opt.step), out.c_str());
    return 0;
}

int run_sample(const std::string& ckpt_path, int label, int64_t num,
               int64_t steps, const std::string& solver, double cfg_scale,
               const std::string& interval, uint64_t seed,
               const std::string& out_dir, const std::string& trace_path) {
    LoadedPixelGenerator loaded = load_pixel_checkpoint(ckpt_path);
    GeneratorBundle bundle = loaded.ema_bundle();

    SamplerConfig scfg;
    scfg.steps = steps;
    scfg.solver = solver_from_name(solver);
    scfg.cfg_scale = cfg_scale;
    const size_t comma = interval.find(',');
    if (comma == std::string::npos)
        throw UsageError("--cfg-interval expects 'lo,hi'");
    try {
        scfg.cfg_t_lo = std::stod(interval.substr(0, comma));
        scfg.cfg_t_hi = std::stod(interval.substr(comma + 1));
    } catch (const std::exception&) {
        throw UsageError("--cfg-interval expects numeric 'lo,hi'");
    }
    scfg.validate();

    fs::create_directories(out_dir);
    if (!trace_path.empty()) {
        std::ofstream trunc(trace_path, std::ios::trunc);  // fresh trace file
        if (!trunc) throw DataError("cannot open trace file: " + trace_path);
    }

    for (int64_t i = 0; i < num; ++i) {
        SamplerConfig per = scfg;
        per.seed = seed + static_cast<uint64_t>(i);
        SampleResult res = sample(bundle, label, per);
        char name[64];
        std::snprintf(name, sizeof(name), "sample_c%02d_%04lld.png", label,
                      static_cast<long long>(i));
        img::export_image(res.image, (fs::path(out_dir) / name).string());
        if (!trace_path.empty())
            append_trace_jsonl(res.trace, i, trace_path);
    }

    ConfigMap echo;
    echo.set("ckpt", ckpt_path);
    echo.set_int("class", label);
    echo.set_int("num", num);
    echo.set_int("steps", steps);
    echo.set("solver", solver);
    echo.set_double("cfg_scale", cfg_scale);
    echo.set("cfg_interval", interval);
    echo.set("seed", std::to_string(seed));
    echo_config_file(out_dir, echo, true);
    std::printf("wrote %lld samples of class %d to %s\n",
                static_cast<long long>(num), label, out_dir.c_str());
    return 0;
}

int run_diagnose_conflict(const std::string& ckpt_a, const std::string& ckpt_b,
                          int64_t stride, const std::string& out,
                          int64_t batches, int64_t batch_size, int64_t steps,
                          uint64_t seed, int label) {
    diag::ConflictConfig cfg;
    cfg.stride = stride;
    cfg.batches = batches;
    cfg.batch_size = batch_size;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.label = label;

    LoadedPixelGenerator a = load_pixel_checkpoint(ckpt_a);
    diag::ConflictTrace trace_a = diag::trace_conflict(a.ema_bundle(), cfg);
    diag::write_conflict_csv(trace_a, out);

    std::unique_ptr<diag::ConflictTrace> trace_b;
    if (!ckpt_b.empty()) {
        LoadedPixelGenerator b = load_pixel_checkpoint(ckpt_b);
        trace_b = std::make_unique<diag::ConflictTrace>(
            diag::trace_conflict(b.ema_bundle(), cfg));
        diag::write_conflict_csv(*trace_b, out + ".b.csv");
    }
    diag::write_conflict_summary_json(trace_a, trace_b.get(),
                                      summary_path_for(out));

    ConfigMap echo;
    echo.set("ckpt", ckpt_a);
    if (!ckpt_b.empty()) echo.set("ckpt_b", ckpt_b);
    echo.set_int("stride", stride);
    echo.set_int("batches", batches);
    echo.set_int("batch_size", batch_size);
    echo.set_int("steps", steps);
    echo.set("seed", std::to_string(seed));
    echo.set_int("label", label);
    echo_config_file(out, echo, false);

    const diag::ConflictSummary s = trace_a.summary();
    std::printf("midpoint c_pair %.6e c_rel %.6e | peak c_pair %.6e\n",
                s.c_pair_midpoint, s.c_rel_midpoint, s.c_pair_peak);
    return 0;
}

int run_diagnose_variance(const std::string& mixture_path, double t,
                          const std::string& out, int64_t num_z, int64_t num_x,
                          uint64_t seed) {
    std::ifstream in(mixture_path);
    if (!in) throw DataError("cannot open mixture spec: " + mixture_path);
    std::stringstream ss;
    ss << in.rdbuf();
    diag::MixtureSpec spec = diag::mixture_from_json(ss.str());
    RngStream rng(seed);
    diag::VarianceReport rep =
        diag::variance_decomposition(spec, t, num_z, num_x, rng);
    std::ofstream os(out);
    if (!os) throw DataError("cannot open output: " + out);
    os << diag::variance_report_json(rep) << "\n";

    ConfigMap echo;
    echo.set("mixture", mixture_path);
    echo.set_double("t", t);
    echo.set_int("num_z", num_z);
    echo.set_int("num_x", num_x);
    echo.set("seed", std::to_string(seed));
    echo_config_file(out, echo, false);
    std::printf("identity residual %.3e (oracle %.6f <= standard %.6f)\n",
                rep.identity_residual, rep.e_oracle, rep.e_standard);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"waypoint-conditioned pixel-space flow matching"};
    app.require_subcommand(1);

    auto* mk = app.add_subcommand("make-toy-data",
                                  "generate the synthetic class dataset");
    int64_t mk_classes = 4, mk_size = 32, mk_per = 128;
    uint64_t mk_seed = 0;
    std::string mk_out;
    mk->add_option("--classes", mk_classes, "number of classes");
    mk->add_option("--size", mk_size, "image side length");
    mk->add_option("--per-class", mk_per, "samples per class");
    mk->add_option("--seed", mk_seed, "dataset seed");
    mk->add_option("--out", mk_out, "output directory")->required();

    auto* pf = app.add_subcommand("pca-fit",
                                  "fit the waypoint projection on a dataset");
    std::string pf_data, pf_out;
    int64_t pf_dim = 64, pf_samples = 0, pf_size = 32, pf_patch = 8,
            pf_fdim = 128;
    uint64_t pf_ext_seed = kDefaultExtractorSeed;
    bool pf_no_norm = false;
    pf->add_option("--data", pf_data, "dataset folder")->required();
    pf->add_option("--dim", pf_dim, "number of principal components");
    pf->add_option("--out", pf_out, "projection output path")->required();
    pf->add_option("--samples", pf_samples, "max images to fit on (0 = all)");
    pf->add_option("--size", pf_size, "image side length");
    pf->add_option("--patch", pf_patch, "extractor patch size");
    pf->add_option("--feature-dim", pf_fdim, "frozen feature dimension");
    pf->add_option("--ext-seed", pf_ext_seed, "frozen extractor seed");
    pf->add_flag("--no-waypoint-norm", pf_no_norm,
                 "disable per-dimension waypoint normalization");

    auto* tw = app.add_subcommand("train-waypoints",
                                  "stage 1: train the waypoint generator");
    std::string tw_data, tw_proj, tw_config, tw_out;
    tw->add_option("--data", tw_data, "dataset folder")->required();
    tw->add_option("--proj", tw_proj, "fitted projection path")->required();
    tw->add_option("--config", tw_config, "training config file");
    tw->add_option("--out", tw_out, "checkpoint output path")->required();

    auto* tp = app.add_subcommand("train-pixel",
                                  "stage 2: train the pixel generator");
    std::string tp_data, tp_wp, tp_config, tp_out;
    bool tp_no_wp = false;
    tp->add_option("--data", tp_data, "dataset folder")->required();
    tp->add_option("--waypoints", tp_wp, "stage-1 checkpoint");
    tp->add_option("--config", tp_config, "training config file");
    tp->add_option("--out", tp_out, "checkpoint output path")->required();
    tp->add_flag("--no-waypoints", tp_no_wp,
                 "train the plain baseline with zero waypoints");

    auto* sm = app.add_subcommand("sample", "integrate the sampling ODE");
    std::string sm_ckpt, sm_out, sm_solver = "heun", sm_interval = "0.1,1.0",
                sm_trace;
    int sm_class = 0;
    int64_t sm_num = 1, sm_steps = 50;
    double sm_cfg = 1.0;
    uint64_t sm_seed = 0;
    sm->add_option("--ckpt", sm_ckpt, "pixel-generator checkpoint")->required();
    sm->add_option("--class", sm_class, "target class label")->required();
    sm->add_option("--num", sm_num, "number of samples");
    sm->add_option("--steps", sm_steps, "ODE steps");
    sm->add_option("--solver", sm_solver, "euler|heun");
    sm->add_option("--cfg-scale", sm_cfg, "guidance scale (1 = off)");
    sm->add_option("--cfg-interval", sm_interval, "guidance interval lo,hi");
    sm->add_option("--seed", sm_seed, "base seed (sample i uses seed+i)");
    sm->add_option("--out", sm_out, "output directory")->required();
    sm->add_option("--trace", sm_trace, "JSONL trajectory trace path");

    auto* dc = app.add_subcommand("diagnose-conflict",
                                  "trajectory-conflict trace and summary");
    std::string dc_ckpt, dc_ckpt_b, dc_out;
    int64_t dc_stride = -1, dc_batches = 4, dc_batch_size = 32, dc_steps = 50;
    uint64_t dc_seed = 0;
    int dc_label = -1;
    dc->add_option("--ckpt", dc_ckpt, "pixel-generator checkpoint")->required();
    dc->add_option("--ckpt-b", dc_ckpt_b, "second checkpoint for ratios");
    dc->add_option("--stride", dc_stride,
                   "counterfactual label offset (-1 = classes/2)");
    dc->add_option("--out", dc_out, "CSV output path")->required();
    dc->add_option("--batches", dc_batches, "number of batches");
    dc->add_option("--batch-size", dc_batch_size, "samples per batch");
    dc->add_option("--steps", dc_steps, "ODE steps");
    dc->add_option("--seed", dc_seed, "noise seed");
    dc->add_option("--label", dc_label,
                   "fixed conditional label (-1 cycles classes)");

    auto* dv = app.add_subcommand("diagnose-variance",
                                  "total-variance decomposition report");
    std::string dv_mix, dv_out;
    double dv_t = 0.5;
    int64_t dv_num_z = 10000, dv_num_x = 2048;
    uint64_t dv_seed = 0;
    dv->add_option("--mixture", dv_mix, "mixture spec JSON")->required();
    dv->add_option("--t", dv_t, "interpolation time in [0, 1)");
    dv->add_option("--out", dv_out, "JSON report path")->required();
    dv->add_option("--num-z", dv_num_z, "Monte-Carlo state draws");
    dv->add_option("--num-x", dv_num_x, "posterior draws per state");
    dv->add_option("--seed", dv_seed, "Monte-Carlo seed");

    try {
        app.parse(argc, argv);
        if (mk->parsed())
            return run_make_toy_data(mk_classes, mk_size, mk_per, mk_seed,
                                     mk_out);
        if (pf->parsed())
            return run_pca_fit(pf_data, pf_dim, pf_out, pf_samples, pf_size,
                               pf_patch, pf_fdim, pf_ext_seed, pf_no_norm);
        if (tw->parsed())
            return run_train_waypoints(tw_data, tw_proj, tw_config, tw_out);
        if (tp->parsed())
            return run_train_pixel(tp_data, tp_wp, tp_config, tp_out,
                                   tp_no_wp);
        if (sm->parsed())
            return run_sample(sm_ckpt, sm_class, sm_num, sm_steps, sm_solver,
                              sm_cfg, sm_interval, sm_seed, sm_out, sm_trace);
        if (dc->parsed())
            return run_diagnose_conflict(dc_ckpt, dc_ckpt_b, dc_stride, dc_out,
                                         dc_batches, dc_batch_size, dc_steps,
                                         dc_seed, dc_label);
        if (dv->parsed())
            return run_diagnose_variance(dv_mix, dv_t, dv_out, dv_num_z,
                                         dv_num_x, dv_seed);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const ValueError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
