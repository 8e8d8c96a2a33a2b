#include "wayflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "wayflow/kernels.hpp"

namespace wayflow::diag {

namespace {
constexpr double kZeroNorm = 1e-12;
}

double pairwise_conflict(const Tensor& v_cond, const Tensor& v_alt) {
    require_same_shape(v_cond, v_alt, "pairwise_conflict");
    const double na = norm2(v_cond), nb = norm2(v_alt);
    if (na < kZeroNorm || nb < kZeroNorm)
        throw MetricUndefined("pairwise conflict undefined for zero velocity");
    if (v_cond.vec() == v_alt.vec()) return 0.0;  // exact for equal fields
    const double cosine = dot_flat(v_cond, v_alt) / (na * nb);
    const double clipped = std::min(1.0, std::max(-1.0, cosine));
    return 0.5 * (1.0 - clipped);
}

double cfg_rel_distance(const Tensor& v_cond, const Tensor& v_uncond) {
    require_same_shape(v_cond, v_uncond, "cfg_rel_distance");
    const double nc = norm2(v_cond);
    if (nc < kZeroNorm)
        throw MetricUndefined(
            "relative guidance distance undefined for zero conditional "
            "velocity");
    return norm2(sub(v_cond, v_uncond)) / nc;
}

ConflictSummary ConflictTrace::summary() const {
    if (points.empty()) throw StateError("conflict trace is empty");
    ConflictSummary s;
    size_t mid = 0;
    double best = 1e300;
    for (size_t i = 0; i < points.size(); ++i) {
        const double gap = std::abs(points[i].t - 0.5);
        if (gap < best) {
            best = gap;
            mid = i;
        }
        if (points[i].c_pair_mean >= s.c_pair_peak) {
            // ties keep the later step; peaks typically sit near t -> 1
            s.c_pair_peak = points[i].c_pair_mean;
            s.c_pair_peak_t = points[i].t;
        }
        s.c_rel_peak = std::max(s.c_rel_peak, points[i].c_rel_mean);
    }
    s.midpoint_t = points[mid].t;
    s.c_pair_midpoint = points[mid].c_pair_mean;
    s.c_rel_midpoint = points[mid].c_rel_mean;
    return s;
}

namespace {

struct Welford {
    int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void push(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double stddev() const {
        return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0;
    }
};

Tensor slice_sample(const Tensor& batch, int64_t index, int64_t block) {
    Tensor out({block});
    std::copy(batch.data() + index * block, batch.data() + (index + 1) * block,
              out.data());
    return out;
}

}  // namespace

ConflictTrace trace_conflict(const GeneratorBundle& models,
                             const ConflictConfig& cfg) {
    if (models.pixel == nullptr) throw StateError("trace_conflict: no model");
    const int64_t classes = models.num_classes();
    if (classes < 2)
        throw ValueError("trace_conflict: need at least 2 classes");
    if (cfg.batches < 1 || cfg.batch_size < 1 || cfg.steps < 1)
        throw ValueError("trace_conflict: bad batch/step configuration");
    const int64_t stride = cfg.stride < 0 ? classes / 2 : cfg.stride;
    const int64_t size = models.image_size();
    const int64_t block = size * size * 3;

    SamplerConfig vel_cfg;
    vel_cfg.clamp = cfg.clamp;
    vel_cfg.cfg_scale = 1.0;  // the trajectory itself is purely conditional

    std::vector<Welford> pair_acc(static_cast<size_t>(cfg.steps));
    std::vector<Welford> rel_acc(static_cast<size_t>(cfg.steps));
    std::vector<int64_t> missing(static_cast<size_t>(cfg.steps), 0);

    RngStream root(cfg.seed);
    for (int64_t batch = 0; batch < cfg.batches; ++batch) {
        RngStream rng = root.fork(0x7261 + static_cast<uint64_t>(batch));
        const int64_t bs = cfg.batch_size;
        Tensor z({bs, size, size, 3});
        for (auto& v : z.vec()) v = rng.normal();
        kernels::scale(z.data(),
                       cfg.noise_scale_coeff * flow::noise_scale(size),
                       z.data(), z.numel());

        std::vector<int> y(static_cast<size_t>(bs));
        std::vector<int> y_alt(static_cast<size_t>(bs));
        std::vector<int> y_null(static_cast<size_t>(bs), flow::kNullClass);
        for (int64_t i = 0; i < bs; ++i) {
            const int yi =
                cfg.label >= 0
                    ? cfg.label
                    : static_cast<int>((batch * bs + i) % classes);
            y[static_cast<size_t>(i)] = yi;
            y_alt[static_cast<size_t>(i)] =
                static_cast<int>((yi + stride) % classes);
        }

        for (int64_t k = 0; k < cfg.steps; ++k) {
            const double t_k =
                static_cast<double>(k) / static_cast<double>(cfg.steps);
            const double t_k1 =
                static_cast<double>(k + 1) / static_cast<double>(cfg.steps);

            const VelocityEval cond =
                guided_velocity(models, z, t_k, y, vel_cfg);
            const VelocityEval alt =
                guided_velocity(models, z, t_k, y_alt, vel_cfg);
            const VelocityEval uncond =
                guided_velocity(models, z, t_k, y_null, vel_cfg);

            for (int64_t i = 0; i < bs; ++i) {
                const Tensor vc = slice_sample(cond.v_cond, i, block);
                const Tensor va = slice_sample(alt.v_cond, i, block);
                const Tensor vu = slice_sample(uncond.v_cond, i, block);
                try {
                    const double cp = pairwise_conflict(vc, va);
                    const double cr = cfg_rel_distance(vc, vu);
                    pair_acc[static_cast<size_t>(k)].push(cp);
                    rel_acc[static_cast<size_t>(k)].push(cr);
                } catch (const MetricUndefined&) {
                    ++missing[static_cast<size_t>(k)];
                }
            }

            if (cfg.solver == Solver::euler) {
                z = euler_step(z, t_k, t_k1, cond.v);
            } else {
                Tensor predictor = euler_step(z, t_k, t_k1, cond.v);
                const VelocityEval corr =
                    guided_velocity(models, predictor, t_k1, y, vel_cfg);
                Tensor vsum = add(cond.v, corr.v);
                kernels::axpy(0.5 * (t_k1 - t_k), vsum.data(), z.data(),
                              z.numel());
            }
            if (!z.all_finite())
                throw NumericError("conflict trace diverged at step " +
                                   std::to_string(k));
        }
    }

    ConflictTrace trace;
    trace.points.resize(static_cast<size_t>(cfg.steps));
    for (int64_t k = 0; k < cfg.steps; ++k) {
        ConflictPoint& p = trace.points[static_cast<size_t>(k)];
        p.step = k;
        p.t = static_cast<double>(k) / static_cast<double>(cfg.steps);
        p.c_pair_mean = pair_acc[static_cast<size_t>(k)].mean;
        p.c_pair_std = pair_acc[static_cast<size_t>(k)].stddev();
        p.c_rel_mean = rel_acc[static_cast<size_t>(k)].mean;
        p.c_rel_std = rel_acc[static_cast<size_t>(k)].stddev();
        p.samples = pair_acc[static_cast<size_t>(k)].n;
        p.missing = missing[static_cast<size_t>(k)];
    }
    return trace;
}

void write_conflict_csv(const ConflictTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open csv output: " + path);
    out << "step,t,c_pair_mean,c_pair_std,c_rel_mean,c_rel_std\n";
    out.precision(12);
    for (const ConflictPoint& p : trace.points)
        out << p.step << "," << p.t << "," << p.c_pair_mean << ","
            << p.c_pair_std << "," << p.c_rel_mean << "," << p.c_rel_std
            << "\n";
}

namespace {

nlohmann::json summary_json(const ConflictSummary& s) {
    return {{"midpoint_t", s.midpoint_t},
            {"c_pair_midpoint", s.c_pair_midpoint},
            {"c_rel_midpoint", s.c_rel_midpoint},
            {"c_pair_peak", s.c_pair_peak},
            {"c_pair_peak_t", s.c_pair_peak_t},
            {"c_rel_peak", s.c_rel_peak}};
}

}  // namespace

void write_conflict_summary_json(const ConflictTrace& trace,
                                 const ConflictTrace* other,
                                 const std::string& path) {
    nlohmann::json j;
    const ConflictSummary a = trace.summary();
    j["trace"] = summary_json(a);
    if (other != nullptr) {
        const ConflictSummary b = other->summary();
        j["trace_b"] = summary_json(b);
        auto ratio = [](double x, double y) {
            return y != 0.0 ? x / y : 0.0;
        };
        j["ratio_a_over_b"] = {
            {"c_pair_midpoint", ratio(a.c_pair_midpoint, b.c_pair_midpoint)},
            {"c_pair_peak", ratio(a.c_pair_peak, b.c_pair_peak)},
            {"c_rel_midpoint", ratio(a.c_rel_midpoint, b.c_rel_midpoint)}};
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open summary output: " + path);
    out << j.dump(2) << "\n";
}

void MixtureSpec::validate() const {
    if (components.empty())
        throw ValueError("mixture: need at least one component");
    const size_t n = components.front().mean.size();
    double wsum = 0.0;
    for (const MixtureComponent& c : components) {
        if (c.mean.size() != n)
            throw ValueError("mixture: inconsistent mean dimensions");
        if (c.weight <= 0.0) throw ValueError("mixture: weights must be > 0");
        if (c.std_dev < 0.0) throw ValueError("mixture: std must be >= 0");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw ValueError("mixture: weights must sum to 1");
}

int64_t MixtureSpec::dim() const {
    return components.empty()
               ? 0
               : static_cast<int64_t>(components.front().mean.size());
}

MixtureSpec mixture_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("mixture spec: invalid json: ") + e.what());
    }
    MixtureSpec spec;
    if (!j.contains("components") || !j["components"].is_array())
        throw DataError("mixture spec: missing components array");
    for (const auto& c : j["components"]) {
        MixtureComponent mc;
        mc.label = c.value("label", 0);
        if (c.contains("s0")) {
            if (c["s0"].is_number())
                mc.s0 = {c["s0"].get<double>()};
            else
                mc.s0 = c["s0"].get<std::vector<double>>();
        }
        if (c["mean"].is_number())
            mc.mean = {c["mean"].get<double>()};
        else
            mc.mean = c["mean"].get<std::vector<double>>();
        mc.std_dev = c.value("std", 0.0);
        mc.weight = c.value("weight", 0.0);
        spec.components.push_back(std::move(mc));
    }
    spec.validate();
    return spec;
}

std::string mixture_to_json(const MixtureSpec& spec) {
    nlohmann::json comps = nlohmann::json::array();
    for (const MixtureComponent& c : spec.components)
        comps.push_back({{"label", c.label},
                         {"s0", c.s0},
                         {"mean", c.mean},
                         {"std", c.std_dev},
                         {"weight", c.weight}});
    return nlohmann::json{{"components", comps}}.dump(2);
}

VarianceReport variance_decomposition(const MixtureSpec& spec, double t,
                                      int64_t num_z, int64_t num_x_per_z,
                                      RngStream& rng) {
    spec.validate();
    if (t < 0.0 || t >= 1.0)
        throw ValueError("variance_decomposition: t must lie in [0, 1)");
    if (num_z < 1 || num_x_per_z < 2)
        throw ValueError("variance_decomposition: need num_z >= 1 and "
                         "num_x_per_z >= 2");

    const int64_t n = spec.dim();
    const size_t J = spec.components.size();

    // group components by identical s0 tag
    std::map<std::vector<double>, size_t> group_of;
    std::vector<std::vector<size_t>> groups;
    for (size_t j = 0; j < J; ++j) {
        auto [it, fresh] = group_of.emplace(spec.components[j].s0,
                                            groups.size());
        if (fresh) groups.emplace_back();
        groups[it->second].push_back(j);
    }

    // per-component posterior constants at time t
    std::vector<double> s2(J), cond_var(J), gain(J), logw(J);
    for (size_t j = 0; j < J; ++j) {
        const double sd = spec.components[j].std_dev;
        s2[j] = t * t * sd * sd + (1.0 - t) * (1.0 - t);
        cond_var[j] = sd * sd * (1.0 - t) * (1.0 - t) / s2[j];
        gain[j] = t * sd * sd / s2[j];
        logw[j] = std::log(spec.components[j].weight) -
                  0.5 * static_cast<double>(n) *
                      std::log(6.283185307179586 * s2[j]);
    }

    std::vector<double> z(static_cast<size_t>(n));
    std::vector<double> post(J);
    std::vector<std::vector<double>> mu_c(J,
                                          std::vector<double>(static_cast<size_t>(n)));
    double acc_standard = 0.0, acc_oracle = 0.0, acc_cross = 0.0,
           acc_mc = 0.0;

    for (int64_t draw = 0; draw < num_z; ++draw) {
        // z_t = t x + (1 - t) eps with x from the mixture
        double u = rng.uniform();
        size_t pick = 0;
        for (; pick + 1 < J; ++pick) {
            if (u < spec.components[pick].weight) break;
            u -= spec.components[pick].weight;
        }
        for (int64_t i = 0; i < n; ++i) {
            const double x = spec.components[pick].mean[static_cast<size_t>(i)] +
                             spec.components[pick].std_dev * rng.normal();
            z[static_cast<size_t>(i)] = t * x + (1.0 - t) * rng.normal();
        }

        // posterior over components, log-sum-exp normalized
        double mx = -1e300;
        for (size_t j = 0; j < J; ++j) {
            double q = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double d =
                    z[static_cast<size_t>(i)] -
                    t * spec.components[j].mean[static_cast<size_t>(i)];
                q += d * d;
            }
            post[j] = logw[j] - 0.5 * q / s2[j];
            mx = std::max(mx, post[j]);
        }
        double zsum = 0.0;
        for (size_t j = 0; j < J; ++j) {
            post[j] = std::exp(post[j] - mx);
            zsum += post[j];
        }
        for (size_t j = 0; j < J; ++j) post[j] /= zsum;

        // conditional means per component
        for (size_t j = 0; j < J; ++j)
            for (int64_t i = 0; i < n; ++i)
                mu_c[j][static_cast<size_t>(i)] =
                    spec.components[j].mean[static_cast<size_t>(i)] +
                    gain[j] *
                        (z[static_cast<size_t>(i)] -
                         t * spec.components[j].mean[static_cast<size_t>(i)]);

        std::vector<double> e_all(static_cast<size_t>(n), 0.0);
        for (size_t j = 0; j < J; ++j)
            for (int64_t i = 0; i < n; ++i)
                e_all[static_cast<size_t>(i)] += post[j] * mu_c[j][static_cast<size_t>(i)];

        auto sq_gap = [n](const std::vector<double>& a,
                          const std::vector<double>& b) {
            double s = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double d = a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)];
                s += d * d;
            }
            return s;
        };

        double var_all = 0.0;
        for (size_t j = 0; j < J; ++j)
            var_all += post[j] * (static_cast<double>(n) * cond_var[j] +
                                  sq_gap(mu_c[j], e_all));

        double term1 = 0.0, term2 = 0.0;
        for (const auto& grp : groups) {
            double pg = 0.0;
            for (size_t j : grp) pg += post[j];
            if (pg < 1e-300) continue;
            std::vector<double> e_g(static_cast<size_t>(n), 0.0);
            for (size_t j : grp)
                for (int64_t i = 0; i < n; ++i)
                    e_g[static_cast<size_t>(i)] +=
                        post[j] / pg * mu_c[j][static_cast<size_t>(i)];
            double var_g = 0.0;
            for (size_t j : grp)
                var_g += post[j] / pg *
                         (static_cast<double>(n) * cond_var[j] +
                          sq_gap(mu_c[j], e_g));
            term1 += pg * var_g;
            term2 += pg * sq_gap(e_g, e_all);
        }

        acc_standard += var_all;
        acc_oracle += term1;
        acc_cross += term2;

        // sampled re-estimate of Var(x | z_t) from posterior draws
        std::vector<double> xs(static_cast<size_t>(num_x_per_z * n));
        std::vector<double> xbar(static_cast<size_t>(n), 0.0);
        for (int64_t m = 0; m < num_x_per_z; ++m) {
            double r = rng.uniform();
            size_t j = 0;
            for (; j + 1 < J; ++j) {
                if (r < post[j]) break;
                r -= post[j];
            }
            const double cstd = std::sqrt(cond_var[j]);
            for (int64_t i = 0; i < n; ++i) {
                const double x =
                    mu_c[j][static_cast<size_t>(i)] + cstd * rng.normal();
                xs[static_cast<size_t>(m * n + i)] = x;
                xbar[static_cast<size_t>(i)] += x;
            }
        }
        for (int64_t i = 0; i < n; ++i)
            xbar[static_cast<size_t>(i)] /= static_cast<double>(num_x_per_z);
        double var_mc = 0.0;
        for (int64_t m = 0; m < num_x_per_z; ++m)
            for (int64_t i = 0; i < n; ++i) {
                const double d = xs[static_cast<size_t>(m * n + i)] -
                                 xbar[static_cast<size_t>(i)];
                var_mc += d * d;
            }
        acc_mc += var_mc / static_cast<double>(num_x_per_z - 1);
    }

    VarianceReport rep;
    rep.t = t;
    rep.num_z = num_z;
    rep.num_x_per_z = num_x_per_z;
    const double inv = 1.0 / static_cast<double>(num_z);
    rep.e_standard = acc_standard * inv;
    rep.e_oracle = acc_oracle * inv;
    rep.cross_term = acc_cross * inv;
    rep.lhs_monte_carlo = acc_mc * inv;
    rep.identity_residual =
        std::abs(rep.lhs_monte_carlo - (rep.e_oracle + rep.cross_term)) /
        std::max(std::abs(rep.lhs_monte_carlo), 1e-300);
    return rep;
}

std::string variance_report_json(const VarianceReport& rep) {
    nlohmann::json j{{"t", rep.t},
                     {"num_z", rep.num_z},
                     {"num_x_per_z", rep.num_x_per_z},
                     {"e_standard", rep.e_standard},
                     {"e_oracle", rep.e_oracle},
                     {"cross_term", rep.cross_term},
                     {"lhs_monte_carlo", rep.lhs_monte_carlo},
                     {"identity_residual", rep.identity_residual},
                     {"contraction_holds",
                      rep.e_oracle <= rep.e_standard + 1e-9}};
    return j.dump(2);
}

namespace {

// Flattened per-token waypoints; keeping the token axis preserves spatial
// layout, which averaging would erase.
Tensor flat_waypoint(const Tensor& image, const ToyFeatureExtractor& ext,
                     const WaypointProjection& proj) {
    Tensor s = project_waypoint(ext.features(image), proj);
    return s.reshaped({s.numel()});
}

}  // namespace

int CentroidClassifier::classify(const Tensor& image,
                                 const ToyFeatureExtractor& ext,
                                 const WaypointProjection& proj) const {
    const Tensor s = flat_waypoint(image, ext, proj);
    if (s.numel() != centroids.dim(1))
        throw ShapeError("classifier: image token grid does not match fit");
    int best = 0;
    double best_d = 1e300;
    for (int64_t c = 0; c < num_classes; ++c) {
        double d = 0.0;
        for (int64_t k = 0; k < s.numel(); ++k) {
            const double gap = s[k] - centroids.at(c, k);
            d += gap * gap;
        }
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

CentroidClassifier fit_centroid_classifier(const std::vector<Tensor>& images,
                                           const std::vector<int>& labels,
                                           int64_t num_classes,
                                           const ToyFeatureExtractor& ext,
                                           const WaypointProjection& proj) {
    if (images.empty() || images.size() != labels.size())
        throw ValueError("classifier fit: empty or mismatched data");
    CentroidClassifier clf;
    clf.num_classes = num_classes;
    const int64_t width = flat_waypoint(images[0], ext, proj).numel();
    clf.centroids = Tensor({num_classes, width});
    std::vector<int64_t> counts(static_cast<size_t>(num_classes), 0);
    for (size_t i = 0; i < images.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValueError("classifier fit: label out of range");
        const Tensor s = flat_waypoint(images[i], ext, proj);
        if (s.numel() != width)
            throw ShapeError("classifier fit: inconsistent image sizes");
        for (int64_t k = 0; k < width; ++k)
            clf.centroids.at(labels[i], k) += s[k];
        ++counts[static_cast<size_t>(labels[i])];
    }
    for (int64_t c = 0; c < num_classes; ++c) {
        if (counts[static_cast<size_t>(c)] == 0)
            throw DataError("classifier fit: class " + std::to_string(c) +
                            " has no samples");
        for (int64_t k = 0; k < width; ++k)
            clf.centroids.at(c, k) /=
                static_cast<double>(counts[static_cast<size_t>(c)]);
    }
    return clf;
}

double classifier_accuracy(const CentroidClassifier& clf,
                           const std::vector<Tensor>& images,
                           const std::vector<int>& labels,
                           const ToyFeatureExtractor& ext,
                           const WaypointProjection& proj) {
    if (images.empty() || images.size() != labels.size())
        throw ValueError("classifier accuracy: empty or mismatched data");
    int64_t hit = 0;
    for (size_t i = 0; i < images.size(); ++i)
        if (clf.classify(images[i], ext, proj) == labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(images.size());
}

int KnnClassifier::classify(const Tensor& image, const ToyFeatureExtractor& ext,
                            const WaypointProjection& proj) const {
    const Tensor s = flat_waypoint(image, ext, proj);
    if (s.numel() != refs.dim(1))
        throw ShapeError("classifier: image token grid does not match fit");
    const int64_t m = refs.dim(0);
    std::vector<std::pair<double, int>> dist;
    dist.reserve(static_cast<size_t>(m));
    for (int64_t r = 0; r < m; ++r) {
        double acc = 0.0;
        const double* ref = refs.data() + r * refs.dim(1);
        for (int64_t e = 0; e < s.numel(); ++e) {
            const double g = s[e] - ref[e];
            acc += g * g;
        }
        dist.emplace_back(acc, labels[static_cast<size_t>(r)]);
    }
    const int kk = static_cast<int>(
        std::min<int64_t>(k, static_cast<int64_t>(dist.size())));
    std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
    std::vector<int> votes(static_cast<size_t>(num_classes), 0);
    for (int n = 0; n < kk; ++n) ++votes[static_cast<size_t>(dist[static_cast<size_t>(n)].second)];
    int best = 0;
    for (int c = 1; c < static_cast<int>(num_classes); ++c)
        if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)])
            best = c;
    return best;
}

KnnClassifier fit_knn_classifier(const std::vector<Tensor>& images,
                                 const std::vector<int>& labels,
                                 int64_t num_classes,
                                 const ToyFeatureExtractor& ext,
                                 const WaypointProjection& proj, int k) {
    if (images.empty() || images.size() != labels.size())
        throw ValueError("classifier fit: empty or mismatched data");
    KnnClassifier clf;
    clf.num_classes = num_classes;
    clf.k = k;
    clf.labels = labels;
    const int64_t width = flat_waypoint(images[0], ext, proj).numel();
    clf.refs = Tensor({static_cast<int64_t>(images.size()), width});
    for (size_t i = 0; i < images.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw ValueError("classifier fit: label out of range");
        const Tensor s = flat_waypoint(images[i], ext, proj);
        if (s.numel() != width)
            throw ShapeError("classifier fit: inconsistent image sizes");
        std::copy(s.data(), s.data() + width,
                  clf.refs.data() + static_cast<int64_t>(i) * width);
    }
    return clf;
}

double classifier_accuracy(const KnnClassifier& clf,
                           const std::vector<Tensor>& images,
                           const std::vector<int>& labels,
                           const ToyFeatureExtractor& ext,
                           const WaypointProjection& proj) {
    if (images.empty() || images.size() != labels.size())
        throw ValueError("classifier accuracy: empty or mismatched data");
    int64_t hit = 0;
    for (size_t i = 0; i < images.size(); ++i)
        if (clf.classify(images[i], ext, proj) == labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(images.size());
}

}  // namespace wayflow::diag
