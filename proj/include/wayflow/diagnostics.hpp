#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wayflow/sampler.hpp"
#include "wayflow/tensor.hpp"
#include "wayflow/waypoints.hpp"

namespace wayflow::diag {

// Reference trajectory-conflict measurements from a full-scale ImageNet run
// of this architecture family (midpoint/peak pairwise conflict and midpoint
// relative CFG distance, baseline vs waypoint-conditioned). Kept for
// orientation when reading desk-scale traces; never asserted.
constexpr double kRefPairMidBaseline = 1.294e-4;
constexpr double kRefPairMidWaypoint = 8.363e-5;
constexpr double kRefPairPeakBaseline = 8.532e-3;
constexpr double kRefPairPeakWaypoint = 5.262e-3;
constexpr double kRefRelMidBaseline = 1.304e-2;
constexpr double kRefRelMidWaypoint = 1.159e-2;

// 0.5 * (1 - cos(v_cond, v_alt)), in [0, 1]. Throws MetricUndefined when
// either vector is numerically zero; callers record a missing datapoint.
double pairwise_conflict(const Tensor& v_cond, const Tensor& v_alt);

// ||v_cond - v_uncond|| / ||v_cond||. Throws MetricUndefined for zero v_cond.
double cfg_rel_distance(const Tensor& v_cond, const Tensor& v_uncond);

struct ConflictPoint {
    int64_t step = 0;
    double t = 0.0;
    double c_pair_mean = 0.0, c_pair_std = 0.0;
    double c_rel_mean = 0.0, c_rel_std = 0.0;
    int64_t samples = 0;       // datapoints that entered the means
    int64_t missing = 0;       // undefined-metric samples, excluded
};

struct ConflictSummary {
    double midpoint_t = 0.0;
    double c_pair_midpoint = 0.0;
    double c_rel_midpoint = 0.0;
    double c_pair_peak = 0.0;
    double c_pair_peak_t = 0.0;
    double c_rel_peak = 0.0;
};

struct ConflictTrace {
    std::vector<ConflictPoint> points;
    ConflictSummary summary() const;  // midpoint = step whose t is nearest 0.5
};

struct ConflictConfig {
    int64_t stride = -1;      // counterfactual label offset; <0 means C/2
    int64_t batches = 4;
    int64_t batch_size = 32;
    int64_t steps = 50;
    Solver solver = Solver::heun;
    flow::ClampConfig clamp;
    double noise_scale_coeff = 1.0;
    uint64_t seed = 0;
    int label = -1;  // fixed conditional label; <0 cycles over all classes
};

// Integrates conditional trajectories and, at every step, re-evaluates the
// velocity under the counterfactual label (y + stride) mod C and under the
// null class on the same states. Metrics are averaged per step across all
// batches; aggregation order is fixed regardless of threading.
ConflictTrace trace_conflict(const GeneratorBundle& models,
                             const ConflictConfig& cfg);

void write_conflict_csv(const ConflictTrace& trace, const std::string& path);
// Summary JSON; when `other` is given it also reports per-metric ratios
// (this trace over the other).
void write_conflict_summary_json(const ConflictTrace& trace,
                                 const ConflictTrace* other,
                                 const std::string& path);

// --- Gaussian-mixture testbed for the total-variance decomposition ---

struct MixtureComponent {
    int label = 0;
    std::vector<double> s0;    // semantic tag; equal tags form one group
    std::vector<double> mean;  // component mean in data space
    double std_dev = 0.0;      // isotropic; 0 is a point mass
    double weight = 0.0;
};

struct MixtureSpec {
    std::vector<MixtureComponent> components;

    void validate() const;  // positive weights summing to 1, equal dims
    int64_t dim() const;
};

MixtureSpec mixture_from_json(const std::string& text);
std::string mixture_to_json(const MixtureSpec& spec);

struct VarianceReport {
    double t = 0.0;
    int64_t num_z = 0;
    int64_t num_x_per_z = 0;
    // all three terms averaged over the same Monte-Carlo z_t draws
    double e_standard = 0.0;  // E[Var(x | z_t)], closed form per draw
    double e_oracle = 0.0;    // E[Var(x | z_t, s_0)]
    double cross_term = 0.0;  // E[Var_{s_0}(E[x | z_t, s_0])]
    double lhs_monte_carlo = 0.0;  // sampled estimate of E[Var(x | z_t)]
    double identity_residual = 0.0;  // |lhs_mc - (oracle + cross)| / lhs_mc
};

// For linear-interpolant states the per-component posteriors stay Gaussian,
// so every conditional moment has a closed form; only the outer expectation
// over z_t is Monte-Carlo. The sampled LHS re-estimates Var(x | z_t) from
// num_x_per_z posterior draws per state, giving the residual an oracle to
// disagree with. Requires t < 1.
VarianceReport variance_decomposition(const MixtureSpec& spec, double t,
                                      int64_t num_z, int64_t num_x_per_z,
                                      RngStream& rng);

std::string variance_report_json(const VarianceReport& rep);

// --- Fixed toy classifier for sample-quality scoring ---

// Nearest class centroid over token-averaged waypoints of the frozen
// extractor. Fit once on real data, then reused unchanged to score
// generated images.
struct CentroidClassifier {
    Tensor centroids;  // [C, d]
    int64_t num_classes = 0;

    int classify(const Tensor& image, const ToyFeatureExtractor& ext,
                 const WaypointProjection& proj) const;
};

CentroidClassifier fit_centroid_classifier(const std::vector<Tensor>& images,
                                           const std::vector<int>& labels,
                                           int64_t num_classes,
                                           const ToyFeatureExtractor& ext,
                                           const WaypointProjection& proj);

double classifier_accuracy(const CentroidClassifier& clf,
                           const std::vector<Tensor>& images,
                           const std::vector<int>& labels,
                           const ToyFeatureExtractor& ext,
                           const WaypointProjection& proj);

// k-nearest-neighbour variant over the same flattened waypoints; handles the
// pose multimodality that a single centroid blurs away.
struct KnnClassifier {
    Tensor refs;              // [M, N*d]
    std::vector<int> labels;  // M
    int64_t num_classes = 0;
    int k = 3;

    int classify(const Tensor& image, const ToyFeatureExtractor& ext,
                 const WaypointProjection& proj) const;
};

KnnClassifier fit_knn_classifier(const std::vector<Tensor>& images,
                                 const std::vector<int>& labels,
                                 int64_t num_classes,
                                 const ToyFeatureExtractor& ext,
                                 const WaypointProjection& proj, int k = 3);

double classifier_accuracy(const KnnClassifier& clf,
                           const std::vector<Tensor>& images,
                           const std::vector<int>& labels,
                           const ToyFeatureExtractor& ext,
                           const WaypointProjection& proj);

}  // namespace wayflow::diag
