#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ulre/metrics.hpp"
#include "ulre/model.hpp"
#include "ulre/synthetic.hpp"

namespace ulre {

// ---------------------------------------------------------------------------
// Two unit-variance Gaussians, evidential vs sigmoid head on 1-D inputs.

struct ToyConfig {
    std::size_t n_per_class = 100000;
    double mu0 = -0.4;
    double mu1 = 0.4;
    std::size_t hidden = 16;
    TrainConfig train = default_train();
    double grid_min = -6.0;
    double grid_max = 6.0;
    double grid_step = 0.05;

    static TrainConfig default_train();
};

struct ToyGridRow {
    double x = 0.0;
    double p_edl = 0.0;
    double vacuity = 0.0;
    double p_bce = 0.0;
    double entropy_bce = 0.0;  // binary entropy in nats
    double lr_edl = 0.0;
    double lr_true = 0.0;
};

struct ToySummary {
    double p_edl_at_0 = 0.0;
    double vacuity_at_0 = 0.0;
    double vacuity_at_neg6 = 0.0;
    double vacuity_at_pos6 = 0.0;
    double log_lr_slope = 0.0;  // least-squares slope of ln lr_edl on x in [-2, 2]
    double p_bce_at_6 = 0.0;
    double p_edl_at_6 = 0.0;
};

struct ToyResult {
    std::vector<ToyGridRow> grid;
    ToySummary summary;
    TrainResult edl;
    TrainResult bce;
};

std::vector<double> toy_grid(double lo, double hi, double step);
ToyGridRow evaluate_toy_point(const EstimatorModel& edl, const EstimatorModel& bce, double x, double mu0, double mu1);
ToyResult run_toy_gaussian(const ToyConfig& cfg);

// Least-squares slope of y on x.
double fit_slope(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Synthetic scenes with pasted proxy outliers.

struct PipelineConfig {
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t dim = 16;
    std::size_t n_id_classes = 4;
    std::size_t n_train_scenes = 20;
    std::size_t n_test_scenes = 5;
    std::size_t object_size = 32;  // side of the square raster the object mask is cut from
    AnomalyMixConfig mix;
    double min_angle_deg = 60.0;
    double radius = 4.0;
    double noise_sigma = 0.25;
    std::vector<std::size_t> hidden = {256, 64};
    TrainConfig train = default_train();
    double blur_sigma = 1.0;
    std::uint64_t seed = 0;

    static TrainConfig default_train();
};

// A scene with one composited object; class id kOutlierClassId marks pasted pixels.
inline constexpr std::uint8_t kOutlierClassId = 255;

struct CompositedScene {
    FeatureMap features;
    LabelMap labels;
    std::vector<std::uint8_t> class_ids;
};

// The in-distribution classes shared by every scene of a run.
SyntheticWorld pipeline_world(const PipelineConfig& cfg);

// Direction of the held-out test outlier cluster; never used for training.
std::vector<double> pipeline_test_direction(const SyntheticWorld& world, const PipelineConfig& cfg);

// Random blob-shaped object mask of side `size`.
LabelMap random_object_mask(std::size_t size, Rng& rng);

// Scene with one object drawn around `object_direction` pasted in.
CompositedScene make_composited_scene(const SyntheticWorld& world, const PipelineConfig& cfg,
                                      std::span<const double> object_direction, std::uint64_t seed);

// Training scene: the pasted proxy object gets its own random outlier
// direction, so the proxy distribution is spread over many outlier clusters.
CompositedScene make_proxy_scene(const SyntheticWorld& world, const PipelineConfig& cfg, std::uint64_t seed);

struct PipelineResult {
    DetectionMetrics metrics;
    TrainResult trained;
};

// Trains on proxy-outlier scenes and scores held-out scenes whose objects
// come from the disjoint test outlier cluster.
PipelineResult run_synthetic_pipeline(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------
// Extrapolation contrast in feature space.

struct ExtrapolationConfig {
    std::size_t dim = 16;
    std::size_t n_id_classes = 3;
    std::size_t n_per_cluster = 4000;
    std::size_t n_probes = 2000;
    double far_distance = 0.5;   // probes sit at least this cosine distance from every class mean
    double min_angle_deg = 60.0;
    double radius = 4.0;
    double noise_sigma = 1.0;
    double proxy_noise_sigma = 2.5;  // the proxy outlier cluster is broad
    double probe_radius = 8.0;       // beyond the training radius
    std::vector<std::size_t> hidden = {256, 64};
    TrainConfig train = default_train();
    double bin_width = kDefaultBinWidth;
    std::uint64_t seed = 0;

    static TrainConfig default_train();
};

struct ExtrapolationResult {
    BinnedAnalysis edl;
    BinnedAnalysis bce;
    double far_mean_edl = 0.0;  // mean p(y = 1 | x) over probes
    double far_mean_bce = 0.0;
    std::size_t n_far = 0;
};

ExtrapolationResult run_extrapolation_benchmark(const ExtrapolationConfig& cfg);

}  // namespace ulre
