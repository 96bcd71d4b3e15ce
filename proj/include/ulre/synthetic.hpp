#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ulre/maps.hpp"
#include "ulre/rng.hpp"
#include "ulre/tensor.hpp"

namespace ulre {

// ---------------------------------------------------------------------------
// Univariate Gaussian classification task.

struct LabeledSamples {
    Tensor features;                   // N x D
    std::vector<std::uint8_t> labels;  // N, 1 = OOD
};

// n_per_class draws from N(mu0, 1) labeled 0 and n_per_class from N(mu1, 1)
// labeled 1, jointly shuffled. Class proportions are exactly n:n.
LabeledSamples gen_gaussian_1d(std::size_t n_per_class, double mu0, double mu1, std::uint64_t seed);

// Closed-form N(mu1, 1) / N(mu0, 1) density ratio at x.
double analytic_gaussian_lr(double x, double mu0, double mu1);

// ---------------------------------------------------------------------------
// Cut-resize-paste compositing with a pseudo OOD label map.

struct AnomalyMixConfig {
    double scale_min = 0.5;
    double scale_max = 2.0;
    int max_retries = 32;
};

struct AnomalyMixResult {
    Tensor composite;  // same shape as the target raster
    LabelMap labels;   // 1 exactly on pasted mask pixels
    double scale = 1.0;
    std::size_t top = 0;
    std::size_t left = 0;
};

// Resizes `object` (h x w x C, bilinear) and `mask` (h x w, nearest) by
// `scale`, then pastes mask pixels with their top-left corner at (top, left).
// Throws DomainError if the mask is empty or the resized object does not fit.
AnomalyMixResult anomaly_mix_at(const Tensor& target, const Tensor& object, const LabelMap& mask, double scale,
                                std::size_t top, std::size_t left);

// Draws the scale uniformly from [scale_min, scale_max] and a uniform offset
// that keeps the object fully inside the target. Scales whose object does
// not fit are redrawn up to max_retries times before a DomainError.
AnomalyMixResult anomaly_mix(const Tensor& target, const Tensor& object, const LabelMap& mask, Rng& rng,
                             const AnomalyMixConfig& cfg = {});

// Nearest-neighbour resize of a binary mask (half-pixel centers).
LabelMap resize_mask_nearest(const LabelMap& mask, std::size_t out_h, std::size_t out_w);

// ---------------------------------------------------------------------------
// Synthetic dense feature scenes.

// Class-conditional Gaussians around unit mean directions. Directions
// [0, n_id_classes) are in-distribution classes; any extra directions are
// outlier clusters used for proxy and test OOD objects.
struct SyntheticWorld {
    std::size_t dim = 0;
    std::size_t n_id_classes = 0;
    std::vector<std::vector<double>> directions;  // unit vectors
    double radius = 4.0;                          // mean = radius * direction
    double noise_sigma = 1.0;                     // isotropic per-coordinate noise
};

struct WorldConfig {
    std::size_t dim = 16;
    std::size_t n_id_classes = 4;
    std::size_t n_outlier_clusters = 0;
    double min_angle_deg = 60.0;
    double radius = 4.0;
    double noise_sigma = 1.0;
    int max_attempts = 10000;
};

// Rejection-samples unit directions with pairwise angles >= min_angle_deg.
// Throws DomainError when the separation is infeasible within max_attempts.
SyntheticWorld make_synthetic_world(const WorldConfig& cfg, std::uint64_t seed);

struct Scene {
    FeatureMap features;
    std::vector<std::uint8_t> class_ids;  // H * W, row-major
};

// Class layout is a grid of 8x8 blocks with classes drawn uniformly; each
// pixel's feature is radius * direction[class] + N(0, noise_sigma^2 I).
Scene gen_synthetic_scene(const SyntheticWorld& world, std::size_t h, std::size_t w, std::uint64_t seed);

// Convenience form: world and scene both derived from `seed`.
Scene gen_synthetic_scene(std::size_t h, std::size_t w, std::size_t d, std::size_t n_id_classes,
                          std::uint64_t seed);

// h x w x D raster of features drawn around `direction` (a cluster of the world).
Tensor sample_cluster_raster(const SyntheticWorld& world, std::size_t cluster, std::size_t h, std::size_t w,
                             Rng& rng);

// Same, around an arbitrary unit direction with the world's radius and noise.
Tensor sample_direction_raster(const SyntheticWorld& world, std::span<const double> direction, std::size_t h,
                               std::size_t w, Rng& rng, double noise_sigma);

// Random unit direction at least `min_angle_deg` away from every world
// direction. Throws DomainError after `max_attempts` rejections.
std::vector<double> random_outlier_direction(const SyntheticWorld& world, double min_angle_deg, Rng& rng,
                                             int max_attempts = 10000);

// ---------------------------------------------------------------------------
// Per-class mean features.

struct ClassMean {
    std::vector<double> mean;       // arithmetic mean
    std::vector<double> unit_mean;  // mean / ||mean||
    std::size_t count = 0;
};

struct ClassMeans {
    std::map<int, ClassMean> classes;

    std::size_t dim() const noexcept;
};

// Rows whose id equals `ignore_id` are skipped. Throws DomainError if a
// class mean has zero norm, DataError if no class is present.
ClassMeans class_means(const Tensor& features, std::span<const std::uint8_t> class_ids, int ignore_id = -1);

}  // namespace ulre
