#include "ulre/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "ulre/errors.hpp"
#include "ulre/image.hpp"

namespace ulre {

LabeledSamples gen_gaussian_1d(std::size_t n_per_class, double mu0, double mu1, std::uint64_t seed) {
    if (n_per_class == 0) throw DomainError("gen_gaussian_1d: n_per_class must be at least 1");
    Rng rng(seed);
    const std::size_t n = 2 * n_per_class;
    std::vector<double> values(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool ood = i >= n_per_class;
        values[i] = (ood ? mu1 : mu0) + rng.normal();
        labels[i] = ood ? 1 : 0;
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));

    LabeledSamples out{Tensor::matrix(n, 1), std::vector<std::uint8_t>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        out.features[i] = values[perm[i]];
        out.labels[i] = labels[perm[i]];
    }
    return out;
}

double analytic_gaussian_lr(double x, double mu0, double mu1) {
    if (!std::isfinite(x)) throw DomainError("analytic_gaussian_lr: x must be finite");
    return std::exp((mu1 - mu0) * x + 0.5 * (mu0 * mu0 - mu1 * mu1));
}

LabelMap resize_mask_nearest(const LabelMap& mask, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw DomainError("resize_mask_nearest: output size must be positive");
    LabelMap out(out_h, out_w);
    auto src_index = [](std::size_t d, std::size_t in, std::size_t out_n) {
        const double s = (static_cast<double>(d) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n);
        return std::min(static_cast<std::size_t>(s), in - 1);
    };
    for (std::size_t r = 0; r < out_h; ++r) {
        const std::size_t sr = src_index(r, mask.height(), out_h);
        for (std::size_t c = 0; c < out_w; ++c) {
            out.set(r, c, mask(sr, src_index(c, mask.width(), out_w)) != 0);
        }
    }
    return out;
}

namespace {

struct RasterShape {
    std::size_t h, w, c;
};

RasterShape raster_shape(const Tensor& t, const char* what) {
    if (t.rank() == 2) return {t.dim(0), t.dim(1), 1};
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    throw ShapeError(std::string("anomaly_mix: ") + what + " must be rank 2 or 3");
}

std::size_t scaled(std::size_t n, double scale) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * scale)));
}

}  // namespace

AnomalyMixResult anomaly_mix_at(const Tensor& target, const Tensor& object, const LabelMap& mask, double scale,
                                std::size_t top, std::size_t left) {
    const RasterShape ts = raster_shape(target, "target");
    const RasterShape os = raster_shape(object, "object");
    if (ts.c != os.c) throw ShapeError("anomaly_mix: object and target channel counts differ");
    if (mask.height() != os.h || mask.width() != os.w) throw ShapeError("anomaly_mix: mask shape differs from object");
    if (mask.count_ood() == 0) throw DomainError("anomaly_mix: object mask is empty");
    if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("anomaly_mix: scale must be positive");

    const std::size_t nh = scaled(os.h, scale);
    const std::size_t nw = scaled(os.w, scale);
    if (top + nh > ts.h || left + nw > ts.w) {
        throw DomainError("anomaly_mix: resized object " + std::to_string(nh) + "x" + std::to_string(nw) +
                          " at (" + std::to_string(top) + ", " + std::to_string(left) + ") does not fit in " +
                          std::to_string(ts.h) + "x" + std::to_string(ts.w) + " target");
    }
    const LabelMap resized_mask = resize_mask_nearest(mask, nh, nw);
    if (resized_mask.count_ood() == 0) throw DomainError("anomaly_mix: resized mask is empty");

    std::vector<Tensor> channels;
    for (std::size_t ch = 0; ch < os.c; ++ch) {
        Tensor plane = Tensor::matrix(os.h, os.w);
        for (std::size_t i = 0; i < os.h * os.w; ++i) plane[i] = object[i * os.c + ch];
        channels.push_back(upsample_bilinear(plane, nh, nw));
    }

    AnomalyMixResult out{target, LabelMap(ts.h, ts.w), scale, top, left};
    for (std::size_t r = 0; r < nh; ++r) {
        for (std::size_t c = 0; c < nw; ++c) {
            if (!resized_mask(r, c)) continue;
            const std::size_t tr = top + r;
            const std::size_t tc = left + c;
            for (std::size_t ch = 0; ch < ts.c; ++ch) {
                out.composite[(tr * ts.w + tc) * ts.c + ch] = channels[ch](r, c);
            }
            out.labels.set(tr, tc, true);
        }
    }
    return out;
}

AnomalyMixResult anomaly_mix(const Tensor& target, const Tensor& object, const LabelMap& mask, Rng& rng,
                             const AnomalyMixConfig& cfg) {
    const RasterShape ts = raster_shape(target, "target");
    const RasterShape os = raster_shape(object, "object");
    if (mask.count_ood() == 0) throw DomainError("anomaly_mix: object mask is empty");
    if (!(cfg.scale_min > 0.0) || cfg.scale_max < cfg.scale_min) {
        throw DomainError("anomaly_mix: invalid scale range");
    }
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
        const std::size_t nh = scaled(os.h, scale);
        const std::size_t nw = scaled(os.w, scale);
        if (nh > ts.h || nw > ts.w) continue;
        if (resize_mask_nearest(mask, nh, nw).count_ood() == 0) continue;
        const auto top = static_cast<std::size_t>(rng.below(ts.h - nh + 1));
        const auto left = static_cast<std::size_t>(rng.below(ts.w - nw + 1));
        return anomaly_mix_at(target, object, mask, scale, top, left);
    }
    throw DomainError("anomaly_mix: object does not fit the target after " + std::to_string(cfg.max_retries + 1) +
                      " scale draws");
}

namespace {

void fill_pixel(double radius, std::span<const double> dir, double noise_sigma, Rng& rng, std::span<double> out) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = radius * dir[k] + noise_sigma * rng.normal();
}

std::vector<double> random_unit(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace

SyntheticWorld make_synthetic_world(const WorldConfig& cfg, std::uint64_t seed) {
    if (cfg.dim < 2) throw DomainError("synthetic world needs dim >= 2");
    if (cfg.n_id_classes == 0) throw DomainError("synthetic world needs at least one class");
    const std::size_t total = cfg.n_id_classes + cfg.n_outlier_clusters;
    const double max_cos = std::cos(cfg.min_angle_deg * std::numbers::pi / 180.0);

    Rng rng(seed);
    SyntheticWorld world;
    world.dim = cfg.dim;
    world.n_id_classes = cfg.n_id_classes;
    world.radius = cfg.radius;
    world.noise_sigma = cfg.noise_sigma;
    int attempts = 0;
    while (world.directions.size() < total) {
        if (attempts++ >= cfg.max_attempts) {
            throw DomainError("cannot place " + std::to_string(total) + " directions in " + std::to_string(cfg.dim) +
                              " dimensions with pairwise angle >= " + std::to_string(cfg.min_angle_deg) +
                              " degrees");
        }
        std::vector<double> v = random_unit(cfg.dim, rng);
        bool ok = true;
        for (const auto& u : world.directions) {
            const double cos = std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
            if (cos > max_cos) {
                ok = false;
                break;
            }
        }
        if (ok) world.directions.push_back(std::move(v));
    }
    return world;
}


Scene gen_synthetic_scene(const SyntheticWorld& world, std::size_t h, std::size_t w, std::uint64_t seed) {
    if (h == 0 || w == 0) throw DomainError("scene dimensions must be positive");
    constexpr std::size_t kBlock = 8;
    Rng rng(seed);
    const std::size_t bh = (h + kBlock - 1) / kBlock;
    const std::size_t bw = (w + kBlock - 1) / kBlock;
    std::vector<std::uint8_t> block_class(bh * bw);
    for (auto& b : block_class) b = static_cast<std::uint8_t>(rng.below(world.n_id_classes));

    Tensor data({h, w, world.dim});
    std::vector<std::uint8_t> ids(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            const std::uint8_t k = block_class[(r / kBlock) * bw + c / kBlock];
            ids[r * w + c] = k;
            fill_pixel(world.radius, world.directions[k], world.noise_sigma, rng,
                       data.data().subspan((r * w + c) * world.dim, world.dim));
        }
    }
    return {FeatureMap(std::move(data)), std::move(ids)};
}

Scene gen_synthetic_scene(std::size_t h, std::size_t w, std::size_t d, std::size_t n_id_classes,
                          std::uint64_t seed) {
    WorldConfig cfg;
    cfg.dim = d;
    cfg.n_id_classes = n_id_classes;
    const SyntheticWorld world = make_synthetic_world(cfg, splitmix64(seed));
    return gen_synthetic_scene(world, h, w, splitmix64(seed + 1));
}

Tensor sample_cluster_raster(const SyntheticWorld& world, std::size_t cluster, std::size_t h, std::size_t w,
                             Rng& rng) {
    if (cluster >= world.directions.size()) throw DomainError("cluster index out of range");
    return sample_direction_raster(world, world.directions[cluster], h, w, rng, world.noise_sigma);
}

Tensor sample_direction_raster(const SyntheticWorld& world, std::span<const double> direction, std::size_t h,
                               std::size_t w, Rng& rng, double noise_sigma) {
    if (direction.size() != world.dim) throw ShapeError("direction length differs from world dimension");
    Tensor out({h, w, world.dim});
    for (std::size_t i = 0; i < h * w; ++i) {
        fill_pixel(world.radius, direction, noise_sigma, rng, out.data().subspan(i * world.dim, world.dim));
    }
    return out;
}

std::vector<double> random_outlier_direction(const SyntheticWorld& world, double min_angle_deg, Rng& rng,
                                             int max_attempts) {
    const double max_cos = std::cos(min_angle_deg * std::numbers::pi / 180.0);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        std::vector<double> v = random_unit(world.dim, rng);
        const bool far = std::all_of(world.directions.begin(), world.directions.end(), [&](const auto& u) {
            return std::inner_product(u.begin(), u.end(), v.begin(), 0.0) <= max_cos;
        });
        if (far) return v;
    }
    throw DomainError("cannot find an outlier direction " + std::to_string(min_angle_deg) +
                      " degrees away from every world direction");
}

std::size_t ClassMeans::dim() const noexcept {
    return classes.empty() ? 0 : classes.begin()->second.mean.size();
}

ClassMeans class_means(const Tensor& features, std::span<const std::uint8_t> class_ids, int ignore_id) {
    if (features.rank() != 2) throw ShapeError("class_means: features must be N x D");
    if (class_ids.size() != features.dim(0)) throw ShapeError("class_means: one class id per feature row required");
    const std::size_t d = features.dim(1);

    ClassMeans out;
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
        const int id = class_ids[i];
        if (id == ignore_id) continue;
        ClassMean& m = out.classes[id];
        if (m.mean.empty()) m.mean.assign(d, 0.0);
        const auto row = features.row(i);
        for (std::size_t k = 0; k < d; ++k) m.mean[k] += row[k];
        ++m.count;
    }
    if (out.classes.empty()) throw DataError("class_means: no labelled rows");
    for (auto& [id, m] : out.classes) {
        double norm = 0.0;
        for (double& v : m.mean) {
            v /= static_cast<double>(m.count);
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) {
            throw DomainError("class " + std::to_string(id) + " mean has zero norm and cannot be normalized");
        }
        m.unit_mean.resize(d);
        for (std::size_t k = 0; k < d; ++k) m.unit_mean[k] = m.mean[k] / norm;
    }
    return out;
}

}  // namespace ulre
