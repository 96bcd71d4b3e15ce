#include "ulre/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ulre/errors.hpp"

namespace ulre {

TrainConfig ToyConfig::default_train() {
    TrainConfig t;
    t.epochs = 100;
    t.learning_rate = 1e-3;
    t.batch_size = 1024;
    t.early_stopping = {true, 5, 0.1};
    return t;
}

std::vector<double> toy_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi >= lo)) throw DomainError("invalid grid specification");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 0.5)) + 1;
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = lo + static_cast<double>(i) * step;
    return xs;
}

ToyGridRow evaluate_toy_point(const EstimatorModel& edl, const EstimatorModel& bce, double x, double mu0,
                              double mu1) {
    const Tensor input({1, 1}, std::vector<double>{x});
    const Tensor o = forward(edl, input);
    const DirichletParams a = dirichlet_from_logits({o(0, 0), o(0, 1)});
    const double p_bce = sigmoid(forward(bce, input)(0, 0));

    ToyGridRow row;
    row.x = x;
    row.p_edl = expected_prob(a)[1];
    row.vacuity = vacuity(a);
    row.p_bce = p_bce;
    auto xlogx = [](double p) { return p > 0.0 ? p * std::log(p) : 0.0; };
    row.entropy_bce = -(xlogx(p_bce) + xlogx(1.0 - p_bce));
    row.lr_edl = lr_score(a);
    row.lr_true = analytic_gaussian_lr(x, mu0, mu1);
    return row;
}

double fit_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_slope needs at least two paired points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (!(sxx > 0.0)) throw DomainError("fit_slope: x values are all equal");
    return sxy / sxx;
}

ToyResult run_toy_gaussian(const ToyConfig& cfg) {
    const LabeledSamples data = gen_gaussian_1d(cfg.n_per_class, cfg.mu0, cfg.mu1, cfg.train.seed);
    const Rng root(cfg.train.seed);

    TrainConfig edl_cfg = cfg.train;
    edl_cfg.head = HeadKind::evidential;
    edl_cfg.seed = root.split(1).seed();
    TrainConfig bce_cfg = cfg.train;
    bce_cfg.head = HeadKind::sigmoid;
    bce_cfg.seed = root.split(2).seed();

    EstimatorModel edl0 = init_model({1, cfg.hidden, 2}, root.split(3).seed(), HeadKind::evidential);
    EstimatorModel bce0 = init_model({1, cfg.hidden, 1}, root.split(4).seed(), HeadKind::sigmoid);

    ToyResult result;
    result.edl = train(std::move(edl0), data.features, data.labels, edl_cfg);
    result.bce = train(std::move(bce0), data.features, data.labels, bce_cfg);

    for (double x : toy_grid(cfg.grid_min, cfg.grid_max, cfg.grid_step)) {
        result.grid.push_back(evaluate_toy_point(result.edl.model, result.bce.model, x, cfg.mu0, cfg.mu1));
    }

    ToySummary& s = result.summary;
    const ToyGridRow at0 = evaluate_toy_point(result.edl.model, result.bce.model, 0.0, cfg.mu0, cfg.mu1);
    const ToyGridRow at_neg6 = evaluate_toy_point(result.edl.model, result.bce.model, -6.0, cfg.mu0, cfg.mu1);
    const ToyGridRow at_pos6 = evaluate_toy_point(result.edl.model, result.bce.model, 6.0, cfg.mu0, cfg.mu1);
    s.p_edl_at_0 = at0.p_edl;
    s.vacuity_at_0 = at0.vacuity;
    s.vacuity_at_neg6 = at_neg6.vacuity;
    s.vacuity_at_pos6 = at_pos6.vacuity;
    s.p_bce_at_6 = at_pos6.p_bce;
    s.p_edl_at_6 = at_pos6.p_edl;

    std::vector<double> xs, ys;
    for (const ToyGridRow& r : result.grid) {
        if (r.x >= -2.0 - 1e-9 && r.x <= 2.0 + 1e-9) {
            xs.push_back(r.x);
            ys.push_back(std::log(r.lr_edl));
        }
    }
    s.log_lr_slope = fit_slope(xs, ys);
    return result;
}

TrainConfig PipelineConfig::default_train() {
    TrainConfig t;
    t.epochs = 10;
    t.learning_rate = 1e-3;
    t.batch_size = 1024;
    return t;
}

SyntheticWorld pipeline_world(const PipelineConfig& cfg) {
    WorldConfig w;
    w.dim = cfg.dim;
    w.n_id_classes = cfg.n_id_classes;
    w.min_angle_deg = cfg.min_angle_deg;
    w.radius = cfg.radius;
    w.noise_sigma = cfg.noise_sigma;
    return make_synthetic_world(w, splitmix64(cfg.seed));
}

LabelMap random_object_mask(std::size_t size, Rng& rng) {
    if (size == 0) throw DomainError("object size must be positive");
    LabelMap mask(size, size);
    const double center = 0.5 * static_cast<double>(size);
    const double ry = rng.uniform(0.3, 0.5) * static_cast<double>(size);
    const double rx = rng.uniform(0.3, 0.5) * static_cast<double>(size);
    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
            const double dy = (static_cast<double>(r) + 0.5 - center) / ry;
            const double dx = (static_cast<double>(c) + 0.5 - center) / rx;
            mask.set(r, c, dx * dx + dy * dy <= 1.0);
        }
    }
    if (mask.count_ood() == 0) mask.set(size / 2, size / 2, true);
    return mask;
}

std::vector<double> pipeline_test_direction(const SyntheticWorld& world, const PipelineConfig& cfg) {
    Rng rng(splitmix64(cfg.seed ^ 0x7465737464697231ULL));
    return random_outlier_direction(world, cfg.min_angle_deg, rng);
}

CompositedScene make_composited_scene(const SyntheticWorld& world, const PipelineConfig& cfg,
                                      std::span<const double> object_direction, std::uint64_t seed) {
    Rng rng(seed);
    Scene scene = gen_synthetic_scene(world, cfg.height, cfg.width, rng.split(0).seed());
    Rng object_rng = rng.split(1);
    const LabelMap mask = random_object_mask(cfg.object_size, object_rng);
    const Tensor object =
        sample_direction_raster(world, object_direction, cfg.object_size, cfg.object_size, object_rng, world.noise_sigma);
    Rng mix_rng = rng.split(2);
    AnomalyMixResult mixed = anomaly_mix(scene.features.data(), object, mask, mix_rng, cfg.mix);

    CompositedScene out{FeatureMap(std::move(mixed.composite)), std::move(mixed.labels), std::move(scene.class_ids)};
    for (std::size_t i = 0; i < out.class_ids.size(); ++i) {
        if (out.labels.values()[i]) out.class_ids[i] = kOutlierClassId;
    }
    return out;
}

CompositedScene make_proxy_scene(const SyntheticWorld& world, const PipelineConfig& cfg, std::uint64_t seed) {
    Rng rng(splitmix64(seed));
    const std::vector<double> direction = random_outlier_direction(world, cfg.min_angle_deg, rng);
    return make_composited_scene(world, cfg, direction, seed);
}

PipelineResult run_synthetic_pipeline(const PipelineConfig& cfg) {
    const SyntheticWorld world = pipeline_world(cfg);
    const std::vector<double> test_direction = pipeline_test_direction(world, cfg);
    const std::size_t pixels = cfg.height * cfg.width;
    const Rng root(cfg.seed);

    Tensor features = Tensor::matrix(cfg.n_train_scenes * pixels, cfg.dim);
    std::vector<std::uint8_t> labels;
    labels.reserve(cfg.n_train_scenes * pixels);
    for (std::size_t s = 0; s < cfg.n_train_scenes; ++s) {
        const CompositedScene scene = make_proxy_scene(world, cfg, root.split(100 + s).seed());
        const auto& v = scene.features.data().values();
        std::copy(v.begin(), v.end(), features.values().begin() + static_cast<std::ptrdiff_t>(s * pixels * cfg.dim));
        labels.insert(labels.end(), scene.labels.values().begin(), scene.labels.values().end());
    }

    std::vector<std::size_t> dims{cfg.dim};
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(head_width(cfg.train.head));
    EstimatorModel model = init_model(dims, root.split(1).seed(), cfg.train.head);
    TrainConfig tc = cfg.train;
    tc.seed = root.split(2).seed();

    PipelineResult result{{}, train(std::move(model), features, labels, tc)};

    std::vector<double> scores;
    std::vector<std::uint8_t> truth;
    for (std::size_t s = 0; s < cfg.n_test_scenes; ++s) {
        const CompositedScene scene = make_composited_scene(world, cfg, test_direction, root.split(10000 + s).seed());
        const ScoreMap raw(lr_map(predict_map(result.trained.model, scene.features)));
        const ScoreMap post = postprocess_scores(raw, cfg.height, cfg.width, cfg.blur_sigma);
        scores.insert(scores.end(), post.scores().values().begin(), post.scores().values().end());
        truth.insert(truth.end(), scene.labels.values().begin(), scene.labels.values().end());
    }
    result.metrics = evaluate_detection(scores, truth);
    return result;
}

TrainConfig ExtrapolationConfig::default_train() {
    TrainConfig t;
    t.epochs = 10;
    t.learning_rate = 1e-3;
    t.batch_size = 1024;
    return t;
}

ExtrapolationResult run_extrapolation_benchmark(const ExtrapolationConfig& cfg) {
    WorldConfig wc;
    wc.dim = cfg.dim;
    wc.n_id_classes = cfg.n_id_classes;
    wc.n_outlier_clusters = 1;
    wc.min_angle_deg = cfg.min_angle_deg;
    wc.radius = cfg.radius;
    wc.noise_sigma = cfg.noise_sigma;
    const SyntheticWorld world = make_synthetic_world(wc, splitmix64(cfg.seed));
    const std::size_t n_clusters = cfg.n_id_classes + 1;
    const Rng root(cfg.seed);

    // Training rows: every cluster equally sized; the last cluster is the proxy outlier.
    Rng sample_rng = root.split(0);
    const std::size_t n = n_clusters * cfg.n_per_cluster;
    Tensor features = Tensor::matrix(n, cfg.dim);
    std::vector<std::uint8_t> labels(n);
    std::vector<std::uint8_t> class_ids(n);
    for (std::size_t k = 0; k < n_clusters; ++k) {
        const double sigma = k == cfg.n_id_classes ? cfg.proxy_noise_sigma : cfg.noise_sigma;
        const Tensor block =
            sample_direction_raster(world, world.directions[k], cfg.n_per_cluster, 1, sample_rng, sigma);
        for (std::size_t i = 0; i < cfg.n_per_cluster; ++i) {
            const std::size_t row = k * cfg.n_per_cluster + i;
            std::copy(block.row(i).begin(), block.row(i).end(), features.row(row).begin());
            labels[row] = k == cfg.n_id_classes ? 1 : 0;
            class_ids[row] = static_cast<std::uint8_t>(k);
        }
    }

    // Probes: random directions at the cluster radius, rejected unless far
    // from every training cluster mean.
    const ClassMeans all_means = class_means(features, class_ids);
    const ClassMeans id_means = class_means(features, class_ids, static_cast<int>(cfg.n_id_classes));
    Rng probe_rng = root.split(1);
    Tensor probes = Tensor::matrix(cfg.n_probes, cfg.dim);
    std::size_t accepted = 0;
    std::size_t attempts = 0;
    std::vector<double> v(cfg.dim);
    while (accepted < cfg.n_probes) {
        if (++attempts > 1000 * cfg.n_probes) throw DomainError("cannot place probes at the requested distance");
        double norm = 0.0;
        for (double& x : v) {
            x = probe_rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (double& x : v) x *= cfg.probe_radius / norm;
        bool far = true;
        for (const auto& [id, m] : all_means.classes) {
            if (cosine_distance(v, m.unit_mean) < cfg.far_distance) {
                far = false;
                break;
            }
        }
        if (!far) continue;
        std::copy(v.begin(), v.end(), probes.row(accepted).begin());
        ++accepted;
    }

    auto train_head = [&](HeadKind head, std::uint64_t salt) {
        std::vector<std::size_t> dims{cfg.dim};
        dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
        dims.push_back(head_width(head));
        TrainConfig tc = cfg.train;
        tc.head = head;
        tc.seed = root.split(salt).seed();
        return train(init_model(dims, root.split(salt + 1).seed(), head), features, labels, tc).model;
    };
    const EstimatorModel edl = train_head(HeadKind::evidential, 10);
    const EstimatorModel bce = train_head(HeadKind::sigmoid, 20);

    const std::vector<double> p_edl = ood_probabilities(edl, probes);
    const std::vector<double> p_bce = ood_probabilities(bce, probes);

    ExtrapolationResult out;
    out.edl = extrapolation_analysis(probes, id_means, p_edl, cfg.bin_width);
    out.bce = extrapolation_analysis(probes, id_means, p_bce, cfg.bin_width);
    out.n_far = probes.dim(0);
    out.far_mean_edl = std::accumulate(p_edl.begin(), p_edl.end(), 0.0) / static_cast<double>(out.n_far);
    out.far_mean_bce = std::accumulate(p_bce.begin(), p_bce.end(), 0.0) / static_cast<double>(out.n_far);
    return out;
}

}  // namespace ulre
