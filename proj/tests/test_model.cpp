#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "support.hpp"
#include "ulre/checkpoint.hpp"
#include "ulre/errors.hpp"
#include "ulre/model.hpp"
#include "ulre/rng.hpp"
#include "ulre/tensor_file.hpp"

using namespace ulre;

namespace {

Tensor random_matrix(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
    Tensor x = Tensor::matrix(n, d);
    for (double& v : x.values()) v = scale * rng.normal();
    return x;
}

std::vector<std::uint8_t> random_labels(std::size_t n, Rng& rng) {
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(2));
    return y;
}

// Smallest distance of any first-layer pre-activation from the leaky-ReLU
// kink, in units of the largest change a parameter step h can cause.
double kink_margin(const EstimatorModel& m, const Tensor& x) {
    double margin = std::numeric_limits<double>::infinity();
    const auto& w = m.layers[0].weight;
    for (std::size_t i = 0; i < x.dim(0); ++i) {
        double reach = 1.0;
        for (std::size_t k = 0; k < x.dim(1); ++k) reach = std::max(reach, std::abs(x(i, k)));
        for (std::size_t j = 0; j < w.dim(0); ++j) {
            double z = m.layers[0].bias[j];
            for (std::size_t k = 0; k < x.dim(1); ++k) z += w(j, k) * x(i, k);
            margin = std::min(margin, std::abs(z) / reach);
        }
    }
    return margin;
}

// Two well-separated Gaussian blobs in 2-D (10 sigma apart).
void blobs(std::size_t n, std::uint64_t seed, Tensor& x, std::vector<std::uint8_t>& y) {
    Rng rng(seed);
    x = Tensor::matrix(2 * n, 2);
    y.assign(2 * n, 0);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const bool ood = i >= n;
        x(i, 0) = (ood ? 5.0 : -5.0) + rng.normal();
        x(i, 1) = rng.normal();
        y[i] = ood ? 1 : 0;
    }
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("initialization is deterministic, bounded, and has zero biases") {
    const EstimatorModel a = init_model({5, 7, 3, 2}, 99, HeadKind::evidential);
    const EstimatorModel b = init_model({5, 7, 3, 2}, 99, HeadKind::evidential);
    CHECK(a == b);
    CHECK_FALSE(a == init_model({5, 7, 3, 2}, 100, HeadKind::evidential));
    CHECK(a.parameter_count() == 5 * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2);
    for (const auto& layer : a.layers) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.weight.dim(1)));
        for (double w : layer.weight.values()) CHECK(std::abs(w) <= bound);
        for (double v : layer.bias) CHECK(v == 0.0);
    }
    CHECK_THROWS_AS(init_model({5, 1}, 1, HeadKind::evidential), ShapeError);
    CHECK_THROWS_AS(init_model({5, 2}, 1, HeadKind::sigmoid), ShapeError);
    CHECK_THROWS_AS(init_model({5}, 1, HeadKind::evidential), ShapeError);
}

TEST_CASE("zero input yields uniform belief at initialization") {
    const EstimatorModel m = init_model({6, 16, 8, 2}, 3, HeadKind::evidential);
    const Tensor logits = forward(m, Tensor::matrix(4, 6));
    for (double v : logits.values()) CHECK(v == 0.0);
    const auto a = dirichlet_from_logits({logits(0, 0), logits(0, 1)});
    CHECK(a[0] == 2.0);
    CHECK(a[1] == 2.0);
    CHECK(expected_prob(a)[1] == 0.5);
}

TEST_CASE("single affine layer equals a hand matrix product") {
    EstimatorModel m = init_model({3, 2}, 5, HeadKind::evidential);
    m.layers[0].bias = {0.25, -0.5};
    const Tensor x({2, 3}, std::vector<double>{1, 2, 3, -1, 0.5, 4});
    const Tensor out = forward(m, x);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            double expect = m.layers[0].bias[j];
            for (std::size_t k = 0; k < 3; ++k) expect += m.layers[0].weight(j, k) * x(i, k);
            CHECK(std::abs(out(i, j) - expect) <= 1e-15);
        }
    }
}

TEST_CASE("leaky ReLU scales negative pre-activations by the slope") {
    EstimatorModel m = init_model({1, 1, 1}, 1, HeadKind::sigmoid, 0.01);
    m.layers[0].weight(0, 0) = 1.0;
    m.layers[1].weight(0, 0) = 1.0;
    const Tensor out = forward(m, Tensor({2, 1}, std::vector<double>{-2.0, 3.0}));
    CHECK(std::abs(out(0, 0) + 0.02) <= 1e-16);
    CHECK(out(1, 0) == 3.0);
}

TEST_CASE("rows are processed independently") {
    Rng rng(21);
    const EstimatorModel m = init_model({4, 10, 2}, 8, HeadKind::evidential);
    const Tensor x = random_matrix(12, 4, rng);
    const Tensor out = forward(m, x);
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor xp = Tensor::matrix(12, 4);
    for (std::size_t i = 0; i < 12; ++i) std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xp.row(i).begin());
    const Tensor outp = forward(m, xp);
    for (std::size_t i = 0; i < 12; ++i)
        for (std::size_t j = 0; j < 2; ++j) CHECK(outp(i, j) == out(perm[i], j));
    // Changing one row leaves the others untouched.
    Tensor xm = x;
    for (double& v : xm.row(5)) v = 100.0;
    const Tensor outm = forward(m, xm);
    for (std::size_t i = 0; i < 12; ++i)
        if (i != 5) CHECK(outm(i, 0) == out(i, 0));
}

TEST_CASE("backpropagation matches finite differences on kink-free draws") {
    int checked = 0;
    for (std::uint64_t seed = 0; checked < 12; ++seed) {
        Rng rng(seed);
        const HeadKind head = seed % 2 == 0 ? HeadKind::evidential : HeadKind::sigmoid;
        const EstimatorModel m = init_model({4, 8, 6, head_width(head)}, rng.split(0).seed(), head);
        const Tensor x = random_matrix(16, 4, rng);
        const auto y = random_labels(16, rng);
        const double h = 1e-5;
        if (kink_margin(m, x) < 100.0 * h) continue;
        ++checked;
        for (int epoch : {0, 4, 20}) {
            Gradients g = Gradients::zeros_like(m);
            loss_and_gradients(m, x, y, {}, epoch, &g);
            const auto analytic = ulre_test::flatten(g);
            const auto numeric = ulre_test::numeric_gradient(m, x, y, epoch, h);
            REQUIRE(analytic.size() == numeric.size());
            for (std::size_t i = 0; i < analytic.size(); ++i)
                CHECK(std::abs(analytic[i] - numeric[i]) <= 1e-6 * std::max(1e-3, std::abs(numeric[i])));
        }
    }
}

TEST_CASE("gradients over a row subset equal gradients of the subset") {
    Rng rng(30);
    const EstimatorModel m = init_model({3, 5, 2}, 2, HeadKind::evidential);
    const Tensor x = random_matrix(10, 3, rng);
    const auto y = random_labels(10, rng);
    const std::vector<std::size_t> rows = {1, 4, 7};
    Gradients ga = Gradients::zeros_like(m);
    const BatchLoss la = loss_and_gradients(m, x, y, rows, 12, &ga);
    Tensor xs = Tensor::matrix(3, 3);
    std::vector<std::uint8_t> ys;
    for (std::size_t i = 0; i < 3; ++i) {
        std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), xs.row(i).begin());
        ys.push_back(y[rows[i]]);
    }
    Gradients gb = Gradients::zeros_like(m);
    const BatchLoss lb = loss_and_gradients(m, xs, ys, {}, 12, &gb);
    CHECK(la.total == lb.total);
    CHECK(ulre_test::flatten(ga) == ulre_test::flatten(gb));
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
    EstimatorModel m = init_model({3, 4, 2}, 4, HeadKind::evidential);
    const EstimatorModel before = m;
    AdamOptimizer adam(m, {1e-2, 0.9, 0.999, 1e-8});
    for (int i = 0; i < 5; ++i) adam.step(m, Gradients::zeros_like(m));
    CHECK(m == before);
    CHECK(adam.steps() == 5);
}

TEST_CASE("Adam first step moves each parameter by the learning rate") {
    EstimatorModel m = init_model({2, 2}, 4, HeadKind::evidential);
    const EstimatorModel before = m;
    Gradients g = Gradients::zeros_like(m);
    g.layers[0].weight(0, 0) = 3.0;
    g.layers[0].bias[1] = -0.2;
    AdamOptimizer adam(m, {0.01, 0.9, 0.999, 1e-8});
    adam.step(m, g);
    CHECK(m.layers[0].weight(0, 0) == doctest::Approx(before.layers[0].weight(0, 0) - 0.01).epsilon(1e-9));
    CHECK(m.layers[0].bias[1] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(m.layers[0].weight(1, 1) == before.layers[0].weight(1, 1));
}

TEST_CASE("training separates well-separated blobs") {
    Tensor x;
    std::vector<std::uint8_t> y;
    blobs(500, 1, x, y);
    for (HeadKind head : {HeadKind::evidential, HeadKind::sigmoid}) {
        TrainConfig cfg;
        cfg.head = head;
        cfg.epochs = 20;
        cfg.learning_rate = 1e-2;
        cfg.batch_size = 64;
        cfg.seed = 3;
        const TrainResult r = train(init_model({2, 8, head_width(head)}, 1, head), x, y, cfg);
        for (double l : r.report.train_loss) CHECK(std::isfinite(l));
        const auto p = ood_probabilities(r.model, x);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < y.size(); ++i) correct += (p[i] > 0.5) == (y[i] == 1);
        CHECK(static_cast<double>(correct) / static_cast<double>(y.size()) >= 0.99);
        CHECK(r.report.epochs_run == 20);
        CHECK(r.report.lambda.size() == 20);
    }
}

TEST_CASE("training is deterministic") {
    Tensor x;
    std::vector<std::uint8_t> y;
    blobs(200, 2, x, y);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 32;
    cfg.seed = 11;
    cfg.early_stopping.enabled = true;
    const auto m0 = init_model({2, 6, 2}, 5, HeadKind::evidential);
    const TrainResult a = train(m0, x, y, cfg);
    const TrainResult b = train(m0, x, y, cfg);
    CHECK(a.model == b.model);
    CHECK(a.report.train_loss == b.report.train_loss);
    cfg.seed = 12;
    CHECK_FALSE(train(m0, x, y, cfg).model == a.model);
}

TEST_CASE("early stopping returns the best-validation parameters") {
    // Noisy, overlapping classes with a large network overfit quickly.
    Rng rng(40);
    const Tensor x = random_matrix(400, 3, rng);
    const auto y = random_labels(400, rng);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.learning_rate = 3e-2;
    cfg.batch_size = 16;
    cfg.seed = 9;
    cfg.early_stopping = {true, 3, 0.25};
    const TrainResult r = train(init_model({3, 64, 64, 2}, 1, HeadKind::evidential), x, y, cfg);
    REQUIRE(!r.report.val_loss.empty());
    const auto best = std::min_element(r.report.val_loss.begin(), r.report.val_loss.end());
    CHECK(r.report.best_epoch == static_cast<int>(best - r.report.val_loss.begin()));
    CHECK(r.report.stopped_early);
    CHECK(r.report.stopped_epoch == r.report.best_epoch + 3);

    // Recompute the validation loss of the returned parameters on the same holdout.
    std::vector<std::size_t> order(400);
    std::iota(order.begin(), order.end(), 0);
    Rng(cfg.seed).split(0).shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> val(order.begin(), order.begin() + 100);
    std::sort(val.begin(), val.end());
    const BatchLoss v = loss_and_gradients(r.model, x, y, val, 0, nullptr, 1.0);
    CHECK(v.total == doctest::Approx(*best).epsilon(1e-12));
    for (double l : r.report.val_loss) CHECK(v.total <= l + 1e-12);
}

TEST_CASE("training rejects invalid inputs") {
    Tensor x;
    std::vector<std::uint8_t> y;
    blobs(50, 3, x, y);
    TrainConfig cfg;
    cfg.batch_size = 16;
    const auto m = init_model({2, 4, 2}, 1, HeadKind::evidential);
    auto bad = y;
    bad[7] = 2;
    CHECK_THROWS_AS(train(m, x, bad, cfg), DataError);
    CHECK_THROWS_AS(train(m, x, std::vector<std::uint8_t>(y.begin(), y.end() - 1), cfg), ShapeError);
    cfg.head = HeadKind::sigmoid;
    CHECK_THROWS_AS(train(m, x, y, cfg), ConfigError);
    cfg.head = HeadKind::evidential;
    cfg.batch_size = 1000;
    CHECK_THROWS_AS(train(m, x, y, cfg), DomainError);
    cfg.batch_size = 16;
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(train(m, x, y, cfg), ConfigError);
    cfg.learning_rate = 1e-3;
    CHECK_THROWS_AS(train(m, Tensor::matrix(100, 3), std::vector<std::uint8_t>(100, 0), cfg), ShapeError);
}

TEST_CASE("a non-finite loss aborts training with a diagnostic") {
    Tensor x = Tensor::matrix(64, 2, 1e308);
    std::vector<std::uint8_t> y(64, 1);
    TrainConfig cfg;
    cfg.batch_size = 16;
    const auto m = init_model({2, 8, 8, 2}, 1, HeadKind::evidential);
    CHECK_THROWS_AS(train(m, x, y, cfg), NumericalError);
}

TEST_CASE("dense prediction equals row-wise forward") {
    Rng rng(50);
    const EstimatorModel m = init_model({5, 7, 2}, 6, HeadKind::evidential);
    Tensor data({3, 4, 5}, 0.0);
    for (double& v : data.values()) v = rng.normal();
    const FeatureMap fm(data);
    const auto pred = std::get<DirichletMap>(predict_map(m, fm));
    const Tensor logits = forward(m, fm.flattened());
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const auto a = dirichlet_from_logits({logits(r * 4 + c, 0), logits(r * 4 + c, 1)});
            CHECK(pred.at(r, c)[0] == a[0]);
            CHECK(pred.at(r, c)[1] == a[1]);
            CHECK(pred.at(r, c)[0] >= 1.0);
        }
    }
    const Tensor lr = lr_map(PredictedMap(pred));
    CHECK(lr(2, 3) == lr_score(pred.at(2, 3)));
    CHECK_THROWS_AS(predict_map(m, FeatureMap(Tensor({2, 2, 4}, 0.0))), ShapeError);

    const EstimatorModel s = init_model({5, 7, 1}, 6, HeadKind::sigmoid);
    const auto ps = std::get<ProbabilityMap>(predict_map(s, fm));
    const Tensor zs = forward(s, fm.flattened());
    CHECK(ps.p1(1, 2) == sigmoid(zs(6, 0)));
}

TEST_CASE("zero-weight model scores every pixel 1") {
    EstimatorModel m = init_model({3, 4, 2}, 1, HeadKind::evidential);
    for (auto& layer : m.layers) std::fill(layer.weight.values().begin(), layer.weight.values().end(), 0.0);
    const Tensor lr = lr_map(predict_map(m, FeatureMap(Tensor({2, 3, 3}, 0.7))));
    for (double v : lr.values()) CHECK(v == 1.0);
}

TEST_CASE("checkpoint round trip") {
    const EstimatorModel m = init_model({4, 9, 3, 1}, 77, HeadKind::sigmoid, 0.05);
    const auto records = model_to_records(m);
    CHECK(model_from_records(records) == m);
    const auto path = std::filesystem::temp_directory_path() / "ulre_test_checkpoint.ulre";
    save_checkpoint(path, m);
    CHECK(load_checkpoint(path) == m);
    std::filesystem::remove(path);

    auto broken = records;
    broken.pop_back();
    CHECK_THROWS_AS(model_from_records(broken), DataError);
    auto bad_header = records;
    bad_header.front() = TensorRecord::from_bytes("header", {3}, {'{', 'x', '}'});
    CHECK_THROWS_AS(model_from_records(bad_header), DataError);
}

}  // TEST_SUITE
