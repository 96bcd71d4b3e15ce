#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "support.hpp"
#include "ulre/errors.hpp"
#include "ulre/metrics.hpp"
#include "ulre/rng.hpp"

using namespace ulre;

namespace {

struct Instance {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
};

// Tie-heavy instances quantize scores to a handful of levels.
Instance random_instance(Rng& rng, std::size_t n, int levels) {
    Instance inst;
    for (std::size_t i = 0; i < n; ++i) {
        const auto y = static_cast<std::uint8_t>(rng.below(4) == 0 ? 1 : 0);
        double s = rng.normal() + (y ? 1.0 : 0.0);
        if (levels > 0) s = std::round(s * levels) / levels;
        inst.scores.push_back(s);
        inst.labels.push_back(y);
    }
    inst.labels[0] = 1;
    inst.labels[1] = 0;
    return inst;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("average precision worked examples") {
    const std::vector<double> s = {0.9, 0.8, 0.7, 0.6};
    const std::vector<std::uint8_t> y = {1, 0, 1, 0};
    CHECK(std::abs(average_precision(s, y) - 5.0 / 6.0) <= 1e-15);
    CHECK(std::abs(ulre_test::brute_force_metrics(s, y).ap - 5.0 / 6.0) <= 1e-15);
    CHECK(average_precision(s, std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
    // Everything tied: one threshold, precision = prevalence.
    CHECK(average_precision(std::vector<double>(4, 1.0), y) == 0.5);
}

TEST_CASE("FPR at 95% TPR worked examples") {
    std::vector<double> s(40, 0.0);
    std::vector<std::uint8_t> y(40, 0);
    for (int i = 0; i < 20; ++i) {
        s[i] = 2.0;
        y[i] = 1;
    }
    for (int i = 20; i < 39; ++i) s[i] = 1.0;
    s[39] = 3.0;
    CHECK(fpr_at_95_tpr(s, y) == 0.05);
    CHECK(fpr_at_95_tpr(std::vector<double>(10, 0.3), std::vector<std::uint8_t>{1, 0, 1, 0, 1, 0, 1, 0, 1, 0}) == 1.0);
    CHECK(fpr_at_95_tpr(std::vector<double>{4, 3, 2, 1}, std::vector<std::uint8_t>{1, 1, 0, 0}) == 0.0);
}

TEST_CASE("metrics reject one-class or mismatched input") {
    const std::vector<double> s = {1, 2, 3};
    CHECK_THROWS_AS(average_precision(s, std::vector<std::uint8_t>{1, 1, 1}), DomainError);
    CHECK_THROWS_AS(fpr_at_95_tpr(s, std::vector<std::uint8_t>{0, 0, 0}), DomainError);
    CHECK_THROWS(average_precision(s, std::vector<std::uint8_t>{0, 1}));
    CHECK_THROWS(average_precision(std::vector<double>{1, NAN, 2}, std::vector<std::uint8_t>{0, 1, 0}));
}

TEST_CASE("metrics match the brute-force oracle, including heavy ties") {
    Rng rng(77);
    for (int t = 0; t < 20; ++t) {
        const Instance inst = random_instance(rng, 1000, t % 2 == 0 ? 0 : 1 + t % 4);
        const auto brute = ulre_test::brute_force_metrics(inst.scores, inst.labels);
        CHECK(std::abs(average_precision(inst.scores, inst.labels) - brute.ap) <= 1e-12);
        CHECK(fpr_at_95_tpr(inst.scores, inst.labels) == brute.fpr95);
    }
}

TEST_CASE("PR curve bookkeeping") {
    Rng rng(5);
    const Instance inst = random_instance(rng, 500, 3);
    const PRCurve c = pr_curve(inst.scores, inst.labels);
    CHECK(c.n_pos + c.n_neg == 500);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        CHECK(c.points[i].threshold < c.points[i - 1].threshold);
        CHECK(c.points[i].recall >= c.points[i - 1].recall);
        CHECK(c.points[i].tp + c.points[i].fp > c.points[i - 1].tp + c.points[i - 1].fp);
    }
    CHECK(c.points.back().tp == c.n_pos);
    CHECK(c.points.back().fp == c.n_neg);
    CHECK(average_precision(c) == average_precision(inst.scores, inst.labels));
}

TEST_CASE("AP is invariant under strictly increasing transforms") {
    Rng rng(8);
    for (int t = 0; t < 5; ++t) {
        Instance inst = random_instance(rng, 1000, t);
        std::vector<double> lr(inst.scores.size());
        std::transform(inst.scores.begin(), inst.scores.end(), lr.begin(), [](double s) { return std::exp(s); });
        const double ap = average_precision(inst.scores, inst.labels);
        CHECK(average_precision(lr, inst.labels) == ap);
        std::vector<double> cubed(inst.scores.size());
        std::transform(inst.scores.begin(), inst.scores.end(), cubed.begin(),
                       [](double s) { return s * s * s + 3.0 * s; });
        CHECK(average_precision(cubed, inst.labels) == ap);
        CHECK(fpr_at_95_tpr(lr, inst.labels) == fpr_at_95_tpr(inst.scores, inst.labels));
    }
}

TEST_CASE("FPR95 does not increase when a negative's score decreases") {
    Rng rng(9);
    Instance inst = random_instance(rng, 300, 2);
    double prev = fpr_at_95_tpr(inst.scores, inst.labels);
    for (int step = 0; step < 200; ++step) {
        std::size_t i = rng.below(inst.scores.size());
        while (inst.labels[i] != 0) i = rng.below(inst.scores.size());
        inst.scores[i] -= rng.uniform(0.0, 1.0);
        const double now = fpr_at_95_tpr(inst.scores, inst.labels);
        CHECK(now <= prev);
        prev = now;
    }
}

TEST_CASE("null-model AP equals the prevalence") {
    Rng rng(10);
    std::vector<double> s(10000);
    std::vector<std::uint8_t> y(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = rng.uniform();
        y[i] = static_cast<std::uint8_t>(i % 2);
    }
    CHECK(std::abs(average_precision(s, y) - 0.5) <= 0.02);
}

TEST_CASE("metrics JSON") {
    const DetectionMetrics m = evaluate_detection(std::vector<double>{0.9, 0.8, 0.7, 0.6},
                                                  std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(m.n_pos == 2);
    CHECK(m.n_neg == 2);
    const std::string j = metrics_json(m);
    CHECK(j.find("\"ap\"") != std::string::npos);
    CHECK(j.find("\"fpr95\"") != std::string::npos);
    CHECK(j.find("\"n_pos\": 2") != std::string::npos);
}

TEST_CASE("score post-processing") {
    const ScoreMap c(Tensor({4, 5}, 2.5));
    const ScoreMap up = postprocess_scores(c, 11, 7);
    CHECK(up.height() == 11);
    CHECK(up.width() == 7);
    for (double v : up.scores().values()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));

    Rng rng(3);
    Tensor t({6, 6}, 0.0);
    for (double& v : t.values()) v = std::exp(3.0 * rng.normal());
    for (double v : postprocess_scores(ScoreMap(t), 20, 13, 1.5).scores().values()) CHECK(v > 0.0);

    // Interior impulse: upsampling 1:1 is the identity, blur preserves mass.
    Tensor imp({15, 15}, 1e-3);
    imp(7, 7) = 1.0;
    const Tensor out = postprocess_scores(ScoreMap(imp), 15, 15).scores();
    double mass = 0.0;
    for (double v : out.values()) mass += v - 1e-3;
    CHECK(mass == doctest::Approx(1.0 - 1e-3).epsilon(1e-12));

    CHECK_THROWS(ScoreMap(Tensor({2, 2}, 0.0)));
    CHECK_THROWS(ScoreMap(Tensor({2, 2}, -1.0)));
    CHECK_THROWS(postprocess_scores(c, 0, 4));
    CHECK_THROWS(postprocess_scores(c, 4, 4, 0.0));
}

TEST_CASE("cosine distance") {
    const std::vector<double> mu = {1.0, 2.0, -0.5};
    CHECK(std::abs(cosine_distance(mu, mu)) <= 1e-15);
    CHECK(std::abs(cosine_distance(std::vector<double>{3, 0}, std::vector<double>{0, -2}) - 1.0) <= 1e-15);
    CHECK(std::abs(cosine_distance(std::vector<double>{-1, -2, 0.5}, mu) - 2.0) <= 1e-15);
    CHECK_THROWS_AS(cosine_distance(std::vector<double>{0, 0, 0}, mu), DomainError);
    CHECK_THROWS(cosine_distance(std::vector<double>{1, 0}, mu));
}

TEST_CASE("extrapolation binning") {
    const Tensor means_src({2, 3}, std::vector<double>{1, 0, 0, 0, 2, 0});
    const ClassMeans means = class_means(means_src, std::vector<std::uint8_t>{0, 1});

    // Every row on a class mean: one occupied bin at distance 0.
    Tensor on({4, 3}, std::vector<double>{5, 0, 0, 0, 1, 0, 2, 0, 0, 0, 3, 0});
    const BinnedAnalysis a = extrapolation_analysis(on, means, std::vector<double>(4, 0.3));
    REQUIRE(a.bins.size() == 1);
    CHECK(a.bins[0].lo == 0.0);
    CHECK(a.bins[0].count == 4);
    CHECK(a.bins[0].mean_prob == doctest::Approx(0.3).epsilon(1e-15));

    // Rows at distance 0 and 1 (orthogonal to both means), nothing between.
    Tensor mixed({3, 3}, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0, -4});
    const BinnedAnalysis b = extrapolation_analysis(mixed, means, std::vector<double>{0.1, 0.6, 0.8}, 0.25);
    CHECK(b.total_count() == 3);
    CHECK(b.bins.front().count == 1);
    CHECK(b.bins.back().count == 2);
    CHECK(b.bins.back().mean_prob == doctest::Approx(0.7));
    std::size_t empty = 0;
    for (const auto& bin : b.bins) empty += bin.count == 0 ? 1 : 0;
    CHECK(empty >= 1);
    for (const auto& bin : b.bins)
        if (bin.count == 0) CHECK_FALSE(bin.has_mean);
    for (std::size_t i = 1; i < b.bins.size(); ++i) CHECK(b.bins[i].lo == b.bins[i - 1].hi);

    const std::string csv = binned_csv(b);
    CHECK(csv.rfind("bin_lo,bin_hi,count,mean_prob\n", 0) == 0);
    CHECK(csv.find("nan") != std::string::npos);

    Rng rng(12);
    Tensor rnd({500, 3}, 0.0);
    for (double& v : rnd.values()) v = rng.normal();
    std::vector<double> p(500);
    for (double& v : p) v = rng.uniform();
    CHECK(extrapolation_analysis(rnd, means, p, 0.1).total_count() == 500);
    const auto d = nearest_mean_distances(rnd, means);
    for (std::size_t i = 0; i < 500; ++i) {
        const double expect = std::min(cosine_distance(rnd.row(i), means.classes.at(0).mean),
                                       cosine_distance(rnd.row(i), means.classes.at(1).mean));
        CHECK(std::abs(d[i] - expect) <= 1e-12);
    }

    CHECK_THROWS_AS(extrapolation_analysis(Tensor({1, 3}, 0.0), means, std::vector<double>{0.5}), DomainError);
    CHECK_THROWS(extrapolation_analysis(on, means, std::vector<double>{0.3, 0.3, 0.3, 1.5}));
    CHECK_THROWS(extrapolation_analysis(on, means, std::vector<double>{0.3}));
}

}  // TEST_SUITE
