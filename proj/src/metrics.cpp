#include "ulre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ulre/errors.hpp"
#include "ulre/image.hpp"

namespace ulre {

ScoreMap::ScoreMap(Tensor scores) : scores_(std::move(scores)) {
    if (scores_.rank() != 2 || scores_.empty()) throw ShapeError("score map must be a non-empty H x W tensor");
    for (double v : scores_.values()) {
        if (!std::isfinite(v) || !(v > 0.0)) throw DomainError("score map values must be finite and positive");
    }
}

ScoreMap postprocess_scores(const ScoreMap& raw, std::size_t out_h, std::size_t out_w, double sigma) {
    if (out_h == 0 || out_w == 0) throw DomainError("postprocess_scores: output size must be positive");
    return ScoreMap(gaussian_blur(upsample_bilinear(raw.scores(), out_h, out_w), sigma));
}

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
    PRCurve curve;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1) throw DataError("label value at index " + std::to_string(i) + " is not binary");
        if (std::isnan(scores[i])) throw DomainError("score at index " + std::to_string(i) + " is NaN");
        (labels[i] ? curve.n_pos : curve.n_neg)++;
    }
    if (curve.n_pos == 0 || curve.n_neg == 0) {
        throw DomainError("detection metrics need at least one positive and one negative");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        // Equal scores enter together.
        while (i < order.size() && scores[order[i]] == t) {
            (labels[order[i]] ? tp : fp)++;
            ++i;
        }
        PRPoint p;
        p.threshold = t;
        p.tp = tp;
        p.fp = fp;
        p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        p.recall = static_cast<double>(tp) / static_cast<double>(curve.n_pos);
        p.fpr = static_cast<double>(fp) / static_cast<double>(curve.n_neg);
        curve.points.push_back(p);
    }
    return curve;
}

double average_precision(const PRCurve& curve) {
    double ap = 0.0;
    std::size_t prev_tp = 0;
    for (const PRPoint& p : curve.points) {
        ap += static_cast<double>(p.tp - prev_tp) / static_cast<double>(curve.n_pos) * p.precision;
        prev_tp = p.tp;
    }
    return ap;
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return average_precision(pr_curve(scores, labels));
}

double fpr_at_95_tpr(const PRCurve& curve) {
    // FPR only grows as the threshold falls, so the first point reaching the
    // target TPR has the lowest admissible FPR. Integer test: tp / P >= 95 / 100.
    for (const PRPoint& p : curve.points) {
        if (100 * p.tp >= 95 * curve.n_pos) return p.fpr;
    }
    return 1.0;
}

double fpr_at_95_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    return fpr_at_95_tpr(pr_curve(scores, labels));
}

DetectionMetrics evaluate_detection(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    const PRCurve curve = pr_curve(scores, labels);
    return {average_precision(curve), fpr_at_95_tpr(curve), curve.n_pos, curve.n_neg};
}

std::string metrics_json(const DetectionMetrics& m) {
    nlohmann::ordered_json j;
    j["ap"] = m.ap;
    j["fpr95"] = m.fpr95;
    j["n_pos"] = m.n_pos;
    j["n_neg"] = m.n_neg;
    return j.dump(2);
}

double cosine_distance(std::span<const double> x, std::span<const double> mu) {
    if (x.size() != mu.size()) throw ShapeError("cosine_distance: vectors differ in length");
    double dot = 0.0, nx = 0.0, nm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * mu[i];
        nx += x[i] * x[i];
        nm += mu[i] * mu[i];
    }
    if (!(nx > 0.0) || !(nm > 0.0)) throw DomainError("cosine_distance: zero vector");
    const double cos = std::clamp(dot / (std::sqrt(nx) * std::sqrt(nm)), -1.0, 1.0);
    return 1.0 - cos;
}

std::vector<double> nearest_mean_distances(const Tensor& features, const ClassMeans& means) {
    if (features.rank() != 2) throw ShapeError("features must be N x D");
    if (means.classes.empty()) throw DomainError("no class means");
    if (means.dim() != features.dim(1)) throw ShapeError("class mean dimension differs from features");
    const std::size_t n = features.dim(0);
    const std::size_t d = features.dim(1);
    std::vector<double> out(n);
    std::vector<double> unit(d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = features.row(i);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) throw DomainError("feature row " + std::to_string(i) + " is a zero vector");
        for (std::size_t k = 0; k < d; ++k) unit[k] = row[k] / norm;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [id, m] : means.classes) best = std::min(best, cosine_distance(unit, m.unit_mean));
        out[i] = best;
    }
    return out;
}

BinnedAnalysis extrapolation_analysis(const Tensor& features, const ClassMeans& means, std::span<const double> probs,
                                      double bin_width) {
    if (!(bin_width > 0.0)) throw DomainError("bin_width must be positive");
    if (probs.size() != features.dim(0)) throw ShapeError("one probability per feature row required");
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("probabilities must lie in [0, 1]");
    }
    const std::vector<double> dist = nearest_mean_distances(features, means);
    const double max_d = dist.empty() ? 0.0 : *std::max_element(dist.begin(), dist.end());
    const auto n_bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(max_d / bin_width)));

    BinnedAnalysis out;
    out.bins.resize(n_bins);
    std::vector<double> sums(n_bins, 0.0);
    for (std::size_t b = 0; b < n_bins; ++b) {
        out.bins[b].lo = static_cast<double>(b) * bin_width;
        out.bins[b].hi = static_cast<double>(b + 1) * bin_width;
    }
    for (std::size_t i = 0; i < dist.size(); ++i) {
        const auto b = std::min(static_cast<std::size_t>(dist[i] / bin_width), n_bins - 1);
        ++out.bins[b].count;
        sums[b] += probs[i];
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
        DistanceBin& bin = out.bins[b];
        if (bin.count > 0) {
            bin.mean_prob = sums[b] / static_cast<double>(bin.count);
            bin.has_mean = true;
        }
    }
    return out;
}

std::size_t BinnedAnalysis::total_count() const noexcept {
    std::size_t n = 0;
    for (const DistanceBin& b : bins) n += b.count;
    return n;
}

std::string binned_csv(const BinnedAnalysis& analysis) {
    std::ostringstream out;
    out.precision(17);
    out << "bin_lo,bin_hi,count,mean_prob\n";
    for (const DistanceBin& b : analysis.bins) {
        out << b.lo << ',' << b.hi << ',' << b.count << ',';
        if (b.has_mean) {
            out << b.mean_prob;
        } else {
            out << "nan";
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace ulre
