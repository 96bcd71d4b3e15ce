#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ulre/synthetic.hpp"
#include "ulre/tensor.hpp"

namespace ulre {

// Strictly positive H x W likelihood-ratio scores.
class ScoreMap {
public:
    explicit ScoreMap(Tensor scores);

    std::size_t height() const noexcept { return scores_.shape()[0]; }
    std::size_t width() const noexcept { return scores_.shape()[1]; }
    const Tensor& scores() const noexcept { return scores_; }

private:
    Tensor scores_;
};

// Bilinear resize to (out_h, out_w), then Gaussian blur with `sigma`.
ScoreMap postprocess_scores(const ScoreMap& raw, std::size_t out_h, std::size_t out_w, double sigma = 1.0);

struct PRPoint {
    double threshold = 0.0;  // predict positive when score >= threshold
    std::size_t tp = 0;
    std::size_t fp = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fpr = 0.0;
};

// Operating points at every unique score, thresholds descending (so recall
// is non-decreasing along the vector and non-increasing as the threshold rises).
struct PRCurve {
    std::vector<PRPoint> points;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

// Throws DomainError unless both classes are present.
PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Non-interpolated AP: sum over thresholds of (R_n - R_{n-1}) P_n.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);
double average_precision(const PRCurve& curve);

// Lowest FPR among thresholds whose TPR is at least 0.95.
double fpr_at_95_tpr(std::span<const double> scores, std::span<const std::uint8_t> labels);
double fpr_at_95_tpr(const PRCurve& curve);

struct DetectionMetrics {
    double ap = 0.0;
    double fpr95 = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

DetectionMetrics evaluate_detection(std::span<const double> scores, std::span<const std::uint8_t> labels);
// {"ap": ..., "fpr95": ..., "n_pos": ..., "n_neg": ...}
std::string metrics_json(const DetectionMetrics& m);

// 1 - x.mu / (|x| |mu|). Throws DomainError on a zero vector.
double cosine_distance(std::span<const double> x, std::span<const double> mu);

struct DistanceBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double mean_prob = 0.0;  // meaningful only when has_mean
    bool has_mean = false;
};

struct BinnedAnalysis {
    std::vector<DistanceBin> bins;

    std::size_t total_count() const noexcept;
};

inline constexpr double kDefaultBinWidth = 0.05;

// Per row: unit-normalize, take the minimum cosine distance to any class
// mean, bin by `bin_width` starting at 0, and average `probs` per bin. Bins
// cover [0, max observed distance]; empty bins keep count 0 and no mean.
BinnedAnalysis extrapolation_analysis(const Tensor& features, const ClassMeans& means,
                                      std::span<const double> probs, double bin_width = kDefaultBinWidth);

// Minimum cosine distance from each row to the class means.
std::vector<double> nearest_mean_distances(const Tensor& features, const ClassMeans& means);

// "bin_lo,bin_hi,count,mean_prob" followed by one line per bin; empty bins
// print "nan" for the mean.
std::string binned_csv(const BinnedAnalysis& analysis);

}  // namespace ulre
