#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance runner. None of these call into the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <vector>

#include "ulre/model.hpp"
#include "ulre/rng.hpp"
#include "ulre/tensor_file.hpp"

namespace ulre_test {

// Adaptive Simpson quadrature of f on [a, b].
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                               int max_depth = 50) {
    struct Rec {
        static double run(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                          double fb, double whole, double tol, int depth) {
            const double m = 0.5 * (a + b);
            const double lm = 0.5 * (a + m);
            const double rm = 0.5 * (m + b);
            const double flm = f(lm);
            const double frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            const double delta = left + right - whole;
            if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
            return run(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
                   run(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
        }
    };
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return Rec::run(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// KL(Dir(a0, a1) || Dir(1, 1)) by quadrature over the 1-simplex. The uniform
// Dirichlet has unit density there, so the divergence is the integral of
// f ln f for the Beta(a1, a0) density f of the second component.
inline double kl_to_uniform_quadrature(double a0, double a1) {
    const double log_norm = std::lgamma(a0 + a1) - std::lgamma(a0) - std::lgamma(a1);
    auto integrand = [&](double p) {
        if (p <= 0.0 || p >= 1.0) {
            // Limits at the endpoints: f ln f -> 0 when f -> 0; otherwise finite.
            const double q = p <= 0.0 ? a1 : a0;
            if (q > 1.0) return 0.0;
            const double f = std::exp(log_norm);
            return f * std::log(f);
        }
        const double log_f = log_norm + (a1 - 1.0) * std::log(p) + (a0 - 1.0) * std::log1p(-p);
        return std::exp(log_f) * log_f;
    };
    return adaptive_simpson(integrand, 0.0, 1.0, 1e-13);
}

// Step-wise average precision and FPR at 95% TPR by explicit counting at
// every distinct score threshold (O(n * thresholds)).
struct BruteMetrics {
    double ap = 0.0;
    double fpr95 = 0.0;
};

inline BruteMetrics brute_force_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
    std::size_t pos = 0;
    for (auto l : labels) pos += l;
    const std::size_t neg = labels.size() - pos;
    BruteMetrics out;
    out.fpr95 = 1.0;
    double prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0;
        std::size_t fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) (labels[i] ? tp : fp) += 1;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        out.ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        if (100 * tp >= 95 * pos) out.fpr95 = std::min(out.fpr95, static_cast<double>(fp) / static_cast<double>(neg));
    }
    return out;
}

// Central finite-difference gradient of the mean loss with respect to every
// parameter, in layer order (weights row-major, then biases).
inline std::vector<double> numeric_gradient(ulre::EstimatorModel model, const ulre::Tensor& x,
                                            std::span<const std::uint8_t> y, int epoch, double h) {
    std::vector<double> g;
    auto loss = [&](const ulre::EstimatorModel& m) {
        return ulre::loss_and_gradients(m, x, y, {}, epoch, nullptr).total;
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto perturb = [&](double& p) {
            const double saved = p;
            p = saved + h;
            const double up = loss(model);
            p = saved - h;
            const double down = loss(model);
            p = saved;
            g.push_back((up - down) / (2.0 * h));
        };
        for (double& w : model.layers[l].weight.values()) perturb(w);
        for (double& b : model.layers[l].bias) perturb(b);
    }
    return g;
}

inline std::vector<double> flatten(const ulre::Gradients& grads) {
    std::vector<double> g;
    for (const auto& layer : grads.layers) {
        g.insert(g.end(), layer.weight.values().begin(), layer.weight.values().end());
        g.insert(g.end(), layer.bias.begin(), layer.bias.end());
    }
    return g;
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|), skipping entries where both are
// below `floor` in magnitude (relative error is undefined at zero).
inline double max_relative_error(std::span<const double> a, std::span<const double> n, double floor = 1e-10) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max(std::abs(a[i]), std::abs(n[i]));
        if (scale < floor) continue;
        worst = std::max(worst, std::abs(a[i] - n[i]) / scale);
    }
    return worst;
}

// A random record set: 0-5 records, mixed dtypes, ranks 0-3, arbitrary
// byte names, and f64 payloads drawn from raw bit patterns (including NaNs,
// infinities, and subnormals) so that bit exactness is actually exercised.
inline std::vector<ulre::TensorRecord> random_records(ulre::Rng& rng) {
    std::vector<ulre::TensorRecord> records;
    const auto n = rng.below(6);
    for (std::uint64_t r = 0; r < n; ++r) {
        ulre::TensorRecord rec;
        const auto name_len = rng.below(12);
        for (std::uint64_t i = 0; i < name_len; ++i) rec.name.push_back(static_cast<char>(rng.below(256)));
        const auto rank = rng.below(4);
        std::size_t count = 1;
        for (std::uint64_t i = 0; i < rank; ++i) {
            rec.dims.push_back(rng.below(5));
            count *= rec.dims.back();
        }
        if (rng.below(2) == 0) {
            std::vector<double> v(count);
            for (double& x : v) {
                const std::uint64_t bits = rng.next_u64();
                std::memcpy(&x, &bits, sizeof x);
            }
            rec.payload = std::move(v);
        } else {
            std::vector<std::uint8_t> v(count);
            for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(256));
            rec.payload = std::move(v);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace ulre_test
