#pragma once

#include <array>
#include <cstdint>

namespace ulre {

// Class index convention used everywhere: 0 = in-distribution, 1 = OOD.
enum class BinaryLabel : std::uint8_t { id = 0, ood = 1 };

constexpr std::size_t index_of(BinaryLabel y) noexcept { return static_cast<std::size_t>(y); }
constexpr std::array<double, 2> one_hot(BinaryLabel y) noexcept {
    return y == BinaryLabel::id ? std::array<double, 2>{1.0, 0.0} : std::array<double, 2>{0.0, 1.0};
}
BinaryLabel label_from_byte(std::uint8_t v);

using Logits = std::array<double, 2>;

// Logits are clamped to [-kLogitClamp, kLogitClamp] before exponentiation.
inline constexpr double kLogitClamp = 30.0;
// Probability clamp for the sigmoid head: p in [kProbEpsilon, 1 - kProbEpsilon].
inline constexpr double kProbEpsilon = 1e-12;

// Per-class evidence e = exp(o), strictly positive.
struct Evidence {
    std::array<double, 2> e;
};

// Concentration parameters of a binary Dirichlet, alpha = e + 1 >= 1.
class DirichletParams {
public:
    DirichletParams(double alpha_id, double alpha_ood);

    double alpha_id() const noexcept { return alpha_[0]; }
    double alpha_ood() const noexcept { return alpha_[1]; }
    double operator[](std::size_t k) const noexcept { return alpha_[k]; }
    const std::array<double, 2>& alpha() const noexcept { return alpha_; }
    double strength() const noexcept { return alpha_[0] + alpha_[1]; }

private:
    std::array<double, 2> alpha_;
};

struct LossBreakdown {
    double log_loss = 0.0;
    double kl_reg = 0.0;
    double lambda_t = 0.0;
    double total = 0.0;
};

Evidence evidence_from_logits(const Logits& o);
DirichletParams dirichlet_from_evidence(const Evidence& e);
inline DirichletParams dirichlet_from_logits(const Logits& o) {
    return dirichlet_from_evidence(evidence_from_logits(o));
}

// nu = K / S with K = 2.
double vacuity(const DirichletParams& a) noexcept;
// E[p] = alpha / S.
std::array<double, 2> expected_prob(const DirichletParams& a) noexcept;
// Likelihood-ratio score alpha_1 / alpha_0 (the strength cancels).
double lr_score(const DirichletParams& a) noexcept;
// Odds p1 / (1 - p1) for the sigmoid baseline; p1 is clamped first.
double lr_from_sigmoid(double p1);

double sigmoid(double z) noexcept;

// -log E[p_c] for the correct class c: log S - log alpha_c.
double edl_log_loss(const DirichletParams& a, BinaryLabel y) noexcept;

// KL(Dir(alpha~) || Dir(1)) where alpha~ keeps only the misleading evidence
// (correct-class entry reset to 1).
double edl_kl_reg(const DirichletParams& a, BinaryLabel y);

// KL(Dir(alpha) || Dir(1, 1)) for arbitrary alpha >= 1, via lgamma / digamma.
double dirichlet_kl_to_uniform(const std::array<double, 2>& alpha);

// min(1, epoch / 10); epochs count from 0.
double annealing_coefficient(int epoch);

LossBreakdown edl_total_loss(const DirichletParams& a, BinaryLabel y, int epoch);

// Binary cross-entropy with p1 clamped to [eps, 1 - eps].
double bce_loss(double p1, BinaryLabel y);

// d(total loss)/d(logits). Components whose logit lies outside the clamp
// range get zero gradient.
Logits edl_loss_grad(const Logits& o, BinaryLabel y, int epoch);
// Same gradient with an explicit KL weight in place of the epoch schedule.
Logits edl_loss_grad_weighted(const Logits& o, BinaryLabel y, double lambda);

// BCE evaluated on a logit z through the sigmoid, and its derivative in z.
double bce_loss_from_logit(double z, BinaryLabel y);
double bce_logit_grad(double z, BinaryLabel y) noexcept;

}  // namespace ulre
