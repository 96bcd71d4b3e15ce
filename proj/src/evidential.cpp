#include "ulre/evidential.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ulre/errors.hpp"
#include "ulre/special.hpp"

namespace ulre {

BinaryLabel label_from_byte(std::uint8_t v) {
    if (v > 1) throw DataError("label value " + std::to_string(v) + " is not binary");
    return static_cast<BinaryLabel>(v);
}

DirichletParams::DirichletParams(double alpha_id, double alpha_ood) : alpha_{alpha_id, alpha_ood} {
    if (!(alpha_id >= 1.0) || !(alpha_ood >= 1.0) || !std::isfinite(alpha_id) ||
        !std::isfinite(alpha_ood)) {
        throw DomainError("Dirichlet parameters must be finite and >= 1, got (" +
                          std::to_string(alpha_id) + ", " + std::to_string(alpha_ood) + ")");
    }
}

Evidence evidence_from_logits(const Logits& o) {
    Evidence ev{};
    for (std::size_t k = 0; k < 2; ++k) {
        if (std::isnan(o[k])) throw NumericalError("evidence_from_logits: NaN logit");
        ev.e[k] = std::exp(std::clamp(o[k], -kLogitClamp, kLogitClamp));
    }
    return ev;
}

DirichletParams dirichlet_from_evidence(const Evidence& e) {
    return DirichletParams(e.e[0] + 1.0, e.e[1] + 1.0);
}

double vacuity(const DirichletParams& a) noexcept { return 2.0 / a.strength(); }

std::array<double, 2> expected_prob(const DirichletParams& a) noexcept {
    const double s = a.strength();
    return {a.alpha_id() / s, a.alpha_ood() / s};
}

double lr_score(const DirichletParams& a) noexcept { return a.alpha_ood() / a.alpha_id(); }

double lr_from_sigmoid(double p1) {
    if (!(p1 >= 0.0 && p1 <= 1.0)) throw DomainError("lr_from_sigmoid: probability outside [0, 1]");
    const double p = std::clamp(p1, kProbEpsilon, 1.0 - kProbEpsilon);
    return p / (1.0 - p);
}

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double ez = std::exp(z);
    return ez / (1.0 + ez);
}

double edl_log_loss(const DirichletParams& a, BinaryLabel y) noexcept {
    return std::log(a.strength()) - std::log(a[index_of(y)]);
}

double dirichlet_kl_to_uniform(const std::array<double, 2>& alpha) {
    const double s = alpha[0] + alpha[1];
    // Gamma(K) = Gamma(2) = 1, so its log vanishes.
    double kl = lgamma(s) - lgamma(alpha[0]) - lgamma(alpha[1]);
    const double psi_s = digamma(s);
    for (double a : alpha) kl += (a - 1.0) * (digamma(a) - psi_s);
    // Rounding can leave a tiny negative residue near alpha = (1, 1).
    return std::max(kl, 0.0);
}

double edl_kl_reg(const DirichletParams& a, BinaryLabel y) {
    std::array<double, 2> tilde = a.alpha();
    tilde[index_of(y)] = 1.0;
    return dirichlet_kl_to_uniform(tilde);
}

double annealing_coefficient(int epoch) {
    if (epoch < 0) throw DomainError("annealing_coefficient: epoch must be non-negative");
    return std::min(1.0, static_cast<double>(epoch) / 10.0);
}

LossBreakdown edl_total_loss(const DirichletParams& a, BinaryLabel y, int epoch) {
    LossBreakdown out;
    out.log_loss = edl_log_loss(a, y);
    out.kl_reg = edl_kl_reg(a, y);
    out.lambda_t = annealing_coefficient(epoch);
    out.total = out.log_loss + out.lambda_t * out.kl_reg;
    return out;
}

double bce_loss(double p1, BinaryLabel y) {
    if (!(p1 >= 0.0 && p1 <= 1.0)) throw DomainError("bce_loss: probability outside [0, 1]");
    const double p = std::clamp(p1, kProbEpsilon, 1.0 - kProbEpsilon);
    return y == BinaryLabel::ood ? -std::log(p) : -std::log1p(-p);
}

Logits edl_loss_grad(const Logits& o, BinaryLabel y, int epoch) {
    return edl_loss_grad_weighted(o, y, annealing_coefficient(epoch));
}

Logits edl_loss_grad_weighted(const Logits& o, BinaryLabel y, double lambda) {
    const Evidence ev = evidence_from_logits(o);
    const DirichletParams a = dirichlet_from_evidence(ev);
    const double s = a.strength();
    const std::size_t c = index_of(y);
    const std::size_t w = 1 - c;

    // dL_log/d alpha_k = 1/S - [k == c] / alpha_k
    std::array<double, 2> d_alpha{1.0 / s, 1.0 / s};
    d_alpha[c] -= 1.0 / a[c];

    // The KL term depends only on the wrong-class alpha (alpha~ = (1, a) up
    // to ordering); d/da KL = (a - 1) (psi'(a) - psi'(a + 1)) = (a - 1) / a^2.
    const double aw = a[w];
    d_alpha[w] += lambda * (aw - 1.0) / (aw * aw);

    Logits grad{};
    for (std::size_t k = 0; k < 2; ++k) {
        const bool inside = std::abs(o[k]) < kLogitClamp;
        grad[k] = inside ? ev.e[k] * d_alpha[k] : 0.0;
    }
    return grad;
}

namespace {

// ln(1 + e^x) without overflow or loss of precision.
double softplus(double x) noexcept { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Logit bounds equivalent to clamping p to [eps, 1 - eps].
const double kLogitBound = std::log((1.0 - kProbEpsilon) / kProbEpsilon);

}  // namespace

double bce_loss_from_logit(double z, BinaryLabel y) {
    if (std::isnan(z)) throw NumericalError("bce_loss_from_logit: NaN logit");
    // -ln p = softplus(-z) and -ln(1 - p) = softplus(z), with the same
    // probability clamp as bce_loss.
    const double zc = std::clamp(z, -kLogitBound, kLogitBound);
    return softplus(y == BinaryLabel::ood ? -zc : zc);
}

double bce_logit_grad(double z, BinaryLabel y) noexcept {
    // Zero where the probability clamp is active: the loss is flat there.
    if (!(std::abs(z) < kLogitBound)) return 0.0;
    return sigmoid(z) - (y == BinaryLabel::ood ? 1.0 : 0.0);
}

}  // namespace ulre
