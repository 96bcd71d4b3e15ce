#include "ulre/special.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ulre/errors.hpp"

namespace ulre {
namespace {

void require_positive(double x, const char* fn) {
    if (!std::isfinite(x) || x <= 0.0) {
        throw DomainError(std::string(fn) + ": argument must be positive and finite, got " +
                          std::to_string(x));
    }
}

}  // namespace

double lgamma(double x) {
    require_positive(x, "lgamma");

    // ln Gamma(x) = ln Gamma(x + n) - ln(x (x+1) ... (x+n-1))
    double shift = 0.0;
    if (x < 10.0) {
        double prod = 1.0;
        while (x < 10.0) {
            prod *= x;
            x += 1.0;
        }
        shift = std::log(prod);
    }

    // Stirling series with Bernoulli coefficients B_2k / (2k (2k-1)).
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 / 12.0 +
               inv2 * (-1.0 / 360.0 +
                       inv2 * (1.0 / 1260.0 +
                               inv2 * (-1.0 / 1680.0 +
                                       inv2 * (1.0 / 1188.0 + inv2 * (-691.0 / 360360.0))))));
    const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
    return (x - 0.5) * std::log(x) - x + half_log_two_pi + series - shift;
}

double digamma(double x) {
    require_positive(x, "digamma");

    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double inv2 = 1.0 / (x * x);
    // sum_k B_2k / (2k x^2k)
    const double tail =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 -
                                        inv2 * (1.0 / 132.0 -
                                                inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    return acc + std::log(x) - 0.5 / x - tail;
}

double trigamma(double x) {
    require_positive(x, "trigamma");

    double acc = 0.0;
    while (x < 6.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // 1/x + 1/(2x^2) + sum_k B_2k / x^(2k+1)
    const double tail =
        inv * inv2 *
        (1.0 / 6.0 -
         inv2 * (1.0 / 30.0 -
                 inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0))))));
    return acc + inv + 0.5 * inv2 + tail;
}

}  // namespace ulre
