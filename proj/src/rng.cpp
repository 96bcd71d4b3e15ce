#include "ulre/rng.hpp"

#include <cmath>
#include <numbers>

#include "ulre/errors.hpp"

namespace ulre {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw DomainError("Rng::below: n must be positive");
    // Largest multiple of n representable; draws above it are rejected.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Rng Rng::split(std::uint64_t index) const {
    return Rng(splitmix64(seed_ ^ splitmix64(index + 1)));
}

Tensor rng_standard_normal(Rng& rng, std::size_t n) {
    if (n == 0) throw DomainError("rng_standard_normal: n must be at least 1");
    Tensor out({n});
    for (double& v : out.values()) v = rng.normal();
    return out;
}

}  // namespace ulre
