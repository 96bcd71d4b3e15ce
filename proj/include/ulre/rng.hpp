#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

#include "ulre/tensor.hpp"

namespace ulre {

// Seeded pseudo-random stream.
//
// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. Every derived quantity is computed here rather than through
// <random> distributions, whose algorithms are implementation-defined:
//   uniform()  = (bits >> 11) * 2^-53, in [0, 1)
//   below(n)   = rejection sampling on the top bits
//   normal()   = Box-Muller on two uniforms, both outputs used in order
// Streams are therefore bitwise identical on every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent stream for sub-task `index`, seeded via splitmix64.
    Rng split(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// n i.i.d. standard normal draws as a rank-1 tensor.
Tensor rng_standard_normal(Rng& rng, std::size_t n);

}  // namespace ulre
