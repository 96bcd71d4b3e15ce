#include "ulre/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ulre/errors.hpp"

namespace ulre {
namespace {

void require_map(const Tensor& map, const char* fn) {
    if (map.rank() != 2) {
        throw ShapeError(std::string(fn) + ": expected a rank-2 map, got rank " +
                         std::to_string(map.rank()));
    }
    if (map.empty()) {
        throw DomainError(std::string(fn) + ": empty map");
    }
    if (!map.all_finite()) {
        throw DomainError(std::string(fn) + ": map has non-finite values");
    }
}

// Half-sample symmetric index into [0, n).
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    if (m >= static_cast<std::ptrdiff_t>(n)) m = period - 1 - m;
    return static_cast<std::size_t>(m);
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("gaussian_kernel: sigma must be positive, got " + std::to_string(sigma));
    }
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        total += w;
    }
    for (double& w : kernel) w /= total;
    return kernel;
}

Tensor gaussian_blur(const Tensor& map, double sigma) {
    require_map(map, "gaussian_blur");
    const std::vector<double> kernel = gaussian_kernel(sigma);
    const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
    const std::size_t h = map.dim(0);
    const std::size_t w = map.dim(1);

    Tensor horizontal = Tensor::matrix(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                const std::size_t src = reflect(static_cast<std::ptrdiff_t>(c) + k, w);
                acc += kernel[static_cast<std::size_t>(k + radius)] * map(r, src);
            }
            horizontal(r, c) = acc;
        }
    }

    Tensor out = Tensor::matrix(h, w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                const std::size_t src = reflect(static_cast<std::ptrdiff_t>(r) + k, h);
                acc += kernel[static_cast<std::size_t>(k + radius)] * horizontal(src, c);
            }
            out(r, c) = acc;
        }
    }
    return out;
}

Tensor upsample_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w) {
    require_map(map, "upsample_bilinear");
    if (out_h == 0 || out_w == 0) {
        throw DomainError("upsample_bilinear: output size must be at least 1x1");
    }
    const std::size_t in_h = map.dim(0);
    const std::size_t in_w = map.dim(1);
    if (in_h == out_h && in_w == out_w) return map;

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> result(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        const double max_src = static_cast<double>(in - 1);
        for (std::size_t d = 0; d < out; ++d) {
            const double src =
                std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, max_src);
            const auto lo = static_cast<std::size_t>(std::floor(src));
            const std::size_t hi = std::min(lo + 1, in - 1);
            result[d] = {lo, hi, src - static_cast<double>(lo)};
        }
        return result;
    };
    const std::vector<Tap> rows = taps(in_h, out_h);
    const std::vector<Tap> cols = taps(in_w, out_w);

    Tensor out = Tensor::matrix(out_h, out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        const Tap& ty = rows[r];
        for (std::size_t c = 0; c < out_w; ++c) {
            const Tap& tx = cols[c];
            const double top = map(ty.lo, tx.lo) + tx.frac * (map(ty.lo, tx.hi) - map(ty.lo, tx.lo));
            const double bottom =
                map(ty.hi, tx.lo) + tx.frac * (map(ty.hi, tx.hi) - map(ty.hi, tx.lo));
            out(r, c) = top + ty.frac * (bottom - top);
        }
    }
    return out;
}

}  // namespace ulre
