#pragma once

#include <cstddef>

#include "ulre/tensor.hpp"

namespace ulre {

// Separable Gaussian blur of an H x W map. The 1-D kernel has radius
// ceil(3 sigma) and is renormalized after truncation, so constant maps are
// fixed points. Borders use half-sample symmetric reflection (d c b a | a b c d).
Tensor gaussian_blur(const Tensor& map, double sigma);

// Normalized 1-D kernel used by gaussian_blur, length 2 * ceil(3 sigma) + 1.
std::vector<double> gaussian_kernel(double sigma);

// Bilinear resize of an H x W map with half-pixel centers:
// src = (dst + 0.5) * (in / out) - 0.5, clamped to the valid range.
Tensor upsample_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w);

}  // namespace ulre
