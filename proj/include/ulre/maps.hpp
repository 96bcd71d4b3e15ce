#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ulre/tensor.hpp"

namespace ulre {

// Dense H x W x D grid of feature vectors.
class FeatureMap {
public:
    FeatureMap() = default;
    // Throws ShapeError unless data is rank 3 with non-zero dims, DataError
    // on non-finite values.
    explicit FeatureMap(Tensor data);

    std::size_t height() const noexcept { return data_.shape()[0]; }
    std::size_t width() const noexcept { return data_.shape()[1]; }
    std::size_t dim() const noexcept { return data_.shape()[2]; }
    std::size_t pixels() const noexcept { return height() * width(); }

    const Tensor& data() const noexcept { return data_; }
    // (H*W) x D view, one row per pixel.
    Tensor flattened() const { return data_.reshaped({pixels(), dim()}); }

private:
    Tensor data_;
};

// Per-pixel binary ground truth, 1 = OOD.
class LabelMap {
public:
    LabelMap() = default;
    LabelMap(std::size_t height, std::size_t width);
    // Throws DataError if any value is not 0 or 1.
    LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * width_ + c]; }
    void set(std::size_t r, std::size_t c, bool ood) noexcept { values_[r * width_ + c] = ood ? 1 : 0; }
    const std::vector<std::uint8_t>& values() const noexcept { return values_; }
    std::size_t count_ood() const noexcept;

    friend bool operator==(const LabelMap&, const LabelMap&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> values_;
};

// Throws DataError naming the first offending index.
void require_binary_labels(const std::vector<std::uint8_t>& values);

}  // namespace ulre
