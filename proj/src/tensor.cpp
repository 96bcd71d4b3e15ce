#include "ulre/tensor.hpp"

#include <cmath>
#include <string>

#include "ulre/errors.hpp"

namespace ulre {

std::size_t shape_product(std::span<const std::size_t> shape) noexcept {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape product " + std::to_string(shape_product(shape_)));
    }
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(shape_.size()));
    }
    return shape_[axis];
}

std::span<double> Tensor::row(std::size_t i) noexcept {
    const std::size_t stride = (shape_.empty() || shape_[0] == 0) ? 0 : data_.size() / shape_[0];
    return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::row(std::size_t i) const noexcept {
    const std::size_t stride = (shape_.empty() || shape_[0] == 0) ? 0 : data_.size() / shape_[0];
    return std::span<const double>(data_).subspan(i * stride, stride);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace ulre
