#include "ulre/maps.hpp"

#include <algorithm>
#include <string>

#include "ulre/errors.hpp"

namespace ulre {

FeatureMap::FeatureMap(Tensor data) : data_(std::move(data)) {
    if (data_.rank() != 3) {
        throw ShapeError("feature map must be rank 3 (H x W x D), got rank " + std::to_string(data_.rank()));
    }
    if (data_.empty()) throw ShapeError("feature map dimensions must be positive");
    if (!data_.all_finite()) throw DataError("feature map contains non-finite values");
}

LabelMap::LabelMap(std::size_t height, std::size_t width)
    : height_(height), width_(width), values_(height * width, 0) {}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
    if (values_.size() != height * width) {
        throw ShapeError("label map has " + std::to_string(values_.size()) + " values for a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
    }
    require_binary_labels(values_);
}

std::size_t LabelMap::count_ood() const noexcept {
    return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

void require_binary_labels(const std::vector<std::uint8_t>& values) {
    const auto bad = std::find_if(values.begin(), values.end(), [](std::uint8_t v) { return v > 1; });
    if (bad != values.end()) {
        throw DataError("label value " + std::to_string(*bad) + " at index " +
                        std::to_string(bad - values.begin()) + " is not binary");
    }
}

}  // namespace ulre
