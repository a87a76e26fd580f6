#include "vibimg/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "vibimg/error.hpp"

namespace vibimg {

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
        throw Error(ErrorCode::ShapeMismatch, "shape " + shape_string(shape) + " needs " +
                                                  std::to_string(element_count(shape)) + " values, got " +
                                                  std::to_string(data.size()));
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape != b.shape) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(what) + ": " + shape_string(a.shape) + " vs " + shape_string(b.shape));
    }
}

} // namespace vibimg
