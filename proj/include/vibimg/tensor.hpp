#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace vibimg {

/// Dense row-major array of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)), data(element_count(shape), fill) {}
    Tensor(std::vector<std::size_t> dims, std::vector<double> values);

    static std::size_t element_count(std::span<const std::size_t> dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool all_finite() const;

    bool operator==(const Tensor&) const = default;
};

std::string shape_string(std::span<const std::size_t> shape);

/// Throws ShapeMismatch naming `what` unless a.shape == b.shape.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace vibimg
