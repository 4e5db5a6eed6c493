#include "xlir/array.hpp"

#include <cmath>

#include "xlir/common.hpp"

namespace xlir::numeric {

std::int64_t shape_size(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

void validate_shape(const std::vector<std::int64_t>& shape) {
    if (shape.empty()) throw ContractError("Array: shape must have at least one dimension");
    for (auto d : shape) {
        if (d < 1) throw ContractError("Array: dimensions must be positive, got " + shape_string(shape));
    }
}

}  // namespace

Array::Array(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
}

Array::Array(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ContractError("Array: data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_string(shape_));
    }
}

Array Array::full(std::vector<std::int64_t> shape, double v) {
    Array a(std::move(shape));
    for (auto& x : a.data_) x = v;
    return a;
}

double Array::item() const {
    if (size() != 1) throw ContractError("Array::item: size is " + std::to_string(size()));
    return data_[0];
}

bool Array::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace xlir::numeric
