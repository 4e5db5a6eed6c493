#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace xlir::numeric {

// Dense row-major array of doubles. Rank 1..4 in practice; scalars are {1}.
class Array {
public:
    Array() = default;
    explicit Array(std::vector<std::int64_t> shape);
    Array(std::vector<std::int64_t> shape, std::vector<double> data);

    static Array scalar(double v) { return Array({1}, {v}); }
    static Array full(std::vector<std::int64_t> shape, double v);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    bool same_shape(const Array& other) const { return shape_ == other.shape_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[i]; }
    double operator[](std::int64_t i) const { return data_[i]; }

    double& at(std::int64_t i, std::int64_t j) { return data_[i * shape_[1] + j]; }
    double at(std::int64_t i, std::int64_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    // Value of a size-1 array.
    double item() const;

    bool all_finite() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_size(const std::vector<std::int64_t>& shape);
std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace xlir::numeric
