#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cslc/errors.hpp"

namespace cslc {

inline int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Periodic real-valued square lattice field, row-major storage.
class Field2D {
public:
    Field2D() = default;
    explicit Field2D(int side, double fill = 0.0) : side_(side), data_(static_cast<size_t>(side) * side, fill) {
        if (side <= 0) throw std::invalid_argument("Field2D: side must be positive");
    }

    int side() const { return side_; }
    size_t size() const { return data_.size(); }

    double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * side_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * side_ + c]; }

    double wrapped(int r, int c) const {
        return data_[static_cast<size_t>(wrap_index(r, side_)) * side_ + wrap_index(c, side_)];
    }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    Field2D& operator+=(const Field2D& o) {
        if (o.side_ != side_) throw std::invalid_argument("Field2D += shape mismatch");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    double squared_norm() const {
        double s = 0;
        for (double v : data_) s += v * v;
        return s;
    }

    double mean() const {
        double s = 0;
        for (double v : data_) s += v;
        return data_.empty() ? 0.0 : s / static_cast<double>(data_.size());
    }

private:
    int side_ = 0;
    std::vector<double> data_;
};

// Batched container of equally sized fields, sample-major.
class FieldStack {
public:
    FieldStack() = default;
    FieldStack(int count, int side) : side_(side), data_(static_cast<size_t>(count) * side * side, 0.0) {}

    int count() const { return side_ == 0 ? 0 : static_cast<int>(data_.size() / (static_cast<size_t>(side_) * side_)); }
    int side() const { return side_; }

    std::span<double> sample(int i) {
        size_t d = static_cast<size_t>(side_) * side_;
        return {data_.data() + d * i, d};
    }
    std::span<const double> sample(int i) const {
        size_t d = static_cast<size_t>(side_) * side_;
        return {data_.data() + d * i, d};
    }

    Field2D field(int i) const {
        Field2D f(side_);
        auto s = sample(i);
        std::copy(s.begin(), s.end(), f.data());
        return f;
    }

    void set_field(int i, const Field2D& f) {
        if (f.side() != side_) throw std::invalid_argument("FieldStack::set_field shape mismatch");
        auto s = sample(i);
        std::copy(f.data(), f.data() + s.size(), s.begin());
    }

    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

private:
    int side_ = 0;
    std::vector<double> data_;
};

} // namespace cslc
