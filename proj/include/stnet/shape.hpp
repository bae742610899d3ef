#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "stnet/error.hpp"

namespace stnet {

// Ordered list of positive dimensions. Equality is element-wise; there is no
// broadcasting anywhere in this library -- mismatches are hard errors.
class Shape {
public:
    Shape() = default;

    Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

    std::size_t rank() const { return dims_.size(); }

    std::size_t dim(std::size_t i) const { return dims_.at(i); }

    std::size_t operator[](std::size_t i) const { return dims_[i]; }

    const std::vector<std::size_t>& dims() const { return dims_; }

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : dims_) n *= d;
        return dims_.empty() ? 0 : n;
    }

    bool operator==(const Shape& other) const { return dims_ == other.dims_; }
    bool operator!=(const Shape& other) const { return dims_ != other.dims_; }

    std::string to_string() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) os << ", ";
            os << dims_[i];
        }
        os << ']';
        return os.str();
    }

private:
    void validate() const {
        for (std::size_t d : dims_) {
            if (d == 0) throw ShapeError("shape has a zero dimension: " + to_string_unchecked());
        }
    }

    std::string to_string_unchecked() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            if (i) os << ", ";
            os << dims_[i];
        }
        os << ']';
        return os.str();
    }

    std::vector<std::size_t> dims_;
};

}  // namespace stnet
