#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "stnet/error.hpp"
#include "stnet/shape.hpp"

namespace stnet {

// Dense row-major tensor. Immutable by convention once handed to a layer:
// operations return new tensors and never alias their inputs.
//
// The scalar type is a template parameter: models store float, the gradient
// check suite instantiates the identical kernels with double.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_.numel(), T(0)) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        if (shape_.numel() != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_.to_string());
        }
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }

    static Tensor scalar(T value) { return Tensor(Shape{1}, {value}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.rank(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Row-major multi-index access; index arity must equal the rank.
    template <typename... Is>
    T& at(Is... is) {
        return data_[offset_of(is...)];
    }
    template <typename... Is>
    const T& at(Is... is) const {
        return data_[offset_of(is...)];
    }

    template <typename... Is>
    std::size_t offset_of(Is... is) const {
        constexpr std::size_t n = sizeof...(Is);
        if (n != shape_.rank()) {
            throw ShapeError("index arity " + std::to_string(n) + " does not match tensor rank " +
                             std::to_string(shape_.rank()));
        }
        const std::size_t idx[n] = {static_cast<std::size_t>(is)...};
        std::size_t off = 0;
        for (std::size_t d = 0; d < n; ++d) {
            if (idx[d] >= shape_[d]) {
                throw ShapeError("index " + std::to_string(idx[d]) + " out of range for axis " +
                                 std::to_string(d) + " of shape " + shape_.to_string());
            }
            off = off * shape_[d] + idx[d];
        }
        return off;
    }

    // Same data, new shape; element count must be preserved.
    Tensor reshaped(Shape shape) const {
        if (shape.numel() != data_.size()) {
            throw ShapeError("cannot reshape " + shape_.to_string() + " (" +
                             std::to_string(data_.size()) + " values) to " + shape.to_string());
        }
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes differ, " + a.shape().to_string() + " vs " +
                         b.shape().to_string());
    }
}

}  // namespace detail

// c[i][j] = sum_t a[i][t] * b[t][j]; both operands rank 2.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw ShapeError("matmul: operands must be rank 2, got " + a.shape().to_string() + " and " +
                         b.shape().to_string());
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape().to_string() + " x " +
                         b.shape().to_string());
    }
    Tensor<T> c(Shape{m, n});
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = pa + i * k;
        T* crow = pc + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const T av = arow[t];
            if (av == T(0)) continue;
            const T* brow = pb + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

// Element-wise product; shapes must be identical.
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "hadamard");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename T>
void add_in_place(Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add_in_place");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
T sum(const Tensor<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "dot");
    T s = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d: rank must be 2, got " + a.shape().to_string());
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    Tensor<T> out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

// Softmax along the last axis. Max subtraction per slice keeps exp in range;
// each slice of the result sums to 1.
template <typename T>
Tensor<T> softmax_last_axis(const Tensor<T>& v) {
    if (v.rank() == 0 || v.size() == 0) throw ShapeError("softmax: empty tensor");
    if (!v.all_finite()) throw NumericError("softmax: input contains non-finite values");
    const std::size_t n = v.shape()[v.rank() - 1];
    const std::size_t slices = v.size() / n;
    Tensor<T> out(v.shape());
    for (std::size_t s = 0; s < slices; ++s) {
        const T* in = v.data() + s * n;
        T* o = out.data() + s * n;
        T mx = in[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
        T total = T(0);
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = std::exp(in[i] - mx);
            total += o[i];
        }
        for (std::size_t i = 0; i < n; ++i) o[i] /= total;
    }
    return out;
}

}  // namespace stnet
