#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stnet/conv.hpp"
#include "stnet/error.hpp"
#include "stnet/rng.hpp"
#include "stnet/tensor.hpp"

namespace stnet {

// Per-call cache written by forward and consumed by backward. One tape per
// invocation, so a single layer instance can serve concurrent evaluations.
template <typename T>
struct Tape {
    std::vector<Tensor<T>> saved;
    std::vector<Shape> shapes;
    std::vector<std::vector<std::size_t>> indices;
    std::vector<Tape<T>> kids;
};

// Forward-pass mode. Training mode needs a random stream for dropout masks.
template <typename T>
struct RunContext {
    bool training = false;
    Rng* rng = nullptr;
};

// Named parameter gradients. Backward passes *accumulate* into slots, which
// makes shared parameters (time-distributed wrappers, recurrent steps) sum
// their contributions naturally.
template <typename T>
class GradStore {
public:
    Tensor<T>& slot(const std::string& name, const Shape& shape) {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            it = grads_.emplace(name, Tensor<T>(shape)).first;
        } else if (it->second.shape() != shape) {
            throw ShapeError("gradient slot " + name + " shape changed: " +
                             it->second.shape().to_string() + " vs " + shape.to_string());
        }
        return it->second;
    }

    const Tensor<T>* find(const std::string& name) const {
        auto it = grads_.find(name);
        return it == grads_.end() ? nullptr : &it->second;
    }

    std::map<std::string, Tensor<T>>& all() { return grads_; }
    const std::map<std::string, Tensor<T>>& all() const { return grads_; }
    std::size_t count() const { return grads_.size(); }

private:
    std::map<std::string, Tensor<T>> grads_;
};

template <typename T>
using ParamTable = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string kind() const = 0;

    // Layer-type string used by blueprint conformance tests; containers
    // include their children.
    virtual std::string blueprint() const { return kind(); }

    // tape == nullptr runs inference-only (no caches kept).
    virtual Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>& rc) const = 0;

    // Consumes the tape written by forward; parameter gradients are
    // accumulated into `grads` under `prefix` + local names.
    virtual Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& grad_out,
                               const std::string& prefix, GradStore<T>& grads) const = 0;

    virtual void collect_params(const std::string&, ParamTable<T>&) {}
};

namespace detail {

template <typename T>
const Tensor<T>& saved(const Tape<T>& tape, std::size_t i) {
    if (i >= tape.saved.size()) throw UsageError("layer backward called without a forward cache");
    return tape.saved[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Slicing helpers along the leading axis (time axis throughout this library).

template <typename T>
Shape tail_shape(const Shape& s) {
    std::vector<std::size_t> d(s.dims().begin() + 1, s.dims().end());
    return Shape(std::move(d));
}

template <typename T>
Tensor<T> slice_axis0(const Tensor<T>& x, std::size_t i) {
    if (x.rank() < 2) throw ShapeError("slice_axis0: rank must be >= 2, got " + x.shape().to_string());
    const Shape rest = tail_shape<T>(x.shape());
    const std::size_t n = rest.numel();
    std::vector<T> out(n);
    std::copy(x.data() + i * n, x.data() + (i + 1) * n, out.begin());
    return Tensor<T>(rest, std::move(out));
}

template <typename T>
void set_slice_axis0(Tensor<T>& dst, std::size_t i, const Tensor<T>& v) {
    const std::size_t n = v.size();
    std::copy(v.data(), v.data() + n, dst.data() + i * n);
}

template <typename T>
Tensor<T> stack_axis0(const std::vector<Tensor<T>>& slices) {
    if (slices.empty()) throw ShapeError("stack_axis0: no slices");
    std::vector<std::size_t> dims;
    dims.push_back(slices.size());
    for (std::size_t d : slices[0].shape().dims()) dims.push_back(d);
    Tensor<T> out(Shape{std::move(dims)});
    for (std::size_t i = 0; i < slices.size(); ++i) {
        if (!slices[i].same_shape(slices[0]))
            throw ShapeError("stack_axis0: slice shapes differ");
        set_slice_axis0(out, i, slices[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dense: y_i = sum_j A[i][j] x[j] + b[i]. Rank-1 input maps a vector; rank-2
// input [R x in] applies the same affine map to every row (position-wise).

template <typename T>
class Dense : public Layer<T> {
public:
    Dense(std::size_t in, std::size_t out) : weight_(Shape{out, in}), bias_(Shape{out}) {}

    std::string kind() const override { return "dense"; }

    std::size_t in_features() const { return weight_.shape()[1]; }
    std::size_t out_features() const { return weight_.shape()[0]; }

    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        const std::size_t in = in_features(), out = out_features();
        if (tape) tape->saved.push_back(x);
        if (x.rank() == 1) {
            if (x.shape()[0] != in)
                throw ShapeError("dense: input " + x.shape().to_string() + " does not match weight " +
                                 weight_.shape().to_string());
            Tensor<T> y(Shape{out});
            for (std::size_t i = 0; i < out; ++i) {
                const T* row = weight_.data() + i * in;
                T acc = bias_[i];
                for (std::size_t j = 0; j < in; ++j) acc += row[j] * x[j];
                y[i] = acc;
            }
            return y;
        }
        if (x.rank() == 2) {
            const std::size_t rows = x.shape()[0];
            if (x.shape()[1] != in)
                throw ShapeError("dense: input " + x.shape().to_string() + " does not match weight " +
                                 weight_.shape().to_string());
            Tensor<T> y(Shape{rows, out});
            for (std::size_t r = 0; r < rows; ++r) {
                const T* xr = x.data() + r * in;
                T* yr = y.data() + r * out;
                for (std::size_t i = 0; i < out; ++i) {
                    const T* row = weight_.data() + i * in;
                    T acc = bias_[i];
                    for (std::size_t j = 0; j < in; ++j) acc += row[j] * xr[j];
                    yr[i] = acc;
                }
            }
            return y;
        }
        throw ShapeError("dense: input rank must be 1 or 2, got " + x.shape().to_string());
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        const Tensor<T>& x = detail::saved(tape, 0);
        const std::size_t in = in_features(), out = out_features();
        Tensor<T>& dw = grads.slot(prefix + "w", weight_.shape());
        Tensor<T>& db = grads.slot(prefix + "b", bias_.shape());
        Tensor<T> dx(x.shape());
        const std::size_t rows = x.rank() == 1 ? 1 : x.shape()[0];
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = x.data() + r * in;
            const T* dyr = dy.data() + r * out;
            T* dxr = dx.data() + r * in;
            for (std::size_t i = 0; i < out; ++i) {
                const T g = dyr[i];
                db[i] += g;
                const T* wrow = weight_.data() + i * in;
                T* dwrow = dw.data() + i * in;
                for (std::size_t j = 0; j < in; ++j) {
                    dwrow[j] += g * xr[j];
                    dxr[j] += g * wrow[j];
                }
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        out.emplace_back(prefix + "w", &weight_);
        out.emplace_back(prefix + "b", &bias_);
    }

private:
    Tensor<T> weight_;  // [out, in]
    Tensor<T> bias_;    // [out]
};

// ---------------------------------------------------------------------------
// Element-wise activations plus softmax over the last axis.

enum class ActKind { relu, sigmoid, tanh, softmax };

inline const char* act_name(ActKind k) {
    switch (k) {
        case ActKind::relu: return "relu";
        case ActKind::sigmoid: return "sigmoid";
        case ActKind::tanh: return "tanh";
        case ActKind::softmax: return "softmax";
    }
    return "?";
}

template <typename T>
Tensor<T> activation_forward(ActKind kind, const Tensor<T>& x) {
    switch (kind) {
        case ActKind::relu: {
            Tensor<T> y(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
            return y;
        }
        case ActKind::sigmoid: {
            Tensor<T> y(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
            return y;
        }
        case ActKind::tanh: {
            Tensor<T> y(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
            return y;
        }
        case ActKind::softmax: return softmax_last_axis(x);
    }
    throw ConfigError("unknown activation");
}

// Gradient through an activation given its output y. The ReLU subgradient at
// exactly 0 is 0.
template <typename T>
Tensor<T> activation_backward(ActKind kind, const Tensor<T>& y, const Tensor<T>& dy) {
    Tensor<T> dx(y.shape());
    switch (kind) {
        case ActKind::relu:
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
            return dx;
        case ActKind::sigmoid:
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
            return dx;
        case ActKind::tanh:
            for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (T(1) - y[i] * y[i]);
            return dx;
        case ActKind::softmax: {
            const std::size_t n = y.shape()[y.rank() - 1];
            for (std::size_t s = 0; s < y.size() / n; ++s) {
                const T* ys = y.data() + s * n;
                const T* ds = dy.data() + s * n;
                T* out = dx.data() + s * n;
                T inner = T(0);
                for (std::size_t i = 0; i < n; ++i) inner += ds[i] * ys[i];
                for (std::size_t i = 0; i < n; ++i) out[i] = ys[i] * (ds[i] - inner);
            }
            return dx;
        }
    }
    throw ConfigError("unknown activation");
}

template <typename T>
class Activation : public Layer<T> {
public:
    explicit Activation(ActKind k) : kind_(k) {}

    std::string kind() const override { return act_name(kind_); }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        Tensor<T> y = activation_forward(kind_, x);
        if (tape) tape->saved.push_back(y);
        return y;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        return activation_backward(kind_, detail::saved(tape, 0), dy);
    }

private:
    ActKind kind_;
};

// ---------------------------------------------------------------------------
// Flatten: row-major linearization to rank 1.

template <typename T>
class Flatten : public Layer<T> {
public:
    std::string kind() const override { return "flatten"; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        if (tape) tape->shapes.push_back(x.shape());
        return x.reshaped(Shape{x.size()});
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        if (tape.shapes.empty()) throw UsageError("flatten backward called without a forward cache");
        return dy.reshaped(tape.shapes[0]);
    }
};

// ---------------------------------------------------------------------------
// Inverted dropout: train mode masks with Bernoulli(1-rate) and scales by
// 1/(1-rate) so that eval mode is the identity map.

template <typename T>
class Dropout : public Layer<T> {
public:
    explicit Dropout(double rate) : rate_(rate) {
        if (rate < 0.0 || rate >= 1.0)
            throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }

    std::string kind() const override { return "dropout"; }

    double rate() const { return rate_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>& rc) const override {
        if (!rc.training || rate_ == 0.0) {
            if (tape) tape->saved.push_back(Tensor<T>());  // empty marker: identity pass
            return x;
        }
        if (!rc.rng) throw UsageError("dropout in train mode requires a random stream");
        Tensor<T> mask(x.shape());
        const T keep = T(1) - static_cast<T>(rate_);
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = rc.rng->bernoulli(1.0 - rate_) ? T(1) / keep : T(0);
        Tensor<T> y = hadamard(x, mask);
        if (tape) tape->saved.push_back(std::move(mask));
        return y;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        const Tensor<T>& mask = detail::saved(tape, 0);
        if (mask.empty()) return dy;
        return hadamard(dy, mask);
    }

private:
    double rate_;
};

// ---------------------------------------------------------------------------
// Non-overlapping max pooling (stride == window). Trailing rows/columns that
// do not fill a window are truncated. Argmax positions are kept for backward,
// which routes each upstream gradient entirely to its stored position.

template <typename T>
class MaxPool2D : public Layer<T> {
public:
    MaxPool2D(std::size_t wh, std::size_t ww) : wh_(wh), ww_(ww) {
        if (wh == 0 || ww == 0) throw ConfigError("maxpool2d: window must be >= 1");
    }

    std::string kind() const override { return "maxpool2d"; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        if (x.rank() != 3)
            throw ShapeError("maxpool2d: input must be rank 3 [H,W,C], got " + x.shape().to_string());
        const std::size_t H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
        if (wh_ > H || ww_ > W)
            throw ShapeError("maxpool2d: window " + std::to_string(wh_) + "x" + std::to_string(ww_) +
                             " larger than input " + x.shape().to_string());
        const std::size_t Ho = H / wh_, Wo = W / ww_;
        Tensor<T> y(Shape{Ho, Wo, C});
        std::vector<std::size_t> arg(y.size());
        for (std::size_t s = 0; s < Ho; ++s)
            for (std::size_t t = 0; t < Wo; ++t)
                for (std::size_t c = 0; c < C; ++c) {
                    std::size_t best = ((s * wh_) * W + t * ww_) * C + c;
                    T bv = x[best];
                    for (std::size_t p = 0; p < wh_; ++p)
                        for (std::size_t q = 0; q < ww_; ++q) {
                            const std::size_t off = ((s * wh_ + p) * W + (t * ww_ + q)) * C + c;
                            if (x[off] > bv) { bv = x[off]; best = off; }
                        }
                    const std::size_t oidx = (s * Wo + t) * C + c;
                    y[oidx] = bv;
                    arg[oidx] = best;
                }
        if (tape) {
            tape->shapes.push_back(x.shape());
            tape->indices.push_back(std::move(arg));
        }
        return y;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        if (tape.indices.empty()) throw UsageError("maxpool2d backward called without a forward cache");
        Tensor<T> dx(tape.shapes[0]);
        const auto& arg = tape.indices[0];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[arg[i]] += dy[i];
        return dx;
    }

private:
    std::size_t wh_, ww_;
};

template <typename T>
class MaxPool3D : public Layer<T> {
public:
    MaxPool3D(std::size_t wd, std::size_t wh, std::size_t ww) : wd_(wd), wh_(wh), ww_(ww) {
        if (wd == 0 || wh == 0 || ww == 0) throw ConfigError("maxpool3d: window must be >= 1");
    }

    std::string kind() const override { return "maxpool3d"; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        if (x.rank() != 4)
            throw ShapeError("maxpool3d: input must be rank 4 [T,H,W,C], got " + x.shape().to_string());
        const std::size_t D = x.shape()[0], H = x.shape()[1], W = x.shape()[2], C = x.shape()[3];
        if (wd_ > D || wh_ > H || ww_ > W)
            throw ShapeError("maxpool3d: window larger than input " + x.shape().to_string());
        const std::size_t Do = D / wd_, Ho = H / wh_, Wo = W / ww_;
        Tensor<T> y(Shape{Do, Ho, Wo, C});
        std::vector<std::size_t> arg(y.size());
        for (std::size_t u = 0; u < Do; ++u)
            for (std::size_t s = 0; s < Ho; ++s)
                for (std::size_t t = 0; t < Wo; ++t)
                    for (std::size_t c = 0; c < C; ++c) {
                        std::size_t best = (((u * wd_) * H + s * wh_) * W + t * ww_) * C + c;
                        T bv = x[best];
                        for (std::size_t r = 0; r < wd_; ++r)
                            for (std::size_t p = 0; p < wh_; ++p)
                                for (std::size_t q = 0; q < ww_; ++q) {
                                    const std::size_t off =
                                        (((u * wd_ + r) * H + (s * wh_ + p)) * W + (t * ww_ + q)) * C + c;
                                    if (x[off] > bv) { bv = x[off]; best = off; }
                                }
                        const std::size_t oidx = ((u * Ho + s) * Wo + t) * C + c;
                        y[oidx] = bv;
                        arg[oidx] = best;
                    }
        if (tape) {
            tape->shapes.push_back(x.shape());
            tape->indices.push_back(std::move(arg));
        }
        return y;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        if (tape.indices.empty()) throw UsageError("maxpool3d backward called without a forward cache");
        Tensor<T> dx(tape.shapes[0]);
        const auto& arg = tape.indices[0];
        for (std::size_t i = 0; i < dy.size(); ++i) dx[arg[i]] += dy[i];
        return dx;
    }

private:
    std::size_t wd_, wh_, ww_;
};

// ---------------------------------------------------------------------------
// 2-D convolution layer with optional fused ReLU.

template <typename T>
class Conv2D : public Layer<T> {
public:
    Conv2D(std::size_t kernel, std::size_t in_ch, std::size_t out_ch, Padding pad,
           std::size_t stride = 1, bool fused_relu = false)
        : weight_(Shape{kernel, kernel, in_ch, out_ch}),
          bias_(Shape{out_ch}),
          pad_(pad),
          stride_(stride),
          relu_(fused_relu) {
        if (kernel == 0) throw ConfigError("conv2d: kernel size must be >= 1");
        if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
    }

    std::string kind() const override { return "conv2d"; }
    std::string blueprint() const override { return relu_ ? "conv2d+relu" : "conv2d"; }

    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }
    std::size_t out_channels() const { return weight_.shape()[3]; }
    bool fused_relu() const { return relu_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        Tensor<T> s = conv2d_raw(x, weight_, pad_, stride_);
        add_channel_bias(s, bias_);
        if (tape) tape->saved.push_back(x);
        if (relu_) {
            if (tape) tape->saved.push_back(s);
            Tensor<T> y(s.shape());
            for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i] > T(0) ? s[i] : T(0);
            return y;
        }
        return s;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        const Tensor<T>& x = detail::saved(tape, 0);
        Tensor<T> ds = dy;
        if (relu_) {
            const Tensor<T>& s = detail::saved(tape, 1);
            for (std::size_t i = 0; i < ds.size(); ++i)
                if (s[i] <= T(0)) ds[i] = T(0);
        }
        Tensor<T>& dw = grads.slot(prefix + "w", weight_.shape());
        Tensor<T>& db = grads.slot(prefix + "b", bias_.shape());
        Tensor<T> dx(x.shape());
        conv2d_raw_backward(x, weight_, ds, pad_, stride_, dx, dw);
        reduce_channel_bias(ds, db);
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        out.emplace_back(prefix + "w", &weight_);
        out.emplace_back(prefix + "b", &bias_);
    }

private:
    Tensor<T> weight_;  // [K, K, Cin, Cout]
    Tensor<T> bias_;    // [Cout]
    Padding pad_;
    std::size_t stride_;
    bool relu_;
};

// ---------------------------------------------------------------------------
// 3-D convolution layer with optional fused ReLU.

template <typename T>
class Conv3D : public Layer<T> {
public:
    Conv3D(std::size_t kernel, std::size_t in_ch, std::size_t out_ch, Padding pad,
           std::size_t stride = 1, bool fused_relu = false)
        : weight_(Shape{kernel, kernel, kernel, in_ch, out_ch}),
          bias_(Shape{out_ch}),
          pad_(pad),
          stride_(stride),
          relu_(fused_relu) {
        if (kernel == 0) throw ConfigError("conv3d: kernel size must be >= 1");
        if (stride == 0) throw ConfigError("conv3d: stride must be >= 1");
    }

    std::string kind() const override { return "conv3d"; }
    std::string blueprint() const override { return relu_ ? "conv3d+relu" : "conv3d"; }

    Tensor<T>& weight() { return weight_; }
    Tensor<T>& bias() { return bias_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        Tensor<T> s = conv3d_raw(x, weight_, pad_, stride_, stride_, stride_);
        add_channel_bias(s, bias_);
        if (tape) tape->saved.push_back(x);
        if (relu_) {
            if (tape) tape->saved.push_back(s);
            Tensor<T> y(s.shape());
            for (std::size_t i = 0; i < s.size(); ++i) y[i] = s[i] > T(0) ? s[i] : T(0);
            return y;
        }
        return s;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        const Tensor<T>& x = detail::saved(tape, 0);
        Tensor<T> ds = dy;
        if (relu_) {
            const Tensor<T>& s = detail::saved(tape, 1);
            for (std::size_t i = 0; i < ds.size(); ++i)
                if (s[i] <= T(0)) ds[i] = T(0);
        }
        Tensor<T>& dw = grads.slot(prefix + "w", weight_.shape());
        Tensor<T>& db = grads.slot(prefix + "b", bias_.shape());
        Tensor<T> dx(x.shape());
        conv3d_raw_backward(x, weight_, ds, pad_, stride_, stride_, stride_, dx, dw);
        reduce_channel_bias(ds, db);
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        out.emplace_back(prefix + "w", &weight_);
        out.emplace_back(prefix + "b", &bias_);
    }

private:
    Tensor<T> weight_;  // [K, K, K, Cin, Cout]
    Tensor<T> bias_;    // [Cout]
    Padding pad_;
    std::size_t stride_;
    bool relu_;
};

// ---------------------------------------------------------------------------
// Ordered chain of named sublayers.

template <typename T>
class Sequential : public Layer<T> {
public:
    std::string kind() const override { return "sequential"; }

    std::string blueprint() const override {
        std::string s;
        for (std::size_t i = 0; i < children_.size(); ++i) {
            if (i) s += ",";
            s += children_[i].second->blueprint();
        }
        return s;
    }

    Sequential* add(std::string name, std::unique_ptr<Layer<T>> layer) {
        children_.emplace_back(std::move(name), std::move(layer));
        return this;
    }

    std::size_t child_count() const { return children_.size(); }
    Layer<T>* child(std::size_t i) { return children_[i].second.get(); }
    const Layer<T>* child(std::size_t i) const { return children_[i].second.get(); }
    const std::string& child_name(std::size_t i) const { return children_[i].first; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>& rc) const override {
        Tensor<T> cur = x;
        if (tape) tape->kids.resize(children_.size());
        for (std::size_t i = 0; i < children_.size(); ++i) {
            cur = children_[i].second->forward(cur, tape ? &tape->kids[i] : nullptr, rc);
        }
        return cur;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        if (tape.kids.size() != children_.size())
            throw UsageError("sequential backward called without a forward cache");
        Tensor<T> cur = dy;
        for (std::size_t i = children_.size(); i-- > 0;) {
            cur = children_[i].second->backward(tape.kids[i], cur, prefix + children_[i].first + ".",
                                                grads);
        }
        return cur;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        for (auto& [name, layer] : children_) layer->collect_params(prefix + name + ".", out);
    }

private:
    std::vector<std::pair<std::string, std::unique_ptr<Layer<T>>>> children_;
};

// ---------------------------------------------------------------------------
// Applies one parameterized layer independently to each leading-axis slice;
// identical parameters across slices, bit-identical to an explicit loop.

template <typename T>
class TimeDistributed : public Layer<T> {
public:
    explicit TimeDistributed(std::unique_ptr<Layer<T>> inner, std::string inner_name = "inner")
        : inner_(std::move(inner)), inner_name_(std::move(inner_name)) {}

    std::string kind() const override { return "time_distributed"; }

    std::string blueprint() const override {
        return "time_distributed(" + inner_->blueprint() + ")";
    }

    Layer<T>* inner() { return inner_.get(); }
    const Layer<T>* inner() const { return inner_.get(); }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>& rc) const override {
        if (x.rank() < 2)
            throw ShapeError("time_distributed: input must have a leading time axis, got " +
                             x.shape().to_string());
        const std::size_t steps = x.shape()[0];
        if (tape) tape->kids.resize(steps);
        std::vector<Tensor<T>> outs;
        outs.reserve(steps);
        for (std::size_t t = 0; t < steps; ++t) {
            try {
                outs.push_back(
                    inner_->forward(slice_axis0(x, t), tape ? &tape->kids[t] : nullptr, rc));
            } catch (const Error& e) {
                throw Error(e.category(),
                            "time_distributed slice t=" + std::to_string(t) + ": " + e.what());
            }
        }
        return stack_axis0(outs);
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        const std::size_t steps = tape.kids.size();
        if (steps == 0) throw UsageError("time_distributed backward called without a forward cache");
        std::vector<Tensor<T>> dxs;
        dxs.reserve(steps);
        const std::string inner_prefix = prefix + inner_name_ + ".";
        for (std::size_t t = 0; t < steps; ++t) {
            dxs.push_back(inner_->backward(tape.kids[t], slice_axis0(dy, t), inner_prefix, grads));
        }
        return stack_axis0(dxs);
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        inner_->collect_params(prefix + inner_name_ + ".", out);
    }

private:
    std::unique_ptr<Layer<T>> inner_;
    std::string inner_name_;
};

// ---------------------------------------------------------------------------
// Mean over the leading (time) axis: [T, d] -> [d].

template <typename T>
class MeanOverTime : public Layer<T> {
public:
    std::string kind() const override { return "mean_time"; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        if (x.rank() != 2) throw ShapeError("mean_time: input must be rank 2, got " + x.shape().to_string());
        const std::size_t steps = x.shape()[0], d = x.shape()[1];
        Tensor<T> y(Shape{d});
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t j = 0; j < d; ++j) y[j] += x[t * d + j];
        for (std::size_t j = 0; j < d; ++j) y[j] /= static_cast<T>(steps);
        if (tape) tape->shapes.push_back(x.shape());
        return y;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        if (tape.shapes.empty()) throw UsageError("mean_time backward called without a forward cache");
        const Shape& in = tape.shapes[0];
        const std::size_t steps = in[0], d = in[1];
        Tensor<T> dx(in);
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t j = 0; j < d; ++j) dx[t * d + j] = dy[j] / static_cast<T>(steps);
        return dx;
    }
};

}  // namespace stnet
