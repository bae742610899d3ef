#pragma once

#include <cstddef>
#include <string>

#include "stnet/error.hpp"
#include "stnet/tensor.hpp"

namespace stnet {

enum class Padding { valid, same };

inline const char* padding_name(Padding p) { return p == Padding::valid ? "valid" : "same"; }

namespace conv_detail {

struct AxisGeom {
    std::size_t out = 0;   // output extent
    long pad_before = 0;   // leading pad (implicit zeros)
};

inline AxisGeom axis_geometry(std::size_t in, std::size_t kernel, std::size_t stride, Padding pad,
                              const char* op) {
    AxisGeom g;
    if (stride == 0) throw ConfigError(std::string(op) + ": stride must be >= 1");
    if (pad == Padding::valid) {
        if (in < kernel) {
            throw ShapeError(std::string(op) + ": input extent " + std::to_string(in) +
                             " smaller than kernel " + std::to_string(kernel) +
                             " under valid padding");
        }
        g.out = (in - kernel) / stride + 1;
        g.pad_before = 0;
    } else {
        g.out = (in + stride - 1) / stride;
        const long total =
            std::max<long>(0, static_cast<long>((g.out - 1) * stride + kernel) - static_cast<long>(in));
        g.pad_before = total / 2;
    }
    return g;
}

}  // namespace conv_detail

// True 2-D convolution over channels: the kernel is index-flipped, i.e.
//   out[s,t,o] = sum_{p,q,k} x[s*S + p - pad, t*S + q - pad, k] * w[P-1-p, Q-1-q, k, o]
// x: [H, W, Cin], w: [P, Q, Cin, Cout]. Out-of-range taps read zero.
template <typename T>
Tensor<T> conv2d_raw(const Tensor<T>& x, const Tensor<T>& w, Padding pad, std::size_t stride) {
    if (x.rank() != 3) throw ShapeError("conv2d: input must be rank 3 [H,W,C], got " + x.shape().to_string());
    if (w.rank() != 4) throw ShapeError("conv2d: kernel must be rank 4 [P,Q,Cin,Cout], got " + w.shape().to_string());
    const std::size_t H = x.shape()[0], W = x.shape()[1], Cin = x.shape()[2];
    const std::size_t P = w.shape()[0], Q = w.shape()[1];
    if (w.shape()[2] != Cin) {
        throw ShapeError("conv2d: kernel expects " + std::to_string(w.shape()[2]) +
                         " input channels, input has " + std::to_string(Cin) + " (kernel " +
                         w.shape().to_string() + ", input " + x.shape().to_string() + ")");
    }
    const std::size_t Cout = w.shape()[3];
    const auto gh = conv_detail::axis_geometry(H, P, stride, pad, "conv2d");
    const auto gw = conv_detail::axis_geometry(W, Q, stride, pad, "conv2d");

    Tensor<T> out(Shape{gh.out, gw.out, Cout});
    const T* px = x.data();
    const T* pw = w.data();
    T* po = out.data();
    for (std::size_t s = 0; s < gh.out; ++s) {
        for (std::size_t t = 0; t < gw.out; ++t) {
            T* acc = po + (s * gw.out + t) * Cout;
            for (std::size_t p = 0; p < P; ++p) {
                const long xi = static_cast<long>(s * stride + p) - gh.pad_before;
                if (xi < 0 || xi >= static_cast<long>(H)) continue;
                for (std::size_t q = 0; q < Q; ++q) {
                    const long xj = static_cast<long>(t * stride + q) - gw.pad_before;
                    if (xj < 0 || xj >= static_cast<long>(W)) continue;
                    const T* xrow = px + (static_cast<std::size_t>(xi) * W + static_cast<std::size_t>(xj)) * Cin;
                    const T* wrow = pw + ((P - 1 - p) * Q + (Q - 1 - q)) * Cin * Cout;
                    for (std::size_t k = 0; k < Cin; ++k) {
                        const T xv = xrow[k];
                        if (xv == T(0)) continue;
                        const T* wk = wrow + k * Cout;
                        for (std::size_t o = 0; o < Cout; ++o) acc[o] += xv * wk[o];
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates input and kernel gradients for conv2d_raw. dx/dw are added into,
// so repeated calls (shared parameters) accumulate naturally.
template <typename T>
void conv2d_raw_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dout,
                         Padding pad, std::size_t stride, Tensor<T>& dx, Tensor<T>& dw) {
    const std::size_t H = x.shape()[0], W = x.shape()[1], Cin = x.shape()[2];
    const std::size_t P = w.shape()[0], Q = w.shape()[1], Cout = w.shape()[3];
    const auto gh = conv_detail::axis_geometry(H, P, stride, pad, "conv2d");
    const auto gw = conv_detail::axis_geometry(W, Q, stride, pad, "conv2d");
    if (dout.shape() != Shape{gh.out, gw.out, Cout}) {
        throw ShapeError("conv2d backward: upstream gradient shape " + dout.shape().to_string() +
                         " does not match forward output");
    }
    const T* px = x.data();
    const T* pw = w.data();
    const T* pd = dout.data();
    T* pdx = dx.data();
    T* pdw = dw.data();
    for (std::size_t s = 0; s < gh.out; ++s) {
        for (std::size_t t = 0; t < gw.out; ++t) {
            const T* drow = pd + (s * gw.out + t) * Cout;
            for (std::size_t p = 0; p < P; ++p) {
                const long xi = static_cast<long>(s * stride + p) - gh.pad_before;
                if (xi < 0 || xi >= static_cast<long>(H)) continue;
                for (std::size_t q = 0; q < Q; ++q) {
                    const long xj = static_cast<long>(t * stride + q) - gw.pad_before;
                    if (xj < 0 || xj >= static_cast<long>(W)) continue;
                    const std::size_t xoff =
                        (static_cast<std::size_t>(xi) * W + static_cast<std::size_t>(xj)) * Cin;
                    const std::size_t woff = ((P - 1 - p) * Q + (Q - 1 - q)) * Cin * Cout;
                    for (std::size_t k = 0; k < Cin; ++k) {
                        const T xv = px[xoff + k];
                        const T* wk = pw + woff + k * Cout;
                        T* dwk = pdw + woff + k * Cout;
                        T dxv = T(0);
                        for (std::size_t o = 0; o < Cout; ++o) {
                            const T d = drow[o];
                            dwk[o] += xv * d;
                            dxv += wk[o] * d;
                        }
                        pdx[xoff + k] += dxv;
                    }
                }
            }
        }
    }
}

// 3-D analogue of conv2d_raw; the kernel is flipped along all three axes.
// x: [D, H, W, Cin], w: [Kd, Kh, Kw, Cin, Cout], strides per axis.
template <typename T>
Tensor<T> conv3d_raw(const Tensor<T>& x, const Tensor<T>& w, Padding pad, std::size_t stride_d,
                     std::size_t stride_h, std::size_t stride_w) {
    if (x.rank() != 4) throw ShapeError("conv3d: input must be rank 4 [T,H,W,C], got " + x.shape().to_string());
    if (w.rank() != 5) throw ShapeError("conv3d: kernel must be rank 5, got " + w.shape().to_string());
    const std::size_t D = x.shape()[0], H = x.shape()[1], W = x.shape()[2], Cin = x.shape()[3];
    const std::size_t Kd = w.shape()[0], Kh = w.shape()[1], Kw = w.shape()[2];
    if (w.shape()[3] != Cin) {
        throw ShapeError("conv3d: kernel expects " + std::to_string(w.shape()[3]) +
                         " input channels, input has " + std::to_string(Cin));
    }
    const std::size_t Cout = w.shape()[4];
    const auto gd = conv_detail::axis_geometry(D, Kd, stride_d, pad, "conv3d");
    const auto gh = conv_detail::axis_geometry(H, Kh, stride_h, pad, "conv3d");
    const auto gw = conv_detail::axis_geometry(W, Kw, stride_w, pad, "conv3d");

    Tensor<T> out(Shape{gd.out, gh.out, gw.out, Cout});
    const T* px = x.data();
    const T* pw = w.data();
    T* po = out.data();
    for (std::size_t u = 0; u < gd.out; ++u)
        for (std::size_t s = 0; s < gh.out; ++s)
            for (std::size_t t = 0; t < gw.out; ++t) {
                T* acc = po + ((u * gh.out + s) * gw.out + t) * Cout;
                for (std::size_t r = 0; r < Kd; ++r) {
                    const long xd = static_cast<long>(u * stride_d + r) - gd.pad_before;
                    if (xd < 0 || xd >= static_cast<long>(D)) continue;
                    for (std::size_t p = 0; p < Kh; ++p) {
                        const long xi = static_cast<long>(s * stride_h + p) - gh.pad_before;
                        if (xi < 0 || xi >= static_cast<long>(H)) continue;
                        for (std::size_t q = 0; q < Kw; ++q) {
                            const long xj = static_cast<long>(t * stride_w + q) - gw.pad_before;
                            if (xj < 0 || xj >= static_cast<long>(W)) continue;
                            const T* xrow = px + ((static_cast<std::size_t>(xd) * H +
                                                   static_cast<std::size_t>(xi)) * W +
                                                  static_cast<std::size_t>(xj)) * Cin;
                            const T* wrow = pw + (((Kd - 1 - r) * Kh + (Kh - 1 - p)) * Kw +
                                                  (Kw - 1 - q)) * Cin * Cout;
                            for (std::size_t k = 0; k < Cin; ++k) {
                                const T xv = xrow[k];
                                if (xv == T(0)) continue;
                                const T* wk = wrow + k * Cout;
                                for (std::size_t o = 0; o < Cout; ++o) acc[o] += xv * wk[o];
                            }
                        }
                    }
                }
            }
    return out;
}

template <typename T>
void conv3d_raw_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dout,
                         Padding pad, std::size_t stride_d, std::size_t stride_h,
                         std::size_t stride_w, Tensor<T>& dx, Tensor<T>& dw) {
    const std::size_t D = x.shape()[0], H = x.shape()[1], W = x.shape()[2], Cin = x.shape()[3];
    const std::size_t Kd = w.shape()[0], Kh = w.shape()[1], Kw = w.shape()[2], Cout = w.shape()[4];
    const auto gd = conv_detail::axis_geometry(D, Kd, stride_d, pad, "conv3d");
    const auto gh = conv_detail::axis_geometry(H, Kh, stride_h, pad, "conv3d");
    const auto gw = conv_detail::axis_geometry(W, Kw, stride_w, pad, "conv3d");
    if (dout.shape() != Shape{gd.out, gh.out, gw.out, Cout}) {
        throw ShapeError("conv3d backward: upstream gradient shape " + dout.shape().to_string() +
                         " does not match forward output");
    }
    const T* px = x.data();
    const T* pw = w.data();
    const T* pd = dout.data();
    T* pdx = dx.data();
    T* pdw = dw.data();
    for (std::size_t u = 0; u < gd.out; ++u)
        for (std::size_t s = 0; s < gh.out; ++s)
            for (std::size_t t = 0; t < gw.out; ++t) {
                const T* drow = pd + ((u * gh.out + s) * gw.out + t) * Cout;
                for (std::size_t r = 0; r < Kd; ++r) {
                    const long xd = static_cast<long>(u * stride_d + r) - gd.pad_before;
                    if (xd < 0 || xd >= static_cast<long>(D)) continue;
                    for (std::size_t p = 0; p < Kh; ++p) {
                        const long xi = static_cast<long>(s * stride_h + p) - gh.pad_before;
                        if (xi < 0 || xi >= static_cast<long>(H)) continue;
                        for (std::size_t q = 0; q < Kw; ++q) {
                            const long xj = static_cast<long>(t * stride_w + q) - gw.pad_before;
                            if (xj < 0 || xj >= static_cast<long>(W)) continue;
                            const std::size_t xoff = ((static_cast<std::size_t>(xd) * H +
                                                       static_cast<std::size_t>(xi)) * W +
                                                      static_cast<std::size_t>(xj)) * Cin;
                            const std::size_t woff = (((Kd - 1 - r) * Kh + (Kh - 1 - p)) * Kw +
                                                      (Kw - 1 - q)) * Cin * Cout;
                            for (std::size_t k = 0; k < Cin; ++k) {
                                const T xv = px[xoff + k];
                                const T* wk = pw + woff + k * Cout;
                                T* dwk = pdw + woff + k * Cout;
                                T dxv = T(0);
                                for (std::size_t o = 0; o < Cout; ++o) {
                                    const T d = drow[o];
                                    dwk[o] += xv * d;
                                    dxv += wk[o] * d;
                                }
                                pdx[xoff + k] += dxv;
                            }
                        }
                    }
                }
            }
}

// Adds a per-channel bias along the last axis.
template <typename T>
void add_channel_bias(Tensor<T>& t, const Tensor<T>& bias) {
    const std::size_t c = t.shape()[t.rank() - 1];
    if (bias.rank() != 1 || bias.shape()[0] != c) {
        throw ShapeError("bias shape " + bias.shape().to_string() + " does not match channel count " +
                         std::to_string(c));
    }
    T* p = t.data();
    for (std::size_t i = 0; i < t.size(); i += c)
        for (std::size_t o = 0; o < c; ++o) p[i + o] += bias[o];
}

// Per-channel reduction of an upstream gradient, accumulated into dbias.
template <typename T>
void reduce_channel_bias(const Tensor<T>& dout, Tensor<T>& dbias) {
    const std::size_t c = dout.shape()[dout.rank() - 1];
    const T* p = dout.data();
    for (std::size_t i = 0; i < dout.size(); i += c)
        for (std::size_t o = 0; o < c; ++o) dbias[o] += p[i + o];
}

}  // namespace stnet
