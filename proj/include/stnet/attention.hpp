#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stnet/layers.hpp"

namespace stnet {

// ---------------------------------------------------------------------------
// softmax(Q Kt / sqrt(d_k)) V, softmax row-wise over keys.

template <typename T>
struct AttentionResult {
    Tensor<T> output;   // [T_q, d_v]
    Tensor<T> weights;  // [T_q, T_k]
};

template <typename T>
AttentionResult<T> scaled_dot_attention_full(const Tensor<T>& Q, const Tensor<T>& K,
                                             const Tensor<T>& V) {
    if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2)
        throw ShapeError("attention: Q, K, V must be rank 2");
    if (Q.shape()[1] != K.shape()[1])
        throw ShapeError("attention: query dim " + Q.shape().to_string() + " vs key dim " +
                         K.shape().to_string());
    if (K.shape()[0] != V.shape()[0])
        throw ShapeError("attention: key rows " + K.shape().to_string() + " vs value rows " +
                         V.shape().to_string());
    const std::size_t dk = Q.shape()[1];
    Tensor<T> scores = matmul(Q, transpose2d(K));
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] *= scale;
    AttentionResult<T> r;
    r.weights = softmax_last_axis(scores);
    r.output = matmul(r.weights, V);
    return r;
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& Q, const Tensor<T>& K, const Tensor<T>& V) {
    return scaled_dot_attention_full(Q, K, V).output;
}

// Backward through the attention map given the forward weights.
template <typename T>
void scaled_dot_attention_backward(const Tensor<T>& Q, const Tensor<T>& K, const Tensor<T>& V,
                                   const Tensor<T>& weights, const Tensor<T>& dY, Tensor<T>& dQ,
                                   Tensor<T>& dK, Tensor<T>& dV) {
    const std::size_t tq = Q.shape()[0], tk = K.shape()[0], dk = Q.shape()[1];
    dV = matmul(transpose2d(weights), dY);
    Tensor<T> dW = matmul(dY, transpose2d(V));
    Tensor<T> dS(dW.shape());
    for (std::size_t r = 0; r < tq; ++r) {
        const T* w = weights.data() + r * tk;
        const T* dw = dW.data() + r * tk;
        T* ds = dS.data() + r * tk;
        T inner = T(0);
        for (std::size_t j = 0; j < tk; ++j) inner += dw[j] * w[j];
        for (std::size_t j = 0; j < tk; ++j) ds[j] = w[j] * (dw[j] - inner);
    }
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    dQ = matmul(dS, K);
    for (std::size_t i = 0; i < dQ.size(); ++i) dQ[i] *= scale;
    dK = matmul(transpose2d(dS), Q);
    for (std::size_t i = 0; i < dK.size(); ++i) dK[i] *= scale;
}

// ---------------------------------------------------------------------------
// Self-attention with per-head projections of the same sequence and a final
// output projection: concat_h(attn(x Wq_h, x Wk_h, x Wv_h)) Wo.

template <typename T>
class MultiHeadAttention : public Layer<T> {
public:
    MultiHeadAttention(std::size_t d_model, std::size_t heads)
        : d_model_(d_model), heads_(heads), wo_(Shape{1, 1}) {
        if (heads == 0) throw ConfigError("attention: heads must be >= 1");
        if (d_model % heads != 0)
            throw ConfigError("attention: d_model " + std::to_string(d_model) +
                              " not divisible by heads " + std::to_string(heads));
        d_k_ = d_model / heads;
        for (std::size_t h = 0; h < heads; ++h) {
            wq_.emplace_back(Shape{d_model, d_k_});
            wk_.emplace_back(Shape{d_model, d_k_});
            wv_.emplace_back(Shape{d_model, d_k_});
        }
        wo_ = Tensor<T>(Shape{heads * d_k_, d_model});
    }

    std::string kind() const override { return "multi_head_attention"; }

    std::size_t d_model() const { return d_model_; }
    std::size_t heads() const { return heads_; }
    std::size_t d_k() const { return d_k_; }
    Tensor<T>& wq(std::size_t h) { return wq_[h]; }
    Tensor<T>& wk(std::size_t h) { return wk_[h]; }
    Tensor<T>& wv(std::size_t h) { return wv_[h]; }
    Tensor<T>& wo() { return wo_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        if (x.rank() != 2 || x.shape()[1] != d_model_)
            throw ShapeError("attention: input must be [T, " + std::to_string(d_model_) + "], got " +
                             x.shape().to_string());
        const std::size_t steps = x.shape()[0];
        Tensor<T> concat(Shape{steps, heads_ * d_k_});
        if (tape) tape->saved.push_back(x);
        for (std::size_t h = 0; h < heads_; ++h) {
            Tensor<T> Q = matmul(x, wq_[h]);
            Tensor<T> K = matmul(x, wk_[h]);
            Tensor<T> V = matmul(x, wv_[h]);
            AttentionResult<T> r = scaled_dot_attention_full(Q, K, V);
            for (std::size_t t = 0; t < steps; ++t)
                std::copy(r.output.data() + t * d_k_, r.output.data() + (t + 1) * d_k_,
                          concat.data() + t * heads_ * d_k_ + h * d_k_);
            if (tape) {
                tape->saved.push_back(std::move(Q));
                tape->saved.push_back(std::move(K));
                tape->saved.push_back(std::move(V));
                tape->saved.push_back(std::move(r.weights));
            }
        }
        if (tape) tape->saved.push_back(concat);
        return matmul(concat, wo_);
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        if (tape.saved.size() != 2 + 4 * heads_)
            throw UsageError("attention backward called without a forward cache");
        const Tensor<T>& x = tape.saved[0];
        const Tensor<T>& concat = tape.saved[1 + 4 * heads_];
        const std::size_t steps = x.shape()[0];

        Tensor<T>& dwo = grads.slot(prefix + "wo", wo_.shape());
        add_in_place(dwo, matmul(transpose2d(concat), dy));
        Tensor<T> dconcat = matmul(dy, transpose2d(wo_));

        Tensor<T> dx(x.shape());
        Tensor<T> xt = transpose2d(x);
        for (std::size_t h = 0; h < heads_; ++h) {
            const Tensor<T>& Q = tape.saved[1 + 4 * h];
            const Tensor<T>& K = tape.saved[2 + 4 * h];
            const Tensor<T>& V = tape.saved[3 + 4 * h];
            const Tensor<T>& W = tape.saved[4 + 4 * h];
            Tensor<T> dYh(Shape{steps, d_k_});
            for (std::size_t t = 0; t < steps; ++t)
                std::copy(dconcat.data() + t * heads_ * d_k_ + h * d_k_,
                          dconcat.data() + t * heads_ * d_k_ + (h + 1) * d_k_,
                          dYh.data() + t * d_k_);
            Tensor<T> dQ, dK, dV;
            scaled_dot_attention_backward(Q, K, V, W, dYh, dQ, dK, dV);
            const std::string hp = prefix + "h" + std::to_string(h) + ".";
            add_in_place(grads.slot(hp + "wq", wq_[h].shape()), matmul(xt, dQ));
            add_in_place(grads.slot(hp + "wk", wk_[h].shape()), matmul(xt, dK));
            add_in_place(grads.slot(hp + "wv", wv_[h].shape()), matmul(xt, dV));
            add_in_place(dx, matmul(dQ, transpose2d(wq_[h])));
            add_in_place(dx, matmul(dK, transpose2d(wk_[h])));
            add_in_place(dx, matmul(dV, transpose2d(wv_[h])));
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        for (std::size_t h = 0; h < heads_; ++h) {
            const std::string hp = prefix + "h" + std::to_string(h) + ".";
            out.emplace_back(hp + "wq", &wq_[h]);
            out.emplace_back(hp + "wk", &wk_[h]);
            out.emplace_back(hp + "wv", &wv_[h]);
        }
        out.emplace_back(prefix + "wo", &wo_);
    }

private:
    std::size_t d_model_, heads_, d_k_;
    std::vector<Tensor<T>> wq_, wk_, wv_;
    Tensor<T> wo_;  // [heads * d_k, d_model]
};

// ---------------------------------------------------------------------------
// Sinusoidal position table: PE[pos, 2i] = sin(pos / 10000^(2i/d)), odd
// columns carry the matching cosine.

template <typename T>
Tensor<T> positional_encoding(std::size_t steps, std::size_t d_model) {
    if (steps == 0 || d_model == 0)
        throw ConfigError("positional_encoding: dimensions must be >= 1");
    Tensor<T> pe(Shape{steps, d_model});
    for (std::size_t pos = 0; pos < steps; ++pos)
        for (std::size_t j = 0; j < d_model; ++j) {
            const std::size_t pair = j - j % 2;
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, static_cast<double>(pair) / static_cast<double>(d_model));
            pe[pos * d_model + j] = static_cast<T>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pe;
}

template <typename T>
class AddPositionalEncoding : public Layer<T> {
public:
    std::string kind() const override { return "positional_encoding"; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>*, RunContext<T>&) const override {
        if (x.rank() != 2)
            throw ShapeError("positional_encoding: input must be [T, d], got " +
                             x.shape().to_string());
        Tensor<T> pe = positional_encoding<T>(x.shape()[0], x.shape()[1]);
        return add(x, pe);
    }

    Tensor<T> backward(const Tape<T>&, const Tensor<T>& dy, const std::string&,
                       GradStore<T>&) const override {
        return dy;
    }
};

// ---------------------------------------------------------------------------
// Normalization over the last axis with learned gain/offset.

template <typename T>
class LayerNorm : public Layer<T> {
public:
    explicit LayerNorm(std::size_t dim, T eps = T(1e-5))
        : gain_(Tensor<T>::ones(Shape{dim})), offset_(Shape{dim}), eps_(eps) {}

    std::string kind() const override { return "layer_norm"; }

    Tensor<T>& gain() { return gain_; }
    Tensor<T>& offset() { return offset_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        const std::size_t d = gain_.shape()[0];
        if (x.rank() == 0 || x.shape()[x.rank() - 1] != d)
            throw ShapeError("layer_norm: last axis of " + x.shape().to_string() + " must be " +
                             std::to_string(d));
        const std::size_t rows = x.size() / d;
        Tensor<T> y(x.shape());
        Tensor<T> xhat(x.shape());
        Tensor<T> inv_std(Shape{rows});
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = x.data() + r * d;
            T mean = T(0);
            for (std::size_t j = 0; j < d; ++j) mean += xr[j];
            mean /= static_cast<T>(d);
            T var = T(0);
            for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= static_cast<T>(d);
            const T is = T(1) / std::sqrt(var + eps_);
            inv_std[r] = is;
            for (std::size_t j = 0; j < d; ++j) {
                const T xh = (xr[j] - mean) * is;
                xhat[r * d + j] = xh;
                y[r * d + j] = gain_[j] * xh + offset_[j];
            }
        }
        if (tape) {
            tape->saved.push_back(std::move(xhat));
            tape->saved.push_back(std::move(inv_std));
        }
        return y;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        const Tensor<T>& xhat = detail::saved(tape, 0);
        const Tensor<T>& inv_std = detail::saved(tape, 1);
        const std::size_t d = gain_.shape()[0];
        const std::size_t rows = xhat.size() / d;
        Tensor<T>& dg = grads.slot(prefix + "g", gain_.shape());
        Tensor<T>& db = grads.slot(prefix + "b", offset_.shape());
        Tensor<T> dx(xhat.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xh = xhat.data() + r * d;
            const T* dyr = dy.data() + r * d;
            T* dxr = dx.data() + r * d;
            T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
            for (std::size_t j = 0; j < d; ++j) {
                dg[j] += dyr[j] * xh[j];
                db[j] += dyr[j];
                const T dxh = dyr[j] * gain_[j];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xh[j];
            }
            const T n = static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
                const T dxh = dyr[j] * gain_[j];
                dxr[j] = inv_std[r] / n * (n * dxh - sum_dxhat - xh[j] * sum_dxhat_xhat);
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        out.emplace_back(prefix + "g", &gain_);
        out.emplace_back(prefix + "b", &offset_);
    }

private:
    Tensor<T> gain_, offset_;
    T eps_;
};

// ---------------------------------------------------------------------------
// Pre-normalization encoder block, shape-preserving on [T, d_model]:
//   u = x + attention(norm1(x));  y = u + ffn(norm2(u))
// where ffn is a position-wise dense(d_ff)+relu then dense(d_model).

template <typename T>
class EncoderBlock : public Layer<T> {
public:
    EncoderBlock(std::size_t d_model, std::size_t heads, std::size_t d_ff)
        : ln1_(d_model), mha_(d_model, heads), ln2_(d_model), ffn1_(d_model, d_ff),
          relu_(ActKind::relu), ffn2_(d_ff, d_model) {}

    std::string kind() const override { return "encoder_block"; }

    MultiHeadAttention<T>& mha() { return mha_; }
    LayerNorm<T>& ln1() { return ln1_; }
    LayerNorm<T>& ln2() { return ln2_; }
    Dense<T>& ffn1() { return ffn1_; }
    Dense<T>& ffn2() { return ffn2_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>& rc) const override {
        if (tape) tape->kids.resize(6);
        Tape<T>* k = tape ? tape->kids.data() : nullptr;
        Tensor<T> n1 = ln1_.forward(x, k ? &k[0] : nullptr, rc);
        Tensor<T> att = mha_.forward(n1, k ? &k[1] : nullptr, rc);
        Tensor<T> u = add(x, att);
        Tensor<T> n2 = ln2_.forward(u, k ? &k[2] : nullptr, rc);
        Tensor<T> f1 = ffn1_.forward(n2, k ? &k[3] : nullptr, rc);
        Tensor<T> f1a = relu_.forward(f1, k ? &k[4] : nullptr, rc);
        Tensor<T> f2 = ffn2_.forward(f1a, k ? &k[5] : nullptr, rc);
        return add(u, f2);
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        if (tape.kids.size() != 6)
            throw UsageError("encoder block backward called without a forward cache");
        const Tape<T>* k = tape.kids.data();
        Tensor<T> du = dy;  // residual branch
        Tensor<T> t = ffn2_.backward(k[5], dy, prefix + "ffn2.", grads);
        t = relu_.backward(k[4], t, prefix, grads);
        t = ffn1_.backward(k[3], t, prefix + "ffn1.", grads);
        add_in_place(du, ln2_.backward(k[2], t, prefix + "ln2.", grads));
        Tensor<T> dx = du;  // residual branch
        t = mha_.backward(k[1], du, prefix + "mha.", grads);
        add_in_place(dx, ln1_.backward(k[0], t, prefix + "ln1.", grads));
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        ln1_.collect_params(prefix + "ln1.", out);
        mha_.collect_params(prefix + "mha.", out);
        ln2_.collect_params(prefix + "ln2.", out);
        ffn1_.collect_params(prefix + "ffn1.", out);
        ffn2_.collect_params(prefix + "ffn2.", out);
    }

private:
    LayerNorm<T> ln1_;
    MultiHeadAttention<T> mha_;
    LayerNorm<T> ln2_;
    Dense<T> ffn1_;
    Activation<T> relu_;
    Dense<T> ffn2_;
};

}  // namespace stnet
