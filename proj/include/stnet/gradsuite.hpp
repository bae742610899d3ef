#pragma once

// Finite-difference verification of every backward pass, in 64-bit arithmetic.
// Shared by the CLI `gradcheck` command and the test suite so both run the
// exact same checks.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "stnet/attention.hpp"
#include "stnet/gradcheck.hpp"
#include "stnet/layers.hpp"
#include "stnet/recurrent.hpp"
#include "stnet/rng.hpp"

namespace stnet {

struct GradSuiteEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t compared = 0;
    std::size_t exempt = 0;
    bool pass = true;
};

namespace gradsuite_detail {

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;
constexpr double kFloor = 1e-8;

inline double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

inline void fold_report(GradSuiteEntry& entry, const GradCheckReport& rep) {
    entry.max_rel_err = std::max(entry.max_rel_err, rep.max_rel_err);
    entry.compared += rep.compared;
    entry.exempt += rep.exempt;
    entry.pass = entry.pass && rep.pass;
}

// Checks d(w.y)/d[x, params] of one layer against central differences. The
// context RNG is re-seeded before every forward so stochastic layers
// (dropout) see the same mask at every probe point.
inline GradCheckReport check_layer(Layer<double>& layer, const Shape& x_shape, std::uint64_t seed,
                                   bool training = false) {
    Rng init(mix_seed(seed, 0x696e6974));
    Tensor<double> x = init.uniform_tensor<double>(x_shape, -1.0, 1.0);
    ParamTable<double> params;
    layer.collect_params("", params);
    for (auto& [name, t] : params) {
        (void)name;
        for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = init.uniform(-0.7, 0.7);
    }
    const std::uint64_t ctx_seed = mix_seed(seed, 0x63747821);
    auto forward_once = [&](Tape<double>* tape) {
        Rng ctx(ctx_seed);
        RunContext<double> rc{training, &ctx};
        return layer.forward(x, tape, rc);
    };

    const Tensor<double> probe = forward_once(nullptr);
    const Tensor<double> wy = init.uniform_tensor<double>(probe.shape(), -1.0, 1.0);

    Tape<double> tape;
    forward_once(&tape);
    GradStore<double> grads;
    const Tensor<double> dx = layer.backward(tape, wy, "", grads);

    std::size_t total = x.size();
    for (const auto& [name, t] : params) {
        (void)name;
        total += t->size();
    }
    Tensor<double> flat0(Shape{total}), analytic(Shape{total});
    std::size_t off = 0;
    for (std::size_t i = 0; i < x.size(); ++i, ++off) {
        flat0[off] = x[i];
        analytic[off] = dx[i];
    }
    for (const auto& [name, t] : params) {
        const Tensor<double>* g = grads.find(name);
        for (std::size_t i = 0; i < t->size(); ++i, ++off) {
            flat0[off] = t->data()[i];
            analytic[off] = g != nullptr ? g->data()[i] : 0.0;
        }
    }

    auto f = [&](const Tensor<double>& flat) {
        std::size_t o = 0;
        for (std::size_t i = 0; i < x.size(); ++i, ++o) x[i] = flat[o];
        for (auto& [name, t] : params) {
            (void)name;
            for (std::size_t i = 0; i < t->size(); ++i, ++o) t->data()[i] = flat[o];
        }
        return weighted_sum(forward_once(nullptr), wy);
    };
    const Tensor<double> numeric = finite_difference_gradient(f, flat0, kEps);
    return compare_gradients(analytic, numeric, kTol, kFloor);
}

template <typename MakeLayer>
GradSuiteEntry layer_entry(const std::string& name, MakeLayer make, const Shape& x_shape,
                           bool training = false) {
    GradSuiteEntry entry;
    entry.name = name;
    for (std::uint64_t s : {11u, 22u, 33u}) {
        auto layer = make();
        fold_report(entry, check_layer(*layer, x_shape, mix_seed(0xc0ffee, s), training));
    }
    return entry;
}

// One LSTM recurrence step: objective wh.h_out + wc.c_out, differentiated
// against x, h_prev, c_prev and every gate parameter.
inline GradSuiteEntry lstm_step_entry() {
    GradSuiteEntry entry;
    entry.name = "lstm_step";
    const std::size_t in = 3, H = 4;
    for (std::uint64_t s : {11u, 22u, 33u}) {
        Rng init(mix_seed(0x15f3, s));
        LSTMCell<double> cell(in, H);
        ParamTable<double> params;
        cell.collect("", params);
        for (auto& [name, t] : params) {
            (void)name;
            for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = init.uniform(-0.7, 0.7);
        }
        Tensor<double> x = init.uniform_tensor<double>(Shape{in}, -1.0, 1.0);
        Tensor<double> h_prev = init.uniform_tensor<double>(Shape{H}, -1.0, 1.0);
        Tensor<double> c_prev = init.uniform_tensor<double>(Shape{H}, -1.0, 1.0);
        const Tensor<double> wh = init.uniform_tensor<double>(Shape{H}, -1.0, 1.0);
        const Tensor<double> wc = init.uniform_tensor<double>(Shape{H}, -1.0, 1.0);

        std::vector<Tensor<double>> cache;
        Tensor<double> h, c;
        cell.step(x, h_prev, c_prev, h, c, &cache);
        GradStore<double> grads;
        Tensor<double> dx, dhp, dcp;
        cell.step_backward(cache.data(), wh, wc, dx, dhp, dcp, "", grads);

        std::size_t total = x.size() + h_prev.size() + c_prev.size();
        for (const auto& [name, t] : params) {
            (void)name;
            total += t->size();
        }
        Tensor<double> flat0(Shape{total}), analytic(Shape{total});
        std::size_t off = 0;
        auto pack = [&](const Tensor<double>& v, const Tensor<double>& g) {
            for (std::size_t i = 0; i < v.size(); ++i, ++off) {
                flat0[off] = v[i];
                analytic[off] = g[i];
            }
        };
        pack(x, dx);
        pack(h_prev, dhp);
        pack(c_prev, dcp);
        for (const auto& [name, t] : params) {
            const Tensor<double>* g = grads.find(name);
            for (std::size_t i = 0; i < t->size(); ++i, ++off) {
                flat0[off] = t->data()[i];
                analytic[off] = g != nullptr ? g->data()[i] : 0.0;
            }
        }
        auto f = [&](const Tensor<double>& flat) {
            std::size_t o = 0;
            auto unpack = [&](Tensor<double>& v) {
                for (std::size_t i = 0; i < v.size(); ++i, ++o) v[i] = flat[o];
            };
            unpack(x);
            unpack(h_prev);
            unpack(c_prev);
            for (auto& [name, t] : params) {
                (void)name;
                for (std::size_t i = 0; i < t->size(); ++i, ++o) t->data()[i] = flat[o];
            }
            Tensor<double> hh, cc;
            cell.step(x, h_prev, c_prev, hh, cc, nullptr);
            return weighted_sum(hh, wh) + weighted_sum(cc, wc);
        };
        fold_report(entry, compare_gradients(analytic, finite_difference_gradient(f, flat0, kEps),
                                             kTol, kFloor));
    }
    return entry;
}

// One ConvLSTM recurrence step on a 2x2 grid, peepholes included.
inline GradSuiteEntry convlstm_step_entry() {
    GradSuiteEntry entry;
    entry.name = "convlstm_step";
    const std::size_t k = 3, cin = 1, F = 2, H = 2, W = 2;
    for (std::uint64_t s : {11u, 22u, 33u}) {
        Rng init(mix_seed(0xc15f3, s));
        ConvLSTMCell<double> cell(k, cin, F, H, W);
        ParamTable<double> params;
        cell.collect("", params);
        for (auto& [name, t] : params) {
            (void)name;
            for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = init.uniform(-0.5, 0.5);
        }
        Tensor<double> x = init.uniform_tensor<double>(Shape{H, W, cin}, -1.0, 1.0);
        Tensor<double> h_prev = init.uniform_tensor<double>(Shape{H, W, F}, -1.0, 1.0);
        Tensor<double> c_prev = init.uniform_tensor<double>(Shape{H, W, F}, -1.0, 1.0);
        const Tensor<double> wh = init.uniform_tensor<double>(Shape{H, W, F}, -1.0, 1.0);
        const Tensor<double> wc = init.uniform_tensor<double>(Shape{H, W, F}, -1.0, 1.0);

        std::vector<Tensor<double>> cache;
        Tensor<double> h, c;
        cell.step(x, h_prev, c_prev, h, c, &cache);
        GradStore<double> grads;
        Tensor<double> dx, dhp, dcp;
        cell.step_backward(cache.data(), wh, wc, dx, dhp, dcp, "", grads);

        std::size_t total = x.size() + h_prev.size() + c_prev.size();
        for (const auto& [name, t] : params) {
            (void)name;
            total += t->size();
        }
        Tensor<double> flat0(Shape{total}), analytic(Shape{total});
        std::size_t off = 0;
        auto pack = [&](const Tensor<double>& v, const Tensor<double>& g) {
            for (std::size_t i = 0; i < v.size(); ++i, ++off) {
                flat0[off] = v[i];
                analytic[off] = g[i];
            }
        };
        pack(x, dx);
        pack(h_prev, dhp);
        pack(c_prev, dcp);
        for (const auto& [name, t] : params) {
            const Tensor<double>* g = grads.find(name);
            for (std::size_t i = 0; i < t->size(); ++i, ++off) {
                flat0[off] = t->data()[i];
                analytic[off] = g != nullptr ? g->data()[i] : 0.0;
            }
        }
        auto f = [&](const Tensor<double>& flat) {
            std::size_t o = 0;
            auto unpack = [&](Tensor<double>& v) {
                for (std::size_t i = 0; i < v.size(); ++i, ++o) v[i] = flat[o];
            };
            unpack(x);
            unpack(h_prev);
            unpack(c_prev);
            for (auto& [name, t] : params) {
                (void)name;
                for (std::size_t i = 0; i < t->size(); ++i, ++o) t->data()[i] = flat[o];
            }
            Tensor<double> hh, cc;
            cell.step(x, h_prev, c_prev, hh, cc, nullptr);
            return weighted_sum(hh, wh) + weighted_sum(cc, wc);
        };
        fold_report(entry, compare_gradients(analytic, finite_difference_gradient(f, flat0, kEps),
                                             kTol, kFloor));
    }
    return entry;
}

// Raw scaled dot-product attention: d(w.Y)/d[Q, K, V].
inline GradSuiteEntry attention_entry() {
    GradSuiteEntry entry;
    entry.name = "scaled_dot_attention";
    const std::size_t rows = 3, keys = 4, dk = 2, dv = 3;
    for (std::uint64_t s : {11u, 22u, 33u}) {
        Rng init(mix_seed(0xa773, s));
        Tensor<double> Q = init.uniform_tensor<double>(Shape{rows, dk}, -1.0, 1.0);
        Tensor<double> K = init.uniform_tensor<double>(Shape{keys, dk}, -1.0, 1.0);
        Tensor<double> V = init.uniform_tensor<double>(Shape{keys, dv}, -1.0, 1.0);
        const Tensor<double> wy = init.uniform_tensor<double>(Shape{rows, dv}, -1.0, 1.0);

        const AttentionResult<double> full = scaled_dot_attention_full(Q, K, V);
        Tensor<double> dQ, dK, dV;
        scaled_dot_attention_backward(Q, K, V, full.weights, wy, dQ, dK, dV);

        const std::size_t total = Q.size() + K.size() + V.size();
        Tensor<double> flat0(Shape{total}), analytic(Shape{total});
        std::size_t off = 0;
        auto pack = [&](const Tensor<double>& v, const Tensor<double>& g) {
            for (std::size_t i = 0; i < v.size(); ++i, ++off) {
                flat0[off] = v[i];
                analytic[off] = g[i];
            }
        };
        pack(Q, dQ);
        pack(K, dK);
        pack(V, dV);
        auto f = [&](const Tensor<double>& flat) {
            std::size_t o = 0;
            auto unpack = [&](Tensor<double>& v) {
                for (std::size_t i = 0; i < v.size(); ++i, ++o) v[i] = flat[o];
            };
            unpack(Q);
            unpack(K);
            unpack(V);
            return weighted_sum(scaled_dot_attention(Q, K, V), wy);
        };
        fold_report(entry, compare_gradients(analytic, finite_difference_gradient(f, flat0, kEps),
                                             kTol, kFloor));
    }
    return entry;
}

}  // namespace gradsuite_detail

// Runs the full finite-difference suite (3 seeds per component, eps 1e-5,
// relative tolerance 1e-4) in double precision.
inline std::vector<GradSuiteEntry> run_gradient_suite() {
    using namespace gradsuite_detail;
    using std::make_unique;
    std::vector<GradSuiteEntry> out;

    out.push_back(layer_entry(
        "dense", [] { return make_unique<Dense<double>>(5, 4); }, Shape{5}));
    out.push_back(layer_entry(
        "dense_rank2", [] { return make_unique<Dense<double>>(4, 3); }, Shape{3, 4}));
    out.push_back(layer_entry(
        "relu", [] { return make_unique<Activation<double>>(ActKind::relu); }, Shape{7}));
    out.push_back(layer_entry(
        "sigmoid", [] { return make_unique<Activation<double>>(ActKind::sigmoid); }, Shape{7}));
    out.push_back(layer_entry(
        "tanh", [] { return make_unique<Activation<double>>(ActKind::tanh); }, Shape{7}));
    out.push_back(layer_entry(
        "softmax", [] { return make_unique<Activation<double>>(ActKind::softmax); }, Shape{7}));
    out.push_back(layer_entry(
        "flatten", [] { return make_unique<Flatten<double>>(); }, Shape{3, 4, 2}));
    out.push_back(layer_entry(
        "dropout_fixed_mask", [] { return make_unique<Dropout<double>>(0.35); }, Shape{9},
        /*training=*/true));
    out.push_back(layer_entry(
        "conv2d_valid", [] { return make_unique<Conv2D<double>>(3, 2, 3, Padding::valid); },
        Shape{5, 5, 2}));
    out.push_back(layer_entry(
        "conv2d_same_stride2_relu",
        [] { return make_unique<Conv2D<double>>(3, 2, 2, Padding::same, 2, true); },
        Shape{5, 5, 2}));
    out.push_back(layer_entry(
        "conv3d_valid", [] { return make_unique<Conv3D<double>>(3, 2, 2, Padding::valid); },
        Shape{4, 5, 5, 2}));
    out.push_back(layer_entry(
        "conv3d_valid_relu",
        [] { return make_unique<Conv3D<double>>(3, 1, 2, Padding::valid, 1, true); },
        Shape{4, 4, 4, 1}));
    out.push_back(layer_entry(
        "maxpool2d", [] { return make_unique<MaxPool2D<double>>(2, 2); }, Shape{6, 6, 3}));
    out.push_back(layer_entry(
        "maxpool3d", [] { return make_unique<MaxPool3D<double>>(2, 2, 2); }, Shape{4, 6, 6, 2}));
    out.push_back(layer_entry(
        "time_distributed_dense",
        [] { return make_unique<TimeDistributed<double>>(make_unique<Dense<double>>(4, 3)); },
        Shape{5, 4}));
    out.push_back(lstm_step_entry());
    out.push_back(layer_entry(
        "bilstm_last", [] { return make_unique<BiLSTMLast<double>>(3, 4); }, Shape{4, 3}));
    out.push_back(convlstm_step_entry());
    out.push_back(layer_entry(
        "convlstm_last", [] { return make_unique<ConvLSTMLast<double>>(3, 1, 2, 2, 2); },
        Shape{3, 2, 2, 1}));
    out.push_back(attention_entry());
    out.push_back(layer_entry(
        "multi_head_attention", [] { return make_unique<MultiHeadAttention<double>>(4, 2); },
        Shape{3, 4}));
    out.push_back(layer_entry(
        "positional_encoding", [] { return make_unique<AddPositionalEncoding<double>>(); },
        Shape{3, 4}));
    out.push_back(layer_entry(
        "layer_norm", [] { return make_unique<LayerNorm<double>>(4); }, Shape{3, 4}));
    out.push_back(layer_entry(
        "encoder_block", [] { return make_unique<EncoderBlock<double>>(4, 2, 6); }, Shape{3, 4}));
    out.push_back(layer_entry(
        "mean_time", [] { return make_unique<MeanOverTime<double>>(); }, Shape{4, 5}));
    out.push_back(layer_entry(
        "sequential_mlp",
        [] {
            auto seq = make_unique<Sequential<double>>();
            seq->add("fc1", make_unique<Dense<double>>(6, 5));
            seq->add("act", make_unique<Activation<double>>(ActKind::tanh));
            seq->add("fc2", make_unique<Dense<double>>(5, 2));
            return seq;
        },
        Shape{6}));
    return out;
}

}  // namespace stnet
