#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stnet/layers.hpp"

namespace stnet {

namespace detail {

template <typename T>
inline T sigmoid_scalar(T v) {
    return T(1) / (T(1) + std::exp(-v));
}

// a = W x + U h + b, with W: [H, in], U: [H, H].
template <typename T>
void gate_affine(const Tensor<T>& W, const Tensor<T>& U, const Tensor<T>& b, const Tensor<T>& x,
                 const Tensor<T>& h, Tensor<T>& a) {
    const std::size_t H = W.shape()[0], in = W.shape()[1];
    for (std::size_t i = 0; i < H; ++i) {
        const T* wrow = W.data() + i * in;
        const T* urow = U.data() + i * H;
        T acc = b[i];
        for (std::size_t j = 0; j < in; ++j) acc += wrow[j] * x[j];
        for (std::size_t j = 0; j < H; ++j) acc += urow[j] * h[j];
        a[i] = acc;
    }
}

}  // namespace detail

// Step caches are stored as a fixed run of tensors appended to a sink vector:
// x, h_prev, c_prev, then the gate outputs i, f, g, o and the new cell c.
inline constexpr std::size_t kStepSlots = 8;

enum StepSlot : std::size_t {
    kSlotX = 0,
    kSlotHPrev,
    kSlotCPrev,
    kSlotI,
    kSlotF,
    kSlotG,
    kSlotO,
    kSlotC
};

// ---------------------------------------------------------------------------
// Gated recurrence on flat feature vectors. Gate order throughout: input (i),
// forget (f), candidate (g, tanh), output (o).
//   i = sig(Wi x + Ui h + bi)      f = sig(Wf x + Uf h + bf)
//   g = tanh(Wg x + Ug h + bg)     c' = f.c + i.g
//   o = sig(Wo x + Uo h + bo)      h' = o.tanh(c')

template <typename T>
struct LSTMCell {
    Tensor<T> wi, wf, wg, wo;  // [H, in]
    Tensor<T> ui, uf, ug, uo;  // [H, H]
    Tensor<T> bi, bf, bg, bo;  // [H]

    LSTMCell(std::size_t in, std::size_t hidden)
        : wi(Shape{hidden, in}), wf(Shape{hidden, in}), wg(Shape{hidden, in}), wo(Shape{hidden, in}),
          ui(Shape{hidden, hidden}), uf(Shape{hidden, hidden}), ug(Shape{hidden, hidden}),
          uo(Shape{hidden, hidden}),
          bi(Shape{hidden}), bf(Shape{hidden}), bg(Shape{hidden}), bo(Shape{hidden}) {}

    std::size_t input_size() const { return wi.shape()[1]; }
    std::size_t hidden_size() const { return wi.shape()[0]; }

    void step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev, Tensor<T>& h_out,
              Tensor<T>& c_out, std::vector<Tensor<T>>* sink) const {
        const std::size_t H = hidden_size();
        if (x.rank() != 1 || x.shape()[0] != input_size())
            throw ShapeError("lstm step: input " + x.shape().to_string() + " does not match weight " +
                             wi.shape().to_string());
        if (h_prev.shape() != Shape{H} || c_prev.shape() != Shape{H})
            throw ShapeError("lstm step: state size mismatch");
        Tensor<T> ai(Shape{H}), af(Shape{H}), ag(Shape{H}), ao(Shape{H});
        detail::gate_affine(wi, ui, bi, x, h_prev, ai);
        detail::gate_affine(wf, uf, bf, x, h_prev, af);
        detail::gate_affine(wg, ug, bg, x, h_prev, ag);
        detail::gate_affine(wo, uo, bo, x, h_prev, ao);
        Tensor<T> ig(Shape{H}), fg(Shape{H}), gg(Shape{H}), og(Shape{H});
        h_out = Tensor<T>(Shape{H});
        c_out = Tensor<T>(Shape{H});
        for (std::size_t k = 0; k < H; ++k) {
            ig[k] = detail::sigmoid_scalar(ai[k]);
            fg[k] = detail::sigmoid_scalar(af[k]);
            gg[k] = std::tanh(ag[k]);
            og[k] = detail::sigmoid_scalar(ao[k]);
            c_out[k] = fg[k] * c_prev[k] + ig[k] * gg[k];
            h_out[k] = og[k] * std::tanh(c_out[k]);
        }
        if (sink) {
            sink->push_back(x);
            sink->push_back(h_prev);
            sink->push_back(c_prev);
            sink->push_back(std::move(ig));
            sink->push_back(std::move(fg));
            sink->push_back(std::move(gg));
            sink->push_back(std::move(og));
            sink->push_back(c_out);
        }
    }

    // `cc` points at the kStepSlots tensors this step appended during forward.
    // Consumes dh (gradient on h_out) and dc_in (carry into c_out from future
    // steps); emits dx, dh_prev and the carry dc_prev. Parameter gradients
    // accumulate under `prefix`.
    void step_backward(const Tensor<T>* cc, const Tensor<T>& dh, const Tensor<T>& dc_in,
                       Tensor<T>& dx, Tensor<T>& dh_prev, Tensor<T>& dc_prev,
                       const std::string& prefix, GradStore<T>& grads) const {
        const std::size_t H = hidden_size(), in = input_size();
        const Tensor<T>& x = cc[kSlotX];
        const Tensor<T>& h_prev = cc[kSlotHPrev];
        const Tensor<T>& c_prev = cc[kSlotCPrev];
        const Tensor<T>& ig = cc[kSlotI];
        const Tensor<T>& fg = cc[kSlotF];
        const Tensor<T>& gg = cc[kSlotG];
        const Tensor<T>& og = cc[kSlotO];
        const Tensor<T>& c = cc[kSlotC];
        Tensor<T> dai(Shape{H}), daf(Shape{H}), dag(Shape{H}), dao(Shape{H});
        dx = Tensor<T>(Shape{in});
        dh_prev = Tensor<T>(Shape{H});
        dc_prev = Tensor<T>(Shape{H});
        for (std::size_t k = 0; k < H; ++k) {
            const T tc = std::tanh(c[k]);
            const T do_ = dh[k] * tc;
            const T dc = dc_in[k] + dh[k] * og[k] * (T(1) - tc * tc);
            dao[k] = do_ * og[k] * (T(1) - og[k]);
            daf[k] = dc * c_prev[k] * fg[k] * (T(1) - fg[k]);
            dai[k] = dc * gg[k] * ig[k] * (T(1) - ig[k]);
            dag[k] = dc * ig[k] * (T(1) - gg[k] * gg[k]);
            dc_prev[k] = dc * fg[k];
        }
        const std::array<const Tensor<T>*, 4> W{&wi, &wf, &wg, &wo};
        const std::array<const Tensor<T>*, 4> U{&ui, &uf, &ug, &uo};
        const std::array<const Tensor<T>*, 4> da{&dai, &daf, &dag, &dao};
        static const char* wn[4] = {"wi", "wf", "wg", "wo"};
        static const char* un[4] = {"ui", "uf", "ug", "uo"};
        static const char* bn[4] = {"bi", "bf", "bg", "bo"};
        for (int g = 0; g < 4; ++g) {
            Tensor<T>& dW = grads.slot(prefix + wn[g], W[g]->shape());
            Tensor<T>& dU = grads.slot(prefix + un[g], U[g]->shape());
            Tensor<T>& db = grads.slot(prefix + bn[g], Shape{H});
            const Tensor<T>& dag_ = *da[g];
            for (std::size_t k = 0; k < H; ++k) {
                const T gk = dag_[k];
                db[k] += gk;
                const T* wrow = W[g]->data() + k * in;
                const T* urow = U[g]->data() + k * H;
                T* dwrow = dW.data() + k * in;
                T* durow = dU.data() + k * H;
                for (std::size_t j = 0; j < in; ++j) {
                    dwrow[j] += gk * x[j];
                    dx[j] += gk * wrow[j];
                }
                for (std::size_t j = 0; j < H; ++j) {
                    durow[j] += gk * h_prev[j];
                    dh_prev[j] += gk * urow[j];
                }
            }
        }
    }

    void collect(const std::string& prefix, ParamTable<T>& out) {
        out.emplace_back(prefix + "wi", &wi);
        out.emplace_back(prefix + "wf", &wf);
        out.emplace_back(prefix + "wg", &wg);
        out.emplace_back(prefix + "wo", &wo);
        out.emplace_back(prefix + "ui", &ui);
        out.emplace_back(prefix + "uf", &uf);
        out.emplace_back(prefix + "ug", &ug);
        out.emplace_back(prefix + "uo", &uo);
        out.emplace_back(prefix + "bi", &bi);
        out.emplace_back(prefix + "bf", &bf);
        out.emplace_back(prefix + "bg", &bg);
        out.emplace_back(prefix + "bo", &bo);
    }
};

enum class SeqDirection { forward, backward };

template <typename T>
struct LSTMRun {
    Tensor<T> states;   // [T, H], reported in original time order
    Tensor<T> h_final;  // state after consuming the last step in scan order
    Tensor<T> c_final;
};

// Runs the recurrence over xs [T, in] from zero initial states. The backward
// direction consumes the reversed sequence; states are re-reversed so row t of
// the result always refers to input step t. When `sink` is given, each scan
// step appends its kStepSlots cache tensors in scan order.
template <typename T>
LSTMRun<T> lstm_forward(const LSTMCell<T>& cell, const Tensor<T>& xs, SeqDirection dir,
                        std::vector<Tensor<T>>* sink = nullptr) {
    if (xs.rank() != 2)
        throw ShapeError("lstm_forward: input must be [T, in], got " + xs.shape().to_string());
    const std::size_t steps = xs.shape()[0], H = cell.hidden_size();
    LSTMRun<T> run;
    run.states = Tensor<T>(Shape{steps, H});
    Tensor<T> h(Shape{H}), c(Shape{H});
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = dir == SeqDirection::forward ? s : steps - 1 - s;
        Tensor<T> h_next, c_next;
        cell.step(slice_axis0(xs, t), h, c, h_next, c_next, sink);
        h = std::move(h_next);
        c = std::move(c_next);
        set_slice_axis0(run.states, t, h);
    }
    run.h_final = h;
    run.c_final = c;
    return run;
}

// Per-step concatenation [forward_t ; backward_t] -> [T, 2H].
template <typename T>
Tensor<T> bilstm_forward(const LSTMCell<T>& fwd, const LSTMCell<T>& bwd, const Tensor<T>& xs) {
    if (fwd.hidden_size() != bwd.hidden_size())
        throw ConfigError("bilstm: directions disagree on hidden size (" +
                          std::to_string(fwd.hidden_size()) + " vs " +
                          std::to_string(bwd.hidden_size()) + ")");
    const LSTMRun<T> rf = lstm_forward(fwd, xs, SeqDirection::forward);
    const LSTMRun<T> rb = lstm_forward(bwd, xs, SeqDirection::backward);
    const std::size_t steps = xs.shape()[0], H = fwd.hidden_size();
    Tensor<T> out(Shape{steps, 2 * H});
    for (std::size_t t = 0; t < steps; ++t) {
        std::copy(rf.states.data() + t * H, rf.states.data() + (t + 1) * H, out.data() + t * 2 * H);
        std::copy(rb.states.data() + t * H, rb.states.data() + (t + 1) * H,
                  out.data() + t * 2 * H + H);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bidirectional recurrent layer returning the final state of each direction:
// [T, in] -> [2H] (forward state after step T-1, backward state after step 0).

template <typename T>
class BiLSTMLast : public Layer<T> {
public:
    BiLSTMLast(std::size_t in, std::size_t hidden) : fwd_(in, hidden), bwd_(in, hidden) {}

    std::string kind() const override { return "bilstm_last"; }

    LSTMCell<T>& fwd() { return fwd_; }
    LSTMCell<T>& bwd() { return bwd_; }
    std::size_t hidden_size() const { return fwd_.hidden_size(); }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        const std::size_t H = fwd_.hidden_size();
        std::vector<Tensor<T>>* sink = nullptr;
        if (tape) {
            tape->shapes.push_back(x.shape());
            sink = &tape->saved;
        }
        const LSTMRun<T> rf = lstm_forward(fwd_, x, SeqDirection::forward, sink);
        const LSTMRun<T> rb = lstm_forward(bwd_, x, SeqDirection::backward, sink);
        Tensor<T> out(Shape{2 * H});
        std::copy(rf.h_final.data(), rf.h_final.data() + H, out.data());
        std::copy(rb.h_final.data(), rb.h_final.data() + H, out.data() + H);
        return out;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        if (tape.shapes.empty()) throw UsageError("bilstm backward called without a forward cache");
        const Shape& in_shape = tape.shapes[0];
        const std::size_t steps = in_shape[0], H = fwd_.hidden_size();
        if (tape.saved.size() != 2 * steps * kStepSlots)
            throw UsageError("bilstm backward: forward cache incomplete");
        Tensor<T> dx(in_shape);
        Tensor<T> dy_f(Shape{H}), dy_b(Shape{H});
        std::copy(dy.data(), dy.data() + H, dy_f.data());
        std::copy(dy.data() + H, dy.data() + 2 * H, dy_b.data());
        run_backward(fwd_, tape.saved.data(), dy_f, steps, false, dx, prefix + "fwd.", grads);
        run_backward(bwd_, tape.saved.data() + steps * kStepSlots, dy_b, steps, true, dx,
                     prefix + "bwd.", grads);
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        fwd_.collect(prefix + "fwd.", out);
        bwd_.collect(prefix + "bwd.", out);
    }

private:
    // Gradient only enters at the final scan step; earlier steps receive it
    // through the recurrent carries.
    void run_backward(const LSTMCell<T>& cell, const Tensor<T>* cc, const Tensor<T>& dh_last,
                      std::size_t steps, bool reversed, Tensor<T>& dx, const std::string& prefix,
                      GradStore<T>& grads) const {
        const std::size_t H = cell.hidden_size(), in = cell.input_size();
        Tensor<T> dh = dh_last, dc(Shape{H});
        for (std::size_t s = steps; s-- > 0;) {
            Tensor<T> dxt, dhp, dcp;
            cell.step_backward(cc + s * kStepSlots, dh, dc, dxt, dhp, dcp, prefix, grads);
            const std::size_t t = reversed ? steps - 1 - s : s;
            for (std::size_t j = 0; j < in; ++j) dx[t * in + j] += dxt[j];
            dh = std::move(dhp);
            dc = std::move(dcp);
        }
    }

    LSTMCell<T> fwd_, bwd_;
};

// ---------------------------------------------------------------------------
// Convolutional gated recurrence: input-to-state and state-to-state maps are
// same-padded convolutions; cell-state feedback enters through element-wise
// (Hadamard) peephole tensors shaped like the state itself.
//   i = sig(wxi*x + whi*h + wci.c      + bi)
//   f = sig(wxf*x + whf*h + wcf.c      + bf)
//   g = tanh(wxc*x + whc*h             + bc)
//   c' = f.c + i.g
//   o = sig(wxo*x + who*h + wco.c'     + bo)
//   h' = o.tanh(c')

template <typename T>
struct ConvLSTMCell {
    Tensor<T> wxi, wxf, wxc, wxo;  // [k, k, Cin, F]
    Tensor<T> whi, whf, whc, who;  // [k, k, F, F]
    Tensor<T> wci, wcf, wco;       // [H, W, F] (state shape)
    Tensor<T> bi, bf, bc, bo;      // [F]

    ConvLSTMCell(std::size_t kernel, std::size_t in_ch, std::size_t filters, std::size_t h,
                 std::size_t w)
        : wxi(Shape{kernel, kernel, in_ch, filters}), wxf(Shape{kernel, kernel, in_ch, filters}),
          wxc(Shape{kernel, kernel, in_ch, filters}), wxo(Shape{kernel, kernel, in_ch, filters}),
          whi(Shape{kernel, kernel, filters, filters}), whf(Shape{kernel, kernel, filters, filters}),
          whc(Shape{kernel, kernel, filters, filters}), who(Shape{kernel, kernel, filters, filters}),
          wci(Shape{h, w, filters}), wcf(Shape{h, w, filters}), wco(Shape{h, w, filters}),
          bi(Shape{filters}), bf(Shape{filters}), bc(Shape{filters}), bo(Shape{filters}) {}

    std::size_t filters() const { return bi.shape()[0]; }
    std::size_t in_channels() const { return wxi.shape()[2]; }
    const Shape& state_shape() const { return wci.shape(); }

    void step(const Tensor<T>& x, const Tensor<T>& h_prev, const Tensor<T>& c_prev, Tensor<T>& h_out,
              Tensor<T>& c_out, std::vector<Tensor<T>>* sink) const {
        if (x.rank() != 3 || x.shape()[2] != in_channels())
            throw ShapeError("convlstm step: input " + x.shape().to_string() +
                             " does not match kernel " + wxi.shape().to_string());
        if (h_prev.shape() != state_shape() || c_prev.shape() != state_shape())
            throw ShapeError("convlstm step: state shape " + h_prev.shape().to_string() +
                             " does not match peephole " + state_shape().to_string());
        if (x.shape()[0] != state_shape()[0] || x.shape()[1] != state_shape()[1])
            throw ShapeError("convlstm step: input spatial dims " + x.shape().to_string() +
                             " disagree with state " + state_shape().to_string());
        Tensor<T> ai = conv2d_raw(x, wxi, Padding::same, 1);
        add_in_place(ai, conv2d_raw(h_prev, whi, Padding::same, 1));
        add_channel_bias(ai, bi);
        Tensor<T> af = conv2d_raw(x, wxf, Padding::same, 1);
        add_in_place(af, conv2d_raw(h_prev, whf, Padding::same, 1));
        add_channel_bias(af, bf);
        Tensor<T> ac = conv2d_raw(x, wxc, Padding::same, 1);
        add_in_place(ac, conv2d_raw(h_prev, whc, Padding::same, 1));
        add_channel_bias(ac, bc);
        Tensor<T> ao = conv2d_raw(x, wxo, Padding::same, 1);
        add_in_place(ao, conv2d_raw(h_prev, who, Padding::same, 1));
        add_channel_bias(ao, bo);

        const std::size_t n = ai.size();
        Tensor<T> ig(ai.shape()), fg(ai.shape()), gg(ai.shape()), og(ai.shape());
        c_out = Tensor<T>(ai.shape());
        h_out = Tensor<T>(ai.shape());
        for (std::size_t k = 0; k < n; ++k) {
            ig[k] = detail::sigmoid_scalar(ai[k] + wci[k] * c_prev[k]);
            fg[k] = detail::sigmoid_scalar(af[k] + wcf[k] * c_prev[k]);
            gg[k] = std::tanh(ac[k]);
            c_out[k] = fg[k] * c_prev[k] + ig[k] * gg[k];
            og[k] = detail::sigmoid_scalar(ao[k] + wco[k] * c_out[k]);
            h_out[k] = og[k] * std::tanh(c_out[k]);
        }
        if (sink) {
            sink->push_back(x);
            sink->push_back(h_prev);
            sink->push_back(c_prev);
            sink->push_back(std::move(ig));
            sink->push_back(std::move(fg));
            sink->push_back(std::move(gg));
            sink->push_back(std::move(og));
            sink->push_back(c_out);
        }
    }

    void step_backward(const Tensor<T>* cc, const Tensor<T>& dh, const Tensor<T>& dc_in,
                       Tensor<T>& dx, Tensor<T>& dh_prev, Tensor<T>& dc_prev,
                       const std::string& prefix, GradStore<T>& grads) const {
        const Tensor<T>& x = cc[kSlotX];
        const Tensor<T>& h_prev = cc[kSlotHPrev];
        const Tensor<T>& c_prev = cc[kSlotCPrev];
        const Tensor<T>& ig = cc[kSlotI];
        const Tensor<T>& fg = cc[kSlotF];
        const Tensor<T>& gg = cc[kSlotG];
        const Tensor<T>& og = cc[kSlotO];
        const Tensor<T>& c = cc[kSlotC];
        const std::size_t n = c.size();
        Tensor<T> dai(c.shape()), daf(c.shape()), dac(c.shape()), dao(c.shape());
        dc_prev = Tensor<T>(c.shape());
        Tensor<T>& dwci = grads.slot(prefix + "wci", wci.shape());
        Tensor<T>& dwcf = grads.slot(prefix + "wcf", wcf.shape());
        Tensor<T>& dwco = grads.slot(prefix + "wco", wco.shape());
        for (std::size_t k = 0; k < n; ++k) {
            const T tc = std::tanh(c[k]);
            const T do_ = dh[k] * tc;
            const T dao_k = do_ * og[k] * (T(1) - og[k]);
            dao[k] = dao_k;
            dwco[k] += dao_k * c[k];
            const T dc = dc_in[k] + dh[k] * og[k] * (T(1) - tc * tc) + dao_k * wco[k];
            const T daf_k = dc * c_prev[k] * fg[k] * (T(1) - fg[k]);
            const T dai_k = dc * gg[k] * ig[k] * (T(1) - ig[k]);
            daf[k] = daf_k;
            dai[k] = dai_k;
            dac[k] = dc * ig[k] * (T(1) - gg[k] * gg[k]);
            dwci[k] += dai_k * c_prev[k];
            dwcf[k] += daf_k * c_prev[k];
            dc_prev[k] = dc * fg[k] + dai_k * wci[k] + daf_k * wcf[k];
        }
        dx = Tensor<T>(x.shape());
        dh_prev = Tensor<T>(h_prev.shape());
        const std::array<const Tensor<T>*, 4> WX{&wxi, &wxf, &wxc, &wxo};
        const std::array<const Tensor<T>*, 4> WH{&whi, &whf, &whc, &who};
        const std::array<const Tensor<T>*, 4> da{&dai, &daf, &dac, &dao};
        static const char* xn[4] = {"wxi", "wxf", "wxc", "wxo"};
        static const char* hn[4] = {"whi", "whf", "whc", "who"};
        static const char* bn[4] = {"bi", "bf", "bc", "bo"};
        for (int g = 0; g < 4; ++g) {
            Tensor<T>& dwx = grads.slot(prefix + xn[g], WX[g]->shape());
            Tensor<T>& dwh = grads.slot(prefix + hn[g], WH[g]->shape());
            Tensor<T>& db = grads.slot(prefix + bn[g], bi.shape());
            conv2d_raw_backward(x, *WX[g], *da[g], Padding::same, 1, dx, dwx);
            conv2d_raw_backward(h_prev, *WH[g], *da[g], Padding::same, 1, dh_prev, dwh);
            reduce_channel_bias(*da[g], db);
        }
    }

    void collect(const std::string& prefix, ParamTable<T>& out) {
        out.emplace_back(prefix + "wxi", &wxi);
        out.emplace_back(prefix + "wxf", &wxf);
        out.emplace_back(prefix + "wxc", &wxc);
        out.emplace_back(prefix + "wxo", &wxo);
        out.emplace_back(prefix + "whi", &whi);
        out.emplace_back(prefix + "whf", &whf);
        out.emplace_back(prefix + "whc", &whc);
        out.emplace_back(prefix + "who", &who);
        out.emplace_back(prefix + "wci", &wci);
        out.emplace_back(prefix + "wcf", &wcf);
        out.emplace_back(prefix + "wco", &wco);
        out.emplace_back(prefix + "bi", &bi);
        out.emplace_back(prefix + "bf", &bf);
        out.emplace_back(prefix + "bc", &bc);
        out.emplace_back(prefix + "bo", &bo);
    }
};

// Sequence layer: [T, H, W, Cin] -> final hidden state [H, W, F] from zero
// initial states.

template <typename T>
class ConvLSTMLast : public Layer<T> {
public:
    ConvLSTMLast(std::size_t kernel, std::size_t in_ch, std::size_t filters, std::size_t h,
                 std::size_t w)
        : cell_(kernel, in_ch, filters, h, w) {}

    std::string kind() const override { return "convlstm_last"; }

    ConvLSTMCell<T>& cell() { return cell_; }
    const ConvLSTMCell<T>& cell() const { return cell_; }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape, RunContext<T>&) const override {
        if (x.rank() != 4)
            throw ShapeError("convlstm: input must be [T,H,W,C], got " + x.shape().to_string());
        const std::size_t steps = x.shape()[0];
        Tensor<T> h(cell_.state_shape()), c(cell_.state_shape());
        std::vector<Tensor<T>>* sink = nullptr;
        if (tape) {
            tape->shapes.push_back(x.shape());
            sink = &tape->saved;
        }
        for (std::size_t t = 0; t < steps; ++t) {
            Tensor<T> hn, cn;
            cell_.step(slice_axis0(x, t), h, c, hn, cn, sink);
            h = std::move(hn);
            c = std::move(cn);
        }
        return h;
    }

    Tensor<T> backward(const Tape<T>& tape, const Tensor<T>& dy, const std::string& prefix,
                       GradStore<T>& grads) const override {
        if (tape.shapes.empty() || tape.saved.size() % kStepSlots != 0 || tape.saved.empty())
            throw UsageError("convlstm backward called without a forward cache");
        const std::size_t steps = tape.saved.size() / kStepSlots;
        Tensor<T> dx(tape.shapes[0]);
        Tensor<T> dh = dy, dc(cell_.state_shape());
        for (std::size_t t = steps; t-- > 0;) {
            Tensor<T> dxt, dhp, dcp;
            cell_.step_backward(tape.saved.data() + t * kStepSlots, dh, dc, dxt, dhp, dcp, prefix,
                                grads);
            const std::size_t m = dxt.size();
            for (std::size_t j = 0; j < m; ++j) dx[t * m + j] += dxt[j];
            dh = std::move(dhp);
            dc = std::move(dcp);
        }
        return dx;
    }

    void collect_params(const std::string& prefix, ParamTable<T>& out) override {
        cell_.collect(prefix, out);
    }

private:
    ConvLSTMCell<T> cell_;
};

}  // namespace stnet
