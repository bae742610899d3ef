#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "stnet/recurrent.hpp"
#include "stnet/rng.hpp"

using namespace stnet;

namespace {

void fill_params(ParamTable<double>& params, Rng& rng, double lo, double hi) {
    for (auto& [name, t] : params)
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = rng.uniform(lo, hi);
}

}  // namespace

TEST_CASE("lstm with zero parameters stays at zero") {
    LSTMCell<double> cell(3, 4);
    Tensor<double> xs = Tensor<double>::ones(Shape{5, 3});
    LSTMRun<double> run = lstm_forward(cell, xs, SeqDirection::forward);
    CHECK(run.states.shape() == Shape{5, 4});
    for (std::size_t i = 0; i < run.states.size(); ++i) CHECK(run.states[i] == 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(run.h_final[i] == 0.0);
        CHECK(run.c_final[i] == 0.0);
    }
}

TEST_CASE("lstm scalar step oracle") {
    // all weights zero, candidate bias 1:
    //   i = f = o = sigmoid(0) = 1/2, g = tanh(1)
    //   c = 1/2 tanh(1) = 0.38080..., h = 1/2 tanh(c) = 0.18170...
    LSTMCell<double> cell(1, 1);
    cell.bg[0] = 1.0;
    Tensor<double> h, c;
    cell.step(Tensor<double>(Shape{1}, {0.7}), Tensor<double>(Shape{1}, {0.0}),
              Tensor<double>(Shape{1}, {0.0}), h, c, nullptr);
    CHECK(c[0] == doctest::Approx(0.5 * std::tanh(1.0)).epsilon(1e-12));
    CHECK(h[0] == doctest::Approx(0.5 * std::tanh(0.5 * std::tanh(1.0))).epsilon(1e-12));
    CHECK(std::abs(c[0] - 0.38079) < 1e-5);
    CHECK(std::abs(h[0] - 0.18170) < 1e-5);
}

TEST_CASE("lstm gate wiring") {
    // forget gate wide open, input gate slammed shut: the cell state carries
    LSTMCell<double> cell(1, 2);
    cell.bf = Tensor<double>(Shape{2}, {30.0, 30.0});
    cell.bi = Tensor<double>(Shape{2}, {-30.0, -30.0});
    Tensor<double> c_prev(Shape{2}, {0.3, -0.8});
    Tensor<double> h, c;
    cell.step(Tensor<double>(Shape{1}, {1.0}), Tensor<double>(Shape{2}), c_prev, h, c, nullptr);
    CHECK(c[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(c[1] == doctest::Approx(-0.8).epsilon(1e-9));

    // output gate shut: h = 0 regardless of the cell state
    LSTMCell<double> gated(1, 1);
    gated.bg[0] = 5.0;
    gated.bo[0] = -40.0;
    gated.step(Tensor<double>(Shape{1}, {1.0}), Tensor<double>(Shape{1}),
               Tensor<double>(Shape{1}), h, c, nullptr);
    CHECK(std::abs(h[0]) < 1e-12);
    CHECK(c[0] > 0.4);
}

TEST_CASE("backward scan equals forward scan of the reversed sequence") {
    LSTMCell<double> cell(3, 4);
    Rng rng(17);
    ParamTable<double> params;
    cell.collect("", params);
    fill_params(params, rng, -0.6, 0.6);

    Tensor<double> xs = rng.uniform_tensor<double>(Shape{5, 3}, -1.0, 1.0);
    Tensor<double> rev(Shape{5, 3});
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < 3; ++j) rev.at(t, j) = xs.at(4 - t, j);

    LSTMRun<double> bwd = lstm_forward(cell, xs, SeqDirection::backward);
    LSTMRun<double> fwd_of_rev = lstm_forward(cell, rev, SeqDirection::forward);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(bwd.states.at(t, j) ==
                  doctest::Approx(fwd_of_rev.states.at(4 - t, j)).epsilon(1e-12));
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(bwd.h_final[j] == doctest::Approx(fwd_of_rev.h_final[j]).epsilon(1e-12));
}

TEST_CASE("bilstm concatenates per-step states") {
    LSTMCell<double> fwd(2, 3), bwd(2, 3);
    Rng rng(23);
    ParamTable<double> params;
    fwd.collect("f.", params);
    bwd.collect("b.", params);
    fill_params(params, rng, -0.5, 0.5);

    Tensor<double> xs = rng.uniform_tensor<double>(Shape{4, 2}, -1.0, 1.0);
    Tensor<double> out = bilstm_forward(fwd, bwd, xs);
    CHECK(out.shape() == Shape{4, 6});

    LSTMRun<double> rf = lstm_forward(fwd, xs, SeqDirection::forward);
    LSTMRun<double> rb = lstm_forward(bwd, xs, SeqDirection::backward);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(out.at(t, j) == rf.states.at(t, j));
            CHECK(out.at(t, j + 3) == rb.states.at(t, j));
        }

    LSTMCell<double> other(2, 4);
    CHECK_THROWS_AS(bilstm_forward(fwd, other, xs), ConfigError);
    CHECK_THROWS_AS(lstm_forward(fwd, Tensor<double>(Shape{4, 2, 1}), SeqDirection::forward),
                    ShapeError);
}

TEST_CASE("bilstm_last returns the final state of each direction") {
    BiLSTMLast<double> layer(2, 3);
    Rng rng(31);
    ParamTable<double> params;
    layer.collect_params("", params);
    fill_params(params, rng, -0.5, 0.5);

    Tensor<double> xs = rng.uniform_tensor<double>(Shape{6, 2}, -1.0, 1.0);
    RunContext<double> rc{false, nullptr};
    Tensor<double> y = layer.forward(xs, nullptr, rc);
    CHECK(y.shape() == Shape{6});

    LSTMRun<double> rf = lstm_forward(layer.fwd(), xs, SeqDirection::forward);
    LSTMRun<double> rb = lstm_forward(layer.bwd(), xs, SeqDirection::backward);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(y[j] == rf.h_final[j]);
        CHECK(y[j + 3] == rb.h_final[j]);
    }
    CHECK(layer.kind() == "bilstm_last");
}

TEST_CASE("convlstm scalar step oracle") {
    // weights zero, candidate bias 1: same closed form as the vector cell
    ConvLSTMCell<double> cell(1, 1, 1, 1, 1);
    cell.bc[0] = 1.0;
    Tensor<double> h, c;
    cell.step(Tensor<double>(Shape{1, 1, 1}, {0.9}), Tensor<double>(Shape{1, 1, 1}),
              Tensor<double>(Shape{1, 1, 1}), h, c, nullptr);
    CHECK(std::abs(c[0] - 0.38079) < 1e-5);
    CHECK(std::abs(h[0] - 0.18170) < 1e-5);

    // the same constants hold at every grid cell on a 2x2 state
    ConvLSTMCell<double> grid(3, 1, 1, 2, 2);
    grid.bc[0] = 1.0;
    grid.step(Tensor<double>::full(Shape{2, 2, 1}, 0.4), Tensor<double>(Shape{2, 2, 1}),
              Tensor<double>(Shape{2, 2, 1}), h, c, nullptr);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(c[i] - 0.38079) < 1e-5);
        CHECK(std::abs(h[i] - 0.18170) < 1e-5);
    }
}

TEST_CASE("convlstm peepholes read the cell state elementwise") {
    // forget peephole: with w_cf = +30 and c_prev = 1 the forget gate saturates
    // open while the input gate is held shut, so the state carries exactly
    ConvLSTMCell<double> cell(3, 1, 1, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) cell.wcf[i] = 30.0;
    cell.bi[0] = -30.0;
    Tensor<double> x = Tensor<double>::full(Shape{2, 2, 1}, 0.5);
    Tensor<double> c_prev = Tensor<double>::ones(Shape{2, 2, 1});
    Tensor<double> h, c;
    cell.step(x, Tensor<double>(Shape{2, 2, 1}), c_prev, h, c, nullptr);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(1.0).epsilon(1e-9));

    // without the peephole the same configuration halves the carried state
    ConvLSTMCell<double> control(3, 1, 1, 2, 2);
    control.bi[0] = -30.0;
    control.step(x, Tensor<double>(Shape{2, 2, 1}), c_prev, h, c, nullptr);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(0.5).epsilon(1e-9));

    // output peephole reads c_t (not c_prev): drive c_t to 1/2 tanh(30) ~ 1/2,
    // then w_co = +60 saturates the output gate -> h = tanh(c_t)
    ConvLSTMCell<double> out_peep(3, 1, 1, 1, 1);
    out_peep.bc[0] = 30.0;
    out_peep.wco[0] = 60.0;
    out_peep.step(Tensor<double>(Shape{1, 1, 1}), Tensor<double>(Shape{1, 1, 1}),
                  Tensor<double>(Shape{1, 1, 1}), h, c, nullptr);
    CHECK(c[0] == doctest::Approx(0.5 * std::tanh(30.0)).epsilon(1e-9));
    CHECK(h[0] == doctest::Approx(std::tanh(c[0])).epsilon(1e-6));

    ConvLSTMCell<double> out_control(3, 1, 1, 1, 1);
    out_control.bc[0] = 30.0;
    out_control.step(Tensor<double>(Shape{1, 1, 1}), Tensor<double>(Shape{1, 1, 1}),
                     Tensor<double>(Shape{1, 1, 1}), h, c, nullptr);
    CHECK(h[0] == doctest::Approx(0.5 * std::tanh(c[0])).epsilon(1e-9));
}

TEST_CASE("convlstm preserves the spatial grid") {
    ConvLSTMLast<double> layer(3, 2, 4, 5, 6);
    Rng rng(41);
    ParamTable<double> params;
    layer.collect_params("", params);
    fill_params(params, rng, -0.3, 0.3);

    RunContext<double> rc{false, nullptr};
    Tensor<double> x = rng.uniform_tensor<double>(Shape{3, 5, 6, 2}, -1.0, 1.0);
    Tensor<double> y = layer.forward(x, nullptr, rc);
    CHECK(y.shape() == Shape{5, 6, 4});
    CHECK(y.all_finite());
    CHECK(layer.kind() == "convlstm_last");

    CHECK_THROWS_AS(layer.forward(Tensor<double>(Shape{5, 6, 2}), nullptr, rc), ShapeError);
}

TEST_CASE("convlstm_last equals stepping the cell by hand") {
    ConvLSTMLast<double> layer(3, 1, 2, 3, 3);
    Rng rng(47);
    ParamTable<double> params;
    layer.collect_params("", params);
    fill_params(params, rng, -0.4, 0.4);

    Tensor<double> x = rng.uniform_tensor<double>(Shape{4, 3, 3, 1}, -1.0, 1.0);
    RunContext<double> rc{false, nullptr};
    Tensor<double> y = layer.forward(x, nullptr, rc);

    Tensor<double> h(layer.cell().state_shape()), c(layer.cell().state_shape());
    for (std::size_t t = 0; t < 4; ++t) {
        Tensor<double> hn, cn;
        layer.cell().step(slice_axis0(x, t), h, c, hn, cn, nullptr);
        h = std::move(hn);
        c = std::move(cn);
    }
    REQUIRE(y.size() == h.size());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == h[i]);
}

TEST_CASE("recurrent step caches record every gate") {
    LSTMCell<double> cell(2, 3);
    Rng rng(53);
    ParamTable<double> params;
    cell.collect("", params);
    fill_params(params, rng, -0.5, 0.5);

    std::vector<Tensor<double>> sink;
    Tensor<double> xs = rng.uniform_tensor<double>(Shape{3, 2}, -1.0, 1.0);
    lstm_forward(cell, xs, SeqDirection::forward, &sink);
    CHECK(sink.size() == 3 * kStepSlots);
    // slot 0 of step t is the input slice
    for (std::size_t t = 0; t < 3; ++t) {
        const Tensor<double>& saved_x = sink[t * kStepSlots];
        CHECK(saved_x.shape() == Shape{2});
        CHECK(saved_x[0] == xs.at(t, std::size_t{0}));
        CHECK(saved_x[1] == xs.at(t, std::size_t{1}));
    }
}
