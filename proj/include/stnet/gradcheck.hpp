#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include "stnet/error.hpp"
#include "stnet/tensor.hpp"

namespace stnet {

// Central-difference gradient of a scalar function, one coordinate at a time.
// This is the independent oracle every analytic backward pass is checked
// against; it must stay free of any layer code.
template <typename T, typename F>
Tensor<T> finite_difference_gradient(const F& f, const Tensor<T>& x, T eps = T(1e-5)) {
    if (!(eps > T(0))) throw OracleError("finite_difference_gradient: eps must be positive");
    Tensor<T> grad(x.shape());
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const T fp = f(probe);
        probe[i] = x[i] - eps;
        const T fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm))) {
            throw OracleError("finite_difference_gradient: non-finite evaluation at coordinate " +
                              std::to_string(i));
        }
        grad[i] = (fp - fm) / (T(2) * eps);
    }
    return grad;
}

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t compared = 0;
    std::size_t exempt = 0;
    bool pass = true;
};

// Element-wise relative error |a-n| / (|a|+|n|), elements whose combined
// magnitude falls below `floor` are exempt.
template <typename T>
GradCheckReport compare_gradients(const Tensor<T>& analytic, const Tensor<T>& numeric,
                                  double tol = 1e-4, double floor = 1e-8) {
    if (!analytic.same_shape(numeric)) {
        throw ShapeError("compare_gradients: shapes differ, " + analytic.shape().to_string() +
                         " vs " + numeric.shape().to_string());
    }
    GradCheckReport rep;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = static_cast<double>(analytic[i]);
        const double n = static_cast<double>(numeric[i]);
        const double mag = std::abs(a) + std::abs(n);
        if (mag < floor) {
            ++rep.exempt;
            continue;
        }
        const double rel = std::abs(a - n) / mag;
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.compared;
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace stnet
