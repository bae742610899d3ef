#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "stnet/tensor.hpp"

namespace stnet {

// Row = true class, column = predicted class; row/column 0 is nonviolent.
using ConfusionCounts = std::array<std::array<std::size_t, 2>, 2>;

struct Metrics {
    double accuracy = 0.0;
    std::array<double, 2> precision{0.0, 0.0};
    std::array<double, 2> recall{0.0, 0.0};
    std::array<double, 2> f1{0.0, 0.0};
    ConfusionCounts confusion{{{0, 0}, {0, 0}}};
    double loss = 0.0;
    std::size_t samples = 0;
    bool degenerate_f1 = false;  // some class had an empty precision+recall sum
};

// Mean negative log-likelihood of the true class, clamped at 1e-12 so a zero
// probability stays finite. probs and one-hot targets are both [B, 2].
template <typename T>
double cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& targets);

// Index of the largest probability; exact ties resolve to the lower index
// (label 0, nonviolent).
int argmax_label(const float* probs, std::size_t n);

ConfusionCounts confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& labels);

// Accuracy, per-class precision/recall/F1 (0/0 -> 0, flagged) from counts.
Metrics metrics_from_confusion(const ConfusionCounts& counts, double loss);

// Structured text report ("stnet-metrics v1" schema).
std::string metrics_report(const Metrics& m);

extern template double cross_entropy_loss<float>(const Tensor<float>&, const Tensor<float>&);
extern template double cross_entropy_loss<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace stnet
