#include "stnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stnet/error.hpp"

namespace stnet {

template <typename T>
double cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& targets) {
    if (probs.rank() != 2 || probs.shape()[1] != 2)
        throw ShapeError("cross entropy expects probabilities [B, 2], got " +
                         probs.shape().to_string());
    if (probs.shape() != targets.shape())
        throw ShapeError("probabilities " + probs.shape().to_string() + " and targets " +
                         targets.shape().to_string() + " disagree");
    const std::size_t b = probs.shape()[0];
    double total = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
        const T* p = probs.data() + r * 2;
        const T* t = targets.data() + r * 2;
        const double row_sum = static_cast<double>(p[0]) + static_cast<double>(p[1]);
        if (!std::isfinite(row_sum) || std::abs(row_sum - 1.0) > 1e-4)
            throw NumericError("probability row " + std::to_string(r) + " sums to " +
                               std::to_string(row_sum) + ", expected 1");
        double p_true = 0.0;
        for (int k = 0; k < 2; ++k) p_true += static_cast<double>(t[k]) * static_cast<double>(p[k]);
        total += -std::log(std::max(p_true, 1e-12));
    }
    return total / static_cast<double>(b);
}

template double cross_entropy_loss<float>(const Tensor<float>&, const Tensor<float>&);
template double cross_entropy_loss<double>(const Tensor<double>&, const Tensor<double>&);

int argmax_label(const float* probs, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (probs[i] > probs[best]) best = i;
    return static_cast<int>(best);
}

ConfusionCounts confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw ShapeError("confusion matrix needs equal-length inputs, got " +
                         std::to_string(predictions.size()) + " predictions and " +
                         std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw ShapeError("confusion matrix needs at least one sample");
    ConfusionCounts counts{{{0, 0}, {0, 0}}};
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int t = labels[i], p = predictions[i];
        if (t < 0 || t > 1 || p < 0 || p > 1)
            throw LabelError("confusion matrix labels must be 0 or 1, got true " +
                             std::to_string(t) + " / predicted " + std::to_string(p));
        ++counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    }
    return counts;
}

Metrics metrics_from_confusion(const ConfusionCounts& counts, double loss) {
    Metrics m;
    m.confusion = counts;
    m.loss = loss;
    m.samples = counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    if (m.samples == 0) throw ShapeError("metrics need at least one sample");
    m.accuracy = static_cast<double>(counts[0][0] + counts[1][1]) / static_cast<double>(m.samples);
    for (std::size_t k = 0; k < 2; ++k) {
        const double tp = static_cast<double>(counts[k][k]);
        const double fp = static_cast<double>(counts[1 - k][k]);
        const double fn = static_cast<double>(counts[k][1 - k]);
        m.precision[k] = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
        m.recall[k] = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
        const double pr = m.precision[k] + m.recall[k];
        if (pr > 0.0) {
            m.f1[k] = 2.0 * m.precision[k] * m.recall[k] / pr;
        } else {
            m.f1[k] = 0.0;
            m.degenerate_f1 = true;
        }
    }
    return m;
}

std::string metrics_report(const Metrics& m) {
    static const char* class_names[2] = {"nonviolent", "violent"};
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(6);
    out << "stnet-metrics v1\n";
    out << "samples " << m.samples << "\n";
    out << "accuracy " << m.accuracy << "\n";
    out << "loss " << m.loss << "\n";
    for (std::size_t k = 0; k < 2; ++k)
        out << "class " << class_names[k] << " precision " << m.precision[k] << " recall "
            << m.recall[k] << " f1 " << m.f1[k] << "\n";
    out << "confusion " << m.confusion[0][0] << " " << m.confusion[0][1] << " " << m.confusion[1][0]
        << " " << m.confusion[1][1] << "\n";
    if (m.degenerate_f1) out << "note degenerate-f1 (a class had no precision/recall mass)\n";
    return out.str();
}

}  // namespace stnet
