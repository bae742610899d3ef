#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stnet/datapipe.hpp"
#include "stnet/metrics.hpp"
#include "stnet/model.hpp"

namespace stnet {

struct TrainConfig {
    enum class Optimizer { sgd, adam };
    Optimizer optimizer = Optimizer::adam;
    double lr = 1e-4;
    std::size_t batch = 4;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    double clip_grad_norm = 0.0;       // 0 disables clipping
    std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 disables
    std::string checkpoint_dir;
    double stop_at_val_accuracy = 0.0;  // end training early once reached; 0 disables
    double stop_at_train_loss = 0.0;    // end training early once mean epoch loss drops below; 0 disables
};

struct HistoryRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0, train_accuracy = 0.0;
    double val_loss = 0.0, val_accuracy = 0.0;
};

struct Sample {
    Tensor<float> clip;  // preprocessed [frames, H, W, C]
    int label = 0;
};
using SampleSet = std::vector<Sample>;

// First/second-moment state for Adam, keyed by parameter name. step counts
// completed optimizer steps.
struct OptimizerState {
    std::map<std::string, Tensor<float>> m, v;
    std::size_t step = 0;
};

// One parameter update. SGD: w -= lr*g. Adam: bias-corrected moment recursion
// with beta1 0.9, beta2 0.999, eps 1e-8. Parameters without a gradient slot
// are treated as having a zero gradient.
void optimizer_step(ParamTable<float>& params, const GradStore<float>& grads,
                    OptimizerState& state, const TrainConfig& cfg);

// Mini-batch training with seeded per-epoch shuffling; one history record per
// completed epoch. Non-finite losses raise a divergence error naming the
// epoch and step.
std::vector<HistoryRecord> train(Model& model, const SampleSet& train_set,
                                 const SampleSet& val_set, const TrainConfig& cfg);

// Eval-mode metrics over a sample set (argmax predictions, tie -> label 0).
Metrics evaluate(const Model& model, const SampleSet& samples);

// Preprocesses every manifest entry against the model input geometry.
SampleSet load_samples(const std::string& data_dir, const DatasetManifest& manifest,
                       const ModelConfig& cfg);

std::string history_to_csv(const std::vector<HistoryRecord>& history);

}  // namespace stnet
