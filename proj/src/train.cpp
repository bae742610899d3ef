#include "stnet/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <numeric>

#include "stnet/error.hpp"
#include "stnet/rng.hpp"

namespace stnet {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void check_train_config(const TrainConfig& cfg) {
    if (cfg.batch == 0) throw ConfigError("batch size must be positive");
    if (cfg.epochs == 0) throw ConfigError("epoch count must be positive");
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
        throw ConfigError("learning rate must be positive and finite, got " +
                          std::to_string(cfg.lr));
    if (cfg.clip_grad_norm < 0.0)
        throw ConfigError("gradient clip norm must be >= 0, got " +
                          std::to_string(cfg.clip_grad_norm));
}

// Scales every gradient so the global L2 norm does not exceed max_norm.
void clip_gradients(GradStore<float>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads.all()) {
        (void)name;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = static_cast<double>(g.data()[i]);
            sq += v * v;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& [name, g] : grads.all()) {
        (void)name;
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= scale;
    }
}

double clamped_true_probability(const Tensor<float>& probs, int label) {
    return std::max(static_cast<double>(probs.data()[label]), 1e-12);
}

}  // namespace

void optimizer_step(ParamTable<float>& params, const GradStore<float>& grads,
                    OptimizerState& state, const TrainConfig& cfg) {
    ++state.step;
    for (auto& [name, param] : params) {
        const Tensor<float>* g = grads.find(name);
        if (g != nullptr && g->shape() != param->shape())
            throw ShapeError("gradient for " + name + " has shape " + g->shape().to_string() +
                             ", parameter is " + param->shape().to_string());
        if (cfg.optimizer == TrainConfig::Optimizer::sgd) {
            if (g == nullptr) continue;  // zero gradient, no-op
            for (std::size_t i = 0; i < param->size(); ++i)
                param->data()[i] -= static_cast<float>(cfg.lr) * g->data()[i];
            continue;
        }
        // Adam keeps per-parameter moments even when this step's gradient is
        // zero, so moment decay stays in sync with the step counter.
        auto mi = state.m.find(name);
        if (mi == state.m.end()) {
            mi = state.m.emplace(name, Tensor<float>::zeros(param->shape())).first;
            state.v.emplace(name, Tensor<float>::zeros(param->shape()));
        }
        Tensor<float>& m = mi->second;
        Tensor<float>& v = state.v.at(name);
        if (m.shape() != param->shape())
            throw ShapeError("optimizer state for " + name + " has shape " +
                             m.shape().to_string() + ", parameter is " +
                             param->shape().to_string());
        const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
        const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
        for (std::size_t i = 0; i < param->size(); ++i) {
            const double gi = g != nullptr ? static_cast<double>(g->data()[i]) : 0.0;
            const double mi_new = kAdamBeta1 * static_cast<double>(m.data()[i]) +
                                  (1.0 - kAdamBeta1) * gi;
            const double vi_new = kAdamBeta2 * static_cast<double>(v.data()[i]) +
                                  (1.0 - kAdamBeta2) * gi * gi;
            m.data()[i] = static_cast<float>(mi_new);
            v.data()[i] = static_cast<float>(vi_new);
            const double mhat = mi_new / bc1;
            const double vhat = vi_new / bc2;
            param->data()[i] -=
                static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + kAdamEps));
        }
    }
}

std::vector<HistoryRecord> train(Model& model, const SampleSet& train_set,
                                 const SampleSet& val_set, const TrainConfig& cfg) {
    check_train_config(cfg);
    if (train_set.empty()) throw DataError("training set is empty");
    const Shape want = model.input_shape();
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        if (train_set[i].clip.shape() != want)
            throw ShapeError("training sample " + std::to_string(i) + " has shape " +
                             train_set[i].clip.shape().to_string() + ", model expects " +
                             want.to_string());
        if (train_set[i].label < 0 || train_set[i].label > 1)
            throw LabelError("training sample " + std::to_string(i) + " has label " +
                             std::to_string(train_set[i].label));
    }

    Rng dropout_rng(mix_seed(cfg.seed, 0x64726f70));
    OptimizerState opt;
    std::vector<HistoryRecord> history;
    history.reserve(cfg.epochs);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(mix_seed(cfg.seed, 0x65706f63), epoch));
        shuffle_deterministic(order, shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;
        std::size_t step = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            ++step;
            const std::size_t end = std::min(begin + cfg.batch, order.size());
            const std::size_t batch_n = end - begin;
            GradStore<float> grads;
            RunContext<float> rc{true, &dropout_rng};
            for (std::size_t j = begin; j < end; ++j) {
                const Sample& s = train_set[order[j]];
                Tape<float> tape;
                Tensor<float> probs;
                try {
                    probs = model.net->forward(s.clip, &tape, rc);
                } catch (const NumericError& e) {
                    // a NaN/inf surfacing anywhere in the net is a diverged run
                    throw DivergenceError("non-finite output at epoch " + std::to_string(epoch) +
                                          " step " + std::to_string(step) + " (" + e.what() + ")");
                }
                if (!probs.all_finite())
                    throw DivergenceError("non-finite output at epoch " + std::to_string(epoch) +
                                          " step " + std::to_string(step));
                const double p_true = clamped_true_probability(probs, s.label);
                const double sample_loss = -std::log(p_true);
                if (!std::isfinite(sample_loss))
                    throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) +
                                          " step " + std::to_string(step));
                epoch_loss += sample_loss;
                if (argmax_label(probs.data(), probs.size()) == s.label) ++epoch_correct;

                Tensor<float> dprobs = Tensor<float>::zeros(probs.shape());
                dprobs.data()[s.label] =
                    static_cast<float>(-1.0 / (static_cast<double>(batch_n) * p_true));
                model.net->backward(tape, dprobs, "", grads);
            }
            if (cfg.clip_grad_norm > 0.0) clip_gradients(grads, cfg.clip_grad_norm);
            optimizer_step(model.params, grads, opt, cfg);
        }

        HistoryRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
        rec.train_accuracy =
            static_cast<double>(epoch_correct) / static_cast<double>(train_set.size());
        if (!val_set.empty()) {
            const Metrics vm = evaluate(model, val_set);
            rec.val_loss = vm.loss;
            rec.val_accuracy = vm.accuracy;
        }
        history.push_back(rec);

        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
            epoch % cfg.checkpoint_every == 0) {
            std::error_code ec;
            std::filesystem::create_directories(cfg.checkpoint_dir, ec);
            if (ec)
                throw IoError("cannot create checkpoint directory " + cfg.checkpoint_dir + ": " +
                              ec.message());
            char name[64];
            std::snprintf(name, sizeof(name), "ckpt_epoch_%zu.stc", epoch);
            save_checkpoint(model, cfg.checkpoint_dir + "/" + name, epoch, cfg.seed);
        }
        if (cfg.stop_at_val_accuracy > 0.0 && !val_set.empty() &&
            rec.val_accuracy >= cfg.stop_at_val_accuracy)
            break;
        if (cfg.stop_at_train_loss > 0.0 && rec.train_loss <= cfg.stop_at_train_loss) break;
    }
    return history;
}

Metrics evaluate(const Model& model, const SampleSet& samples) {
    if (samples.empty()) throw DataError("evaluation set is empty");
    std::vector<int> preds, labels;
    preds.reserve(samples.size());
    labels.reserve(samples.size());
    double loss = 0.0;
    for (const Sample& s : samples) {
        if (s.label < 0 || s.label > 1)
            throw LabelError("evaluation sample has label " + std::to_string(s.label));
        Tensor<float> probs = model_forward_one(model, s.clip);
        preds.push_back(argmax_label(probs.data(), probs.size()));
        labels.push_back(s.label);
        loss += -std::log(clamped_true_probability(probs, s.label));
    }
    loss /= static_cast<double>(samples.size());
    return metrics_from_confusion(confusion_matrix(preds, labels), loss);
}

SampleSet load_samples(const std::string& data_dir, const DatasetManifest& manifest,
                       const ModelConfig& cfg) {
    SampleSet out;
    out.reserve(manifest.entries.size());
    for (const ManifestEntry& entry : manifest.entries) {
        FrameSequence seq = load_clip(data_dir, entry);
        if (seq.frames.shape()[3] != cfg.channels)
            throw DataError("clip " + entry.clip_id + " has " +
                            std::to_string(seq.frames.shape()[3]) + " channels, model expects " +
                            std::to_string(cfg.channels));
        Sample s;
        s.clip = preprocess_clip(seq, cfg.frames, cfg.height, cfg.width);
        s.label = seq.label;
        out.push_back(std::move(s));
    }
    return out;
}

std::string history_to_csv(const std::vector<HistoryRecord>& history) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(6);
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const HistoryRecord& r : history)
        out << r.epoch << "," << r.train_loss << "," << r.train_accuracy << "," << r.val_loss
            << "," << r.val_accuracy << "\n";
    return out.str();
}

}  // namespace stnet
