#include "stnet/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "stnet/error.hpp"
#include "stnet/layers.hpp"
#include "stnet/metrics.hpp"

namespace stnet {

std::vector<StreamWindowResult> sliding_window_classify(const ClipClassifier& classify,
                                                        const FrameSequence& stream,
                                                        std::size_t window, std::size_t stride,
                                                        std::size_t frames, std::size_t out_h,
                                                        std::size_t out_w) {
    if (window == 0) throw ConfigError("window length must be positive");
    if (stride == 0) throw ConfigError("stride must be positive");
    if (stream.frames.rank() != 4)
        throw ShapeError("stream frames must be [T, H, W, C], got " +
                         stream.frames.shape().to_string());
    const std::size_t total = stream.frames.shape()[0];
    if (total < window)
        throw DataError("stream holds " + std::to_string(total) + " frames, window needs " +
                        std::to_string(window));
    const std::size_t h = stream.frames.shape()[1];
    const std::size_t w = stream.frames.shape()[2];
    const std::size_t c = stream.frames.shape()[3];
    const std::size_t frame_bytes = h * w * c;

    std::vector<StreamWindowResult> results;
    results.reserve((total - window) / stride + 1);
    for (std::size_t start = 0; start + window <= total; start += stride) {
        FrameSequence piece;
        piece.frames = Tensor<std::uint8_t>(Shape{window, h, w, c});
        std::memcpy(piece.frames.data(), stream.frames.data() + start * frame_bytes,
                    window * frame_bytes);
        piece.label = stream.label;
        piece.clip_id = stream.clip_id;
        piece.fps = stream.fps;

        Tensor<float> clip = preprocess_clip(piece, frames, out_h, out_w);
        Tensor<float> probs = classify(clip);
        if (probs.rank() != 1 || probs.size() != 2)
            throw ShapeError("classifier must return probabilities [2], got " +
                             probs.shape().to_string());
        StreamWindowResult r;
        r.start = start;
        r.label = argmax_label(probs.data(), probs.size());
        r.probabilities = {probs.data()[0], probs.data()[1]};
        results.push_back(r);
    }
    return results;
}

std::vector<StreamWindowResult> sliding_window_classify(const Model& model,
                                                        const FrameSequence& stream,
                                                        std::size_t window, std::size_t stride) {
    const ModelConfig& cfg = model.config;
    if (stream.frames.rank() == 4 && stream.frames.shape()[3] != cfg.channels)
        throw DataError("stream has " + std::to_string(stream.frames.shape()[3]) +
                        " channels, model expects " + std::to_string(cfg.channels));
    return sliding_window_classify(
        [&model](const Tensor<float>& clip) { return model_forward_one(model, clip); }, stream,
        window, stride, cfg.frames, cfg.height, cfg.width);
}

namespace {

// The per-frame convolutional extractor is the sequential inside the first
// time-distributed wrapper; purely 3D/recurrent variants do not have one.
const Sequential<float>* find_frame_extractor(const Model& model) {
    for (std::size_t i = 0; i < model.net->child_count(); ++i) {
        const Layer<float>* child = model.net->child(i);
        if (child->kind() != "time_distributed") continue;
        auto* td = dynamic_cast<const TimeDistributed<float>*>(child);
        if (td == nullptr) continue;
        auto* seq = dynamic_cast<const Sequential<float>*>(td->inner());
        if (seq != nullptr) return seq;
    }
    return nullptr;
}

}  // namespace

std::vector<FeatureMapImage> dump_feature_maps(const Model& model, const Tensor<float>& frame,
                                               const std::vector<std::size_t>& layer_indices) {
    if (frame.rank() != 3)
        throw ShapeError("feature-map input must be one frame [H, W, C], got " +
                         frame.shape().to_string());
    const Sequential<float>* extractor = find_frame_extractor(model);
    if (extractor == nullptr)
        throw UsageError("variant " + std::string(variant_name(model.config.variant)) +
                         " has no per-frame convolutional extractor");
    std::size_t deepest = 0;
    for (std::size_t idx : layer_indices) {
        if (idx >= extractor->child_count())
            throw UsageError("extractor has " + std::to_string(extractor->child_count()) +
                             " layers, index " + std::to_string(idx) + " is out of range");
        deepest = std::max(deepest, idx);
    }

    std::vector<FeatureMapImage> images;
    RunContext<float> rc{false, nullptr};
    Tensor<float> cur = frame;
    for (std::size_t i = 0; i <= deepest && !layer_indices.empty(); ++i) {
        const Layer<float>* child = extractor->child(i);
        cur = child->forward(cur, nullptr, rc);
        if (std::find(layer_indices.begin(), layer_indices.end(), i) == layer_indices.end())
            continue;
        if (child->kind() != "conv2d")
            throw UsageError("layer " + std::to_string(i) + " (" + child->kind() +
                             ") is not a 2d convolution");
        const std::size_t h = cur.shape()[0], w = cur.shape()[1], c = cur.shape()[2];
        for (std::size_t k = 0; k < c; ++k) {
            FeatureMapImage img;
            img.name = extractor->child_name(i) + ".ch" + std::to_string(k);
            img.height = h;
            img.width = w;
            img.pixels.assign(h * w, 0);
            float lo = cur[k], hi = cur[k];
            for (std::size_t p = 0; p < h * w; ++p) {
                const float v = cur[p * c + k];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi > lo) {
                const float scale = 255.0f / (hi - lo);
                for (std::size_t p = 0; p < h * w; ++p)
                    img.pixels[p] = static_cast<std::uint8_t>(
                        std::lround((cur[p * c + k] - lo) * scale));
            }
            images.push_back(std::move(img));
        }
    }
    return images;
}

void write_pgm(const FeatureMapImage& image, const std::string& path) {
    if (image.pixels.size() != image.height * image.width)
        throw ShapeError("feature map " + image.name + " holds " +
                         std::to_string(image.pixels.size()) + " pixels for a " +
                         std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw IoError("short write to " + path);
}

}  // namespace stnet
