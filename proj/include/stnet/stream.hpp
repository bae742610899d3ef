#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stnet/datapipe.hpp"
#include "stnet/model.hpp"

namespace stnet {

struct StreamWindowResult {
    std::size_t start = 0;  // first frame index covered by the window
    int label = 0;
    std::array<float, 2> probabilities{0.0f, 0.0f};
};

// Maps a preprocessed clip [frames, H, W, C] to class probabilities [2].
using ClipClassifier = std::function<Tensor<float>(const Tensor<float>&)>;

// Classifies every window of `window` consecutive stream frames taken every
// `stride` frames; each window is preprocessed exactly like training data
// (frame sampling to `frames`, resize to out_h x out_w, normalize). Emits
// floor((T - window)/stride) + 1 results.
std::vector<StreamWindowResult> sliding_window_classify(const ClipClassifier& classify,
                                                        const FrameSequence& stream,
                                                        std::size_t window, std::size_t stride,
                                                        std::size_t frames, std::size_t out_h,
                                                        std::size_t out_w);

// Model-driven overload: window geometry comes from the model config.
std::vector<StreamWindowResult> sliding_window_classify(const Model& model,
                                                        const FrameSequence& stream,
                                                        std::size_t window, std::size_t stride);

struct FeatureMapImage {
    std::string name;  // "<layer>.ch<k>"
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> pixels;  // min-max scaled to [0,255]; constant maps -> zeros
};

// Runs one frame [H, W, C] through the model's per-frame convolutional
// extractor and renders the requested layers' output channels as grayscale
// maps. Indices address the extractor's layer sequence (0-based).
std::vector<FeatureMapImage> dump_feature_maps(const Model& model, const Tensor<float>& frame,
                                               const std::vector<std::size_t>& layer_indices);

// Binary 8-bit PGM.
void write_pgm(const FeatureMapImage& image, const std::string& path);

}  // namespace stnet
