#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stnet/rng.hpp"
#include "stnet/tensor.hpp"

namespace stnet {

// Raw clip: 8-bit RGB frames, time-major. Label 0 = nonviolent, 1 = violent.
struct FrameSequence {
    Tensor<std::uint8_t> frames;  // [T, H, W, C]
    int label = 0;
    std::string clip_id;
    float fps = 30.0f;
};

struct ManifestEntry {
    std::string clip_id;
    std::string path;  // relative to the dataset directory
    int label = 0;
    std::size_t frames = 0, height = 0, width = 0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::array<std::size_t, 2> class_counts() const;
};

struct SplitSpec {
    double train = 0.8, val = 0.1, test = 0.1;
    std::uint64_t seed = 0;
    bool stratified = true;
};

struct SplitResult {
    DatasetManifest train, val, test;
};

// Two-class synthetic motion data: calm clips drift blobs along smooth linear
// paths; agitated clips jitter them with large random direction changes and
// occasional contact events.
struct SyntheticConfig {
    std::size_t clips_per_class = 100;
    std::size_t frames = 16;
    std::size_t height = 24, width = 24;
    std::size_t blobs = 2;
    std::size_t blob_radius = 3;
    double calm_speed = 0.7;
    double agitated_speed = 3.5;
    std::uint64_t seed = 0;
};

// Uniform-stride frame selection: index i -> floor(i * total / n). Repeats
// indices when the clip is shorter than n.
std::vector<std::size_t> sample_frame_indices(std::size_t total, std::size_t n = 25);

// Bilinear interpolation with half-pixel centers; channels independent.
Tensor<float> resize_bilinear(const Tensor<float>& frame, std::size_t out_h, std::size_t out_w);

// 8-bit values to the unit interval (divide by 255).
Tensor<float> normalize(const Tensor<std::uint8_t>& frames);

Tensor<float> one_hot(int label, std::size_t classes = 2);

// sample -> normalize -> resize: raw clip to a [frames, out_h, out_w, C]
// unit-interval tensor.
Tensor<float> preprocess_clip(const FrameSequence& seq, std::size_t frames, std::size_t out_h,
                              std::size_t out_w);

// Seeded, optionally label-stratified partition. Validation and test sizes are
// floor-allocated; remainders go to the training subset.
SplitResult split_dataset(const DatasetManifest& manifest, const SplitSpec& spec);

// Frame container: magic "STNETFRM", version, T/H/W/C header, label, fps,
// then raw bytes in time-major row-major order.
void write_frame_container(const FrameSequence& seq, const std::string& path);
FrameSequence read_frame_container(const std::string& path);

// Line-oriented manifest text file ("stnet-manifest v1" header, one
// tab-separated entry per line).
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Deterministic synthetic clip for (label, index) under cfg.seed.
FrameSequence synth_clip(const SyntheticConfig& cfg, int label, std::size_t index);

// Renders every clip into out_dir as frame containers plus "manifest.txt".
DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg, const std::string& out_dir);

// Reads one manifest entry's container from the dataset directory, checking
// the entry's recorded geometry and label against the file.
FrameSequence load_clip(const std::string& data_dir, const ManifestEntry& entry);

}  // namespace stnet
