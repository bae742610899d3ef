#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stnet/attention.hpp"
#include "stnet/layers.hpp"
#include "stnet/recurrent.hpp"
#include "stnet/rng.hpp"

namespace stnet {

enum class Variant : std::uint32_t {
    conv_lstm = 0,
    lrcn_custom = 1,
    lrcn_vgg = 2,
    c3d = 3,
    cnn_transformer = 4,
};

const char* variant_name(Variant v);
Variant variant_from_string(const std::string& name);

// Per-variant hyperparameters. Defaults describe the full-scale networks
// (25 frames of 90x90x3); desk_scale_config() shrinks everything to sizes
// that train in minutes on a CPU.
struct ModelConfig {
    Variant variant = Variant::conv_lstm;
    std::size_t frames = 25, height = 90, width = 90, channels = 3;
    std::size_t classes = 2;
    bool strict = false;  // require the canonical 25x90x90x3 input shape

    // conv_lstm
    std::size_t convlstm_filters = 32;
    std::size_t convlstm_kernel = 3;

    // custom CNN extractor (lrcn_custom and cnn_transformer)
    std::vector<std::size_t> cnn_filters{16, 32, 64, 64};

    // recurrent heads
    std::size_t lstm_hidden = 256;
    std::size_t head_hidden = 256;  // hidden dense width (lrcn_vgg head, c3d head)

    // c3d
    std::vector<std::size_t> c3d_filters{64, 32};
    double c3d_dropout = 0.5;

    // cnn_transformer
    std::size_t d_model = 128;
    std::size_t heads = 4;
    std::size_t d_ff = 256;
    std::size_t encoder_blocks = 2;

    // lrcn_vgg backbone
    double vgg_width_scale = 1.0;  // multiplies the canonical 64..512 widths
    std::size_t vgg_blocks = 5;
};

ModelConfig full_scale_config(Variant v);
ModelConfig desk_scale_config(Variant v);

std::string config_to_json_text(const ModelConfig& cfg);
ModelConfig config_from_json_text(const std::string& text);

// Names of the importable backbone convolutions for the lrcn_vgg variant, in
// ladder order ("conv1_1" ... "conv5_3", truncated to the configured blocks).
std::vector<std::string> vgg_import_names(std::size_t blocks);

namespace build_detail {

template <typename T>
void glorot_init(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<T>((2.0 * rng.uniform() - 1.0) * limit);
}

template <typename T>
void init_dense(Dense<T>& d, Rng& rng) {
    glorot_init(d.weight(), d.in_features(), d.out_features(), rng);
}

template <typename T>
void init_conv2d(Conv2D<T>& c, Rng& rng) {
    const Shape& s = c.weight().shape();  // [K, K, Cin, Cout]
    glorot_init(c.weight(), s[0] * s[1] * s[2], s[0] * s[1] * s[3], rng);
}

template <typename T>
void init_conv3d(Conv3D<T>& c, Rng& rng) {
    const Shape& s = c.weight().shape();  // [K, K, K, Cin, Cout]
    glorot_init(c.weight(), s[0] * s[1] * s[2] * s[3], s[0] * s[1] * s[2] * s[4], rng);
}

template <typename T>
void init_lstm(LSTMCell<T>& cell, Rng& rng) {
    const std::size_t in = cell.input_size(), H = cell.hidden_size();
    for (Tensor<T>* w : {&cell.wi, &cell.wf, &cell.wg, &cell.wo}) glorot_init(*w, in, H, rng);
    for (Tensor<T>* u : {&cell.ui, &cell.uf, &cell.ug, &cell.uo}) glorot_init(*u, H, H, rng);
    for (std::size_t k = 0; k < H; ++k) cell.bf[k] = T(1);  // open forget gate at start
}

template <typename T>
void init_convlstm(ConvLSTMCell<T>& cell, Rng& rng) {
    const Shape& sx = cell.wxi.shape();  // [k, k, Cin, F]
    const Shape& sh = cell.whi.shape();  // [k, k, F, F]
    const std::size_t fan_x_in = sx[0] * sx[1] * sx[2], fan_x_out = sx[0] * sx[1] * sx[3];
    const std::size_t fan_h = sh[0] * sh[1] * sh[2];
    for (Tensor<T>* w : {&cell.wxi, &cell.wxf, &cell.wxc, &cell.wxo})
        glorot_init(*w, fan_x_in, fan_x_out, rng);
    for (Tensor<T>* u : {&cell.whi, &cell.whf, &cell.whc, &cell.who})
        glorot_init(*u, fan_h, fan_h, rng);
    // peepholes start at zero; their gradients flow once the cell state is
    // nonzero (every step after the first)
    const std::size_t F = cell.filters();
    for (std::size_t k = 0; k < F; ++k) cell.bf[k] = T(1);
}

template <typename T>
void init_attention(MultiHeadAttention<T>& a, Rng& rng) {
    for (std::size_t h = 0; h < a.heads(); ++h) {
        glorot_init(a.wq(h), a.d_model(), a.d_k(), rng);
        glorot_init(a.wk(h), a.d_model(), a.d_k(), rng);
        glorot_init(a.wv(h), a.d_model(), a.d_k(), rng);
    }
    glorot_init(a.wo(), a.heads() * a.d_k(), a.d_model(), rng);
}

template <typename T>
void init_encoder_block(EncoderBlock<T>& b, Rng& rng) {
    init_attention(b.mha(), rng);
    init_dense(b.ffn1(), rng);
    init_dense(b.ffn2(), rng);
}

struct PlaneDims {
    std::size_t h, w, c;
};

inline void check_valid_conv(PlaneDims d, std::size_t k, const std::string& where) {
    if (d.h < k || d.w < k)
        throw ConfigError(where + ": input " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                          " smaller than " + std::to_string(k) + "x" + std::to_string(k) +
                          " kernel under valid padding");
}

inline void check_pool(PlaneDims d, std::size_t win, const std::string& where) {
    if (d.h < win || d.w < win)
        throw ConfigError(where + ": input " + std::to_string(d.h) + "x" + std::to_string(d.w) +
                          " smaller than " + std::to_string(win) + "x" + std::to_string(win) +
                          " pool window");
}

// Shared custom extractor: conv3x3(valid)+relu then maxpool2x2 per block,
// ending in a flatten. Returns the flattened feature length.
template <typename T>
std::size_t add_custom_cnn(Sequential<T>& seq, const ModelConfig& cfg, Rng& rng) {
    if (cfg.cnn_filters.empty()) throw ConfigError("cnn_filters must name at least one block");
    PlaneDims d{cfg.height, cfg.width, cfg.channels};
    for (std::size_t b = 0; b < cfg.cnn_filters.size(); ++b) {
        const std::string where = "custom cnn block " + std::to_string(b + 1);
        const std::size_t out_ch = cfg.cnn_filters[b];
        if (out_ch == 0) throw ConfigError(where + ": filter count must be >= 1");
        check_valid_conv(d, 3, where);
        auto conv = std::make_unique<Conv2D<T>>(3, d.c, out_ch, Padding::valid, 1, true);
        init_conv2d(*conv, rng);
        seq.add("conv" + std::to_string(b + 1), std::move(conv));
        d = {d.h - 2, d.w - 2, out_ch};
        check_pool(d, 2, where);
        seq.add("pool" + std::to_string(b + 1), std::make_unique<MaxPool2D<T>>(2, 2));
        d = {d.h / 2, d.w / 2, out_ch};
    }
    seq.add("flatten", std::make_unique<Flatten<T>>());
    return d.h * d.w * d.c;
}

// VGG-shape backbone: same-padded 3x3 conv stacks with 2x2 pools, widths
// 64,128,256,512,512 scaled by vgg_width_scale, classifier top excluded.
template <typename T>
std::size_t add_vgg_backbone(Sequential<T>& seq, const ModelConfig& cfg, Rng& rng) {
    if (cfg.vgg_blocks < 1 || cfg.vgg_blocks > 5)
        throw ConfigError("vgg_blocks must lie in 1..5, got " + std::to_string(cfg.vgg_blocks));
    if (cfg.vgg_width_scale <= 0.0)
        throw ConfigError("vgg_width_scale must be positive");
    static const std::size_t base_widths[5] = {64, 128, 256, 512, 512};
    static const std::size_t convs_per_block[5] = {2, 2, 3, 3, 3};
    PlaneDims d{cfg.height, cfg.width, cfg.channels};
    for (std::size_t b = 0; b < cfg.vgg_blocks; ++b) {
        std::size_t width = static_cast<std::size_t>(
            std::lround(static_cast<double>(base_widths[b]) * cfg.vgg_width_scale));
        if (width == 0) width = 1;
        for (std::size_t i = 0; i < convs_per_block[b]; ++i) {
            auto conv = std::make_unique<Conv2D<T>>(3, d.c, width, Padding::same, 1, true);
            init_conv2d(*conv, rng);
            seq.add("conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1), std::move(conv));
            d.c = width;
        }
        const std::string where = "vgg block " + std::to_string(b + 1);
        check_pool(d, 2, where);
        seq.add("pool" + std::to_string(b + 1), std::make_unique<MaxPool2D<T>>(2, 2));
        d = {d.h / 2, d.w / 2, d.c};
    }
    seq.add("flatten", std::make_unique<Flatten<T>>());
    return d.h * d.w * d.c;
}

}  // namespace build_detail

// Assembles the per-variant network. Throws ConfigError naming the violated
// constraint when the configuration cannot produce a valid shape ladder.
template <typename T>
std::unique_ptr<Sequential<T>> build_network(const ModelConfig& cfg, Rng& rng) {
    using namespace build_detail;
    if (cfg.classes != 2)
        throw ConfigError("class count is fixed to 2, got " + std::to_string(cfg.classes));
    if (cfg.frames == 0 || cfg.height == 0 || cfg.width == 0 || cfg.channels == 0)
        throw ConfigError("input shape dimensions must be >= 1");
    if (cfg.strict &&
        (cfg.frames != 25 || cfg.height != 90 || cfg.width != 90 || cfg.channels != 3))
        throw ConfigError("strict mode requires the 25x90x90x3 input shape, got " +
                          std::to_string(cfg.frames) + "x" + std::to_string(cfg.height) + "x" +
                          std::to_string(cfg.width) + "x" + std::to_string(cfg.channels));

    auto net = std::make_unique<Sequential<T>>();
    switch (cfg.variant) {
        case Variant::conv_lstm: {
            if (cfg.convlstm_filters == 0) throw ConfigError("convlstm_filters must be >= 1");
            if (cfg.convlstm_kernel == 0) throw ConfigError("convlstm_kernel must be >= 1");
            auto cl = std::make_unique<ConvLSTMLast<T>>(cfg.convlstm_kernel, cfg.channels,
                                                        cfg.convlstm_filters, cfg.height, cfg.width);
            init_convlstm(cl->cell(), rng);
            net->add("convlstm", std::move(cl));
            PlaneDims d{cfg.height, cfg.width, cfg.convlstm_filters};
            check_pool(d, 2, "state pool");
            net->add("pool", std::make_unique<MaxPool2D<T>>(2, 2));
            d = {d.h / 2, d.w / 2, d.c};
            net->add("flatten", std::make_unique<Flatten<T>>());
            auto head = std::make_unique<Dense<T>>(d.h * d.w * d.c, cfg.classes);
            init_dense(*head, rng);
            net->add("head", std::move(head));
            net->add("softmax", std::make_unique<Activation<T>>(ActKind::softmax));
            break;
        }
        case Variant::lrcn_custom: {
            auto cnn = std::make_unique<Sequential<T>>();
            const std::size_t feat = add_custom_cnn(*cnn, cfg, rng);
            net->add("td", std::make_unique<TimeDistributed<T>>(std::move(cnn), "cnn"));
            if (cfg.lstm_hidden == 0) throw ConfigError("lstm_hidden must be >= 1");
            auto rec = std::make_unique<BiLSTMLast<T>>(feat, cfg.lstm_hidden);
            init_lstm(rec->fwd(), rng);
            init_lstm(rec->bwd(), rng);
            net->add("bilstm", std::move(rec));
            auto head = std::make_unique<Dense<T>>(2 * cfg.lstm_hidden, cfg.classes);
            init_dense(*head, rng);
            net->add("head", std::move(head));
            net->add("softmax", std::make_unique<Activation<T>>(ActKind::softmax));
            break;
        }
        case Variant::lrcn_vgg: {
            auto vgg = std::make_unique<Sequential<T>>();
            const std::size_t feat = add_vgg_backbone(*vgg, cfg, rng);
            net->add("td", std::make_unique<TimeDistributed<T>>(std::move(vgg), "vgg"));
            if (cfg.lstm_hidden == 0) throw ConfigError("lstm_hidden must be >= 1");
            auto rec = std::make_unique<BiLSTMLast<T>>(feat, cfg.lstm_hidden);
            init_lstm(rec->fwd(), rng);
            init_lstm(rec->bwd(), rng);
            net->add("bilstm", std::move(rec));
            if (cfg.head_hidden == 0) throw ConfigError("head_hidden must be >= 1");
            auto fc1 = std::make_unique<Dense<T>>(2 * cfg.lstm_hidden, cfg.head_hidden);
            init_dense(*fc1, rng);
            net->add("fc1", std::move(fc1));
            net->add("relu", std::make_unique<Activation<T>>(ActKind::relu));
            auto head = std::make_unique<Dense<T>>(cfg.head_hidden, cfg.classes);
            init_dense(*head, rng);
            net->add("head", std::move(head));
            net->add("softmax", std::make_unique<Activation<T>>(ActKind::softmax));
            break;
        }
        case Variant::c3d: {
            if (cfg.c3d_filters.empty())
                throw ConfigError("c3d_filters must name at least one block");
            std::size_t t = cfg.frames;
            PlaneDims d{cfg.height, cfg.width, cfg.channels};
            for (std::size_t b = 0; b < cfg.c3d_filters.size(); ++b) {
                const std::string where = "c3d block " + std::to_string(b + 1);
                const std::size_t out_ch = cfg.c3d_filters[b];
                if (out_ch == 0) throw ConfigError(where + ": filter count must be >= 1");
                if (t < 3) throw ConfigError(where + ": temporal extent " + std::to_string(t) +
                                             " smaller than 3-frame kernel under valid padding");
                check_valid_conv(d, 3, where);
                auto conv = std::make_unique<Conv3D<T>>(3, d.c, out_ch, Padding::valid, 1, true);
                init_conv3d(*conv, rng);
                net->add("conv" + std::to_string(b + 1), std::move(conv));
                t -= 2;
                d = {d.h - 2, d.w - 2, out_ch};
                if (t < 2) throw ConfigError(where + ": temporal extent " + std::to_string(t) +
                                             " smaller than 2-frame pool window");
                check_pool(d, 2, where);
                net->add("pool" + std::to_string(b + 1), std::make_unique<MaxPool3D<T>>(2, 2, 2));
                t /= 2;
                d = {d.h / 2, d.w / 2, out_ch};
            }
            net->add("flatten", std::make_unique<Flatten<T>>());
            if (cfg.head_hidden == 0) throw ConfigError("head_hidden must be >= 1");
            auto fc1 = std::make_unique<Dense<T>>(t * d.h * d.w * d.c, cfg.head_hidden);
            init_dense(*fc1, rng);
            net->add("fc1", std::move(fc1));
            net->add("relu", std::make_unique<Activation<T>>(ActKind::relu));
            net->add("drop", std::make_unique<Dropout<T>>(cfg.c3d_dropout));
            auto head = std::make_unique<Dense<T>>(cfg.head_hidden, cfg.classes);
            init_dense(*head, rng);
            net->add("head", std::move(head));
            net->add("softmax", std::make_unique<Activation<T>>(ActKind::softmax));
            break;
        }
        case Variant::cnn_transformer: {
            auto cnn = std::make_unique<Sequential<T>>();
            const std::size_t feat = add_custom_cnn(*cnn, cfg, rng);
            net->add("td", std::make_unique<TimeDistributed<T>>(std::move(cnn), "cnn"));
            if (cfg.d_model == 0) throw ConfigError("d_model must be >= 1");
            auto proj = std::make_unique<Dense<T>>(feat, cfg.d_model);
            init_dense(*proj, rng);
            net->add("proj", std::move(proj));
            net->add("pos", std::make_unique<AddPositionalEncoding<T>>());
            if (cfg.encoder_blocks == 0) throw ConfigError("encoder_blocks must be >= 1");
            for (std::size_t b = 0; b < cfg.encoder_blocks; ++b) {
                auto blk = std::make_unique<EncoderBlock<T>>(cfg.d_model, cfg.heads, cfg.d_ff);
                init_encoder_block(*blk, rng);
                net->add("enc" + std::to_string(b), std::move(blk));
            }
            net->add("meant", std::make_unique<MeanOverTime<T>>());
            auto head = std::make_unique<Dense<T>>(cfg.d_model, cfg.classes);
            init_dense(*head, rng);
            net->add("head", std::move(head));
            net->add("softmax", std::make_unique<Activation<T>>(ActKind::softmax));
            break;
        }
        default:
            throw ConfigError("unknown model variant");
    }
    return net;
}

// A built classifier: the layer graph plus its flat parameter registry.
struct Model {
    ModelConfig config;
    std::unique_ptr<Sequential<float>> net;
    ParamTable<float> params;
    std::uint64_t init_seed = 0;

    Shape input_shape() const {
        return Shape{config.frames, config.height, config.width, config.channels};
    }
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

// Single clip [frames, H, W, C] -> class probabilities [2].
Tensor<float> model_forward_one(const Model& m, const Tensor<float>& clip);
// Batch [B, frames, H, W, C] -> probabilities [B, 2]. Eval mode, deterministic.
Tensor<float> model_forward(const Model& m, const Tensor<float>& batch);

std::size_t count_parameters(const Model& m);

template <typename T>
std::size_t count_parameters(const ParamTable<T>& table) {
    std::size_t n = 0;
    for (const auto& [name, tensor] : table) n += tensor->size();
    return n;
}

// Binary checkpoint container: magic "STNETCKP", format version, variant tag,
// training metadata, embedded config, then named little-endian f32 blobs.
void save_checkpoint(const Model& m, const std::string& path, std::uint32_t epoch,
                     std::uint64_t seed);
struct LoadedCheckpoint {
    Model model;
    std::uint32_t epoch = 0;
    std::uint64_t seed = 0;
};
LoadedCheckpoint load_checkpoint(const std::string& path);
// Applies a checkpoint's blobs onto an existing model; the first parameter
// whose name or shape disagrees with the model raises an integrity error.
void load_checkpoint_into(Model& m, const std::string& path);

struct ImportReport {
    std::vector<std::string> loaded;
    std::vector<std::string> skipped;
};
// Replaces lrcn_vgg backbone convolutions from a checkpoint-format file keyed
// by the vgg_import_names() table ("conv1_1.w", "conv1_1.b", ...).
ImportReport import_external_weights(Model& m, const std::string& path);

}  // namespace stnet
