#include "stnet/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace stnet {

using nlohmann::json;

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::conv_lstm: return "convlstm";
        case Variant::lrcn_custom: return "lrcn_custom";
        case Variant::lrcn_vgg: return "lrcn_vgg";
        case Variant::c3d: return "c3d";
        case Variant::cnn_transformer: return "cnn_transformer";
    }
    throw ConfigError("unknown variant tag " + std::to_string(static_cast<std::uint32_t>(v)));
}

Variant variant_from_string(const std::string& name) {
    for (Variant v : {Variant::conv_lstm, Variant::lrcn_custom, Variant::lrcn_vgg, Variant::c3d,
                      Variant::cnn_transformer})
        if (name == variant_name(v)) return v;
    throw ConfigError("unknown variant \"" + name +
                      "\" (expected convlstm, lrcn_custom, lrcn_vgg, c3d, or cnn_transformer)");
}

ModelConfig full_scale_config(Variant v) {
    ModelConfig cfg;
    cfg.variant = v;
    return cfg;
}

ModelConfig desk_scale_config(Variant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.frames = 16;
    cfg.height = 24;
    cfg.width = 24;
    cfg.cnn_filters = {8, 16, 32};
    cfg.convlstm_filters = 4;
    cfg.lstm_hidden = 32;
    cfg.head_hidden = 64;
    cfg.c3d_filters = {8, 16};
    cfg.d_model = 32;
    cfg.heads = 4;
    cfg.d_ff = 64;
    cfg.encoder_blocks = 2;
    cfg.vgg_width_scale = 0.0625;
    cfg.vgg_blocks = 3;
    return cfg;
}

std::string config_to_json_text(const ModelConfig& cfg) {
    json j;
    j["variant"] = variant_name(cfg.variant);
    j["frames"] = cfg.frames;
    j["height"] = cfg.height;
    j["width"] = cfg.width;
    j["channels"] = cfg.channels;
    j["classes"] = cfg.classes;
    j["strict"] = cfg.strict;
    j["convlstm_filters"] = cfg.convlstm_filters;
    j["convlstm_kernel"] = cfg.convlstm_kernel;
    j["cnn_filters"] = cfg.cnn_filters;
    j["lstm_hidden"] = cfg.lstm_hidden;
    j["head_hidden"] = cfg.head_hidden;
    j["c3d_filters"] = cfg.c3d_filters;
    j["c3d_dropout"] = cfg.c3d_dropout;
    j["d_model"] = cfg.d_model;
    j["heads"] = cfg.heads;
    j["d_ff"] = cfg.d_ff;
    j["encoder_blocks"] = cfg.encoder_blocks;
    j["vgg_width_scale"] = cfg.vgg_width_scale;
    j["vgg_blocks"] = cfg.vgg_blocks;
    return j.dump();
}

ModelConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known = {
        "variant",      "frames",    "height",      "width",          "channels",
        "classes",      "strict",    "convlstm_filters", "convlstm_kernel", "cnn_filters",
        "lstm_hidden",  "head_hidden", "c3d_filters", "c3d_dropout",   "d_model",
        "heads",        "d_ff",      "encoder_blocks", "vgg_width_scale", "vgg_blocks"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key \"" + key + "\"");

    ModelConfig cfg;
    try {
        if (j.contains("variant")) cfg.variant = variant_from_string(j["variant"].get<std::string>());
        auto get_size = [&](const char* key, std::size_t& out) {
            if (j.contains(key)) out = j[key].get<std::size_t>();
        };
        get_size("frames", cfg.frames);
        get_size("height", cfg.height);
        get_size("width", cfg.width);
        get_size("channels", cfg.channels);
        get_size("classes", cfg.classes);
        if (j.contains("strict")) cfg.strict = j["strict"].get<bool>();
        get_size("convlstm_filters", cfg.convlstm_filters);
        get_size("convlstm_kernel", cfg.convlstm_kernel);
        if (j.contains("cnn_filters")) cfg.cnn_filters = j["cnn_filters"].get<std::vector<std::size_t>>();
        get_size("lstm_hidden", cfg.lstm_hidden);
        get_size("head_hidden", cfg.head_hidden);
        if (j.contains("c3d_filters")) cfg.c3d_filters = j["c3d_filters"].get<std::vector<std::size_t>>();
        if (j.contains("c3d_dropout")) cfg.c3d_dropout = j["c3d_dropout"].get<double>();
        get_size("d_model", cfg.d_model);
        get_size("heads", cfg.heads);
        get_size("d_ff", cfg.d_ff);
        get_size("encoder_blocks", cfg.encoder_blocks);
        if (j.contains("vgg_width_scale")) cfg.vgg_width_scale = j["vgg_width_scale"].get<double>();
        get_size("vgg_blocks", cfg.vgg_blocks);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field has the wrong type: ") + e.what());
    }
    return cfg;
}

std::vector<std::string> vgg_import_names(std::size_t blocks) {
    static const std::size_t convs_per_block[5] = {2, 2, 3, 3, 3};
    std::vector<std::string> names;
    for (std::size_t b = 0; b < blocks && b < 5; ++b)
        for (std::size_t i = 0; i < convs_per_block[b]; ++i)
            names.push_back("conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1));
    return names;
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    Model m;
    m.config = cfg;
    m.init_seed = seed;
    Rng rng(mix_seed(seed, 0x6d6f64656c));  // "model" stream
    m.net = build_network<float>(cfg, rng);
    m.net->collect_params("", m.params);
    return m;
}

Tensor<float> model_forward_one(const Model& m, const Tensor<float>& clip) {
    if (clip.shape() != m.input_shape())
        throw ShapeError("model input " + clip.shape().to_string() + " does not match configured " +
                         m.input_shape().to_string());
    RunContext<float> rc;  // eval mode
    return m.net->forward(clip, nullptr, rc);
}

Tensor<float> model_forward(const Model& m, const Tensor<float>& batch) {
    if (batch.rank() != 5)
        throw ShapeError("model batch must be rank 5 [B, T, H, W, C], got " +
                         batch.shape().to_string());
    const std::size_t b = batch.shape()[0];
    Tensor<float> out(Shape{b, m.config.classes});
    for (std::size_t i = 0; i < b; ++i)
        set_slice_axis0(out, i, model_forward_one(m, slice_axis0(batch, i)));
    return out;
}

std::size_t count_parameters(const Model& m) { return count_parameters(m.params); }

// --- checkpoint container -------------------------------------------------

namespace {

constexpr char kCheckpointMagic[9] = "STNETCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Reader {
public:
    Reader(const std::string& buf, const char* what) : buf_(buf), what_(what) {}

    std::uint32_t u32() {
        need(4);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(buf_.data()) + pos_;
        pos_ += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }

    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }

    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > buf_.size())
            throw FormatError(std::string("truncated ") + what_ + ": need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ", file holds " +
                              std::to_string(buf_.size()));
    }

    const std::string& buf_;
    const char* what_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open ") + what + " file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (!in.good() && !in.eof()) throw IoError(std::string("cannot read ") + what + " file " + path);
    return ss.str();
}

void write_file(const std::string& path, const std::string& data, const char* what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(std::string("cannot open ") + what + " file " + path + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out.good()) throw IoError(std::string("cannot write ") + what + " file " + path);
}

struct ParsedCheckpoint {
    std::uint32_t variant_tag = 0;
    std::uint32_t epoch = 0;
    std::uint64_t seed = 0;
    std::string config_json;
    std::vector<std::pair<std::string, Tensor<float>>> blobs;
};

ParsedCheckpoint parse_checkpoint(const std::string& data) {
    Reader r(data, "checkpoint");
    if (r.bytes(8) != std::string(kCheckpointMagic, 8))
        throw FormatError("bad checkpoint magic (expected STNETCKP)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint version " + std::to_string(version) +
                          " not supported (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
    ParsedCheckpoint pc;
    pc.variant_tag = r.u32();
    pc.epoch = r.u32();
    pc.seed = r.u64();
    pc.config_json = r.bytes(r.u32());
    const std::uint32_t count = r.u32();
    pc.blobs.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.bytes(r.u32());
        const std::uint32_t rank = r.u32();
        std::vector<std::size_t> dims(rank);
        for (std::uint32_t d = 0; d < rank; ++d) dims[d] = r.u32();
        Shape shape(dims);
        const std::uint32_t values = r.u32();
        if (values != shape.numel())
            throw FormatError("checkpoint blob " + name + " declares " + std::to_string(values) +
                              " values for shape " + shape.to_string());
        Tensor<float> t(shape);
        for (std::uint32_t k = 0; k < values; ++k) t[k] = r.f32();
        pc.blobs.emplace_back(std::move(name), std::move(t));
    }
    if (!r.at_end()) throw FormatError("checkpoint has trailing bytes after the blob table");
    return pc;
}

void apply_blobs(Model& m, const std::vector<std::pair<std::string, Tensor<float>>>& blobs) {
    std::map<std::string, const Tensor<float>*> table;
    for (const auto& [name, t] : blobs) {
        if (!table.emplace(name, &t).second)
            throw IntegrityError("checkpoint repeats parameter " + name);
    }
    // Validate everything before touching the model: a mismatch must not
    // leave it half-loaded.
    for (const auto& [name, param] : m.params) {
        auto it = table.find(name);
        if (it == table.end()) throw IntegrityError("checkpoint is missing parameter " + name);
        if (it->second->shape() != param->shape())
            throw IntegrityError("checkpoint parameter " + name + " has shape " +
                                 it->second->shape().to_string() + ", model expects " +
                                 param->shape().to_string());
    }
    if (table.size() != m.params.size()) {
        std::set<std::string> known;
        for (const auto& [name, param] : m.params) known.insert(name);
        for (const auto& [name, t] : blobs)
            if (!known.count(name))
                throw IntegrityError("checkpoint carries unknown parameter " + name);
    }
    for (auto& [name, param] : m.params) *param = *table.at(name);
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path, std::uint32_t epoch,
                     std::uint64_t seed) {
    std::string out;
    out.append(kCheckpointMagic, 8);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(m.config.variant));
    put_u32(out, epoch);
    put_u64(out, seed);
    const std::string cfg = config_to_json_text(m.config);
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out += cfg;
    put_u32(out, static_cast<std::uint32_t>(m.params.size()));
    for (const auto& [name, param] : m.params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(param->rank()));
        for (std::size_t d = 0; d < param->rank(); ++d)
            put_u32(out, static_cast<std::uint32_t>(param->shape()[d]));
        put_u32(out, static_cast<std::uint32_t>(param->size()));
        for (std::size_t k = 0; k < param->size(); ++k) put_f32(out, (*param)[k]);
    }
    write_file(path, out, "checkpoint");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const ParsedCheckpoint pc = parse_checkpoint(read_file(path, "checkpoint"));
    const ModelConfig cfg = config_from_json_text(pc.config_json);
    if (static_cast<std::uint32_t>(cfg.variant) != pc.variant_tag)
        throw IntegrityError("checkpoint variant tag " + std::to_string(pc.variant_tag) +
                             " disagrees with embedded config variant " +
                             variant_name(cfg.variant));
    LoadedCheckpoint lc;
    lc.model = build_model(cfg, pc.seed);
    lc.epoch = pc.epoch;
    lc.seed = pc.seed;
    apply_blobs(lc.model, pc.blobs);
    return lc;
}

void load_checkpoint_into(Model& m, const std::string& path) {
    const ParsedCheckpoint pc = parse_checkpoint(read_file(path, "checkpoint"));
    apply_blobs(m, pc.blobs);
}

ImportReport import_external_weights(Model& m, const std::string& path) {
    if (m.config.variant != Variant::lrcn_vgg)
        throw ImportError(std::string("external weight import expects a lrcn_vgg model, got ") +
                          variant_name(m.config.variant));
    const ParsedCheckpoint pc = parse_checkpoint(read_file(path, "weights"));

    const std::vector<std::string> table = vgg_import_names(m.config.vgg_blocks);
    std::set<std::string> importable(table.begin(), table.end());
    std::map<std::string, Tensor<float>*> params;
    for (auto& [name, param] : m.params) params[name] = param;

    ImportReport report;
    std::set<std::string> loaded_names;
    for (const auto& [name, blob] : pc.blobs) {
        const std::size_t dot = name.rfind('.');
        const std::string base = dot == std::string::npos ? name : name.substr(0, dot);
        const std::string leaf = dot == std::string::npos ? "" : name.substr(dot + 1);
        if (!importable.count(base) || (leaf != "w" && leaf != "b")) {
            report.skipped.push_back(name);
            continue;
        }
        Tensor<float>* target = params.at("td.vgg." + name);
        if (blob.shape() != target->shape())
            throw ImportError("imported " + name + " has shape " + blob.shape().to_string() +
                              ", model expects " + target->shape().to_string());
        *target = blob;
        loaded_names.insert(base);
    }
    report.loaded.assign(loaded_names.begin(), loaded_names.end());
    return report;
}

}  // namespace stnet
