#include "stnet/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "stnet/error.hpp"

namespace stnet {

std::array<std::size_t, 2> DatasetManifest::class_counts() const {
    std::array<std::size_t, 2> counts{0, 0};
    for (const auto& e : entries) {
        if (e.label != 0 && e.label != 1)
            throw LabelError("manifest entry " + e.clip_id + " has label " +
                             std::to_string(e.label) + ", expected 0 or 1");
        ++counts[static_cast<std::size_t>(e.label)];
    }
    return counts;
}

std::vector<std::size_t> sample_frame_indices(std::size_t total, std::size_t n) {
    if (total == 0) throw DataError("cannot sample frames from an empty clip");
    if (n == 0) throw ConfigError("frame sample count must be >= 1");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i * total / n;
    return idx;
}

Tensor<float> resize_bilinear(const Tensor<float>& frame, std::size_t out_h, std::size_t out_w) {
    if (frame.rank() != 3)
        throw ShapeError("resize expects [H, W, C], got " + frame.shape().to_string());
    if (out_h == 0 || out_w == 0) throw ConfigError("resize target must be >= 1 in each dimension");
    const std::size_t in_h = frame.shape()[0], in_w = frame.shape()[1], c = frame.shape()[2];
    Tensor<float> out(Shape{out_h, out_w, c});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(in_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const float wy = static_cast<float>(fy - static_cast<double>(y0));
        for (std::size_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(in_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const float wx = static_cast<float>(fx - static_cast<double>(x0));
            for (std::size_t k = 0; k < c; ++k) {
                const float v00 = frame[(y0 * in_w + x0) * c + k];
                const float v01 = frame[(y0 * in_w + x1) * c + k];
                const float v10 = frame[(y1 * in_w + x0) * c + k];
                const float v11 = frame[(y1 * in_w + x1) * c + k];
                const float top = v00 + (v01 - v00) * wx;
                const float bot = v10 + (v11 - v10) * wx;
                out[(y * out_w + x) * c + k] = top + (bot - top) * wy;
            }
        }
    }
    return out;
}

Tensor<float> normalize(const Tensor<std::uint8_t>& frames) {
    Tensor<float> out(frames.shape());
    for (std::size_t i = 0; i < frames.size(); ++i)
        out[i] = static_cast<float>(frames[i]) / 255.0f;
    return out;
}

Tensor<float> one_hot(int label, std::size_t classes) {
    if (classes == 0) throw ConfigError("one_hot needs at least one class");
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
        throw LabelError("label " + std::to_string(label) + " outside 0.." +
                         std::to_string(classes - 1));
    Tensor<float> out(Shape{classes});
    out[static_cast<std::size_t>(label)] = 1.0f;
    return out;
}

Tensor<float> preprocess_clip(const FrameSequence& seq, std::size_t frames, std::size_t out_h,
                              std::size_t out_w) {
    if (seq.frames.rank() != 4)
        throw ShapeError("clip must be [T, H, W, C], got " + seq.frames.shape().to_string());
    const std::size_t total = seq.frames.shape()[0];
    const std::size_t in_h = seq.frames.shape()[1], in_w = seq.frames.shape()[2],
                      c = seq.frames.shape()[3];
    const std::vector<std::size_t> picks = sample_frame_indices(total, frames);
    Tensor<float> out(Shape{frames, out_h, out_w, c});
    const std::size_t frame_bytes = in_h * in_w * c;
    for (std::size_t i = 0; i < picks.size(); ++i) {
        Tensor<std::uint8_t> raw(Shape{in_h, in_w, c});
        std::copy(seq.frames.data() + picks[i] * frame_bytes,
                  seq.frames.data() + (picks[i] + 1) * frame_bytes, raw.data());
        const Tensor<float> resized = resize_bilinear(normalize(raw), out_h, out_w);
        std::copy(resized.data(), resized.data() + resized.size(),
                  out.data() + i * out_h * out_w * c);
    }
    return out;
}

namespace {

void validate_split_spec(const SplitSpec& spec) {
    if (spec.train <= 0.0 || spec.val <= 0.0 || spec.test <= 0.0)
        throw ConfigError("split ratios must each be positive");
    const double sum = spec.train + spec.val + spec.test;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
}

// Shuffles the group, then carves floor-sized validation and test slices;
// whatever remains is training data.
void split_group(const DatasetManifest& manifest, std::vector<std::size_t> idx,
                 const SplitSpec& spec, std::uint64_t salt, const std::string& group_name,
                 SplitResult& out) {
    Rng rng(mix_seed(spec.seed, salt));
    shuffle_deterministic(idx, rng);
    const std::size_t n = idx.size();
    const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * spec.val);
    const std::size_t n_test = static_cast<std::size_t>(static_cast<double>(n) * spec.test);
    if (n_val == 0 || n_test == 0 || n_val + n_test >= n)
        throw StratificationError(group_name + " has " + std::to_string(n) +
                                  " clips, too few to fill every subset at ratios " +
                                  std::to_string(spec.train) + "/" + std::to_string(spec.val) +
                                  "/" + std::to_string(spec.test));
    for (std::size_t i = 0; i < n; ++i) {
        const ManifestEntry& e = manifest.entries[idx[i]];
        if (i < n_val)
            out.val.entries.push_back(e);
        else if (i < n_val + n_test)
            out.test.entries.push_back(e);
        else
            out.train.entries.push_back(e);
    }
}

}  // namespace

SplitResult split_dataset(const DatasetManifest& manifest, const SplitSpec& spec) {
    if (manifest.entries.empty()) throw DataError("cannot split an empty manifest");
    validate_split_spec(spec);
    SplitResult out;
    if (spec.stratified) {
        for (int label = 0; label < 2; ++label) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < manifest.entries.size(); ++i)
                if (manifest.entries[i].label == label) idx.push_back(i);
            if (idx.empty())
                throw StratificationError("class " + std::to_string(label) +
                                          " has no clips; stratified split impossible");
            split_group(manifest, std::move(idx), spec, 0x10 + static_cast<std::uint64_t>(label),
                        "class " + std::to_string(label), out);
        }
    } else {
        std::vector<std::size_t> idx(manifest.entries.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        split_group(manifest, std::move(idx), spec, 0x51, "manifest", out);
    }
    return out;
}

// --- frame container --------------------------------------------------------

namespace {

constexpr char kFrameMagic[9] = "STNETFRM";
constexpr std::uint32_t kFrameVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos, const char* what) {
    if (pos + 4 > buf.size())
        throw FormatError(std::string("truncated frame container: missing ") + what);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data()) + pos;
    pos += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void write_frame_container(const FrameSequence& seq, const std::string& path) {
    if (seq.frames.rank() != 4)
        throw ShapeError("frame container holds [T, H, W, C] clips, got " +
                         seq.frames.shape().to_string());
    if (seq.label != 0 && seq.label != 1)
        throw LabelError("clip label " + std::to_string(seq.label) + " must be 0 or 1");
    std::string out;
    out.append(kFrameMagic, 8);
    put_u32(out, kFrameVersion);
    for (std::size_t d = 0; d < 4; ++d)
        put_u32(out, static_cast<std::uint32_t>(seq.frames.shape()[d]));
    put_u32(out, static_cast<std::uint32_t>(seq.label));
    std::uint32_t fps_bits;
    std::memcpy(&fps_bits, &seq.fps, 4);
    put_u32(out, fps_bits);
    out.append(reinterpret_cast<const char*>(seq.frames.data()), seq.frames.size());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open frame container " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f.good()) throw IoError("cannot write frame container " + path);
}

FrameSequence read_frame_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open frame container " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string buf = ss.str();

    if (buf.size() < 8 || buf.compare(0, 8, kFrameMagic, 8) != 0)
        throw FormatError("bad frame container magic in " + path + " (expected STNETFRM)");
    std::size_t pos = 8;
    const std::uint32_t version = get_u32(buf, pos, "version");
    if (version != kFrameVersion)
        throw FormatError("frame container version " + std::to_string(version) +
                          " not supported (this build reads version " +
                          std::to_string(kFrameVersion) + ")");
    const std::uint32_t t = get_u32(buf, pos, "frame count");
    const std::uint32_t h = get_u32(buf, pos, "height");
    const std::uint32_t w = get_u32(buf, pos, "width");
    const std::uint32_t c = get_u32(buf, pos, "channels");
    const std::uint32_t label = get_u32(buf, pos, "label");
    const std::uint32_t fps_bits = get_u32(buf, pos, "fps");
    if (label > 1) throw LabelError("frame container label " + std::to_string(label) +
                                    " must be 0 or 1");
    const std::size_t expected =
        static_cast<std::size_t>(t) * h * w * c;
    const std::size_t held = buf.size() - pos;
    if (held != expected)
        throw IntegrityError("frame container header declares " + std::to_string(expected) +
                             " bytes of pixels, file holds " + std::to_string(held));
    FrameSequence seq;
    seq.frames = Tensor<std::uint8_t>(Shape{t, h, w, c});
    std::memcpy(seq.frames.data(), buf.data() + pos, expected);
    seq.label = static_cast<int>(label);
    std::memcpy(&seq.fps, &fps_bits, 4);
    return seq;
}

// --- manifest text file -----------------------------------------------------

namespace {

constexpr const char* kManifestHeader = "stnet-manifest v1";

void check_field(const std::string& value, const char* what) {
    if (value.empty() || value.find('\t') != std::string::npos ||
        value.find('\n') != std::string::npos)
        throw DataError(std::string("manifest ") + what + " \"" + value +
                        "\" must be non-empty and free of tabs/newlines");
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::set<std::string> seen;
    std::ostringstream out;
    out << kManifestHeader << "\n";
    for (const auto& e : manifest.entries) {
        check_field(e.clip_id, "clip id");
        check_field(e.path, "path");
        if (e.label != 0 && e.label != 1)
            throw LabelError("manifest entry " + e.clip_id + " has label " +
                             std::to_string(e.label) + ", expected 0 or 1");
        if (!seen.insert(e.path).second)
            throw DataError("manifest repeats path " + e.path);
        out << e.clip_id << '\t' << e.path << '\t' << e.label << '\t' << e.frames << '\t'
            << e.height << '\t' << e.width << '\n';
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open manifest " + path + " for writing");
    f << out.str();
    f.flush();
    if (!f.good()) throw IoError("cannot write manifest " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path);
    std::string line;
    if (!std::getline(f, line) || line != kManifestHeader)
        throw FormatError("manifest " + path + " does not start with \"" +
                          std::string(kManifestHeader) + "\"");
    DatasetManifest manifest;
    std::set<std::string> seen;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 6)
            throw FormatError("manifest line " + std::to_string(lineno) + " has " +
                              std::to_string(fields.size()) + " fields, expected 6");
        ManifestEntry e;
        e.clip_id = fields[0];
        e.path = fields[1];
        try {
            e.label = std::stoi(fields[2]);
            e.frames = std::stoul(fields[3]);
            e.height = std::stoul(fields[4]);
            e.width = std::stoul(fields[5]);
        } catch (const std::exception&) {
            throw FormatError("manifest line " + std::to_string(lineno) +
                              " has a non-numeric field");
        }
        if (e.label != 0 && e.label != 1)
            throw LabelError("manifest line " + std::to_string(lineno) + " has label " +
                             std::to_string(e.label) + ", expected 0 or 1");
        if (!seen.insert(e.path).second)
            throw DataError("manifest repeats path " + e.path);
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

FrameSequence load_clip(const std::string& data_dir, const ManifestEntry& entry) {
    FrameSequence seq = read_frame_container(data_dir + "/" + entry.path);
    seq.clip_id = entry.clip_id;
    if (seq.frames.shape()[0] != entry.frames || seq.frames.shape()[1] != entry.height ||
        seq.frames.shape()[2] != entry.width)
        throw IntegrityError("clip " + entry.clip_id + " geometry " +
                             seq.frames.shape().to_string() + " disagrees with manifest (" +
                             std::to_string(entry.frames) + " frames of " +
                             std::to_string(entry.height) + "x" + std::to_string(entry.width) + ")");
    if (seq.label != entry.label)
        throw IntegrityError("clip " + entry.clip_id + " label " + std::to_string(seq.label) +
                             " disagrees with manifest label " + std::to_string(entry.label));
    return seq;
}

}  // namespace stnet
