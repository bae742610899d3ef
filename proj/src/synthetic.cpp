#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stnet/datapipe.hpp"
#include "stnet/error.hpp"

namespace stnet {

namespace {

constexpr std::uint8_t kBackground = 30;
constexpr double kPi = 3.14159265358979323846;

struct Blob {
    double x, y;
    double vx, vy;
    std::uint8_t color[3];
};

void validate(const SyntheticConfig& cfg) {
    if (cfg.clips_per_class == 0) throw ConfigError("clips_per_class must be >= 1");
    if (cfg.frames == 0) throw ConfigError("synthetic clips need at least one frame");
    if (cfg.blobs == 0) throw ConfigError("synthetic clips need at least one blob");
    if (cfg.blob_radius == 0) throw ConfigError("blob radius must be >= 1");
    if (2 * cfg.blob_radius + 1 > std::min(cfg.height, cfg.width))
        throw ConfigError("blob diameter " + std::to_string(2 * cfg.blob_radius + 1) +
                          " exceeds the " + std::to_string(cfg.height) + "x" +
                          std::to_string(cfg.width) + " frame");
    if (cfg.calm_speed < 0.0 || cfg.agitated_speed < 0.0)
        throw ConfigError("motion speeds must be non-negative");
}

void reflect(double& p, double& v, double lo, double hi) {
    if (p < lo) {
        p = lo + (lo - p);
        v = -v;
    }
    if (p > hi) {
        p = hi - (p - hi);
        v = -v;
    }
    p = std::clamp(p, lo, hi);
}

void render(Tensor<std::uint8_t>& frames, std::size_t t, const std::vector<Blob>& blobs,
            const SyntheticConfig& cfg) {
    const std::size_t h = cfg.height, w = cfg.width;
    std::uint8_t* frame = frames.data() + t * h * w * 3;
    std::fill(frame, frame + h * w * 3, kBackground);
    const double r = static_cast<double>(cfg.blob_radius);
    for (const Blob& b : blobs) {
        // Fast motion smears: each blob is a capsule stretched along its
        // current velocity, half-length proportional to speed (capped), so a
        // frame shows how hard its blobs are moving the way motion blur does.
        const double speed = std::hypot(b.vx, b.vy);
        const double half = std::min(0.9 * speed, 2.5 * r);
        double ux = 0.0, uy = 0.0;
        if (speed > 1e-9) {
            ux = b.vx / speed;
            uy = b.vy / speed;
        }
        const double ax = b.x - half * ux, ay = b.y - half * uy;
        const double sx = 2.0 * half * ux, sy = 2.0 * half * uy;
        const double len2 = sx * sx + sy * sy;
        const double reach = r + 1.0 + half;
        const std::size_t y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(b.y - reach)));
        const std::size_t y_hi = std::min(h - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(b.y + reach))));
        const std::size_t x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(b.x - reach)));
        const std::size_t x_hi = std::min(w - 1, static_cast<std::size_t>(std::max(0.0, std::ceil(b.x + reach))));
        for (std::size_t y = y_lo; y <= y_hi; ++y)
            for (std::size_t x = x_lo; x <= x_hi; ++x) {
                const double px_ = static_cast<double>(x) - ax;
                const double py_ = static_cast<double>(y) - ay;
                const double tp = len2 > 0.0 ? std::clamp((px_ * sx + py_ * sy) / len2, 0.0, 1.0) : 0.0;
                const double dx = px_ - tp * sx;
                const double dy = py_ - tp * sy;
                const double dist = std::sqrt(dx * dx + dy * dy);
                // soft 1-pixel rim so sub-pixel motion shows up in the pixels
                double cover = 0.0;
                if (dist <= r)
                    cover = 1.0;
                else if (dist <= r + 1.0)
                    cover = r + 1.0 - dist;
                if (cover <= 0.0) continue;
                std::uint8_t* px = frame + (y * w + x) * 3;
                for (int k = 0; k < 3; ++k) {
                    const double v = kBackground + cover * (static_cast<double>(b.color[k]) - kBackground);
                    px[k] = std::max(px[k], static_cast<std::uint8_t>(std::lround(v)));
                }
            }
    }
}

}  // namespace

FrameSequence synth_clip(const SyntheticConfig& cfg, int label, std::size_t index) {
    validate(cfg);
    if (label != 0 && label != 1) throw LabelError("synthetic label must be 0 or 1");
    Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<std::uint64_t>(label) + 1), index));

    const double r = static_cast<double>(cfg.blob_radius);
    const double x_lo = r, x_hi = static_cast<double>(cfg.width - 1) - r;
    const double y_lo = r, y_hi = static_cast<double>(cfg.height - 1) - r;

    std::vector<Blob> blobs(cfg.blobs);
    for (Blob& b : blobs) {
        b.x = x_lo + rng.uniform() * (x_hi - x_lo);
        b.y = y_lo + rng.uniform() * (y_hi - y_lo);
        const double angle = rng.uniform() * 2.0 * kPi;
        b.vx = cfg.calm_speed * std::cos(angle);
        b.vy = cfg.calm_speed * std::sin(angle);
        for (int k = 0; k < 3; ++k)
            b.color[k] = static_cast<std::uint8_t>(140 + rng.uniform_int(116));
    }

    FrameSequence seq;
    seq.frames = Tensor<std::uint8_t>(Shape{cfg.frames, cfg.height, cfg.width, 3});
    seq.label = label;
    char id[32];
    std::snprintf(id, sizeof id, "%s_%04zu", label == 0 ? "calm" : "agit", index);
    seq.clip_id = id;

    for (std::size_t t = 0; t < cfg.frames; ++t) {
        if (label == 1)
            for (Blob& b : blobs) {
                // agitated: fresh direction and magnitude every frame
                const double angle = rng.uniform() * 2.0 * kPi;
                const double speed = cfg.agitated_speed * (0.5 + rng.uniform());
                b.vx = speed * std::cos(angle);
                b.vy = speed * std::sin(angle);
            }
        render(seq.frames, t, blobs, cfg);
        for (Blob& b : blobs) {
            b.x += b.vx;
            b.y += b.vy;
            reflect(b.x, b.vx, x_lo, x_hi);
            reflect(b.y, b.vy, y_lo, y_hi);
        }
        if (label == 1 && cfg.blobs >= 2 && rng.bernoulli(0.25)) {
            // contact event: one blob jumps next to another
            const std::size_t a = rng.uniform_int(cfg.blobs);
            std::size_t b = rng.uniform_int(cfg.blobs - 1);
            if (b >= a) ++b;
            const double angle = rng.uniform() * 2.0 * kPi;
            blobs[b].x = std::clamp(blobs[a].x + 2.0 * r * std::cos(angle), x_lo, x_hi);
            blobs[b].y = std::clamp(blobs[a].y + 2.0 * r * std::sin(angle), y_lo, y_hi);
        }
    }
    return seq;
}

DatasetManifest generate_synthetic_dataset(const SyntheticConfig& cfg, const std::string& out_dir) {
    validate(cfg);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

    DatasetManifest manifest;
    for (int label = 0; label < 2; ++label)
        for (std::size_t i = 0; i < cfg.clips_per_class; ++i) {
            const FrameSequence seq = synth_clip(cfg, label, i);
            ManifestEntry e;
            e.clip_id = seq.clip_id;
            e.path = seq.clip_id + ".stf";
            e.label = label;
            e.frames = cfg.frames;
            e.height = cfg.height;
            e.width = cfg.width;
            write_frame_container(seq, out_dir + "/" + e.path);
            manifest.entries.push_back(std::move(e));
        }
    write_manifest(manifest, out_dir + "/manifest.txt");
    return manifest;
}

}  // namespace stnet
