// Acceptance gate. Each criterion prints exactly one [PASS]/[FAIL] line and
// the process exits nonzero if any of them failed. The learning criteria
// retrain the shipped variants from scratch, so a full run takes several
// minutes on one core.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "stnet/attention.hpp"
#include "stnet/datapipe.hpp"
#include "stnet/error.hpp"
#include "stnet/gradsuite.hpp"
#include "stnet/metrics.hpp"
#include "stnet/model.hpp"
#include "stnet/recurrent.hpp"
#include "stnet/rng.hpp"
#include "stnet/stream.hpp"
#include "stnet/train.hpp"

using namespace stnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] %-38s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

// a throwing criterion is a failing criterion, not a dead gate
void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& f) {
    try {
        const auto [ok, detail] = f();
        report(name, ok, detail);
    } catch (const std::exception& e) {
        report(name, false, std::string("unexpected exception: ") + e.what());
    }
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* pattern, ...) {
    char buf[256];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path& work_dir() {
    static fs::path dir = [] {
        const fs::path p = fs::temp_directory_path() / "stnet_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

// ---- shared dataset: 100 clips per class at the models' desk geometry ----

const std::string& dataset_dir() {
    static std::string dir = [] {
        SyntheticConfig sc;
        sc.clips_per_class = 100;
        sc.seed = 11;
        const std::string d = (work_dir() / "data").string();
        generate_synthetic_dataset(sc, d);
        return d;
    }();
    return dir;
}

const SplitResult& dataset_split() {
    static SplitResult split = [] {
        SplitSpec spec;
        spec.seed = 3;
        return split_dataset(read_manifest(dataset_dir() + "/manifest.txt"), spec);
    }();
    return split;
}

// sample tensors depend only on the requested geometry, so cache per geometry
const SampleSet& samples_for(const DatasetManifest& man, const ModelConfig& cfg,
                             const std::string& tag) {
    static std::map<std::string, SampleSet> cache;
    const std::string key = tag + ":" + std::to_string(cfg.frames) + "x" +
                            std::to_string(cfg.height) + "x" + std::to_string(cfg.width);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, load_samples(dataset_dir(), man, cfg)).first;
    return it->second;
}

ModelConfig micro_convlstm_config() {
    ModelConfig cfg;
    cfg.variant = Variant::conv_lstm;
    cfg.frames = 6;
    cfg.height = 12;
    cfg.width = 12;
    cfg.convlstm_filters = 2;
    cfg.head_hidden = 8;
    return cfg;
}

// ---- criteria ----

std::pair<bool, std::string> gradient_suite() {
    const auto t0 = Clock::now();
    const std::vector<GradSuiteEntry> entries = run_gradient_suite();
    const double elapsed = seconds_since(t0);
    std::size_t passed = 0;
    double worst = 0.0;
    for (const GradSuiteEntry& e : entries) {
        passed += e.pass;
        worst = std::max(worst, e.max_rel_err);
    }
    const bool ok = passed == entries.size() && entries.size() >= 20 && elapsed < 300.0;
    return {ok, fmt("%zu/%zu components within 1e-4, worst rel err %.2e, %.1f s", passed,
                    entries.size(), worst, elapsed)};
}

std::pair<bool, std::string> recurrent_worked_example() {
    // all weights zero, candidate bias 1: c = tanh(1)/2, h = tanh(c)/2
    LSTMCell<double> lstm(1, 1);
    lstm.bg[0] = 1.0;
    Tensor<double> h, c;
    lstm.step(Tensor<double>(Shape{1}, {0.7}), Tensor<double>(Shape{1}), Tensor<double>(Shape{1}),
              h, c, nullptr);
    bool ok = std::abs(c[0] - 0.38079) < 1e-5 && std::abs(h[0] - 0.18170) < 1e-5;
    ok = ok && std::abs(c[0] - 0.5 * std::tanh(1.0)) < 1e-12;
    ok = ok && std::abs(h[0] - 0.5 * std::tanh(0.5 * std::tanh(1.0))) < 1e-12;
    const double lc = c[0], lh = h[0];

    // the convolutional cell lands on the same constants at every grid cell
    ConvLSTMCell<double> grid(3, 1, 1, 2, 2);
    grid.bc[0] = 1.0;
    grid.step(Tensor<double>::full(Shape{2, 2, 1}, 0.4), Tensor<double>(Shape{2, 2, 1}),
              Tensor<double>(Shape{2, 2, 1}), h, c, nullptr);
    for (std::size_t i = 0; i < 4; ++i)
        ok = ok && std::abs(c[i] - 0.38079) < 1e-5 && std::abs(h[i] - 0.18170) < 1e-5;
    return {ok, fmt("c=%.6f h=%.6f, same on the 2x2 conv grid", lc, lh)};
}

std::pair<bool, std::string> attention_worked_example() {
    // scores [1, 0] scaled by 1/sqrt(2)
    AttentionResult<double> two = scaled_dot_attention_full(
        Tensor<double>(Shape{1, 2}, {1, 0}), Tensor<double>(Shape{2, 2}, {1, 0, 0, 1}),
        Tensor<double>(Shape{2, 2}, {10, 0, 0, 10}));
    bool ok = std::abs(two.weights[0] - 0.669762) < 1e-5 &&
              std::abs(two.weights[1] - 0.330238) < 1e-5;
    ok = ok && std::abs(two.output[0] - 10.0 * two.weights[0]) < 1e-10;

    // one key: the weight must be exactly 1 and the value passes through
    AttentionResult<double> one = scaled_dot_attention_full(
        Tensor<double>(Shape{1, 3}, {9, -2, 4}), Tensor<double>(Shape{1, 3}, {1, 2, 3}),
        Tensor<double>(Shape{1, 2}, {7, -4}));
    ok = ok && std::abs(one.weights[0] - 1.0) < 1e-12 && std::abs(one.output[0] - 7.0) < 1e-12 &&
         std::abs(one.output[1] + 4.0) < 1e-12;

    // identical keys: attention degenerates to the mean of the values
    AttentionResult<double> same = scaled_dot_attention_full(
        Tensor<double>(Shape{1, 2}, {3, -1}), Tensor<double>::full(Shape{3, 2}, 0.5),
        Tensor<double>(Shape{3, 1}, {3, 6, 9}));
    ok = ok && std::abs(same.output[0] - 6.0) < 1e-12;
    return {ok, fmt("weights [%.6f, %.6f]; collapse and mean identities hold", two.weights[0],
                    two.weights[1])};
}

std::pair<bool, std::string> metric_arithmetic() {
    // hand-counted example: 30 samples, 25 correct
    const ConfusionCounts counts{{{6, 2}, {3, 19}}};
    const Metrics m = metrics_from_confusion(counts, 0.0);
    bool ok = std::abs(m.accuracy - 25.0 / 30.0) < 1e-12;
    ok = ok && std::abs(m.precision[0] - 6.0 / 9.0) < 1e-12;
    ok = ok && std::abs(m.recall[0] - 6.0 / 8.0) < 1e-12;
    ok = ok && std::abs(m.precision[1] - 19.0 / 21.0) < 1e-12;
    ok = ok && std::abs(m.recall[1] - 19.0 / 22.0) < 1e-12;

    // F1 example: precision 0.55 and recall 0.75 combine to 0.634615
    const Metrics f = metrics_from_confusion(ConfusionCounts{{{29, 27}, {11, 33}}}, 0.0);
    ok = ok && std::abs(f.precision[1] - 0.55) < 1e-12 && std::abs(f.recall[1] - 0.75) < 1e-12;
    ok = ok && std::abs(f.f1[1] - 2 * 0.55 * 0.75 / (0.55 + 0.75)) < 1e-12;
    ok = ok && std::abs(f.f1[1] - 0.634615) < 1e-6;

    // 1000 random predictions recounted with plain loops
    Rng rng(2024);
    const std::size_t n = 1000;
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        truth[i] = static_cast<int>(rng.uniform_int(2));
        pred[i] = static_cast<int>(rng.uniform_int(2));
    }
    const Metrics big = metrics_from_confusion(confusion_matrix(pred, truth), 0.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i];
    ok = ok && std::abs(big.accuracy - static_cast<double>(correct) / n) < 1e-12;
    for (int k = 0; k < 2; ++k) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            tp += truth[i] == k && pred[i] == k;
            fp += truth[i] != k && pred[i] == k;
            fn += truth[i] == k && pred[i] != k;
        }
        const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double r = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        ok = ok && std::abs(big.precision[k] - p) < 1e-12 && std::abs(big.recall[k] - r) < 1e-12 &&
             std::abs(big.f1[k] - f1) < 1e-12;
        ok = ok && big.confusion[k][k] == (k == 0 ? correct - big.confusion[1][1] : tp);
    }
    return {ok, "worked examples and a 1000-sample recount agree"};
}

std::pair<bool, std::string> desk_learning(Variant v) {
    const auto t0 = Clock::now();
    const ModelConfig cfg = desk_scale_config(v);
    Model model = build_model(cfg, 42);
    const SampleSet& train_set = samples_for(dataset_split().train, cfg, "train");
    const SampleSet& probe_set = samples_for(dataset_split().test, cfg, "test");

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch = 4;
    tc.epochs = 30;
    tc.seed = 5;
    tc.stop_at_val_accuracy = 0.9;
    const std::vector<HistoryRecord> hist = train(model, train_set, probe_set, tc);
    const double elapsed = seconds_since(t0);

    const double acc = hist.empty() ? 0.0 : hist.back().val_accuracy;
    const bool ok = acc >= 0.9 && hist.size() <= 30 && elapsed < 600.0;
    return {ok, fmt("held-out accuracy %.2f after %zu epochs, %.0f s", acc, hist.size(), elapsed)};
}

std::pair<bool, std::string> shuffled_label_control() {
    const auto t0 = Clock::now();
    const ModelConfig cfg = desk_scale_config(Variant::lrcn_custom);
    Model model = build_model(cfg, 42);

    // train on destroyed label-motion pairing, then score against the truth
    SampleSet shuffled = samples_for(dataset_split().train, cfg, "train");
    std::vector<int> labels;
    for (const Sample& s : shuffled) labels.push_back(s.label);
    Rng rng(mix_seed(77, 0x636f6e74726f6c));
    shuffle_deterministic(labels, rng);
    for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].label = labels[i];

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch = 4;
    tc.epochs = 30;
    tc.seed = 5;
    train(model, shuffled, {}, tc);

    const DatasetManifest all = read_manifest(dataset_dir() + "/manifest.txt");
    const Metrics m = evaluate(model, samples_for(all, cfg, "all"));
    const bool ok = m.accuracy >= 0.45 && m.accuracy <= 0.55;
    return {ok, fmt("accuracy %.3f on true labels (expected 0.45..0.55), %.0f s", m.accuracy,
                    seconds_since(t0))};
}

std::pair<bool, std::string> single_batch_overfit(Variant v) {
    const ModelConfig cfg = desk_scale_config(v);
    Model model = build_model(cfg, 42);

    const DatasetManifest man = read_manifest(dataset_dir() + "/manifest.txt");
    DatasetManifest four;
    for (const std::size_t i : {std::size_t{0}, std::size_t{1}, std::size_t{100}, std::size_t{101}})
        four.entries.push_back(man.entries[i]);
    const SampleSet batch = load_samples(dataset_dir(), four, cfg);

    // one batch per epoch, so the step budget equals the epoch budget
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.batch = 4;
    tc.epochs = 300;
    tc.seed = 5;
    tc.stop_at_train_loss = 0.05;
    const std::vector<HistoryRecord> hist = train(model, batch, {}, tc);
    const double loss = hist.empty() ? 1e9 : hist.back().train_loss;
    const bool ok = loss < 0.05 && hist.size() <= 300;
    return {ok, fmt("cross-entropy %.4f after %zu steps", loss, hist.size())};
}

std::pair<bool, std::string> pipeline_determinism() {
    auto run_once = [](const std::string& tag) {
        SyntheticConfig sc;
        sc.clips_per_class = 10;
        sc.seed = 11;
        sc.frames = 6;
        sc.height = 12;
        sc.width = 12;
        sc.blob_radius = 2;
        sc.calm_speed = 0.5;
        sc.agitated_speed = 2.5;
        const std::string dir = (work_dir() / tag).string();
        const DatasetManifest man = generate_synthetic_dataset(sc, dir);

        SplitSpec spec;
        spec.seed = 3;
        const SplitResult split = split_dataset(man, spec);

        const ModelConfig cfg = micro_convlstm_config();
        Model model = build_model(cfg, 42);
        TrainConfig tc;
        tc.lr = 1e-3;
        tc.batch = 4;
        tc.epochs = 2;
        tc.seed = 5;
        const auto hist = train(model, load_samples(dir, split.train, cfg),
                                load_samples(dir, split.val, cfg), tc);
        save_checkpoint(model, dir + "/final.stc", hist.size(), 5);

        const Metrics m = evaluate(model, load_samples(dir, split.test, cfg));
        return std::tuple{slurp(dir + "/manifest.txt"),
                          slurp(fs::path(dir) / man.entries[0].path), history_to_csv(hist),
                          slurp(dir + "/final.stc"), metrics_report(m)};
    };

    const auto a = run_once("pipe_a");
    const auto b = run_once("pipe_b");
    const bool ok = a == b;
    return {ok, ok ? "two full runs agree byte for byte (containers, history, "
                     "checkpoint, metrics)"
                   : "reruns disagree"};
}

template <typename E, typename F>
bool throws_only(F&& f) {
    try {
        f();
    } catch (const E&) {
        return true;
    } catch (...) {
        return false;
    }
    return false;
}

std::pair<bool, std::string> format_gauntlet() {
    const fs::path dir = work_dir() / "formats";
    fs::create_directories(dir);
    bool ok = true;

    // checkpoint round trip is bit exact
    Model model = build_model(micro_convlstm_config(), 123);
    const std::string ckpt = (dir / "model.stc").string();
    save_checkpoint(model, ckpt, 7, 123);
    const LoadedCheckpoint back = load_checkpoint(ckpt);
    ok = ok && back.epoch == 7 && back.seed == 123 &&
         back.model.params.size() == model.params.size();
    for (std::size_t i = 0; i < model.params.size() && ok; ++i) {
        const Tensor<float>& want = *model.params[i].second;
        const Tensor<float>& got = *back.model.params[i].second;
        ok = back.model.params[i].first == model.params[i].first && got.shape() == want.shape();
        for (std::size_t j = 0; j < want.size() && ok; ++j)
            ok = std::memcmp(&got[j], &want[j], sizeof(float)) == 0;
    }

    // frame container round trip
    Rng rng(9);
    FrameSequence seq;
    seq.frames = Tensor<std::uint8_t>(Shape{5, 8, 7, 3});
    for (std::size_t i = 0; i < seq.frames.size(); ++i)
        seq.frames[i] = static_cast<std::uint8_t>(rng.uniform_int(256));
    seq.label = 1;
    seq.fps = 12.5f;
    const std::string stf = (dir / "clip.stf").string();
    write_frame_container(seq, stf);
    const FrameSequence seq2 = read_frame_container(stf);
    ok = ok && seq2.frames.shape() == seq.frames.shape() && seq2.label == 1 && seq2.fps == 12.5f;
    for (std::size_t i = 0; i < seq.frames.size() && ok; ++i) ok = seq2.frames[i] == seq.frames[i];

    // manifest round trip
    DatasetManifest man;
    for (int i = 0; i < 3; ++i) {
        ManifestEntry e;
        e.clip_id = "clip_" + std::to_string(i);
        e.path = e.clip_id + ".stf";
        e.label = i % 2;
        e.frames = 5;
        e.height = 8;
        e.width = 7;
        man.entries.push_back(e);
    }
    const std::string mpath = (dir / "manifest.txt").string();
    write_manifest(man, mpath);
    const DatasetManifest man2 = read_manifest(mpath);
    ok = ok && man2.entries.size() == 3 && man2.entries[2].clip_id == "clip_2" &&
         man2.entries[1].label == 1;

    // corrupted headers must be rejected, not misread
    auto write_mangled = [&](const std::string& src, std::size_t at, const fs::path& dst) {
        std::string bytes = slurp(src);
        bytes[at] ^= 0x40;
        std::ofstream out(dst, std::ios::binary);
        out << bytes;
        return dst.string();
    };
    ok = ok && throws_only<FormatError>(
                   [&] { load_checkpoint(write_mangled(ckpt, 0, dir / "bad_magic.stc")); });
    ok = ok && throws_only<FormatError>(
                   [&] { load_checkpoint(write_mangled(ckpt, 8, dir / "bad_version.stc")); });
    ok = ok && throws_only<FormatError>([&] {
             const std::string bytes = slurp(ckpt);
             std::ofstream out(dir / "short.stc", std::ios::binary);
             out << bytes.substr(0, bytes.size() - 9);
             out.close();
             load_checkpoint((dir / "short.stc").string());
         });
    ok = ok && throws_only<FormatError>(
                   [&] { read_frame_container(write_mangled(stf, 0, dir / "bad.stf")); });
    ok = ok && throws_only<FormatError>([&] {
             std::ofstream out(dir / "bad_manifest.txt", std::ios::binary);
             out << "stnet-manifest v9\nclip\tclip.stf\t0\t5\t8\t7\n";
             out.close();
             read_manifest((dir / "bad_manifest.txt").string());
         });
    return {ok, "round trips bit exact; mangled magic, version, length, and "
                "headers rejected"};
}

std::pair<bool, std::string> sliding_window_coverage() {
    // formula check across every stream length and stride in range
    std::size_t checked = 0;
    bool ok = true;
    for (std::size_t t_total = 25; t_total <= 200 && ok; ++t_total) {
        FrameSequence stream;
        stream.frames = Tensor<std::uint8_t>(Shape{t_total, 4, 4, 3});
        for (std::size_t t = 0; t < t_total; ++t)
            for (std::size_t j = 0; j < 48; ++j)
                stream.frames[t * 48 + j] = static_cast<std::uint8_t>(t);
        for (std::size_t stride = 1; stride <= 50 && ok; ++stride) {
            std::vector<std::size_t> seen_first_frames;
            const ClipClassifier probe = [&](const Tensor<float>& clip) {
                seen_first_frames.push_back(
                    static_cast<std::size_t>(std::lround(clip[0] * 255.0f)));
                return Tensor<float>(Shape{2}, {0.25f, 0.75f});
            };
            const auto results = sliding_window_classify(probe, stream, 25, stride, 4, 4, 4);
            const std::size_t want = (t_total - 25) / stride + 1;
            ok = results.size() == want && seen_first_frames.size() == want;
            for (std::size_t i = 0; i < results.size() && ok; ++i) {
                ok = results[i].start == i * stride && seen_first_frames[i] == i * stride;
                ok = ok && results[i].start + 25 <= t_total;
            }
            ++checked;
        }
    }

    // a window longer than the stream is refused
    FrameSequence tiny;
    tiny.frames = Tensor<std::uint8_t>(Shape{10, 4, 4, 3});
    ok = ok && throws_only<DataError>([&] {
             sliding_window_classify([](const Tensor<float>&) { return Tensor<float>(Shape{2}); },
                                     tiny, 25, 1, 4, 4, 4);
         });

    // a constant stream must classify identically in every window
    Model model = build_model(micro_convlstm_config(), 42);
    FrameSequence flat;
    flat.frames = Tensor<std::uint8_t>(Shape{20, 12, 12, 3});
    for (std::size_t i = 0; i < flat.frames.size(); ++i) flat.frames[i] = 100;
    const auto windows = sliding_window_classify(model, flat, 6, 2);
    ok = ok && windows.size() == 8;
    for (const StreamWindowResult& w : windows) {
        ok = ok && w.label == windows[0].label;
        ok = ok && std::abs(w.probabilities[0] - windows[0].probabilities[0]) < 1e-6f;
    }
    return {ok, fmt("%zu length/stride pairs match floor((T-w)/s)+1; constant "
                    "stream never flickers",
                    checked)};
}

}  // namespace

int main() {
    std::printf("acceptance gate\n");

    criterion("gradient suite", gradient_suite);
    criterion("recurrent cell worked example", recurrent_worked_example);
    criterion("attention worked example", attention_worked_example);
    criterion("metric arithmetic", metric_arithmetic);

    for (int v = 0; v < 5; ++v) {
        const Variant variant = static_cast<Variant>(v);
        criterion(std::string("desk learning ") + variant_name(variant),
                  [variant] { return desk_learning(variant); });
    }
    criterion("label-shuffled control", shuffled_label_control);

    for (int v = 0; v < 5; ++v) {
        const Variant variant = static_cast<Variant>(v);
        criterion(std::string("single-batch overfit ") + variant_name(variant),
                  [variant] { return single_batch_overfit(variant); });
    }

    criterion("pipeline determinism", pipeline_determinism);
    criterion("format gauntlet", format_gauntlet);
    criterion("sliding-window coverage", sliding_window_coverage);

    if (g_failures == 0) {
        std::printf("all criteria pass\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return 1;
}
