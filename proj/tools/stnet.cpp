// Command-line front end: dataset generation, preprocessing, splits, training,
// evaluation, prediction, sliding-window streaming, gradient checking, and
// model inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stnet/datapipe.hpp"
#include "stnet/error.hpp"
#include "stnet/gradsuite.hpp"
#include "stnet/metrics.hpp"
#include "stnet/model.hpp"
#include "stnet/stream.hpp"
#include "stnet/train.hpp"

namespace {

using namespace stnet;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("short write to " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Model geometry comes from --config when given, otherwise from
// --variant at the chosen scale.
struct ModelArgs {
    std::string variant;
    std::string config_path;
    std::string scale = "desk";

    void attach(CLI::App* cmd, bool required) {
        auto* v = cmd->add_option("--variant", variant,
                                  "architecture: convlstm, lrcn_custom, lrcn_vgg, c3d, "
                                  "cnn_transformer");
        cmd->add_option("--config", config_path, "model config JSON file (overrides --variant)");
        cmd->add_option("--scale", scale, "desk or full geometry for --variant")
            ->check(CLI::IsMember({"desk", "full"}));
        if (required) v->required(false);  // validated later so --config alone also works
    }

    ModelConfig resolve() const {
        if (!config_path.empty()) return config_from_json_text(read_text_file(config_path));
        if (variant.empty()) throw UsageError("pass --variant or --config");
        const Variant v = variant_from_string(variant);
        return scale == "full" ? full_scale_config(v) : desk_scale_config(v);
    }
};

DatasetManifest manifest_for(const std::string& data_dir, const std::string& name) {
    return read_manifest(data_dir + "/" + name);
}

int cmd_synth(const std::string& out_dir, const SyntheticConfig& cfg) {
    const DatasetManifest man = generate_synthetic_dataset(cfg, out_dir);
    const auto counts = man.class_counts();
    std::printf("wrote %zu clips (%zu nonviolent, %zu violent) to %s\n", man.entries.size(),
                counts[0], counts[1], out_dir.c_str());
    return 0;
}

int cmd_preprocess(const std::string& raw_path, std::size_t frames, std::size_t height,
                   std::size_t width, std::size_t channels, int label, double fps,
                   const std::string& clip_id, const std::string& out_dir,
                   const std::string& manifest_path) {
    if (frames == 0 || height == 0 || width == 0 || channels == 0)
        throw UsageError("frame geometry must be positive");
    const std::size_t want = frames * height * width * channels;
    std::string bytes;
    if (raw_path == "-") {
        std::ostringstream ss;
        ss << std::cin.rdbuf();
        bytes = ss.str();
    } else {
        bytes = read_text_file(raw_path);
    }
    if (bytes.size() != want)
        throw DataError("raw stream holds " + std::to_string(bytes.size()) + " bytes, geometry " +
                        std::to_string(frames) + "x" + std::to_string(height) + "x" +
                        std::to_string(width) + "x" + std::to_string(channels) + " needs " +
                        std::to_string(want));

    FrameSequence seq;
    seq.frames = Tensor<std::uint8_t>(Shape{frames, height, width, channels});
    std::copy(bytes.begin(), bytes.end(), reinterpret_cast<char*>(seq.frames.data()));
    seq.label = label;
    seq.clip_id = clip_id;
    seq.fps = static_cast<float>(fps);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    const std::string container = clip_id + ".stf";
    write_frame_container(seq, out_dir + "/" + container);

    if (!manifest_path.empty()) {
        DatasetManifest man;
        if (std::filesystem::exists(manifest_path)) man = read_manifest(manifest_path);
        ManifestEntry e;
        e.clip_id = clip_id;
        e.path = container;
        e.label = label;
        e.frames = frames;
        e.height = height;
        e.width = width;
        man.entries.push_back(e);
        write_manifest(man, manifest_path);
    }
    std::printf("wrote %s/%s (%zu frames)\n", out_dir.c_str(), container.c_str(), frames);
    return 0;
}

int cmd_split(const std::string& data_dir, const std::string& out_dir, const SplitSpec& spec) {
    const DatasetManifest man = manifest_for(data_dir, "manifest.txt");
    const SplitResult split = split_dataset(man, spec);
    const std::string dir = out_dir.empty() ? data_dir : out_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    write_manifest(split.train, dir + "/manifest_train.txt");
    write_manifest(split.val, dir + "/manifest_val.txt");
    write_manifest(split.test, dir + "/manifest_test.txt");
    std::printf("split %zu clips into train=%zu val=%zu test=%zu under %s\n", man.entries.size(),
                split.train.entries.size(), split.val.entries.size(), split.test.entries.size(),
                dir.c_str());
    return 0;
}

std::string run_report(const Model& model, const std::vector<HistoryRecord>& history,
                       bool backbone_imported) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(6);
    out << "stnet-run v1\n";
    out << "variant " << variant_name(model.config.variant) << "\n";
    out << "parameters " << count_parameters(model) << "\n";
    out << "epochs " << history.size() << "\n";
    if (!history.empty()) {
        const HistoryRecord& last = history.back();
        out << "final_train_loss " << last.train_loss << "\n";
        out << "final_train_accuracy " << last.train_accuracy << "\n";
        out << "final_val_loss " << last.val_loss << "\n";
        out << "final_val_accuracy " << last.val_accuracy << "\n";
    }
    if (model.config.variant == Variant::lrcn_vgg && !backbone_imported)
        out << "note untrained backbone (no external weights imported; accuracy claims tied to "
               "pretrained features do not transfer)\n";
    return out.str();
}

int cmd_train(const ModelArgs& margs, const std::string& data_dir, const std::string& out_dir,
              std::uint64_t seed, const TrainConfig& tc_in, const std::string& import_path) {
    const ModelConfig cfg = margs.resolve();
    Model model = build_model(cfg, seed);
    bool imported = false;
    if (!import_path.empty()) {
        const ImportReport rep = import_external_weights(model, import_path);
        std::printf("imported %zu backbone tensors (%zu skipped)\n", rep.loaded.size(),
                    rep.skipped.size());
        imported = true;
    }

    const SampleSet train_set =
        load_samples(data_dir, manifest_for(data_dir, "manifest_train.txt"), cfg);
    SampleSet val_set;
    if (std::filesystem::exists(data_dir + "/manifest_val.txt")) {
        const DatasetManifest vm = manifest_for(data_dir, "manifest_val.txt");
        if (!vm.entries.empty()) val_set = load_samples(data_dir, vm, cfg);
    }

    TrainConfig tc = tc_in;
    tc.seed = seed;
    if (!out_dir.empty() && tc.checkpoint_every > 0) tc.checkpoint_dir = out_dir;
    const std::vector<HistoryRecord> history = train(model, train_set, val_set, tc);

    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
        save_checkpoint(model, out_dir + "/final.stc", history.size(), seed);
        write_text_file(out_dir + "/history.csv", history_to_csv(history));
        write_text_file(out_dir + "/run.txt", run_report(model, history, imported));
    }
    for (const HistoryRecord& r : history)
        std::printf("epoch %zu train_loss %.6f train_acc %.6f val_loss %.6f val_acc %.6f\n",
                    r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy);
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& manifest_name, const std::string& out_dir) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    const SampleSet samples =
        load_samples(data_dir, manifest_for(data_dir, manifest_name), loaded.model.config);
    const Metrics m = evaluate(loaded.model, samples);
    const std::string report = metrics_report(m);
    std::fputs(report.c_str(), stdout);
    if (!out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
        write_text_file(out_dir + "/metrics.txt", report);
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint, const std::string& clip_path) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    FrameSequence seq = read_frame_container(clip_path);
    if (seq.clip_id.empty()) seq.clip_id = std::filesystem::path(clip_path).stem().string();
    const ModelConfig& cfg = loaded.model.config;
    const Tensor<float> clip = preprocess_clip(seq, cfg.frames, cfg.height, cfg.width);
    const Tensor<float> probs = model_forward_one(loaded.model, clip);
    const int label = argmax_label(probs.data(), probs.size());
    std::printf("clip %s label %s p_nonviolent %.6f p_violent %.6f\n", seq.clip_id.c_str(),
                label == 0 ? "nonviolent" : "violent", probs[0], probs[1]);
    return 0;
}

int cmd_stream(const std::string& checkpoint, const std::string& clip_path, std::size_t window,
               std::size_t stride) {
    const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
    const FrameSequence stream = read_frame_container(clip_path);
    const std::vector<StreamWindowResult> results =
        sliding_window_classify(loaded.model, stream, window, stride);
    for (const StreamWindowResult& r : results)
        std::printf("window start %zu label %s p_nonviolent %.6f p_violent %.6f\n", r.start,
                    r.label == 0 ? "nonviolent" : "violent", r.probabilities[0],
                    r.probabilities[1]);
    return 0;
}

int cmd_gradcheck() {
    const std::vector<GradSuiteEntry> entries = run_gradient_suite();
    bool all = true;
    for (const GradSuiteEntry& e : entries) {
        std::printf("%-28s max_rel_err %.3e compared %zu %s\n", e.name.c_str(), e.max_rel_err,
                    e.compared, e.pass ? "PASS" : "FAIL");
        all = all && e.pass;
    }
    if (!all) throw OracleError("gradient suite failed");
    std::printf("gradient suite: %zu components pass\n", entries.size());
    return 0;
}

int cmd_inspect(const ModelArgs& margs, const std::string& checkpoint,
                const std::string& clip_path, std::size_t frame_index,
                const std::vector<std::size_t>& layers, const std::string& out_dir,
                std::uint64_t seed) {
    Model model = checkpoint.empty() ? build_model(margs.resolve(), seed)
                                     : load_checkpoint(checkpoint).model;
    std::printf("variant %s\n", variant_name(model.config.variant));
    std::printf("input %s\n", model.input_shape().to_string().c_str());
    std::printf("blueprint %s\n", model.net->blueprint().c_str());
    for (const auto& [name, tensor] : model.params)
        std::printf("param %-32s %-16s %zu\n", name.c_str(), tensor->shape().to_string().c_str(),
                    tensor->size());
    std::printf("total_parameters %zu\n", count_parameters(model));

    if (!layers.empty()) {
        if (clip_path.empty()) throw UsageError("feature maps need --clip <container>");
        const FrameSequence seq = read_frame_container(clip_path);
        const ModelConfig& cfg = model.config;
        const Tensor<float> clip = preprocess_clip(seq, cfg.frames, cfg.height, cfg.width);
        if (frame_index >= cfg.frames)
            throw UsageError("frame index " + std::to_string(frame_index) + " outside 0.." +
                             std::to_string(cfg.frames - 1));
        Tensor<float> frame(Shape{cfg.height, cfg.width, cfg.channels});
        const std::size_t per = frame.size();
        std::copy(clip.data() + frame_index * per, clip.data() + (frame_index + 1) * per,
                  frame.data());
        const std::vector<FeatureMapImage> maps = dump_feature_maps(model, frame, layers);
        const std::string dir = out_dir.empty() ? "." : out_dir;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
        for (const FeatureMapImage& img : maps)
            write_pgm(img, dir + "/" + img.name + ".pgm");
        std::printf("wrote %zu feature maps to %s\n", maps.size(), dir.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatiotemporal video classifier toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic two-class motion dataset");
    std::string synth_out;
    SyntheticConfig synth_cfg;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_cfg.seed, "generator seed");
    synth->add_option("--clips-per-class", synth_cfg.clips_per_class, "clips per class");
    synth->add_option("--frames", synth_cfg.frames, "frames per clip");
    synth->add_option("--height", synth_cfg.height, "frame height");
    synth->add_option("--width", synth_cfg.width, "frame width");
    synth->add_option("--blobs", synth_cfg.blobs, "moving blobs per clip");
    synth->add_option("--blob-radius", synth_cfg.blob_radius, "blob radius in pixels");
    synth->add_option("--calm-speed", synth_cfg.calm_speed, "class-0 speed, pixels/frame");
    synth->add_option("--agitated-speed", synth_cfg.agitated_speed, "class-1 speed scale");

    // preprocess
    auto* pre = app.add_subcommand(
        "preprocess", "pack raw RGB24 time-major frames (file or - for stdin) into a container");
    std::string pre_raw, pre_id = "clip", pre_out = ".", pre_manifest;
    std::size_t pre_frames = 0, pre_h = 0, pre_w = 0, pre_c = 3;
    int pre_label = 0;
    double pre_fps = 30.0;
    pre->add_option("--raw", pre_raw, "raw frame bytes, '-' reads stdin")->required();
    pre->add_option("--frames", pre_frames, "frame count")->required();
    pre->add_option("--height", pre_h, "frame height")->required();
    pre->add_option("--width", pre_w, "frame width")->required();
    pre->add_option("--channels", pre_c, "channels per pixel");
    pre->add_option("--label", pre_label, "class label, 0 or 1")->required();
    pre->add_option("--fps", pre_fps, "frames per second");
    pre->add_option("--clip-id", pre_id, "clip identifier");
    pre->add_option("--out", pre_out, "output directory");
    pre->add_option("--manifest", pre_manifest, "manifest to create or append to");

    // split
    auto* split = app.add_subcommand("split", "write train/val/test manifests");
    std::string split_data, split_out;
    SplitSpec split_spec;
    bool no_strat = false;
    split->add_option("--data", split_data, "dataset directory with manifest.txt")->required();
    split->add_option("--out", split_out, "output directory (default: --data)");
    split->add_option("--seed", split_spec.seed, "shuffle seed");
    split->add_option("--train", split_spec.train, "train fraction");
    split->add_option("--val", split_spec.val, "validation fraction");
    split->add_option("--test", split_spec.test, "test fraction");
    split->add_flag("--no-stratified", no_strat, "shuffle without per-class stratification");

    // train
    auto* tr = app.add_subcommand("train", "train a variant on split manifests");
    ModelArgs tr_model;
    tr_model.attach(tr, true);
    std::string tr_data, tr_out, tr_import;
    std::uint64_t tr_seed = 0;
    TrainConfig tr_cfg;
    std::string tr_opt = "adam";
    tr->add_option("--data", tr_data, "dataset directory with split manifests")->required();
    tr->add_option("--out", tr_out, "output directory for checkpoint/history/report");
    tr->add_option("--seed", tr_seed, "init + shuffle + dropout seed");
    tr->add_option("--epochs", tr_cfg.epochs, "training epochs");
    tr->add_option("--lr", tr_cfg.lr, "learning rate");
    tr->add_option("--batch", tr_cfg.batch, "mini-batch size");
    tr->add_option("--optimizer", tr_opt, "sgd or adam")
        ->check(CLI::IsMember({"sgd", "adam"}));
    tr->add_option("--clip-grad-norm", tr_cfg.clip_grad_norm, "global L2 clip, 0 = off");
    tr->add_option("--checkpoint-every", tr_cfg.checkpoint_every,
                   "epochs between checkpoints, 0 = off");
    tr->add_option("--stop-at-val-accuracy", tr_cfg.stop_at_val_accuracy,
                   "stop once validation accuracy reaches this, 0 = off");
    tr->add_option("--import", tr_import, "external backbone weights (lrcn_vgg)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against a manifest");
    std::string ev_ckpt, ev_data, ev_manifest = "manifest_test.txt", ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--manifest", ev_manifest, "manifest file name inside --data");
    ev->add_option("--out", ev_out, "directory for metrics.txt");

    // predict
    auto* pd = app.add_subcommand("predict", "classify one clip container");
    std::string pd_ckpt, pd_clip;
    pd->add_option("--checkpoint", pd_ckpt, "model checkpoint")->required();
    pd->add_option("--clip", pd_clip, "frame container (.stf)")->required();

    // stream
    auto* st = app.add_subcommand("stream", "sliding-window classification over a frame stream");
    std::string st_ckpt, st_clip;
    std::size_t st_window = 25, st_stride = 1;
    st->add_option("--checkpoint", st_ckpt, "model checkpoint")->required();
    st->add_option("--clip", st_clip, "frame container holding the stream")->required();
    st->add_option("--window", st_window, "frames per window");
    st->add_option("--stride", st_stride, "frames between window starts");

    // gradcheck
    app.add_subcommand("gradcheck", "run the finite-difference gradient suite");

    // inspect
    auto* in = app.add_subcommand("inspect", "blueprint, parameter counts, feature maps");
    ModelArgs in_model;
    in_model.attach(in, false);
    std::string in_ckpt, in_clip, in_out;
    std::uint64_t in_seed = 0;
    std::size_t in_frame = 0;
    std::vector<std::size_t> in_layers;
    in->add_option("--checkpoint", in_ckpt, "checkpoint to inspect (instead of --variant)");
    in->add_option("--seed", in_seed, "init seed when building from --variant");
    in->add_option("--clip", in_clip, "frame container for feature maps");
    in->add_option("--frame-index", in_frame, "frame to visualize");
    in->add_option("--layers", in_layers, "extractor layer indices to render")->delimiter(',');
    in->add_option("--out", in_out, "directory for .pgm files");

    try {
        app.parse(argc, argv);

        if (synth->parsed()) return cmd_synth(synth_out, synth_cfg);
        if (pre->parsed())
            return cmd_preprocess(pre_raw, pre_frames, pre_h, pre_w, pre_c, pre_label, pre_fps,
                                  pre_id, pre_out, pre_manifest);
        if (split->parsed()) {
            split_spec.stratified = !no_strat;
            return cmd_split(split_data, split_out, split_spec);
        }
        if (tr->parsed()) {
            tr_cfg.optimizer = tr_opt == "sgd" ? TrainConfig::Optimizer::sgd
                                               : TrainConfig::Optimizer::adam;
            return cmd_train(tr_model, tr_data, tr_out, tr_seed, tr_cfg, tr_import);
        }
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_manifest, ev_out);
        if (pd->parsed()) return cmd_predict(pd_ckpt, pd_clip);
        if (st->parsed()) return cmd_stream(st_ckpt, st_clip, st_window, st_stride);
        if (app.get_subcommand("gradcheck")->parsed()) return cmd_gradcheck();
        if (in->parsed())
            return cmd_inspect(in_model, in_ckpt, in_clip, in_frame, in_layers, in_out, in_seed);
        throw UsageError("no command given");
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        app.exit(e);
        return category_exit_code(ErrorCategory::usage);
    } catch (const Error& e) {
        std::fprintf(stderr, "error[%s]: %s\n", category_name(e.category()), e.what());
        return category_exit_code(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
