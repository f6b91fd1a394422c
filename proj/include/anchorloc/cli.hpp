#pragma once

// Command-line front end. run() is the whole program minus main() so that
// tests can drive it in-process.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "anchorloc/config.hpp"
#include "anchorloc/data.hpp"
#include "anchorloc/errors.hpp"
#include "anchorloc/eval.hpp"
#include "anchorloc/model.hpp"
#include "anchorloc/optim.hpp"
#include "anchorloc/simworld.hpp"

namespace anchorloc::cli {

namespace fs = std::filesystem;

inline constexpr const char* kWorldFile = "world.ini";
inline constexpr const char* kConfigFile = "config.ini";
inline constexpr const char* kCheckpointFile = "checkpoint.txt";
inline constexpr const char* kTrainStateFile = "train_state.txt";
inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kPerSampleFile = "per_sample.csv";
inline constexpr const char* kSweepCsvFile = "sweep.csv";
inline constexpr const char* kSweepSvgFile = "sweep.svg";

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "anchorloc_out";
};

struct TrainOptions {
    std::string data;
    std::optional<std::size_t> k;
    std::optional<std::size_t> epochs;
    bool no_cross_entropy = false;
    bool cross_entropy = false;
    bool direct_regression = false;
    std::string resume;
};

struct EvalOptions {
    std::string checkpoint;
    std::string data;
    std::optional<std::size_t> k;
    std::string inference;
};

struct SweepOptions {
    std::string data;
    std::vector<std::size_t> k_values;
    std::optional<std::size_t> epochs;
};

namespace detail {

inline RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig c = g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
    if (g.seed) c.set_seed(*g.seed);
    return c;
}

template <typename Write>
void write_file(const fs::path& path, Write&& write) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    write(os);
    if (!os) throw IoError("write failed for " + path.string());
}

inline void print_metrics(std::ostream& out, const EvalReport& r) {
    out << "median_m=" << text::format17(r.median_translation_m) << '\n';
    out << "median_deg=" << text::format17(r.median_rotation_deg) << '\n';
    out << "accuracy=" << text::format17(r.accuracy_2m_5deg) << '\n';
}

// Loads a dataset directory and checks that the files agree with each other.
inline std::pair<std::vector<Sample>, std::vector<Sample>> load_samples(const fs::path& dir) {
    const RawDataset raw = load_dataset_dir(dir);
    auto train = join_samples(raw.train);
    auto test = join_samples(raw.test);
    if (raw.train.features.dim != raw.test.features.dim) {
        throw DataIntegrity("train and test feature dimensions differ");
    }
    if (train.empty()) throw DataIntegrity("dataset '" + dir.string() + "' has no training frames");
    return {std::move(train), std::move(test)};
}

inline std::string data_dir(const std::string& flag, const RunConfig& c) {
    const std::string dir = !flag.empty() ? flag : c.data_dir;
    if (dir.empty()) throw IoError("no dataset directory given (use --data or [data] dir)");
    return dir;
}

// Ground-truth visibility for eval, available when the dataset directory
// carries the world spec it was generated from.
inline std::optional<WorldSpec> dataset_world(const fs::path& dir) {
    if (!fs::exists(dir / kWorldFile)) return std::nullopt;
    return load_world(dir / kWorldFile);
}

}  // namespace detail

inline int cmd_gen_world(const GlobalOptions& g, std::ostream& out) {
    RunConfig c = detail::resolve_config(g);
    c.validate();
    const WorldSplit split = generate(c.world, c.n_train, c.n_test);
    const fs::path dir = g.out;
    c.data_dir = dir.string();
    RawDataset raw{to_raw(split.train, c.world.feature_dim()), to_raw(split.test, c.world.feature_dim())};
    save_dataset_dir(dir, raw);
    save_world(dir / kWorldFile, c.world);
    save_config(dir / kConfigFile, c);
    out << "wrote " << split.train.size() << " train and " << split.test.size() << " test frames to " << dir.string()
        << '\n';
    return exit_codes::kOk;
}

inline int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out) {
    RunConfig c = detail::resolve_config(g);
    if (o.k) c.frame_interval = *o.k;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (o.no_cross_entropy) c.train.weights.use_cross_entropy = false;
    if (o.cross_entropy) c.train.weights.use_cross_entropy = true;
    if (o.direct_regression) c.direct_regression = true;
    c.data_dir = detail::data_dir(o.data, c);
    c.validate();

    auto [train_samples, test_samples] = detail::load_samples(c.data_dir);
    SceneDataset ds = [&] {
        if (!c.direct_regression) {
            return assemble(c.scene, std::move(train_samples), std::move(test_samples), c.frame_interval);
        }
        AnchorMap centroid = centroid_map(train_samples, c.scene);
        return assemble_with_map(c.scene, std::move(train_samples), std::move(test_samples), std::move(centroid));
    }();
    const auto examples = training_examples(ds);

    TrainState state;
    if (!o.resume.empty()) {
        std::ifstream in(o.resume);
        if (!in) throw IoError("cannot open training state " + o.resume);
        LoadedTrainState loaded = read_train_state(in);
        if (!std::ranges::equal(loaded.anchors.anchors(), ds.anchor_map.anchors())) {
            throw DataIntegrity("training state was saved with a different anchor map");
        }
        state = std::move(loaded.state);
    } else {
        state = start_training(spec_for(c.network_template(), ds));
    }

    const fs::path dir = g.out;
    EpochCallback on_epoch;
    if (c.train.checkpoint_every > 0) {
        on_epoch = [&](const TrainState& s) {
            if (s.next_epoch % c.train.checkpoint_every != 0) return;
            fs::create_directories(dir);
            detail::write_file(dir / kTrainStateFile,
                               [&](std::ostream& os) { write_train_state(os, s, ds.anchor_map); });
        };
    }
    if (state.next_epoch < c.train.epochs) continue_training(state, examples, c.train, on_epoch);

    // Outputs are written only once training has finished.
    fs::create_directories(dir);
    detail::write_file(dir / kCheckpointFile,
                       [&](std::ostream& os) { write_checkpoint(os, Checkpoint{state.params, ds.anchor_map}); });
    detail::write_file(dir / kTrainLogFile, [&](std::ostream& os) { write_training_log(os, state.log); });
    save_config(dir / kConfigFile, c);
    if (!state.log.empty()) {
        out << "epochs=" << state.log.size() << '\n';
        out << "first_loss=" << text::format17(state.log.front().total) << '\n';
        out << "final_loss=" << text::format17(state.log.back().total) << '\n';
    }
    out << "anchors=" << ds.anchor_map.size() << '\n';
    return exit_codes::kOk;
}

inline int cmd_eval(const GlobalOptions& g, const EvalOptions& o, std::ostream& out) {
    RunConfig c = detail::resolve_config(g);
    if (!o.inference.empty()) c.inference = parse_inference_rule(o.inference);
    const fs::path ckpt_path = !o.checkpoint.empty() ? fs::path(o.checkpoint) : fs::path(g.out) / kCheckpointFile;
    const std::string dir = detail::data_dir(o.data, c);

    const Checkpoint ckpt = load_checkpoint(ckpt_path.string());
    auto [train_samples, test_samples] = detail::load_samples(dir);
    if (test_samples.empty()) throw DataIntegrity("dataset '" + dir + "' has no test frames");
    if (test_samples.front().feature.size() != ckpt.params.spec.input_dim) {
        throw DataIntegrity("checkpoint expects " + std::to_string(ckpt.params.spec.input_dim) +
                            "-dimensional features, dataset has " +
                            std::to_string(test_samples.front().feature.size()));
    }
    if (o.k) {
        std::vector<Pose> poses;
        for (const auto& s : train_samples) poses.push_back(s.pose);
        const AnchorMap rebuilt = build_anchor_map(poses, *o.k, c.scene);
        if (rebuilt.size() != ckpt.anchors.size()) {
            throw DataIntegrity("anchor count mismatch: checkpoint has N=" + std::to_string(ckpt.anchors.size()) +
                                " but frame interval " + std::to_string(*o.k) + " on this dataset gives N=" +
                                std::to_string(rebuilt.size()) + "; the checkpoint was trained on a different map");
        }
    }

    const EvalReport report = evaluate(ckpt.params, test_samples, ckpt.anchors, c.inference);

    std::optional<DiscoveryResult> discovery;
    if (auto world = detail::dataset_world(dir)) {
        for (auto& s : test_samples) s.visible_landmarks = visible_landmarks(s.pose, *world);
        const auto colocated = colocated_landmarks(ckpt.anchors, world->landmarks, world->colocation_radius);
        try {
            discovery = discovery_rate(ckpt.params, test_samples, ckpt.anchors, colocated);
        } catch (const UndefinedRate&) {
            out << "discovery_rate=undefined\n";
        }
    }

    const fs::path out_dir = g.out;
    fs::create_directories(out_dir);
    detail::write_file(out_dir / kReportFile, [&](std::ostream& os) { write_report_json(os, report, discovery); });
    detail::write_file(out_dir / kPerSampleFile,
                       [&](std::ostream& os) { write_per_sample_csv(os, report, test_samples); });
    detail::print_metrics(out, report);
    if (discovery) out << "discovery_rate=" << text::format17(discovery->rate) << '\n';
    return exit_codes::kOk;
}

inline int cmd_sweep(const GlobalOptions& g, const SweepOptions& o, std::ostream& out) {
    RunConfig c = detail::resolve_config(g);
    if (!o.k_values.empty()) c.sweep_k = o.k_values;
    if (o.epochs) c.train.epochs = *o.epochs;
    if (!o.data.empty()) c.data_dir = o.data;
    c.validate();

    std::vector<Sample> train_samples;
    std::vector<Sample> test_samples;
    if (!c.data_dir.empty()) {
        std::tie(train_samples, test_samples) = detail::load_samples(c.data_dir);
    } else {
        WorldSplit split = generate(c.world, c.n_train, c.n_test);
        train_samples = std::move(split.train);
        test_samples = std::move(split.test);
    }
    const auto rows =
        sweep_anchor_interval(train_samples, test_samples, c.sweep_k, c.network_template(), c.train, c.inference);

    const fs::path dir = g.out;
    fs::create_directories(dir);
    detail::write_file(dir / kSweepCsvFile, [&](std::ostream& os) { write_sweep_csv(os, rows); });
    detail::write_file(dir / kSweepSvgFile, [&](std::ostream& os) { write_sweep_svg(os, rows); });
    save_config(dir / kConfigFile, c);
    write_sweep_csv(out, rows);
    return exit_codes::kOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"anchor-point pose relocalization"};
    app.name("anchorloc");
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "INI run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "seed for world generation, initialization and shuffling");
    app.add_option("--out", g.out, "output directory");

    auto* gen = app.add_subcommand("gen-world", "generate a synthetic dataset directory");
    gen->fallthrough();

    TrainOptions t;
    auto* tr = app.add_subcommand("train", "train a model on a dataset directory");
    tr->fallthrough();
    tr->add_option("--data", t.data, "dataset directory");
    tr->add_option("--k", t.k, "anchor frame interval");
    tr->add_option("--epochs", t.epochs, "number of epochs");
    auto* no_ce = tr->add_flag("--no-cross-entropy", t.no_cross_entropy, "disable the cross-entropy term");
    tr->add_flag("--cross-entropy", t.cross_entropy, "enable the cross-entropy term")->excludes(no_ce);
    tr->add_flag("--direct-regression", t.direct_regression, "single-anchor control model");
    tr->add_option("--resume", t.resume, "continue from a saved training state");

    EvalOptions e;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    ev->fallthrough();
    ev->add_option("--checkpoint", e.checkpoint, "checkpoint file");
    ev->add_option("--data", e.data, "dataset directory");
    ev->add_option("--k", e.k, "frame interval the checkpoint is expected to use");
    ev->add_option("--inference", e.inference, "argmax or weighted")->check(CLI::IsMember({"argmax", "weighted"}));

    SweepOptions s;
    auto* sw = app.add_subcommand("sweep-anchors", "train and evaluate one model per frame interval");
    sw->fallthrough();
    sw->add_option("--data", s.data, "dataset directory (default: generate from [world])");
    sw->add_option("--k", s.k_values, "frame intervals")->delimiter(',');
    sw->add_option("--epochs", s.epochs, "number of epochs");

    std::vector<const char*> argv;
    argv.push_back("anchorloc");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_codes::kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_codes::kOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_codes::kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_world(g, out);
        if (tr->parsed()) return cmd_train(g, t, out);
        if (ev->parsed()) return cmd_eval(g, e, out);
        return cmd_sweep(g, s, out);
    } catch (const Error& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_code(ex);
    } catch (const fs::filesystem_error& ex) {
        err << "error: " << ex.what() << '\n';
        return exit_codes::kData;
    }
}

}  // namespace anchorloc::cli
