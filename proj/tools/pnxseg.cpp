// pnxseg: synth / train / eval / bench / ablate for the video segmentation
// reference model. Exit codes: 0 ok, 2 usage error, 3 data error, 4 numeric
// failure.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pnx/ablation.hpp"
#include "pnx/config.hpp"
#include "pnx/data.hpp"
#include "pnx/errors.hpp"
#include "pnx/evaluation.hpp"
#include "pnx/model.hpp"
#include "pnx/report.hpp"
#include "pnx/synth.hpp"
#include "pnx/training.hpp"

namespace {

using namespace pnx;

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

std::vector<data::ClipRecord> scan_split(const std::string& root,
                                         data::Split split) {
    auto records = data::scan_dataset(root, root + "/manifest.json");
    std::vector<data::ClipRecord> out;
    for (auto& r : records)
        if (r.split == split) out.push_back(std::move(r));
    if (out.empty())
        throw DataError(std::string("no clips in split '") + data::split_name(split) +
                        "' under " + root);
    return out;
}

struct CommonConfigFlags {
    std::string config_path;
    int64_t frames = -1, epochs = -1, batch_size = -1, folds = -1;
    double lr = -1.0;
    std::string fusion;
    int64_t seed = -1;

    void attach(CLI::App* cmd, bool with_train_flags, bool with_frames = true) {
        cmd->add_option("--config", config_path, "JSON config file (model/train)");
        if (with_frames) cmd->add_option("--frames", frames, "override model.frames");
        cmd->add_option("--fusion", fusion,
                        "override model.fusion "
                        "(bi_convlstm|uni_convlstm|channel_stack|conv3d|mha)");
        cmd->add_option("--seed", seed, "override train.seed");
        if (with_train_flags) {
            cmd->add_option("--epochs", epochs, "override train.epochs");
            cmd->add_option("--batch-size", batch_size, "override train.batch_size");
            cmd->add_option("--folds", folds, "override train.folds");
            cmd->add_option("--lr", lr, "override train.lr");
        }
    }

    config::RunConfig resolve() const {
        config::RunConfig cfg;
        if (!config_path.empty()) cfg = config::load_config_file(config_path);
        if (frames > 0) cfg.model.frames = frames;
        if (!fusion.empty()) cfg.model.fusion_variant = fusion::parse_kind(fusion);
        if (seed >= 0) cfg.train.seed = static_cast<uint64_t>(seed);
        if (epochs > 0) cfg.train.epochs = epochs;
        if (batch_size > 0) cfg.train.batch_size = batch_size;
        if (folds > 0) cfg.train.folds = folds;
        if (lr >= 0) cfg.train.lr = lr;
        cfg.model.validate();
        cfg.train.validate();
        return cfg;
    }
};

int cmd_synth(const data::SynthSpec& spec, const std::string& command) {
    data::synthesize_dataset(spec);
    nlohmann::json j = {{"train_clips", spec.train_clips},
                        {"easy_clips", spec.easy_clips},
                        {"hard_clips", spec.hard_clips},
                        {"frames_per_clip", spec.frames_per_clip},
                        {"size", spec.size},
                        {"seed", spec.seed}};
    config::write_run_manifest(spec.out_dir, command,
                               config::hash_hex(fnv1a64(j.dump())), spec.seed);
    std::cout << "synthesized dataset at " << spec.out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& data_dir, const CommonConfigFlags& flags,
              const std::string& out_dir, int64_t fold,
              const std::string& command) {
    const auto cfg = flags.resolve();
    // Training protocol: one clip per polyp case.
    auto records =
        data::select_first_clip_per_polyp(scan_split(data_dir, data::Split::train));
    std::filesystem::create_directories(out_dir);
    if (fold >= 0) {
        auto folds = training::make_folds(records, cfg.train.folds, cfg.train.seed);
        if (fold >= static_cast<int64_t>(folds.size()))
            throw UsageError("--fold " + std::to_string(fold) + " out of range (" +
                             std::to_string(folds.size()) + " folds)");
        auto res =
            training::train_fold(fold, records, folds, cfg.model, cfg.train, out_dir);
        std::cout << "fold " << fold << ": best val dice "
                  << textfmt::fixed(res.best_val_dice, 4) << " at epoch "
                  << res.best_epoch << "\n";
    } else {
        auto summary = training::run_cv(records, cfg.model, cfg.train, out_dir);
        std::cout << "cv mean dice " << textfmt::fixed(summary.mean.dice, 4)
                  << " (min " << textfmt::fixed(summary.min.dice, 4) << ", max "
                  << textfmt::fixed(summary.max.dice, 4) << ")\n";
    }
    config::write_run_manifest(out_dir, command, config::config_hash(cfg),
                               cfg.train.seed);
    return kExitOk;
}

int cmd_eval(const std::string& data_dir, const std::string& split_name,
             const std::string& ckpt, bool oracle, bool background,
             const CommonConfigFlags& flags, const std::string& out_dir,
             const std::string& command) {
    const auto split = data::parse_split(split_name);
    auto records = scan_split(data_dir, split);
    const auto cfg = flags.resolve();

    std::unique_ptr<model::VideoSegmenter> net;
    std::unique_ptr<evaluation::Predictor> predictor;
    int64_t frames = cfg.model.frames, size = cfg.model.input_size;
    model::ParamCounts params{};
    if (oracle) {
        predictor = std::make_unique<evaluation::OraclePredictor>();
    } else if (background) {
        predictor = std::make_unique<evaluation::BackgroundPredictor>();
    } else {
        if (ckpt.empty())
            throw UsageError("eval: --ckpt required unless --oracle/--background");
        net = model::load_checkpoint(ckpt);
        frames = net->config().frames;
        size = net->config().input_size;
        params = net->count_parameters();
        predictor = std::make_unique<evaluation::ModelPredictor>(*net);
    }
    auto report = evaluation::evaluate_split(*predictor, records, frames, size);
    report.split = split_name;
    report.params = params;
    std::filesystem::create_directories(out_dir);
    report::write_csv(report, out_dir + "/metrics.csv");
    report::write_json(report, out_dir + "/metrics.json");
    report::write_markdown(report, out_dir + "/metrics.md");
    config::write_run_manifest(out_dir, command, config::config_hash(cfg),
                               cfg.train.seed);
    std::cout << "split " << split_name << ": dice "
              << textfmt::fixed(report.aggregate.dice, 4) << ", iou "
              << textfmt::fixed(report.aggregate.iou, 4) << ", recall "
              << textfmt::fixed(report.aggregate.recall, 4) << ", hd95 "
              << textfmt::fixed(report.aggregate.hd95, 2) << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& ckpt, int64_t trials, int64_t warmup,
              const std::string& out_dir, const std::string& command) {
    auto net = model::load_checkpoint(ckpt);
    const auto r = evaluation::benchmark_fps(*net, trials, warmup);
    nlohmann::json j = {{"fps_median", r.fps_median},
                        {"fps_iqr", r.fps_iqr},
                        {"latency_median_s", r.latency_median_s},
                        {"latency_mean_s", r.latency_mean_s},
                        {"frames_per_window", r.frames_per_window},
                        {"trials", r.trials},
                        {"hardware", r.hardware}};
    std::cout << j.dump(2) << "\n";
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream f(out_dir + "/fps_report.json");
        f << j.dump(2) << "\n";
        config::write_run_manifest(out_dir, command,
                                   config::hash_hex(fnv1a64(j.at("hardware").dump())),
                                   net->config().seed);
    }
    return kExitOk;
}

int cmd_ablate(const std::string& data_dir, const std::string& frames_list,
               const CommonConfigFlags& flags, const std::string& out_dir,
               const std::string& command) {
    std::vector<int64_t> f_values;
    size_t pos = 0;
    while (pos <= frames_list.size()) {
        size_t comma = frames_list.find(',', pos);
        if (comma == std::string::npos) comma = frames_list.size();
        const std::string tok = frames_list.substr(pos, comma - pos);
        if (!tok.empty()) {
            try {
                f_values.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                throw UsageError("ablate: bad frame count '" + tok + "'");
            }
        }
        pos = comma + 1;
    }
    const auto cfg = flags.resolve();
    // Training protocol: one clip per polyp case.
    auto records =
        data::select_first_clip_per_polyp(scan_split(data_dir, data::Split::train));
    std::filesystem::create_directories(out_dir);
    auto result =
        ablation::ablate_frames(cfg.model, cfg.train, records, f_values, out_dir);
    config::write_run_manifest(out_dir, command, config::config_hash(cfg),
                               cfg.train.seed);
    std::cout << "ablation over";
    for (int64_t f : f_values) std::cout << " F=" << f;
    std::cout << "; best dice at F=" << result.best_f.at("dice") << "\n";
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{
        "pnxseg: video segmentation reference model "
        "(synthesize / train / evaluate / benchmark / ablate)"};
    app.require_subcommand(1);
    const std::string command = join_args(argc, argv);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    data::SynthSpec spec;
    synth_cmd->add_option("--out", spec.out_dir, "output root directory")
        ->required();
    synth_cmd->add_option("--clips", spec.train_clips, "training clips")->capture_default_str();
    synth_cmd->add_option("--easy-clips", spec.easy_clips,
                          "easy_unseen test clips")->capture_default_str();
    synth_cmd->add_option("--hard-clips", spec.hard_clips,
                          "hard_unseen test clips")->capture_default_str();
    synth_cmd->add_option("--frames", spec.frames_per_clip, "frames per clip")->capture_default_str();
    synth_cmd->add_option("--size", spec.size, "square frame size, >= 64")->capture_default_str();
    synth_cmd->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    synth_cmd->add_flag("--force", spec.force,
                        "overwrite an existing non-empty output directory");

    // train
    auto* train_cmd = app.add_subcommand("train", "cross-validated training");
    std::string train_data, train_out;
    int64_t train_fold = -1;
    CommonConfigFlags train_flags;
    train_cmd->add_option("--data", train_data, "dataset root")->required();
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--fold", train_fold,
                          "train a single fold instead of all folds");
    train_flags.attach(train_cmd, /*with_train_flags=*/true);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a split");
    std::string eval_data, eval_split = "test", eval_ckpt, eval_out;
    bool eval_oracle = false, eval_background = false;
    CommonConfigFlags eval_flags;
    eval_cmd->add_option("--data", eval_data, "dataset root")->required();
    eval_cmd->add_option("--split", eval_split,
                         "split name (train|easy_unseen|hard_unseen)")
        ->required();
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file");
    eval_cmd->add_option("--out", eval_out, "output directory")->required();
    eval_cmd->add_flag("--oracle", eval_oracle,
                       "predict ground truth (upper-bound fixture)");
    eval_cmd->add_flag("--background", eval_background,
                       "predict empty masks (degenerate fixture)");
    eval_flags.attach(eval_cmd, /*with_train_flags=*/false);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "forward-pass FPS benchmark");
    std::string bench_ckpt, bench_out;
    int64_t bench_trials = 20, bench_warmup = 3;
    bench_cmd->add_option("--ckpt", bench_ckpt, "checkpoint file")->required();
    bench_cmd->add_option("--trials", bench_trials, "timed trials (>= 10)")->capture_default_str();
    bench_cmd->add_option("--warmup", bench_warmup, "warmup passes (>= 3)")->capture_default_str();
    bench_cmd->add_option("--out", bench_out, "optional output directory");

    // ablate
    auto* ablate_cmd =
        app.add_subcommand("ablate", "window-length ablation (cross-validated)");
    std::string ablate_data, ablate_frames, ablate_out;
    CommonConfigFlags ablate_flags;
    ablate_cmd->add_option("--data", ablate_data, "dataset root")->required();
    ablate_cmd->add_option("--frames", ablate_frames, "comma list, e.g. 1,3,5")
        ->required();
    ablate_cmd->add_option("--out", ablate_out, "output directory")->required();
    ablate_flags.attach(ablate_cmd, /*with_train_flags=*/true, /*with_frames=*/false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (synth_cmd->parsed()) return cmd_synth(spec, command);
    if (train_cmd->parsed())
        return cmd_train(train_data, train_flags, train_out, train_fold, command);
    if (eval_cmd->parsed())
        return cmd_eval(eval_data, eval_split, eval_ckpt, eval_oracle,
                        eval_background, eval_flags, eval_out, command);
    if (bench_cmd->parsed())
        return cmd_bench(bench_ckpt, bench_trials, bench_warmup, bench_out, command);
    if (ablate_cmd->parsed())
        return cmd_ablate(ablate_data, ablate_frames, ablate_flags, ablate_out,
                          command);
    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const pnx::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return pnx::kExitUsage;
    } catch (const pnx::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return pnx::kExitData;
    } catch (const pnx::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return pnx::kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
