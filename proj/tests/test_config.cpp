#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pnx/config.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace pnx;

namespace {

std::string write_file(const std::string& path, const std::string& body) {
    std::ofstream f(path);
    f << body;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string what_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, EmptyJsonKeepsDefaults) {
    testutil::TempDir tmp("cfg_empty");
    auto cfg = config::load_config_file(write_file(tmp.path() + "/c.json", "{}"));
    EXPECT_EQ(cfg.model.frames, 5);
    EXPECT_EQ(cfg.model.input_size, 256);
    EXPECT_EQ(cfg.model.fusion_variant, fusion::Kind::bi_convlstm);
    EXPECT_EQ(cfg.train.epochs, 100);
    EXPECT_EQ(cfg.train.folds, 5);
    EXPECT_TRUE(cfg.train.augment.enabled);
}

TEST(Config, ValuesApplyAndNestedBlocksMerge) {
    testutil::TempDir tmp("cfg_vals");
    const char* body = R"({
      "model": {"frames": 3, "input_size": 64, "fusion": "mha",
                "encoder_channels": [8, 16, 32], "encoder_depths": [1, 1, 1],
                "attn_heads": 4, "seed": 9},
      "train": {"lr": 0.01, "epochs": 2, "batch_size": 2, "folds": 2,
                "cosine_lr": true, "grad_clip": 1.5,
                "augment": {"enabled": false, "rotation_degrees": 5.0}}
    })";
    auto cfg = config::load_config_file(write_file(tmp.path() + "/c.json", body));
    EXPECT_EQ(cfg.model.frames, 3);
    EXPECT_EQ(cfg.model.input_size, 64);
    EXPECT_EQ(cfg.model.fusion_variant, fusion::Kind::mha);
    EXPECT_EQ(cfg.model.encoder_channels, (std::array<int64_t, 3>{8, 16, 32}));
    EXPECT_EQ(cfg.model.attn_heads, 4);
    EXPECT_EQ(cfg.model.seed, 9u);
    EXPECT_EQ(cfg.train.lr, 0.01);
    EXPECT_EQ(cfg.train.epochs, 2);
    EXPECT_TRUE(cfg.train.cosine_lr);
    EXPECT_EQ(cfg.train.grad_clip, 1.5);
    EXPECT_FALSE(cfg.train.augment.enabled);
    EXPECT_EQ(cfg.train.augment.rotation_degrees, 5.0);
    // untouched siblings keep their defaults
    EXPECT_EQ(cfg.train.augment.p_hflip, 0.5);
    EXPECT_EQ(cfg.model.convlstm_kernel, 3);
}

TEST(Config, UnknownKeysAreNamedWithDottedPaths) {
    config::RunConfig cfg;
    const auto top = what_of([&] {
        config::apply_json(cfg, nlohmann::json{{"modell", nlohmann::json::object()}});
    });
    EXPECT_NE(top.find("modell"), std::string::npos) << top;

    const auto nested = what_of([&] {
        config::apply_json(cfg, {{"model", {{"framez", 3}}}});
    });
    EXPECT_NE(nested.find("model.framez"), std::string::npos) << nested;

    const auto deep = what_of([&] {
        config::apply_json(cfg,
                           {{"train", {{"augment", {{"rotationz", 1.0}}}}}});
    });
    EXPECT_NE(deep.find("train.augment.rotationz"), std::string::npos) << deep;
}

TEST(Config, StructuralErrorsAreUsageErrors) {
    config::RunConfig cfg;
    EXPECT_THROW(config::apply_json(cfg, {{"model", {{"encoder_channels", {8, 16}}}}}),
                 UsageError);
    EXPECT_THROW(config::apply_json(cfg, {{"model", {{"encoder_depths", {1}}}}}),
                 UsageError);
    // validation runs after merging, so invalid values are caught here too
    EXPECT_THROW(config::apply_json(cfg, {{"train", {{"folds", 1}}}}), UsageError);
    EXPECT_THROW(config::apply_json(cfg, {{"model", {{"input_size", 100}}}}),
                 UsageError);
}

TEST(Config, BadFilesAreUsageErrors) {
    testutil::TempDir tmp("cfg_bad");
    EXPECT_THROW(config::load_config_file(tmp.path() + "/absent.json"), UsageError);
    const auto msg = what_of([&] {
        config::load_config_file(
            write_file(tmp.path() + "/garbage.json", "not json at all"));
    });
    EXPECT_NE(msg.find("not valid JSON"), std::string::npos) << msg;
}

TEST(Config, HashIsStableAndSensitive) {
    config::RunConfig a, b;
    const auto ha = config::config_hash(a);
    EXPECT_EQ(ha.size(), 16u);
    EXPECT_EQ(ha, config::config_hash(b));

    b.model.frames = 7;
    EXPECT_NE(config::config_hash(b), ha);
    b = {};
    b.train.augment.p_vflip = 0.25;
    EXPECT_NE(config::config_hash(b), ha);

    // parsing an empty file is the same as the defaults
    testutil::TempDir tmp("cfg_hash");
    auto parsed = config::load_config_file(write_file(tmp.path() + "/c.json", "{}"));
    EXPECT_EQ(config::config_hash(parsed), ha);
}

TEST(Config, RunManifestIsWrittenAndReplaced) {
    testutil::TempDir tmp("cfg_manifest");
    const std::string dir = tmp.path() + "/out";
    config::write_run_manifest(dir, "pnxseg train --data d", "deadbeef00000000", 7);
    ASSERT_TRUE(fs::exists(dir + "/run_manifest.json"));
    nlohmann::json j = nlohmann::json::parse(slurp(dir + "/run_manifest.json"));
    EXPECT_EQ(j.at("command"), "pnxseg train --data d");
    EXPECT_EQ(j.at("config_hash"), "deadbeef00000000");
    EXPECT_EQ(j.at("seed"), 7);
    EXPECT_TRUE(j.contains("timestamp_utc"));
    EXPECT_TRUE(j.contains("source_rev"));
    EXPECT_TRUE(j.contains("hardware"));

    config::write_run_manifest(dir, "pnxseg eval", "0000000000000000", 8);
    j = nlohmann::json::parse(slurp(dir + "/run_manifest.json"));
    EXPECT_EQ(j.at("command"), "pnxseg eval");  // replaced, not appended
}

TEST(Config, ShippedConfigFilesParse) {
    const fs::path configs =
        fs::path(__FILE__).parent_path().parent_path() / "configs";
    auto def = config::load_config_file((configs / "default.json").string());
    EXPECT_EQ(def.model.input_size, 256);
    EXPECT_EQ(def.model.encoder_channels, (std::array<int64_t, 3>{96, 192, 384}));
    auto desk = config::load_config_file((configs / "desk.json").string());
    EXPECT_LT(desk.model.encoder_channels[0], 96);  // scaled-down profile
    EXPECT_NO_THROW(desk.model.validate());
}

// ---- CLI subprocess checks -------------------------------------------------

namespace {

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd =
        std::string(PNX_CLI_PATH) + " " + args + " >" + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, HelpExitsZero) {
    testutil::TempDir tmp("cli_help");
    EXPECT_EQ(run_cli("--help", tmp.path() + "/log"), 0);
    EXPECT_EQ(run_cli("synth --help", tmp.path() + "/log"), 0);
}

TEST(Cli, MissingSubcommandOrOptionIsUsage) {
    testutil::TempDir tmp("cli_usage");
    EXPECT_EQ(run_cli("", tmp.path() + "/log"), kExitUsage);
    EXPECT_EQ(run_cli("synth", tmp.path() + "/log"), kExitUsage);  // --out required
    EXPECT_EQ(run_cli("frobnicate", tmp.path() + "/log"), kExitUsage);
}

TEST(Cli, UnknownSplitIsUsageAndMissingDataIsDataError) {
    testutil::TempDir tmp("cli_split");
    EXPECT_EQ(run_cli("eval --data " + tmp.path() + " --split bogus --oracle --out " +
                          tmp.path() + "/out",
                      tmp.path() + "/log"),
              kExitUsage);
    const std::string log = slurp(tmp.path() + "/log");
    EXPECT_NE(log.find("usage error"), std::string::npos) << log;

    EXPECT_EQ(run_cli("eval --data /nonexistent-dataset --split easy_unseen "
                      "--oracle --out " +
                          tmp.path() + "/out",
                      tmp.path() + "/log"),
              kExitData);
}

TEST(Cli, SynthEvalPipelineAndFoldRangeCheck) {
    testutil::TempDir tmp("cli_pipe");
    const std::string data = tmp.path() + "/data";
    ASSERT_EQ(run_cli("synth --out " + data + " --clips 2 --easy-clips 1 "
                      "--hard-clips 1 --frames 4 --size 64 --seed 3",
                      tmp.path() + "/synth.log"),
              0);
    ASSERT_TRUE(fs::exists(data + "/manifest.json"));
    ASSERT_TRUE(fs::exists(data + "/run_manifest.json"));

    const std::string evout = tmp.path() + "/eval";
    ASSERT_EQ(run_cli("eval --data " + data + " --split easy_unseen --oracle "
                      "--frames 3 --out " + evout,
                      tmp.path() + "/eval.log"),
              0);
    EXPECT_TRUE(fs::exists(evout + "/metrics.csv"));
    EXPECT_TRUE(fs::exists(evout + "/metrics.json"));
    EXPECT_TRUE(fs::exists(evout + "/metrics.md"));
    EXPECT_TRUE(fs::exists(evout + "/run_manifest.json"));
    const std::string out = slurp(tmp.path() + "/eval.log");
    EXPECT_NE(out.find("dice 1.0000"), std::string::npos) << out;

    // fold index past the fold count must be rejected before any training
    EXPECT_EQ(run_cli("train --data " + data + " --out " + tmp.path() +
                          "/t --folds 2 --fold 9 --epochs 1",
                      tmp.path() + "/fold.log"),
              kExitUsage);
    const std::string foldlog = slurp(tmp.path() + "/fold.log");
    EXPECT_NE(foldlog.find("out of range"), std::string::npos) << foldlog;
}
