#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "json.hpp"
#include "pnx/errors.hpp"
#include "pnx/model.hpp"
#include "pnx/rng.hpp"
#include "pnx/sysinfo.hpp"
#include "pnx/training.hpp"

namespace pnx::config {

// One config file drives train, eval, and ablate. Any key may be omitted
// (defaults apply); any key that is not recognized is a hard error naming
// the offending dotted path, so typos cannot silently fall back to defaults.
struct RunConfig {
    model::ModelConfig model;
    training::TrainConfig train;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& scope,
                           const std::set<std::string>& allowed) {
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key))
            throw UsageError("unknown config key: " +
                             (scope.empty() ? key : scope + "." + key));
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void apply_json(RunConfig& c, const nlohmann::json& j) {
    detail::reject_unknown(j, "", {"model", "train"});
    if (j.contains("model")) {
        const auto& m = j.at("model");
        detail::reject_unknown(m, "model",
                               {"frames", "input_size", "fusion", "encoder_channels",
                                "encoder_depths", "attn_heads", "convlstm_kernel",
                                "seed"});
        detail::maybe(m, "frames", c.model.frames);
        detail::maybe(m, "input_size", c.model.input_size);
        if (m.contains("fusion"))
            c.model.fusion_variant =
                fusion::parse_kind(m.at("fusion").get<std::string>());
        if (m.contains("encoder_channels")) {
            auto v = m.at("encoder_channels").get<std::vector<int64_t>>();
            if (v.size() != 3)
                throw UsageError("config: model.encoder_channels needs 3 entries");
            std::copy(v.begin(), v.end(), c.model.encoder_channels.begin());
        }
        if (m.contains("encoder_depths")) {
            auto v = m.at("encoder_depths").get<std::vector<int64_t>>();
            if (v.size() != 3)
                throw UsageError("config: model.encoder_depths needs 3 entries");
            std::copy(v.begin(), v.end(), c.model.encoder_depths.begin());
        }
        detail::maybe(m, "attn_heads", c.model.attn_heads);
        detail::maybe(m, "convlstm_kernel", c.model.convlstm_kernel);
        detail::maybe(m, "seed", c.model.seed);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::reject_unknown(t, "train",
                               {"lr", "epochs", "batch_size", "folds", "seed",
                                "augment_seed", "cosine_lr", "grad_clip", "augment"});
        detail::maybe(t, "lr", c.train.lr);
        detail::maybe(t, "epochs", c.train.epochs);
        detail::maybe(t, "batch_size", c.train.batch_size);
        detail::maybe(t, "folds", c.train.folds);
        detail::maybe(t, "seed", c.train.seed);
        detail::maybe(t, "augment_seed", c.train.augment_seed);
        detail::maybe(t, "cosine_lr", c.train.cosine_lr);
        detail::maybe(t, "grad_clip", c.train.grad_clip);
        if (t.contains("augment")) {
            const auto& a = t.at("augment");
            detail::reject_unknown(a, "train.augment",
                                   {"enabled", "rotation_degrees", "p_hflip",
                                    "p_vflip", "crop_scale_min", "crop_scale_max"});
            detail::maybe(a, "enabled", c.train.augment.enabled);
            detail::maybe(a, "rotation_degrees", c.train.augment.rotation_degrees);
            detail::maybe(a, "p_hflip", c.train.augment.p_hflip);
            detail::maybe(a, "p_vflip", c.train.augment.p_vflip);
            detail::maybe(a, "crop_scale_min", c.train.augment.crop_scale_min);
            detail::maybe(a, "crop_scale_max", c.train.augment.crop_scale_max);
        }
    }
    c.model.validate();
    c.train.validate();
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw UsageError("config: cannot read " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config: " + path + " is not valid JSON: " + e.what());
    }
    RunConfig c;
    apply_json(c, j);
    return c;
}

// Full (defaults-applied) canonical serialization; nlohmann::json orders
// object keys lexicographically, so the dump is key-order stable.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["model"] = model::to_json(c.model);
    j["train"] = {{"lr", c.train.lr},
                  {"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"folds", c.train.folds},
                  {"seed", c.train.seed},
                  {"augment_seed", c.train.augment_seed},
                  {"cosine_lr", c.train.cosine_lr},
                  {"grad_clip", c.train.grad_clip},
                  {"augment",
                   {{"enabled", c.train.augment.enabled},
                    {"rotation_degrees", c.train.augment.rotation_degrees},
                    {"p_hflip", c.train.augment.p_hflip},
                    {"p_vflip", c.train.augment.p_vflip},
                    {"crop_scale_min", c.train.augment.crop_scale_min},
                    {"crop_scale_max", c.train.augment.crop_scale_max}}}};
    return j;
}

inline std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const RunConfig& c) {
    return hash_hex(fnv1a64(to_json(c).dump()));
}

// Every output directory gets exactly one of these, always under the same
// name; re-running a command into the same directory replaces it.
inline void write_run_manifest(const std::string& out_dir,
                               const std::string& command,
                               const std::string& cfg_hash, uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    nlohmann::json j = {{"command", command},
                        {"config_hash", cfg_hash},
                        {"seed", seed},
                        {"timestamp_utc", sysinfo::utc_timestamp()},
                        {"source_rev", sysinfo::source_rev()},
                        {"hardware", sysinfo::hardware_descriptor()}};
    std::ofstream f(out_dir + "/run_manifest.json");
    if (!f) throw DataError("manifest: cannot write in " + out_dir);
    f << j.dump(2) << "\n";
}

}  // namespace pnx::config
