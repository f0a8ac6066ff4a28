#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnx/decoder.hpp"
#include "pnx/encoder.hpp"
#include "pnx/errors.hpp"
#include "pnx/fusion.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::model {

struct ModelConfig {
    int64_t frames = 5;
    int64_t input_size = 256;  // square input, divisible by 16
    fusion::Kind fusion_variant = fusion::Kind::bi_convlstm;
    std::array<int64_t, 3> encoder_channels{96, 192, 384};
    std::array<int64_t, 3> encoder_depths{3, 3, 9};
    int64_t attn_heads = 8;
    int64_t convlstm_kernel = 3;
    uint64_t seed = 0;

    void validate() const {
        if (frames < 1) throw UsageError("model config: frames must be >= 1");
        if (input_size % 16 != 0)
            throw UsageError("model config: input_size must be divisible by 16");
        for (int64_t c : encoder_channels)
            if (c < 4) throw UsageError("model config: encoder channels must be >= 4");
        if (convlstm_kernel < 1 || convlstm_kernel % 2 == 0)
            throw UsageError("model config: convlstm_kernel must be odd and positive");
    }
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return {{"frames", c.frames},
            {"input_size", c.input_size},
            {"fusion", fusion::kind_name(c.fusion_variant)},
            {"encoder_channels", c.encoder_channels},
            {"encoder_depths", c.encoder_depths},
            {"attn_heads", c.attn_heads},
            {"convlstm_kernel", c.convlstm_kernel},
            {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.frames = j.at("frames").get<int64_t>();
    c.input_size = j.at("input_size").get<int64_t>();
    c.fusion_variant = fusion::parse_kind(j.at("fusion").get<std::string>());
    auto ch = j.at("encoder_channels").get<std::vector<int64_t>>();
    auto dp = j.at("encoder_depths").get<std::vector<int64_t>>();
    if (ch.size() != 3 || dp.size() != 3)
        throw UsageError("model config: encoder_channels/depths must have 3 entries");
    std::copy(ch.begin(), ch.end(), c.encoder_channels.begin());
    std::copy(dp.begin(), dp.end(), c.encoder_depths.begin());
    c.attn_heads = j.at("attn_heads").get<int64_t>();
    c.convlstm_kernel = j.value("convlstm_kernel", int64_t{3});
    c.seed = j.at("seed").get<uint64_t>();
    c.validate();
    return c;
}

struct ParamCounts {
    int64_t encoder = 0, fusion = 0, decoder = 0, total = 0;
    friend bool operator==(const ParamCounts&, const ParamCounts&) = default;
};

// Full network: per-frame encoder, temporal fusion at the bottleneck,
// per-frame decoder with skip connections. The batch and frame axes are
// flattened around the encoder/decoder and restored around the fusion,
// so a (B, F) clip runs the spatial layers as one batch of B*F images.
class VideoSegmenter {
  public:
    explicit VideoSegmenter(const ModelConfig& cfg)
        : cfg_(cfg), init_stream_(RandomStream::named(cfg.seed, "weight-init")) {
        cfg_.validate();
        encoder::Config ec;
        ec.channels = cfg_.encoder_channels;
        ec.depths = cfg_.encoder_depths;
        enc_ = std::make_unique<encoder::ConvNextEncoder>(ec, init_stream_);
        fuse_ = fusion::make_fusion(cfg_.fusion_variant, cfg_.encoder_channels[2],
                                    cfg_.frames, cfg_.attn_heads,
                                    cfg_.convlstm_kernel, init_stream_);
        dec_ = std::make_unique<decoder::Decoder>(cfg_.encoder_channels[0],
                                                  cfg_.encoder_channels[1],
                                                  cfg_.encoder_channels[2],
                                                  init_stream_);
        collect_all();
    }

    const ModelConfig& config() const { return cfg_; }

    // x: {B, F, 3, H, W} -> logits {B, F, 1, H, W}
    Tensor forward(const Tensor& x, bool training = false) {
        check(x.ndim() == 5 && x.dim(2) == 3, "model: expected B,F,3,H,W, got " + x.shape_str());
        if (x.dim(3) != cfg_.input_size || x.dim(4) != cfg_.input_size)
            throw UsageError("model: input is " + x.shape_str() + " but config expects " +
                             std::to_string(cfg_.input_size) + "x" +
                             std::to_string(cfg_.input_size));
        const int64_t B = x.dim(0), F = x.dim(1);
        Tensor flat = flatten_clip(x);
        last_flat_batch_ = flat.dim(0);
        auto feats = enc_->forward(flat, training ? &ec_ : nullptr);
        Tensor bott = unflatten_clip(feats.s3, B, F);
        Tensor fused = fuse_->forward(bott, training);
        Tensor fused_flat = flatten_clip(fused);
        Tensor logits =
            dec_->forward(fused_flat, feats.s2, feats.s1, training, training ? &dc_ : nullptr);
        return unflatten_clip(logits, B, F);
    }

    // glogits: {B, F, 1, H, W}. Accumulates parameter gradients.
    void backward(const Tensor& glogits) {
        const int64_t B = glogits.dim(0), F = glogits.dim(1);
        Tensor gflat = flatten_clip(glogits);
        auto dg = dec_->backward(gflat, dc_);
        Tensor gfused = unflatten_clip(dg.fused, B, F);
        Tensor gbott = fuse_->backward(gfused);
        Tensor gs3 = flatten_clip(gbott);
        enc_->backward(dg.skip1, dg.skip2, gs3, ec_);
    }

    nn::ParamRefs& parameters() { return params_; }

    void zero_grad() {
        for (nn::Parameter* p : params_) p->zero_grad();
    }

    ParamCounts count_parameters() const {
        ParamCounts c;
        nn::ParamRefs ps;
        const_cast<VideoSegmenter*>(this)->enc_->collect(ps);
        c.encoder = nn::total_params(ps);
        ps.clear();
        const_cast<VideoSegmenter*>(this)->fuse_->collect(ps);
        c.fusion = nn::total_params(ps);
        ps.clear();
        const_cast<VideoSegmenter*>(this)->dec_->collect(ps);
        c.decoder = nn::total_params(ps);
        c.total = c.encoder + c.fusion + c.decoder;
        return c;
    }

    int64_t last_flat_batch() const { return last_flat_batch_; }
    fusion::TemporalFusion* fusion_module() { return fuse_.get(); }

    // Hash of the parameter manifest (names + shapes, in collection order).
    // Two models are checkpoint-compatible iff their manifests match.
    uint64_t manifest_hash() const {
        std::string m;
        for (const nn::Parameter* p : params_) {
            m += p->name;
            m += '(';
            for (int64_t d : p->value.shape()) m += std::to_string(d) + ",";
            m += ");";
        }
        return fnv1a64(m);
    }

  private:
    void collect_all() {
        params_.clear();
        enc_->collect(params_);
        fuse_->collect(params_);
        dec_->collect(params_);
    }

    ModelConfig cfg_;
    RandomStream init_stream_;
    std::unique_ptr<encoder::ConvNextEncoder> enc_;
    std::unique_ptr<fusion::TemporalFusion> fuse_;
    std::unique_ptr<decoder::Decoder> dec_;
    nn::ParamRefs params_;
    encoder::ConvNextEncoder::Cache ec_;
    decoder::Decoder::Cache dc_;
    int64_t last_flat_batch_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian):
//   magic "PNXCKPT1"
//   u64 payload_size, payload bytes, u64 fnv1a64(payload)
// payload:
//   u64 meta_len, meta JSON (config/seed/epoch/fold)
//   u64 array count, then per array: u64 name_len, name, u64 ndim,
//   i64 dims[], f64 data[]
// ---------------------------------------------------------------------------

namespace detail {
inline void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline uint64_t get_u64(const std::string& s, size_t& off) {
    check(off + 8 <= s.size(), "checkpoint: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
    off += 8;
    return v;
}
}  // namespace detail

struct CheckpointMeta {
    int64_t epoch = 0;
    int64_t fold = -1;
};

inline void save_checkpoint(VideoSegmenter& model, const std::string& path,
                            const CheckpointMeta& meta = {}) {
    std::string payload;
    nlohmann::json j = {{"config", to_json(model.config())},
                        {"seed", model.config().seed},
                        {"epoch", meta.epoch},
                        {"fold", meta.fold}};
    const std::string meta_str = j.dump();
    detail::put_u64(payload, meta_str.size());
    payload += meta_str;
    detail::put_u64(payload, model.parameters().size());
    for (const nn::Parameter* p : model.parameters()) {
        detail::put_u64(payload, p->name.size());
        payload += p->name;
        detail::put_u64(payload, static_cast<uint64_t>(p->value.ndim()));
        for (int64_t d : p->value.shape())
            detail::put_u64(payload, static_cast<uint64_t>(d));
        const size_t bytes = static_cast<size_t>(p->value.numel()) * sizeof(double);
        payload.append(reinterpret_cast<const char*>(p->value.data()), bytes);
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("checkpoint: cannot write " + tmp);
        f.write("PNXCKPT1", 8);
        std::string header;
        detail::put_u64(header, payload.size());
        f.write(header.data(), 8);
        f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
        std::string tail;
        detail::put_u64(tail, fnv1a64(payload));
        f.write(tail.data(), 8);
        if (!f) throw DataError("checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
    nlohmann::json meta;
    std::map<std::string, Tensor> arrays;  // insertion irrelevant; keyed by name
};

inline LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    std::string all((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
    if (all.size() < 24 || all.compare(0, 8, "PNXCKPT1") != 0)
        throw DataError("checkpoint: " + path + " is not a checkpoint file");
    size_t off = 8;
    const uint64_t payload_size = detail::get_u64(all, off);
    if (all.size() != 8 + 8 + payload_size + 8)
        throw DataError("checkpoint: " + path + " is truncated or padded");
    const std::string payload = all.substr(16, payload_size);
    size_t tail_off = 16 + payload_size;
    const uint64_t stored = detail::get_u64(all, tail_off);
    if (stored != fnv1a64(payload))
        throw DataError("checkpoint: " + path + " failed checksum");
    LoadedCheckpoint out;
    off = 0;
    const uint64_t meta_len = detail::get_u64(payload, off);
    check(off + meta_len <= payload.size(), "checkpoint: truncated meta");
    out.meta = nlohmann::json::parse(payload.substr(off, meta_len));
    off += meta_len;
    const uint64_t n_arrays = detail::get_u64(payload, off);
    for (uint64_t a = 0; a < n_arrays; ++a) {
        const uint64_t name_len = detail::get_u64(payload, off);
        check(off + name_len <= payload.size(), "checkpoint: truncated name");
        std::string name = payload.substr(off, name_len);
        off += name_len;
        const uint64_t ndim = detail::get_u64(payload, off);
        std::vector<int64_t> dims;
        for (uint64_t d = 0; d < ndim; ++d)
            dims.push_back(static_cast<int64_t>(detail::get_u64(payload, off)));
        Tensor t(dims);
        const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(double);
        check(off + bytes <= payload.size(), "checkpoint: truncated array " + name);
        std::memcpy(t.data(), payload.data() + off, bytes);
        off += bytes;
        out.arrays.emplace(std::move(name), std::move(t));
    }
    return out;
}

// Loads stored arrays into an existing model. The parameter manifests must
// agree exactly (names and shapes); F-independent variants therefore load
// across differing frame counts, F-dependent ones refuse with a key listing.
inline void load_parameters(VideoSegmenter& model, const LoadedCheckpoint& ck) {
    std::vector<std::string> missing, extra, mismatched;
    std::map<std::string, const Tensor*> stored;
    for (const auto& [name, t] : ck.arrays) stored.emplace(name, &t);
    for (nn::Parameter* p : model.parameters()) {
        auto it = stored.find(p->name);
        if (it == stored.end()) {
            missing.push_back(p->name);
        } else if (!p->value.same_shape(*it->second)) {
            mismatched.push_back(p->name + " expects " + p->value.shape_str() +
                                 " got " + it->second->shape_str());
            stored.erase(it);
        } else {
            stored.erase(it);
        }
    }
    for (const auto& [name, t] : stored) extra.push_back(name);
    if (!missing.empty() || !extra.empty() || !mismatched.empty()) {
        std::string msg = "checkpoint/model mismatch:";
        auto join = [&msg](const char* label, const std::vector<std::string>& v) {
            if (v.empty()) return;
            msg += std::string(" ") + label + " [";
            for (size_t i = 0; i < v.size(); ++i)
                msg += (i ? ", " : "") + v[i];
            msg += "]";
        };
        join("missing", missing);
        join("extra", extra);
        join("shape", mismatched);
        throw DataError(msg);
    }
    for (nn::Parameter* p : model.parameters())
        p->value = ck.arrays.at(p->name);
}

// Rebuilds the exact model stored at `path`.
inline std::unique_ptr<VideoSegmenter> load_checkpoint(const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path);
    ModelConfig cfg = model_config_from_json(ck.meta.at("config"));
    auto model = std::make_unique<VideoSegmenter>(cfg);
    load_parameters(*model, ck);
    return model;
}

// Imports backbone weights from a named-array archive (same container format,
// keys re-mapped to this project's `encoder.*` names). Every encoder
// parameter must be present with the right shape; non-encoder arrays in the
// archive are ignored so full checkpoints double as weight donors.
inline void load_encoder_weights(VideoSegmenter& model, const std::string& path) {
    LoadedCheckpoint ck = read_checkpoint(path);
    std::vector<std::string> problems;
    for (nn::Parameter* p : model.parameters()) {
        if (p->name.rfind("encoder.", 0) != 0) continue;
        auto it = ck.arrays.find(p->name);
        if (it == ck.arrays.end())
            problems.push_back("missing " + p->name);
        else if (!p->value.same_shape(it->second))
            problems.push_back(p->name + " expects " + p->value.shape_str() + " got " +
                               it->second.shape_str());
    }
    if (!problems.empty()) {
        std::string msg = "encoder weight archive " + path + ":";
        for (const auto& s : problems) msg += " " + s + ";";
        throw DataError(msg);
    }
    for (nn::Parameter* p : model.parameters())
        if (p->name.rfind("encoder.", 0) == 0) p->value = ck.arrays.at(p->name);
}

}  // namespace pnx::model
