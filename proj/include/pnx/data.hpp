#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pnx/errors.hpp"
#include "pnx/image_io.hpp"
#include "pnx/tensor.hpp"

namespace pnx::data {

namespace fs = std::filesystem;

enum class Split { train, easy_unseen, hard_unseen };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::easy_unseen: return "easy_unseen";
        case Split::hard_unseen: return "hard_unseen";
    }
    return "?";
}

inline Split parse_split(const std::string& s) {
    for (Split sp : {Split::train, Split::easy_unseen, Split::hard_unseen})
        if (s == split_name(sp)) return sp;
    throw UsageError("unknown split '" + s +
                     "' (expected train|easy_unseen|hard_unseen)");
}

inline const std::set<std::string>& attribute_codes() {
    static const std::set<std::string> codes{"SI", "IB", "HO", "GH", "FM",
                                             "SO", "LO", "OCC", "OV", "SV"};
    return codes;
}

struct ClipRecord {
    std::string clip_id;
    std::string case_id;  // polyp identity; clips of one polyp share this
    std::vector<std::string> frame_paths;
    std::vector<std::string> mask_paths;
    std::set<std::string> attributes;
    Split split = Split::train;
};

// Attributes may arrive as a JSON array or a comma-joined string.
inline std::set<std::string> parse_attributes(const nlohmann::json& j,
                                              const std::string& clip_id) {
    std::set<std::string> out;
    auto add = [&](std::string code) {
        if (code.empty()) return;
        if (!attribute_codes().count(code))
            throw DataError("manifest: clip " + clip_id + " has unknown attribute '" +
                            code + "'");
        out.insert(std::move(code));
    };
    if (j.is_array()) {
        for (const auto& e : j) add(e.get<std::string>());
    } else if (j.is_string()) {
        std::string s = j.get<std::string>();
        size_t pos = 0;
        while (pos <= s.size()) {
            size_t comma = s.find(',', pos);
            if (comma == std::string::npos) comma = s.size();
            std::string tok = s.substr(pos, comma - pos);
            tok.erase(0, tok.find_first_not_of(' '));
            if (!tok.empty()) tok.erase(tok.find_last_not_of(' ') + 1);
            add(tok);
            pos = comma + 1;
        }
    } else if (!j.is_null()) {
        throw DataError("manifest: clip " + clip_id +
                        " attributes must be an array or comma string");
    }
    return out;
}

// Walks `<root>/<split>/<clip_id>/Frame|GT` guided by a JSON manifest.
// Only positive clips (nonempty GT) are returned, sorted by clip_id; a frame
// without a same-stem mask is a hard error naming the file.
inline std::vector<ClipRecord> scan_dataset(const std::string& root,
                                            const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw DataError("cannot open manifest " + manifest_path);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest " + manifest_path + " is not valid JSON: " + e.what());
    }
    if (!manifest.is_array()) throw DataError("manifest must be a JSON array");

    std::vector<ClipRecord> records;
    for (const auto& entry : manifest) {
        ClipRecord r;
        r.clip_id = entry.at("clip_id").get<std::string>();
        r.case_id = entry.at("case_id").get<std::string>();
        r.split = parse_split(entry.at("split").get<std::string>());
        if (entry.contains("attributes"))
            r.attributes = parse_attributes(entry.at("attributes"), r.clip_id);

        const fs::path clip_dir = fs::path(root) / split_name(r.split) / r.clip_id;
        const fs::path frame_dir = clip_dir / "Frame";
        const fs::path gt_dir = clip_dir / "GT";
        if (!fs::is_directory(frame_dir))
            throw DataError("clip " + r.clip_id + ": missing directory " +
                            frame_dir.string());

        // Positive-clip filter: no masks at all -> silently skipped.
        std::map<std::string, std::string> masks;  // stem -> path
        if (fs::is_directory(gt_dir))
            for (const auto& e : fs::directory_iterator(gt_dir))
                if (e.is_regular_file())
                    masks[e.path().stem().string()] = e.path().string();
        if (masks.empty()) continue;

        std::vector<fs::path> frames;
        for (const auto& e : fs::directory_iterator(frame_dir))
            if (e.is_regular_file()) frames.push_back(e.path());
        std::sort(frames.begin(), frames.end());
        if (frames.empty())
            throw DataError("clip " + r.clip_id + ": no frames in " +
                            frame_dir.string());
        for (const auto& f : frames) {
            auto it = masks.find(f.stem().string());
            if (it == masks.end())
                throw DataError("clip " + r.clip_id + ": frame " + f.string() +
                                " has no matching mask in " + gt_dir.string());
            r.frame_paths.push_back(f.string());
            r.mask_paths.push_back(it->second);
        }
        records.push_back(std::move(r));
    }
    std::sort(records.begin(), records.end(),
              [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id < b.clip_id; });
    return records;
}

// One record per distinct case: the lexicographically first clip_id.
inline std::vector<ClipRecord> select_first_clip_per_polyp(
    const std::vector<ClipRecord>& records) {
    std::map<std::string, const ClipRecord*> first;
    for (const auto& r : records) {
        check(!r.case_id.empty(), "record " + r.clip_id + " has empty case_id");
        auto [it, inserted] = first.emplace(r.case_id, &r);
        if (!inserted && r.clip_id < it->second->clip_id) it->second = &r;
    }
    std::vector<ClipRecord> out;
    out.reserve(first.size());
    for (const auto& [case_id, rec] : first) out.push_back(*rec);
    std::sort(out.begin(), out.end(),
              [](const ClipRecord& a, const ClipRecord& b) { return a.clip_id < b.clip_id; });
    return out;
}

struct FrameWindow {
    std::string clip_id;
    std::vector<int64_t> frame_indices;  // length F, non-decreasing
    int64_t F() const { return static_cast<int64_t>(frame_indices.size()); }
};

enum class WindowMode { train_stride_F, eval_stride_F };

// Non-overlapping stride-F windows; a short tail is completed by repeating
// the final frame index, so every frame lands in exactly one window.
inline std::vector<FrameWindow> window_clip(const ClipRecord& record, int64_t F,
                                            WindowMode /*mode*/ = WindowMode::eval_stride_F) {
    check(F >= 1, "window_clip: F must be >= 1");
    const int64_t n = static_cast<int64_t>(record.frame_paths.size());
    check(n >= 1, "window_clip: empty clip " + record.clip_id);
    std::vector<FrameWindow> out;
    for (int64_t start = 0; start < n; start += F) {
        FrameWindow w;
        w.clip_id = record.clip_id;
        for (int64_t i = 0; i < F; ++i)
            w.frame_indices.push_back(std::min(start + i, n - 1));
        out.push_back(std::move(w));
    }
    return out;
}

// Loads a window into clip tensors: images {1, F, 3, H, W} scaled to [0,1],
// masks {1, F, 1, H, W} binary.
inline std::pair<Tensor, Tensor> load_window(const ClipRecord& record,
                                             const FrameWindow& window, int64_t H,
                                             int64_t W) {
    const int64_t F = window.F();
    Tensor images({1, F, 3, H, W});
    Tensor masks({1, F, 1, H, W});
    for (int64_t i = 0; i < F; ++i) {
        const int64_t idx = window.frame_indices[static_cast<size_t>(i)];
        check(idx >= 0 && idx < static_cast<int64_t>(record.frame_paths.size()),
              "load_window: index out of range for clip " + record.clip_id);
        Tensor img = read_image(record.frame_paths[static_cast<size_t>(idx)], H, W);
        Tensor msk = read_mask(record.mask_paths[static_cast<size_t>(idx)], H, W);
        std::copy(img.data(), img.data() + img.numel(), images.data() + i * 3 * H * W);
        std::copy(msk.data(), msk.data() + msk.numel(), masks.data() + i * H * W);
    }
    return {std::move(images), std::move(masks)};
}

}  // namespace pnx::data
