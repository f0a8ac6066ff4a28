#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnx/errors.hpp"
#include "pnx/evaluation.hpp"
#include "pnx/textfmt.hpp"

namespace pnx::report {

// Conventions stamped into every emitted report so numbers stay comparable:
// unweighted frames -> clip -> split averaging, HD95 on 4-connected
// boundaries at evaluation resolution, median-latency FPS.
inline const char* conventions() {
    return "aggregation=frames->clip->split unweighted; "
           "hd95=4-connected boundary at eval resolution; fps=median latency";
}

inline void write_csv(const evaluation::MetricReport& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("report: cannot write " + path);
    f << "# split=" << r.split << "; " << conventions() << "\n";
    f << "clip_id,frames,dice,iou,recall,hd95\n";
    auto row = [&f](const std::string& id, const evaluation::ClipMetrics& m) {
        f << id << "," << m.frames << "," << textfmt::fixed(m.dice) << ","
          << textfmt::fixed(m.iou) << "," << textfmt::fixed(m.recall) << ","
          << textfmt::fixed(m.hd95) << "\n";
    };
    for (const auto& [id, m] : r.per_clip) row(id, m);
    row("AGGREGATE", r.aggregate);
}

inline nlohmann::json to_json(const evaluation::ClipMetrics& m) {
    return {{"dice", m.dice},
            {"iou", m.iou},
            {"recall", m.recall},
            {"hd95", m.hd95},
            {"frames", m.frames}};
}

inline evaluation::ClipMetrics clip_metrics_from_json(const nlohmann::json& j) {
    evaluation::ClipMetrics m;
    m.dice = j.at("dice").get<double>();
    m.iou = j.at("iou").get<double>();
    m.recall = j.at("recall").get<double>();
    m.hd95 = j.at("hd95").get<double>();
    m.frames = j.at("frames").get<int64_t>();
    return m;
}

inline nlohmann::json to_json(const evaluation::MetricReport& r) {
    nlohmann::json per;
    for (const auto& [id, m] : r.per_clip) per[id] = to_json(m);
    return {{"split", r.split},
            {"conventions", conventions()},
            {"per_clip", per},
            {"aggregate", to_json(r.aggregate)},
            {"by_attribute", r.by_attribute},
            {"params",
             {{"encoder", r.params.encoder},
              {"fusion", r.params.fusion},
              {"decoder", r.params.decoder},
              {"total", r.params.total}}},
            {"fps", r.fps}};
}

inline evaluation::MetricReport report_from_json(const nlohmann::json& j) {
    evaluation::MetricReport r;
    r.split = j.at("split").get<std::string>();
    for (const auto& [id, m] : j.at("per_clip").items())
        r.per_clip.emplace(id, clip_metrics_from_json(m));
    r.aggregate = clip_metrics_from_json(j.at("aggregate"));
    r.by_attribute =
        j.at("by_attribute").get<std::map<std::string, double>>();
    const auto& p = j.at("params");
    r.params.encoder = p.at("encoder").get<int64_t>();
    r.params.fusion = p.at("fusion").get<int64_t>();
    r.params.decoder = p.at("decoder").get<int64_t>();
    r.params.total = p.at("total").get<int64_t>();
    r.fps = j.at("fps").get<double>();
    return r;
}

inline void write_json(const evaluation::MetricReport& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("report: cannot write " + path);
    f << to_json(r).dump(2) << "\n";
}

// Aggregate table, attribute table (one column per code present), and the
// per-clip breakdown.
inline void write_markdown(const evaluation::MetricReport& r,
                           const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("report: cannot write " + path);
    f << "# Evaluation report: " << r.split << "\n\n";
    f << "_" << conventions() << "_\n\n";
    f << "## Aggregate\n\n";
    f << "| dice | iou | recall | hd95 | params (M) | fps |\n";
    f << "|------|-----|--------|------|------------|-----|\n";
    f << "| " << textfmt::fixed(r.aggregate.dice, 4) << " | "
      << textfmt::fixed(r.aggregate.iou, 4) << " | "
      << textfmt::fixed(r.aggregate.recall, 4) << " | "
      << textfmt::fixed(r.aggregate.hd95, 2) << " | "
      << textfmt::fixed(static_cast<double>(r.params.total) / 1e6, 2) << " | "
      << (r.fps > 0 ? textfmt::fixed(r.fps, 1) : std::string("-")) << " |\n\n";
    if (!r.by_attribute.empty()) {
        f << "## Dice by visual attribute\n\n|";
        for (const auto& [code, _] : r.by_attribute) f << " " << code << " |";
        f << "\n|";
        for (size_t i = 0; i < r.by_attribute.size(); ++i) f << "---|";
        f << "\n|";
        for (const auto& [_, d] : r.by_attribute)
            f << " " << textfmt::fixed(d, 4) << " |";
        f << "\n\n";
    }
    f << "## Per clip\n\n";
    f << "| clip | frames | dice | iou | recall | hd95 |\n";
    f << "|------|--------|------|-----|--------|------|\n";
    for (const auto& [id, m] : r.per_clip)
        f << "| " << id << " | " << m.frames << " | " << textfmt::fixed(m.dice, 4)
          << " | " << textfmt::fixed(m.iou, 4) << " | "
          << textfmt::fixed(m.recall, 4) << " | " << textfmt::fixed(m.hd95, 2)
          << " |\n";
}

enum class Format { csv, json, markdown };

inline void emit_report(const evaluation::MetricReport& r, Format fmt,
                        const std::string& path) {
    switch (fmt) {
        case Format::csv: write_csv(r, path); break;
        case Format::json: write_json(r, path); break;
        case Format::markdown: write_markdown(r, path); break;
    }
}

}  // namespace pnx::report
