#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pnx/data.hpp"
#include "pnx/errors.hpp"
#include "pnx/model.hpp"
#include "pnx/plot.hpp"
#include "pnx/textfmt.hpp"
#include "pnx/training.hpp"

namespace pnx::ablation {

struct AblationRow {
    int64_t frames = 0;
    std::string metric;
    double min = 0.0, mean = 0.0, max = 0.0;
};

struct AblationResult {
    std::vector<AblationRow> rows;          // four metric rows per F
    std::map<std::string, int64_t> best_f;  // metric -> winning frame count
};

// Cross-validates the model once per window length and tabulates the
// min/mean/max band of each metric over folds. "Best" is the highest mean
// for dice/iou/recall and the lowest mean for hd95.
inline AblationResult ablate_frames(model::ModelConfig mc, training::TrainConfig tc,
                                    const std::vector<data::ClipRecord>& records,
                                    const std::vector<int64_t>& f_values,
                                    const std::string& out_dir) {
    if (f_values.empty()) throw UsageError("ablate: frame list is empty");
    for (int64_t f : f_values)
        if (f < 1) throw UsageError("ablate: frame counts must be >= 1");
    static const char* kMetrics[] = {"dice", "iou", "recall", "hd95"};

    AblationResult result;
    std::map<std::string, std::vector<double>> means;  // metric -> per-F mean
    for (int64_t f : f_values) {
        mc.frames = f;
        const std::string f_dir = out_dir + "/F" + std::to_string(f);
        std::filesystem::create_directories(f_dir);
        const auto cv = training::run_cv(records, mc, tc, f_dir);
        auto push = [&](const char* name, double mn, double me, double mx) {
            result.rows.push_back({f, name, mn, me, mx});
            means[name].push_back(me);
        };
        push("dice", cv.min.dice, cv.mean.dice, cv.max.dice);
        push("iou", cv.min.iou, cv.mean.iou, cv.max.iou);
        push("recall", cv.min.recall, cv.mean.recall, cv.max.recall);
        push("hd95", cv.min.hd95, cv.mean.hd95, cv.max.hd95);
    }
    for (const char* m : kMetrics) {
        const auto& v = means[m];
        size_t best;
        if (std::string(m) == "hd95")
            best = static_cast<size_t>(
                std::min_element(v.begin(), v.end()) - v.begin());
        else
            best = static_cast<size_t>(
                std::max_element(v.begin(), v.end()) - v.begin());
        result.best_f[m] = f_values[best];
    }

    std::ofstream csv(out_dir + "/ablation.csv");
    csv << "frames,metric,min,mean,max\n";
    for (const auto& r : result.rows)
        csv << r.frames << "," << r.metric << "," << textfmt::fixed(r.min) << ","
            << textfmt::fixed(r.mean) << "," << textfmt::fixed(r.max) << "\n";

    std::ofstream md(out_dir + "/ablation.md");
    md << "# Frame-count ablation\n\n";
    md << "| frames | metric | min | mean | max |\n";
    md << "|--------|--------|-----|------|-----|\n";
    for (const auto& r : result.rows)
        md << "| " << r.frames << " | " << r.metric << " | "
           << textfmt::fixed(r.min, 4) << " | " << textfmt::fixed(r.mean, 4)
           << " | " << textfmt::fixed(r.max, 4) << " |\n";
    md << "\nBest window length per metric:";
    for (const char* m : kMetrics)
        md << " " << m << "=" << result.best_f[m];
    md << "\n";

    std::vector<plot::Panel> panels;
    for (const char* m : kMetrics) {
        plot::Panel p;
        p.title = m;
        p.best_x = static_cast<double>(result.best_f[m]);
        for (const auto& r : result.rows) {
            if (r.metric != m) continue;
            p.x.push_back(static_cast<double>(r.frames));
            p.mean.push_back(r.mean);
            p.lo.push_back(r.min);
            p.hi.push_back(r.max);
        }
        panels.push_back(std::move(p));
    }
    plot::write_svg(panels, out_dir + "/ablation.svg");
    return result;
}

}  // namespace pnx::ablation
