#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pnx/data.hpp"
#include "pnx/errors.hpp"
#include "pnx/model.hpp"
#include "pnx/objective.hpp"
#include "pnx/rng.hpp"
#include "pnx/sysinfo.hpp"
#include "pnx/tensor.hpp"

namespace pnx::evaluation {

// One window in, one probability map per frame out. The ground truth is
// passed alongside so degenerate test predictors (oracle, all-background)
// can be expressed without a parallel code path; real models ignore it.
class Predictor {
  public:
    virtual ~Predictor() = default;
    // images {1, F, 3, S, S}, gt {1, F, 1, S, S} -> probabilities {1, F, 1, S, S}
    virtual Tensor predict(const Tensor& images, const Tensor& gt) = 0;
};

class ModelPredictor : public Predictor {
  public:
    explicit ModelPredictor(model::VideoSegmenter& m) : model_(m) {}
    Tensor predict(const Tensor& images, const Tensor&) override {
        Tensor logits = model_.forward(images, /*training=*/false);
        for (int64_t i = 0; i < logits.numel(); ++i)
            logits.data()[i] = nn::sigmoid(logits.data()[i]);
        return logits;
    }

  private:
    model::VideoSegmenter& model_;
};

// Upper-bound fixture: echoes the ground truth.
class OraclePredictor : public Predictor {
  public:
    Tensor predict(const Tensor&, const Tensor& gt) override { return gt; }
};

// Degenerate fixture: predicts empty masks everywhere.
class BackgroundPredictor : public Predictor {
  public:
    Tensor predict(const Tensor&, const Tensor& gt) override {
        Tensor z(gt.shape());
        z.zero();
        return z;
    }
};

struct ClipMetrics {
    double dice = 0.0, iou = 0.0, recall = 0.0, hd95 = 0.0;
    int64_t frames = 0;
    friend bool operator==(const ClipMetrics&, const ClipMetrics&) = default;
};

struct MetricReport {
    std::string split;
    std::map<std::string, ClipMetrics> per_clip;   // clip_id -> frame-mean metrics
    ClipMetrics aggregate;                         // unweighted mean over clips
    std::map<std::string, double> by_attribute;    // code -> mean clip Dice
    model::ParamCounts params;
    double fps = 0.0;                              // 0 when not benchmarked
    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

struct EvalOptions {
    bool compute_hd95 = true;  // skipped for cheap in-training validation
};

// Per-frame binarized predictions for one clip: windows of F frames at
// stride F, tail padded by repeating the last frame; the padded duplicates
// are dropped so every real frame is predicted exactly once.
struct FrameEval {
    Tensor pred;  // {1, S, S} binary
    Tensor gt;    // {1, S, S} binary
};

inline std::vector<FrameEval> predict_clip(Predictor& p, const data::ClipRecord& rec,
                                           int64_t F, int64_t S) {
    const int64_t n = static_cast<int64_t>(rec.frame_paths.size());
    auto windows = data::window_clip(rec, F, data::WindowMode::eval_stride_F);
    std::vector<FrameEval> out(static_cast<size_t>(n));
    std::vector<bool> seen(static_cast<size_t>(n), false);
    const int64_t plane = S * S;
    for (const auto& w : windows) {
        auto [images, masks] = data::load_window(rec, w, S, S);
        Tensor probs = p.predict(images, masks);
        check(probs.same_shape(masks), "predictor: bad output shape");
        for (int64_t i = 0; i < w.F(); ++i) {
            const int64_t idx = w.frame_indices[static_cast<size_t>(i)];
            if (seen[static_cast<size_t>(idx)]) continue;  // padded duplicate
            seen[static_cast<size_t>(idx)] = true;
            Tensor pr({1, S, S}), gt({1, S, S});
            const double* ps = probs.data() + i * plane;
            const double* gs = masks.data() + i * plane;
            for (int64_t k = 0; k < plane; ++k) {
                pr.data()[k] = ps[k] > 0.5 ? 1.0 : 0.0;
                gt.data()[k] = gs[k];
            }
            out[static_cast<size_t>(idx)] =
                FrameEval{std::move(pr), std::move(gt)};
        }
    }
    for (bool s : seen) check(s, "predict_clip: a frame was never evaluated");
    return out;
}

// Aggregation is frames -> clip -> split, each level an unweighted mean;
// the attribute table averages clip Dice over every clip carrying the code.
inline MetricReport evaluate_split(Predictor& p,
                                   const std::vector<data::ClipRecord>& records,
                                   int64_t F, int64_t S,
                                   const EvalOptions& opts = {}) {
    if (records.empty()) throw DataError("evaluate_split: empty split");
    MetricReport rep;
    std::map<std::string, std::vector<double>> attr_dices;
    for (const auto& rec : records) {
        auto frames = predict_clip(p, rec, F, S);
        ClipMetrics cm;
        cm.frames = static_cast<int64_t>(frames.size());
        for (const auto& fe : frames) {
            cm.dice += objective::dice(fe.pred, fe.gt);
            cm.iou += objective::iou(fe.pred, fe.gt);
            cm.recall += objective::recall(fe.pred, fe.gt);
            if (opts.compute_hd95) cm.hd95 += objective::hd95(fe.pred, fe.gt);
        }
        const double n = static_cast<double>(cm.frames);
        cm.dice /= n;
        cm.iou /= n;
        cm.recall /= n;
        cm.hd95 /= n;
        rep.per_clip.emplace(rec.clip_id, cm);
        for (const auto& code : rec.attributes)
            attr_dices[code].push_back(cm.dice);
    }
    const double nc = static_cast<double>(rep.per_clip.size());
    for (const auto& [id, cm] : rep.per_clip) {
        rep.aggregate.dice += cm.dice / nc;
        rep.aggregate.iou += cm.iou / nc;
        rep.aggregate.recall += cm.recall / nc;
        rep.aggregate.hd95 += cm.hd95 / nc;
        rep.aggregate.frames += cm.frames;
    }
    for (const auto& [code, ds] : attr_dices) {
        double s = 0.0;
        for (double d : ds) s += d;
        rep.by_attribute[code] = s / static_cast<double>(ds.size());
    }
    return rep;
}

struct FpsReport {
    double fps_median = 0.0;
    double fps_iqr = 0.0;
    double latency_median_s = 0.0;
    double latency_mean_s = 0.0;
    int64_t frames_per_window = 0;
    int64_t trials = 0;
    std::string hardware;
};

namespace detail {
// Nearest-rank quantile on a sorted vector (same convention as hd95).
inline double quantile(const std::vector<double>& sorted, double q) {
    const int64_t n = static_cast<int64_t>(sorted.size());
    int64_t k = static_cast<int64_t>(std::ceil(q * static_cast<double>(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return sorted[static_cast<size_t>(k - 1)];
}
}  // namespace detail

// Times eval-mode forward passes on a 1 x F x 3 x 256 x 256 window.
// FPS = F / median(latency); median is used instead of the mean for
// robustness to timer jitter, and both latencies are reported.
inline FpsReport benchmark_fps(model::VideoSegmenter& model, int64_t trials,
                               int64_t warmup) {
    if (trials < 10) throw UsageError("benchmark: trials must be >= 10");
    if (warmup < 3) throw UsageError("benchmark: warmup must be >= 3");
    const int64_t F = model.config().frames, S = model.config().input_size;
    RandomStream rs = RandomStream::named(0, "bench-input");
    Tensor x({1, F, 3, S, S});
    for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rs.uniform();
    for (int64_t i = 0; i < warmup; ++i) (void)model.forward(x, false);
    std::vector<double> lat(static_cast<size_t>(trials));
    for (int64_t i = 0; i < trials; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)model.forward(x, false);
        const auto t1 = std::chrono::steady_clock::now();
        lat[static_cast<size_t>(i)] =
            std::chrono::duration<double>(t1 - t0).count();
    }
    std::sort(lat.begin(), lat.end());
    FpsReport r;
    r.trials = trials;
    r.frames_per_window = F;
    r.latency_median_s = detail::quantile(lat, 0.5);
    double mean = 0.0;
    for (double v : lat) mean += v;
    r.latency_mean_s = mean / static_cast<double>(trials);
    r.fps_median = static_cast<double>(F) / r.latency_median_s;
    std::vector<double> fps(lat.size());
    for (size_t i = 0; i < lat.size(); ++i)
        fps[i] = static_cast<double>(F) / lat[i];
    std::sort(fps.begin(), fps.end());
    r.fps_iqr = detail::quantile(fps, 0.75) - detail::quantile(fps, 0.25);
    r.hardware = sysinfo::hardware_descriptor();
    return r;
}

}  // namespace pnx::evaluation
