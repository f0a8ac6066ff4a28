#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pnx/augment.hpp"
#include "pnx/data.hpp"
#include "pnx/errors.hpp"
#include "pnx/evaluation.hpp"
#include "pnx/model.hpp"
#include "pnx/objective.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"
#include "pnx/textfmt.hpp"

namespace pnx::training {

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int64_t epochs = 100;
    int64_t batch_size = 8;
    int64_t folds = 5;
    uint64_t seed = 0;          // drives the shuffle stream
    uint64_t augment_seed = 0;  // drives the augmentation stream, independently
    bool cosine_lr = false;     // optional schedule; constant rate by default
    double grad_clip = 0.0;     // global-norm clip; 0 disables
    augment::AugmentPolicy augment;

    void validate() const {
        if (lr < 0) throw UsageError("train config: lr must be >= 0");
        if (epochs < 1) throw UsageError("train config: epochs must be >= 1");
        if (batch_size < 1) throw UsageError("train config: batch_size must be >= 1");
        if (folds < 2) throw UsageError("train config: folds must be >= 2");
        if (grad_clip < 0) throw UsageError("train config: grad_clip must be >= 0");
        augment.validate();
    }
};

// Adam with bias correction; update uses sqrt(v-hat) + eps in the denominator.
class Adam {
  public:
    Adam(nn::ParamRefs params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        for (nn::Parameter* p : params)
            if (p->trainable) params_.push_back(p);
        for (nn::Parameter* p : params_) {
            Slot s;
            s.m = Tensor(p->value.shape());
            s.m.zero();
            s.v = Tensor(p->value.shape());
            s.v.zero();
            slots_.push_back(std::move(s));
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t steps() const { return t_; }

    // m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    // p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            nn::Parameter* p = params_[k];
            p->ensure_grad();
            Slot& s = slots_[k];
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                const double g = p->grad[i];
                s.m.data()[i] = b1_ * s.m.data()[i] + (1.0 - b1_) * g;
                s.v.data()[i] = b2_ * s.v.data()[i] + (1.0 - b2_) * g * g;
                const double mhat = s.m.data()[i] / c1;
                const double vhat = s.v.data()[i] / c2;
                p->value.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    // Scales all gradients so the global L2 norm is at most max_norm.
    void clip_grad_norm(double max_norm) {
        double sq = 0.0;
        for (nn::Parameter* p : params_) {
            p->ensure_grad();
            for (int64_t i = 0; i < p->grad.numel(); ++i)
                sq += p->grad[i] * p->grad[i];
        }
        const double norm = std::sqrt(sq);
        if (norm <= max_norm || norm == 0.0) return;
        const double scale = max_norm / norm;
        for (nn::Parameter* p : params_)
            for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= scale;
    }

  private:
    struct Slot {
        Tensor m, v;
    };
    nn::ParamRefs params_;
    std::vector<Slot> slots_;
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
};

struct FoldSplit {
    std::vector<std::string> train_cases, val_cases;
};

// Case-level partition: distinct case ids, sorted then shuffled by a stream
// named off the seed, cut into k contiguous chunks with the first n%k chunks
// one longer. Splitting at case granularity keeps every frame of a polyp on
// one side of the fence.
inline std::vector<FoldSplit> make_folds(const std::vector<data::ClipRecord>& records,
                                         int64_t k, uint64_t seed) {
    std::set<std::string> case_set;
    for (const auto& r : records) case_set.insert(r.case_id);
    std::vector<std::string> cases(case_set.begin(), case_set.end());
    const int64_t n = static_cast<int64_t>(cases.size());
    if (k < 2) throw UsageError("make_folds: k must be >= 2");
    if (k > n)
        throw DataError("make_folds: " + std::to_string(k) + " folds but only " +
                        std::to_string(n) + " cases");
    RandomStream rs = RandomStream::named(seed, "folds");
    rs.shuffle(cases);
    std::vector<FoldSplit> out(static_cast<size_t>(k));
    const int64_t base = n / k, extra = n % k;
    int64_t pos = 0;
    for (int64_t i = 0; i < k; ++i) {
        const int64_t len = base + (i < extra ? 1 : 0);
        for (int64_t j = 0; j < len; ++j)
            out[static_cast<size_t>(i)].val_cases.push_back(
                cases[static_cast<size_t>(pos + j)]);
        pos += len;
    }
    for (int64_t i = 0; i < k; ++i) {
        auto& f = out[static_cast<size_t>(i)];
        std::sort(f.val_cases.begin(), f.val_cases.end());
        std::set<std::string> val(f.val_cases.begin(), f.val_cases.end());
        for (const auto& c : cases)
            if (!val.count(c)) f.train_cases.push_back(c);
        std::sort(f.train_cases.begin(), f.train_cases.end());
    }
    return out;
}

struct FoldResult {
    std::vector<double> epoch_loss;      // mean training loss per epoch
    std::vector<double> epoch_val_dice;  // validation Dice per epoch
    std::vector<double> step_dice;       // training-batch Dice per optimizer step
    double best_val_dice = -1.0;
    int64_t best_epoch = -1;
    std::string best_ckpt, final_ckpt;
    std::set<std::string> gradient_cases;  // cases that contributed a gradient
};

namespace detail {

struct WindowRef {
    const data::ClipRecord* rec;
    data::FrameWindow win;
};

inline std::vector<WindowRef> collect_windows(
    const std::vector<data::ClipRecord>& records,
    const std::set<std::string>& cases, int64_t F) {
    std::vector<WindowRef> out;
    for (const auto& r : records) {
        if (!cases.count(r.case_id)) continue;
        for (auto& w : data::window_clip(r, F, data::WindowMode::train_stride_F))
            out.push_back({&r, std::move(w)});
    }
    return out;
}

// Stacks a batch of windows (after per-window augmentation) into
// {B, F, 3, S, S} images and {B, F, 1, S, S} masks.
inline std::pair<Tensor, Tensor> load_batch(const std::vector<WindowRef>& refs,
                                            size_t from, size_t count, int64_t S,
                                            const augment::AugmentPolicy& policy,
                                            RandomStream& aug_rs) {
    const int64_t F = refs[from].win.F();
    const int64_t B = static_cast<int64_t>(count);
    Tensor images({B, F, 3, S, S}), masks({B, F, 1, S, S});
    for (size_t b = 0; b < count; ++b) {
        const auto& wr = refs[from + b];
        auto [wi, wm] = data::load_window(*wr.rec, wr.win, S, S);
        auto [ai, am] = augment::augment_window(wi, wm, policy, aug_rs);
        std::copy(ai.data(), ai.data() + ai.numel(),
                  images.data() + static_cast<int64_t>(b) * ai.numel());
        std::copy(am.data(), am.data() + am.numel(),
                  masks.data() + static_cast<int64_t>(b) * am.numel());
    }
    return {std::move(images), std::move(masks)};
}

// Mean frame Dice of a training batch, thresholding logits at 0 (= prob 0.5).
inline double batch_dice(const Tensor& logits, const Tensor& masks) {
    const int64_t BF = logits.dim(0) * logits.dim(1);
    const int64_t plane = logits.dim(3) * logits.dim(4);
    double acc = 0.0;
    for (int64_t n = 0; n < BF; ++n) {
        Tensor p({1, plane}), g({1, plane});
        const double* lp = logits.data() + n * plane;
        const double* gp = masks.data() + n * plane;
        for (int64_t i = 0; i < plane; ++i) {
            p.data()[i] = lp[i] > 0.0 ? 1.0 : 0.0;
            g.data()[i] = gp[i];
        }
        acc += objective::dice(p, g);
    }
    return acc / static_cast<double>(BF);
}

inline void write_diagnostic(const std::string& path, int64_t fold, int64_t epoch,
                             int64_t step, const std::vector<std::string>& batch_clips,
                             const std::vector<double>& loss_history) {
    nlohmann::json j;
    j["fold"] = fold;
    j["epoch"] = epoch;
    j["step"] = step;
    j["batch_clips"] = batch_clips;
    const size_t keep = std::min<size_t>(loss_history.size(), 50);
    j["loss_history_tail"] = std::vector<double>(
        loss_history.end() - static_cast<std::ptrdiff_t>(keep), loss_history.end());
    std::ofstream f(path);
    f << j.dump(2) << "\n";
}

}  // namespace detail

// One fold: shuffled stride-F windows, one augmentation draw per window,
// dice+bce loss, Adam. Saves the best-validation-Dice checkpoint and the
// final checkpoint, plus a per-epoch loss curve CSV.
inline FoldResult train_fold(int64_t fold_idx, const std::vector<data::ClipRecord>& records,
                             const std::vector<FoldSplit>& folds,
                             const model::ModelConfig& mc, const TrainConfig& tc,
                             const std::string& out_dir,
                             model::VideoSegmenter* model_out = nullptr) {
    tc.validate();
    if (fold_idx < 0 || fold_idx >= static_cast<int64_t>(folds.size()))
        throw UsageError("train_fold: fold " + std::to_string(fold_idx) +
                         " out of range for " + std::to_string(folds.size()) + " folds");
    const auto& split = folds[static_cast<size_t>(fold_idx)];
    const std::set<std::string> train_cases(split.train_cases.begin(),
                                            split.train_cases.end());
    const std::set<std::string> val_cases(split.val_cases.begin(),
                                          split.val_cases.end());
    std::vector<data::ClipRecord> val_clips;
    for (const auto& r : records)
        if (val_cases.count(r.case_id)) val_clips.push_back(r);

    const int64_t F = mc.frames, S = mc.input_size;
    auto windows = detail::collect_windows(records, train_cases, F);
    if (windows.empty()) throw DataError("train_fold: no training windows");

    const std::string fold_dir = out_dir + "/fold" + std::to_string(fold_idx);
    std::filesystem::create_directories(fold_dir);

    model::VideoSegmenter local_model(mc);
    model::VideoSegmenter& model = model_out ? *model_out : local_model;
    Adam opt(model.parameters(), tc.lr, tc.beta1, tc.beta2, tc.adam_eps);
    RandomStream shuffle_rs = RandomStream::named(tc.seed, "shuffle");
    RandomStream aug_rs = RandomStream::named(tc.augment_seed, "augment");

    FoldResult res;
    std::vector<double> loss_history;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < tc.epochs; ++epoch) {
        if (tc.cosine_lr)
            opt.set_lr(tc.lr * 0.5 *
                       (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                                       static_cast<double>(tc.epochs))));
        shuffle_rs.shuffle(windows);
        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (size_t off = 0; off < windows.size(); off += tc.batch_size) {
            const size_t count =
                std::min<size_t>(tc.batch_size, windows.size() - off);
            auto [images, masks] =
                detail::load_batch(windows, off, count, S, tc.augment, aug_rs);
            Tensor logits = model.forward(images, /*training=*/true);
            Tensor glogits;
            const auto loss = objective::dice_bce_loss(
                flatten_clip(logits), flatten_clip(masks), &glogits);
            ++step;
            if (!std::isfinite(loss.total)) {
                std::vector<std::string> batch_clips;
                for (size_t b = 0; b < count; ++b)
                    batch_clips.push_back(windows[off + b].rec->clip_id);
                detail::write_diagnostic(fold_dir + "/diagnostic.json", fold_idx,
                                         epoch, step, batch_clips, loss_history);
                throw NumericError("train_fold: non-finite loss at fold " +
                                   std::to_string(fold_idx) + " epoch " +
                                   std::to_string(epoch) + " step " +
                                   std::to_string(step) + "; diagnostic at " +
                                   fold_dir + "/diagnostic.json");
            }
            loss_history.push_back(loss.total);
            epoch_loss += loss.total;
            ++batches;
            model.zero_grad();
            model.backward(unflatten_clip(glogits, images.dim(0), F));
            if (tc.grad_clip > 0) opt.clip_grad_norm(tc.grad_clip);
            opt.step();
            res.step_dice.push_back(detail::batch_dice(logits, masks));
            for (size_t b = 0; b < count; ++b)
                res.gradient_cases.insert(windows[off + b].rec->case_id);
        }
        res.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));

        double val_dice = 0.0;
        if (!val_clips.empty()) {
            evaluation::ModelPredictor pred(model);
            evaluation::EvalOptions opts;
            opts.compute_hd95 = false;
            const auto rep = evaluation::evaluate_split(pred, val_clips, F, S, opts);
            val_dice = rep.aggregate.dice;
        }
        res.epoch_val_dice.push_back(val_dice);
        if (val_dice > res.best_val_dice) {
            res.best_val_dice = val_dice;
            res.best_epoch = epoch;
            res.best_ckpt = fold_dir + "/best.ckpt";
            model::save_checkpoint(model, res.best_ckpt, {epoch, fold_idx});
        }
    }
    res.final_ckpt = fold_dir + "/final.ckpt";
    model::save_checkpoint(model, res.final_ckpt, {tc.epochs - 1, fold_idx});

    std::ofstream curve(fold_dir + "/loss_curve.csv");
    curve << "epoch,train_loss,val_dice\n";
    for (size_t e = 0; e < res.epoch_loss.size(); ++e)
        curve << e << "," << textfmt::fixed(res.epoch_loss[e]) << ","
              << textfmt::fixed(res.epoch_val_dice[e]) << "\n";
    return res;
}

struct FoldMetrics {
    int64_t fold = -1;
    double dice = 0.0, iou = 0.0, recall = 0.0, hd95 = 0.0;
};

struct CvSummary {
    std::vector<FoldMetrics> folds;
    FoldMetrics min, mean, max;  // per-metric order statistics; fold == -1
};

namespace detail {
inline void write_cv_csv(const CvSummary& s, const std::string& path) {
    std::ofstream f(path);
    f << "fold,dice,iou,recall,hd95\n";
    auto row = [&f](const std::string& label, const FoldMetrics& m) {
        f << label << "," << textfmt::fixed(m.dice) << "," << textfmt::fixed(m.iou)
          << "," << textfmt::fixed(m.recall) << "," << textfmt::fixed(m.hd95)
          << "\n";
    };
    for (const auto& m : s.folds) row(std::to_string(m.fold), m);
    row("MIN", s.min);
    row("MEAN", s.mean);
    row("MAX", s.max);
}
}  // namespace detail

// All k folds in sequence; each fold's best checkpoint is re-evaluated on its
// held-out cases with the full metric set. Emits cv_summary.csv with one row
// per fold plus MIN/MEAN/MAX rows (the cross-validation band).
inline CvSummary run_cv(const std::vector<data::ClipRecord>& records,
                        const model::ModelConfig& mc, const TrainConfig& tc,
                        const std::string& out_dir) {
    tc.validate();
    auto folds = make_folds(records, tc.folds, tc.seed);
    CvSummary summary;
    for (int64_t i = 0; i < tc.folds; ++i) {
        auto res = train_fold(i, records, folds, mc, tc, out_dir);
        auto best = model::load_checkpoint(res.best_ckpt);
        std::set<std::string> val_cases(folds[static_cast<size_t>(i)].val_cases.begin(),
                                        folds[static_cast<size_t>(i)].val_cases.end());
        std::vector<data::ClipRecord> val_clips;
        for (const auto& r : records)
            if (val_cases.count(r.case_id)) val_clips.push_back(r);
        evaluation::ModelPredictor pred(*best);
        const auto rep =
            evaluation::evaluate_split(pred, val_clips, mc.frames, mc.input_size);
        summary.folds.push_back({i, rep.aggregate.dice, rep.aggregate.iou,
                                 rep.aggregate.recall, rep.aggregate.hd95});
    }
    auto fold_min = [&](auto get) {
        double v = get(summary.folds[0]);
        for (const auto& m : summary.folds) v = std::min(v, get(m));
        return v;
    };
    auto fold_max = [&](auto get) {
        double v = get(summary.folds[0]);
        for (const auto& m : summary.folds) v = std::max(v, get(m));
        return v;
    };
    auto fold_mean = [&](auto get) {
        double v = 0.0;
        for (const auto& m : summary.folds) v += get(m);
        return v / static_cast<double>(summary.folds.size());
    };
    auto dice = [](const FoldMetrics& m) { return m.dice; };
    auto iou = [](const FoldMetrics& m) { return m.iou; };
    auto recall = [](const FoldMetrics& m) { return m.recall; };
    auto hd = [](const FoldMetrics& m) { return m.hd95; };
    summary.min = {-1, fold_min(dice), fold_min(iou), fold_min(recall), fold_min(hd)};
    summary.mean = {-1, fold_mean(dice), fold_mean(iou), fold_mean(recall),
                    fold_mean(hd)};
    summary.max = {-1, fold_max(dice), fold_max(iou), fold_max(recall), fold_max(hd)};
    detail::write_cv_csv(summary, out_dir + "/cv_summary.csv");
    return summary;
}

}  // namespace pnx::training
