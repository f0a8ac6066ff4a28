#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/tensor.hpp"

namespace pnx::objective {

inline void require_binary(const Tensor& target) {
    for (int64_t i = 0; i < target.numel(); ++i)
        if (target[i] != 0.0 && target[i] != 1.0)
            throw DataError("loss: target is not binary (value " +
                            std::to_string(target[i]) + " at index " +
                            std::to_string(i) + ")");
}

struct LossParts {
    double total = 0.0, dice = 0.0, bce = 0.0;
};

// loss = (1 - mean_n soft_dice_n) + bce_with_logits
//   soft_dice_n = (2*sum(p*t) + 1) / (sum(p) + sum(t) + 1), p = sigmoid(x)
//   bce is averaged over every element, computed in the stable form
//   max(x,0) - x*t + log(1 + exp(-|x|)).
// If glogits is given it receives d loss / d logits.
inline LossParts dice_bce_loss(const Tensor& logits, const Tensor& target,
                               Tensor* glogits = nullptr) {
    check(logits.same_shape(target), "loss: shape mismatch " + logits.shape_str() +
                                         " vs " + target.shape_str());
    check(logits.ndim() == 4 && logits.dim(1) == 1,
          "loss: expected N,1,H,W logits, got " + logits.shape_str());
    require_binary(target);
    const int64_t N = logits.dim(0);
    const int64_t per = logits.numel() / N;
    const double total = static_cast<double>(logits.numel());
    if (glogits) *glogits = Tensor(logits.shape());

    double bce = 0.0;
    double dice_sum = 0.0;
    std::vector<double> num(static_cast<size_t>(N)), den(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        const double* x = logits.data() + n * per;
        const double* t = target.data() + n * per;
        double spt = 0.0, sp = 0.0, st = 0.0;
        for (int64_t i = 0; i < per; ++i) {
            const double p = nn::sigmoid(x[i]);
            spt += p * t[i];
            sp += p;
            st += t[i];
            bce += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
        }
        num[static_cast<size_t>(n)] = 2.0 * spt + 1.0;
        den[static_cast<size_t>(n)] = sp + st + 1.0;
        dice_sum += num[static_cast<size_t>(n)] / den[static_cast<size_t>(n)];
    }
    bce /= total;
    LossParts out;
    out.dice = 1.0 - dice_sum / static_cast<double>(N);
    out.bce = bce;
    out.total = out.dice + out.bce;

    if (glogits) {
        for (int64_t n = 0; n < N; ++n) {
            const double* x = logits.data() + n * per;
            const double* t = target.data() + n * per;
            double* g = glogits->data() + n * per;
            const double Dn = den[static_cast<size_t>(n)];
            const double Nn = num[static_cast<size_t>(n)];
            for (int64_t i = 0; i < per; ++i) {
                const double p = nn::sigmoid(x[i]);
                // d(-soft_dice_n)/dp, averaged over samples
                const double ddice =
                    -(2.0 * t[i] * Dn - Nn) / (Dn * Dn) / static_cast<double>(N);
                const double dbce = (p - t[i]) / total;
                g[i] = ddice * p * (1.0 - p) + dbce;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation metrics on binary masks (foreground = value > 0.5).
// ---------------------------------------------------------------------------

struct MetricFrame {
    double dice = 0.0, iou = 0.0, hd95 = 0.0, recall = 0.0;
};

inline Tensor binarize(const Tensor& prob, double threshold = 0.5) {
    Tensor m(prob.shape());
    for (int64_t i = 0; i < prob.numel(); ++i) m[i] = prob[i] > threshold ? 1.0 : 0.0;
    return m;
}

namespace detail {
struct Overlap {
    int64_t inter = 0, p = 0, g = 0;
};
inline Overlap overlap(const Tensor& pred, const Tensor& gt) {
    check(pred.same_shape(gt), "metric: shape mismatch " + pred.shape_str() + " vs " +
                                   gt.shape_str());
    Overlap o;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] > 0.5, g = gt[i] > 0.5;
        o.p += p;
        o.g += g;
        o.inter += p && g;
    }
    return o;
}
}  // namespace detail

inline double dice(const Tensor& pred, const Tensor& gt) {
    const auto o = detail::overlap(pred, gt);
    if (o.p + o.g == 0) return 1.0;
    return 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.p + o.g);
}

inline double iou(const Tensor& pred, const Tensor& gt) {
    const auto o = detail::overlap(pred, gt);
    const int64_t uni = o.p + o.g - o.inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.inter) / static_cast<double>(uni);
}

inline double recall(const Tensor& pred, const Tensor& gt) {
    const auto o = detail::overlap(pred, gt);
    if (o.g == 0) return 1.0;
    return static_cast<double>(o.inter) / static_cast<double>(o.g);
}

namespace detail {
// Boundary pixels under 4-connectivity; pixels beyond the image border count
// as background, so edge-touching foreground is boundary.
inline std::vector<std::pair<int64_t, int64_t>> boundary(const double* m, int64_t H,
                                                         int64_t W) {
    std::vector<std::pair<int64_t, int64_t>> out;
    auto fg = [&](int64_t i, int64_t j) {
        return i >= 0 && i < H && j >= 0 && j < W && m[i * W + j] > 0.5;
    };
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
            if (fg(i, j) && (!fg(i - 1, j) || !fg(i + 1, j) || !fg(i, j - 1) ||
                             !fg(i, j + 1)))
                out.emplace_back(i, j);
    return out;
}

inline void nearest_distances(const std::vector<std::pair<int64_t, int64_t>>& from,
                              const std::vector<std::pair<int64_t, int64_t>>& to,
                              std::vector<double>& dists) {
    for (const auto& [fi, fj] : from) {
        double best = 1e300;
        for (const auto& [ti, tj] : to) {
            const double di = static_cast<double>(fi - ti);
            const double dj = static_cast<double>(fj - tj);
            best = std::min(best, di * di + dj * dj);
        }
        dists.push_back(std::sqrt(best));
    }
}
}  // namespace detail

// 95th percentile (nearest-rank) of the symmetric nearest-boundary distance
// set. Both masks empty -> 0; exactly one empty -> image diagonal sentinel.
inline double hd95(const Tensor& pred, const Tensor& gt) {
    check(pred.same_shape(gt), "hd95: shape mismatch");
    check(pred.ndim() >= 2, "hd95: masks must carry spatial dims");
    const int64_t W = pred.dim(pred.ndim() - 1);
    const int64_t H = pred.dim(pred.ndim() - 2);
    check(H * W == pred.numel(), "hd95: expected a single 2-D mask, got " + pred.shape_str());
    bool pe = true, ge = true;
    for (int64_t i = 0; i < pred.numel() && (pe || ge); ++i) {
        if (pred[i] > 0.5) pe = false;
        if (gt[i] > 0.5) ge = false;
    }
    if (pe && ge) return 0.0;
    if (pe != ge)
        return std::sqrt(static_cast<double>(H) * H + static_cast<double>(W) * W);
    const auto bp = detail::boundary(pred.data(), H, W);
    const auto bg = detail::boundary(gt.data(), H, W);
    std::vector<double> dists;
    dists.reserve(bp.size() + bg.size());
    detail::nearest_distances(bp, bg, dists);
    detail::nearest_distances(bg, bp, dists);
    std::sort(dists.begin(), dists.end());
    const auto n = static_cast<int64_t>(dists.size());
    const int64_t k = (95 * n + 99) / 100;  // ceil(0.95 n), nearest-rank
    return dists[static_cast<size_t>(std::max<int64_t>(k, 1) - 1)];
}

inline double hd95_sentinel(int64_t H, int64_t W) {
    return std::sqrt(static_cast<double>(H) * H + static_cast<double>(W) * W);
}

inline MetricFrame frame_metrics(const Tensor& pred, const Tensor& gt) {
    MetricFrame f;
    f.dice = dice(pred, gt);
    f.iou = iou(pred, gt);
    f.recall = recall(pred, gt);
    f.hd95 = hd95(pred, gt);
    return f;
}

}  // namespace pnx::objective
