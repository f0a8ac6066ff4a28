// Loss and metric semantics, anchored to independently coded oracles: set
// counting for the overlap metrics and a from-scratch boundary-distance
// percentile for hd95, swept over random mask pairs at several densities.
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pnx/objective.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"
#include "test_util.hpp"

using namespace pnx;
using namespace pnx::objective;

namespace {

// --- independent oracles --------------------------------------------------

struct Counts {
    long inter = 0, ponly = 0, gonly = 0;
};

Counts count_sets(const Tensor& p, const Tensor& g) {
    Counts c;
    for (int64_t i = 0; i < p.numel(); ++i) {
        const bool a = p[i] > 0.5, b = g[i] > 0.5;
        if (a && b) ++c.inter;
        else if (a) ++c.ponly;
        else if (b) ++c.gonly;
    }
    return c;
}

double oracle_dice(const Tensor& p, const Tensor& g) {
    const Counts c = count_sets(p, g);
    const long denom = 2 * c.inter + c.ponly + c.gonly;
    return denom == 0 ? 1.0 : 2.0 * c.inter / static_cast<double>(denom);
}

double oracle_iou(const Tensor& p, const Tensor& g) {
    const Counts c = count_sets(p, g);
    const long uni = c.inter + c.ponly + c.gonly;
    return uni == 0 ? 1.0 : c.inter / static_cast<double>(uni);
}

double oracle_recall(const Tensor& p, const Tensor& g) {
    const Counts c = count_sets(p, g);
    const long gt = c.inter + c.gonly;
    return gt == 0 ? 1.0 : c.inter / static_cast<double>(gt);
}

// Boundary = foreground pixel with fewer than four foreground 4-neighbours
// (out-of-image counts as background).
std::vector<std::pair<int, int>> oracle_boundary(const Tensor& m, int H, int W) {
    std::vector<std::pair<int, int>> b;
    auto at = [&](int i, int j) {
        return i >= 0 && i < H && j >= 0 && j < W && m[i * W + j] > 0.5;
    };
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            if (!at(i, j)) continue;
            int nfg = at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1);
            if (nfg < 4) b.emplace_back(i, j);
        }
    return b;
}

double oracle_hd95(const Tensor& p, const Tensor& g, int H, int W) {
    const Counts c = count_sets(p, g);
    const bool pe = c.inter + c.ponly == 0, ge = c.inter + c.gonly == 0;
    if (pe && ge) return 0.0;
    if (pe || ge) return std::hypot(static_cast<double>(H), static_cast<double>(W));
    const auto bp = oracle_boundary(p, H, W);
    const auto bg = oracle_boundary(g, H, W);
    std::vector<double> d;
    auto sweep = [&](const auto& from, const auto& to) {
        for (auto [fi, fj] : from) {
            double best = 1e308;
            for (auto [ti, tj] : to)
                best = std::min(best, std::hypot(static_cast<double>(fi - ti),
                                                 static_cast<double>(fj - tj)));
            d.push_back(best);
        }
    };
    sweep(bp, bg);
    sweep(bg, bp);
    std::sort(d.begin(), d.end());
    const auto n = static_cast<long>(d.size());
    long k = (95 * n + 99) / 100;  // nearest-rank ceil(0.95 n)
    if (k < 1) k = 1;
    return d[static_cast<size_t>(k - 1)];
}

Tensor random_mask(int H, int W, double density, RandomStream& rs) {
    Tensor m({static_cast<int64_t>(H), static_cast<int64_t>(W)});
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = rs.uniform() < density ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST(Metrics, ShiftedRectanglesKnownValues) {
    Tensor p = Tensor::zeros({4, 4}), g = Tensor::zeros({4, 4});
    // pred rows 0-1, gt rows 1-2, both cols 0-1: overlap is one row
    for (int64_t j : {0, 1}) {
        p[0 * 4 + j] = p[1 * 4 + j] = 1.0;
        g[1 * 4 + j] = g[2 * 4 + j] = 1.0;
    }
    EXPECT_DOUBLE_EQ(dice(p, g), 0.5);
    EXPECT_DOUBLE_EQ(iou(p, g), 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(recall(p, g), 0.5);
}

TEST(Metrics, Hd95TwoIsolatedPixels) {
    Tensor p = Tensor::zeros({8, 8}), g = Tensor::zeros({8, 8});
    p[0] = 1.0;          // (0,0)
    g[3 * 8 + 4] = 1.0;  // (3,4): 3-4-5 triangle
    EXPECT_DOUBLE_EQ(hd95(p, g), 5.0);
    EXPECT_DOUBLE_EQ(hd95(g, p), 5.0);
}

TEST(Metrics, EmptyMaskConventions) {
    Tensor e = Tensor::zeros({6, 6});
    Tensor f = Tensor::zeros({6, 6});
    f[14] = 1.0;
    // both empty
    EXPECT_DOUBLE_EQ(dice(e, e), 1.0);
    EXPECT_DOUBLE_EQ(iou(e, e), 1.0);
    EXPECT_DOUBLE_EQ(recall(e, e), 1.0);
    EXPECT_DOUBLE_EQ(hd95(e, e), 0.0);
    // prediction empty, target not
    EXPECT_DOUBLE_EQ(dice(e, f), 0.0);
    EXPECT_DOUBLE_EQ(iou(e, f), 0.0);
    EXPECT_DOUBLE_EQ(recall(e, f), 0.0);
    EXPECT_DOUBLE_EQ(hd95(e, f), std::sqrt(72.0));
    EXPECT_DOUBLE_EQ(hd95_sentinel(6, 6), std::sqrt(72.0));
    // target empty, prediction not: nothing to recall -> perfect recall
    EXPECT_DOUBLE_EQ(recall(f, e), 1.0);
    EXPECT_DOUBLE_EQ(dice(f, e), 0.0);
}

TEST(Metrics, MatchOraclesOn200RandomPairs) {
    RandomStream rs(2024);
    const double densities[] = {0.0, 0.05, 0.3, 0.7, 1.0};
    for (int trial = 0; trial < 200; ++trial) {
        const double dp = densities[trial % 5];
        const double dg = densities[(trial / 5) % 5];
        Tensor p = random_mask(16, 16, dp, rs);
        Tensor g = random_mask(16, 16, dg, rs);
        ASSERT_EQ(dice(p, g), oracle_dice(p, g)) << "trial " << trial;
        ASSERT_EQ(iou(p, g), oracle_iou(p, g)) << "trial " << trial;
        ASSERT_EQ(recall(p, g), oracle_recall(p, g)) << "trial " << trial;
        ASSERT_NEAR(hd95(p, g), oracle_hd95(p, g, 16, 16), 1e-9) << "trial " << trial;
        // algebraic identity linking the two overlap scores
        const double d = dice(p, g);
        ASSERT_NEAR(iou(p, g), d / (2.0 - d), 1e-12) << "trial " << trial;
    }
}

TEST(Metrics, SymmetryProperties) {
    RandomStream rs(77);
    Tensor p = random_mask(12, 12, 0.4, rs);
    Tensor g = random_mask(12, 12, 0.25, rs);
    EXPECT_DOUBLE_EQ(dice(p, g), dice(g, p));
    EXPECT_DOUBLE_EQ(iou(p, g), iou(g, p));
    EXPECT_NEAR(hd95(p, g), hd95(g, p), 1e-12);
    // recall is directional: a superset prediction has perfect recall, the
    // swapped call does not.
    Tensor sub = Tensor::zeros({4, 4}), sup = Tensor::zeros({4, 4});
    sub[5] = 1.0;
    sup[5] = sup[6] = sup[9] = 1.0;
    EXPECT_DOUBLE_EQ(recall(sup, sub), 1.0);
    EXPECT_NEAR(recall(sub, sup), 1.0 / 3.0, 1e-15);
}

TEST(Metrics, BinarizeThreshold) {
    Tensor x({3});
    x[0] = 0.4999;
    x[1] = 0.5;
    x[2] = 0.5001;
    Tensor b = binarize(x);
    EXPECT_DOUBLE_EQ(b[0], 0.0);
    EXPECT_DOUBLE_EQ(b[1], 0.0);  // strictly-greater threshold
    EXPECT_DOUBLE_EQ(b[2], 1.0);
}

// --- loss ------------------------------------------------------------------

TEST(DiceBceLoss, ZeroLogitsClosedForm) {
    Tensor x = Tensor::zeros({1, 1, 2, 2});
    Tensor t = Tensor::zeros({1, 1, 2, 2});
    LossParts lp = dice_bce_loss(x, t);
    // p = 0.5 everywhere: bce = ln 2, soft dice = 1/(0.5*4+1) = 1/3
    EXPECT_NEAR(lp.bce, std::log(2.0), 1e-15);
    EXPECT_NEAR(lp.dice, 1.0 - 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(lp.total, lp.dice + lp.bce, 1e-15);

    t.fill(1.0);
    LossParts lq = dice_bce_loss(x, t);
    // soft dice = (2*0.5*4+1)/(0.5*4+4+1) = 5/7
    EXPECT_NEAR(lq.dice, 1.0 - 5.0 / 7.0, 1e-15);
    EXPECT_NEAR(lq.bce, std::log(2.0), 1e-15);
}

TEST(DiceBceLoss, SaturatedLogits) {
    Tensor x({1, 1, 2, 2}), t({1, 1, 2, 2});
    x.fill(40.0);
    t.fill(1.0);
    EXPECT_LT(dice_bce_loss(x, t).total, 1e-9);  // confident and right
    x.fill(-40.0);
    EXPECT_GT(dice_bce_loss(x, t).total, 10.0);  // confident and wrong
    EXPECT_TRUE(std::isfinite(dice_bce_loss(x, t).total));
}

TEST(DiceBceLoss, PerSampleDiceAveraging) {
    // Two samples, one perfect and one empty-on-full: the dice term must be
    // the mean of per-sample soft dice, not a pooled global ratio.
    Tensor x({2, 1, 1, 2}), t({2, 1, 1, 2});
    x[0] = x[1] = 40.0;
    t[0] = t[1] = 1.0;  // sample 0 right
    x[2] = x[3] = -40.0;
    t[2] = t[3] = 1.0;  // sample 1 wrong
    const double d0 = (2.0 * 2.0 + 1.0) / (2.0 + 2.0 + 1.0);  // = 1
    const double d1 = (0.0 + 1.0) / (0.0 + 2.0 + 1.0);        // = 1/3
    EXPECT_NEAR(dice_bce_loss(x, t).dice, 1.0 - 0.5 * (d0 + d1), 1e-9);
}

TEST(DiceBceLoss, RejectsBadInputs) {
    Tensor x = Tensor::zeros({1, 1, 2, 2});
    Tensor t = Tensor::zeros({1, 1, 2, 2});
    t[0] = 0.25;
    EXPECT_THROW(dice_bce_loss(x, t), DataError);
    EXPECT_THROW(dice_bce_loss(Tensor::zeros({1, 2, 2, 2}), Tensor::zeros({1, 2, 2, 2})),
                 InvariantError);
    EXPECT_THROW(dice_bce_loss(x, Tensor::zeros({1, 1, 2, 3})), InvariantError);
}

TEST(DiceBceLoss, GradientMatchesFiniteDifferences) {
    RandomStream rs(55);
    Tensor x({2, 1, 3, 3}), t({2, 1, 3, 3});
    for (int64_t i = 0; i < x.numel(); ++i) {
        x[i] = rs.normal();
        t[i] = rs.uniform() < 0.4 ? 1.0 : 0.0;
    }
    Tensor g;
    dice_bce_loss(x, t, &g);
    auto loss = [&] { return dice_bce_loss(x, t).total; };
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double fd = testutil::numeric_grad(x[i], loss);
        ASSERT_LT(testutil::rel_err(g[i], fd), 1e-7) << "logit " << i;
    }
}

TEST(DiceBceLoss, GradientStepDecreasesLoss) {
    RandomStream rs(56);
    Tensor x({1, 1, 4, 4}), t({1, 1, 4, 4});
    for (int64_t i = 0; i < x.numel(); ++i) {
        x[i] = rs.normal();
        t[i] = rs.uniform() < 0.5 ? 1.0 : 0.0;
    }
    Tensor g;
    const double before = dice_bce_loss(x, t, &g).total;
    for (int64_t i = 0; i < x.numel(); ++i) x[i] -= 0.5 * g[i];
    EXPECT_LT(dice_bce_loss(x, t).total, before);
}

TEST(FrameMetrics, BundlesAllFour) {
    Tensor p = Tensor::zeros({4, 4}), g = Tensor::zeros({4, 4});
    p[0] = g[0] = 1.0;
    MetricFrame f = frame_metrics(p, g);
    EXPECT_DOUBLE_EQ(f.dice, 1.0);
    EXPECT_DOUBLE_EQ(f.iou, 1.0);
    EXPECT_DOUBLE_EQ(f.recall, 1.0);
    EXPECT_DOUBLE_EQ(f.hd95, 0.0);
}
