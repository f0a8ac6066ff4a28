// Augmentation pipeline: identity exactness, flip involutions, fixed stream
// consumption, determinism, and image/mask alignment under warps.
#include <gtest/gtest.h>

#include <cmath>

#include "pnx/augment.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"
#include "test_util.hpp"

using namespace pnx;
using namespace pnx::augment;

namespace {

std::pair<Tensor, Tensor> make_window(int64_t F, int64_t S, uint64_t seed) {
    RandomStream rs(seed);
    Tensor images({1, F, 3, S, S});
    Tensor masks = Tensor::zeros({1, F, 1, S, S});
    for (int64_t i = 0; i < images.numel(); ++i) images[i] = rs.uniform();
    // a small square of foreground per frame
    for (int64_t f = 0; f < F; ++f)
        for (int64_t y = S / 4; y < S / 2; ++y)
            for (int64_t x = S / 4; x < S / 2; ++x)
                masks[(f * S + y) * S + x] = 1.0;
    return {std::move(images), std::move(masks)};
}

AugmentPolicy fixed_policy(double rot, double ph, double pv, double cmin,
                           double cmax) {
    AugmentPolicy p;
    p.rotation_degrees = rot;
    p.p_hflip = ph;
    p.p_vflip = pv;
    p.crop_scale_min = cmin;
    p.crop_scale_max = cmax;
    return p;
}

}  // namespace

TEST(AugmentPolicy, ValidateRejectsBadRanges) {
    EXPECT_NO_THROW(AugmentPolicy{}.validate());
    EXPECT_THROW(fixed_policy(-1, .5, .5, .7, 1).validate(), UsageError);
    EXPECT_THROW(fixed_policy(10, 1.5, .5, .7, 1).validate(), UsageError);
    EXPECT_THROW(fixed_policy(10, .5, .5, .9, .8).validate(), UsageError);
    EXPECT_THROW(fixed_policy(10, .5, .5, 0.0, 1).validate(), UsageError);
}

TEST(Augment, DisabledPolicyIsPassThroughWithoutDraws) {
    auto [images, masks] = make_window(3, 16, 1);
    AugmentPolicy p;
    p.enabled = false;
    RandomStream rs(9), ref(9);
    auto [oi, om] = augment_window(images, masks, p, rs);
    EXPECT_TRUE(bitwise_equal(oi, images));
    EXPECT_TRUE(bitwise_equal(om, masks));
    EXPECT_EQ(rs.next_u64(), ref.next_u64());  // no stream consumption
}

TEST(Augment, IdentityDrawIsBitExact) {
    auto [images, masks] = make_window(2, 16, 2);
    // enabled but degenerate ranges: angle 0, no flips, full crop
    AugmentPolicy p = fixed_policy(0.0, 0.0, 0.0, 1.0, 1.0);
    RandomStream rs(5);
    auto [oi, om] = augment_window(images, masks, p, rs);
    EXPECT_TRUE(bitwise_equal(oi, images));
    EXPECT_TRUE(bitwise_equal(om, masks));
}

TEST(Augment, ConsumesExactlyFourDrawsRegardlessOfPolicy) {
    auto [images, masks] = make_window(1, 16, 3);
    for (const AugmentPolicy& p :
         {fixed_policy(0, 0, 0, 1, 1), fixed_policy(30, 1, 1, 0.5, 0.9)}) {
        RandomStream rs(77), ref(77);
        augment_window(images, masks, p, rs);
        for (int i = 0; i < 4; ++i) ref.next_u64();
        EXPECT_EQ(rs.next_u64(), ref.next_u64());
    }
}

TEST(Augment, DeterministicForFixedSeed) {
    auto [images, masks] = make_window(3, 24, 4);
    AugmentPolicy p = fixed_policy(20, .5, .5, .7, 1.0);
    RandomStream a(123), b(123);
    auto ra = augment_window(images, masks, p, a);
    auto rb = augment_window(images, masks, p, b);
    EXPECT_TRUE(bitwise_equal(ra.first, rb.first));
    EXPECT_TRUE(bitwise_equal(ra.second, rb.second));
    RandomStream c(124);
    auto rc = augment_window(images, masks, p, c);
    EXPECT_FALSE(bitwise_equal(rc.first, ra.first));
}

TEST(Augment, HorizontalFlipIsInvolution) {
    auto [images, masks] = make_window(2, 16, 5);
    AugmentPolicy p = fixed_policy(0.0, 1.0, 0.0, 1.0, 1.0);  // always hflip
    RandomStream r1(1);
    auto once = augment_window(images, masks, p, r1);
    RandomStream r2(2);
    auto twice = augment_window(once.first, once.second, p, r2);
    EXPECT_TRUE(bitwise_equal(twice.first, images));
    EXPECT_TRUE(bitwise_equal(twice.second, masks));
    EXPECT_FALSE(bitwise_equal(once.first, images));
}

TEST(Augment, VerticalFlipMovesRows) {
    auto [images, masks] = make_window(1, 8, 6);
    AugmentPolicy p = fixed_policy(0.0, 0.0, 1.0, 1.0, 1.0);
    RandomStream rs(1);
    auto [oi, om] = augment_window(images, masks, p, rs);
    const int64_t S = 8;
    for (int64_t y = 0; y < S; ++y)
        for (int64_t x = 0; x < S; ++x)
            ASSERT_EQ(oi[y * S + x], images[(S - 1 - y) * S + x]);
}

TEST(Augment, SameTransformForEveryFrameInWindow) {
    // stack the same frame F times: outputs must be identical across frames
    auto [images, masks] = make_window(1, 16, 7);
    const int64_t F = 4, sz = 3 * 16 * 16, msz = 16 * 16;
    Tensor imgs({1, F, 3, 16, 16}), msks({1, F, 1, 16, 16});
    for (int64_t f = 0; f < F; ++f) {
        std::copy(images.data(), images.data() + sz, imgs.data() + f * sz);
        std::copy(masks.data(), masks.data() + msz, msks.data() + f * msz);
    }
    AugmentPolicy p = fixed_policy(25, .5, .5, .6, 1.0);
    RandomStream rs(99);
    auto [oi, om] = augment_window(imgs, msks, p, rs);
    for (int64_t f = 1; f < F; ++f)
        for (int64_t i = 0; i < sz; ++i)
            ASSERT_EQ(oi[f * sz + i], oi[i]) << "frame " << f;
}

TEST(Augment, MasksStayBinaryAndAlignedUnderRotation) {
    auto [images, masks] = make_window(1, 32, 8);
    // mark the mask square in the image too, then rotate
    for (int64_t y = 8; y < 16; ++y)
        for (int64_t x = 8; x < 16; ++x)
            images[(0 * 32 + y) * 32 + x] = 1.0;
    AugmentPolicy p = fixed_policy(30, 0.0, 0.0, 1.0, 1.0);
    p.rotation_degrees = 30;
    RandomStream rs(31);
    auto [oi, om] = augment_window(images, masks, p, rs);
    double fg = 0;
    for (int64_t i = 0; i < om.numel(); ++i) {
        ASSERT_TRUE(om[i] == 0.0 || om[i] == 1.0);
        fg += om[i];
    }
    EXPECT_GT(fg, 0.0);
    // every surviving mask pixel sits where the bright square landed
    for (int64_t i = 0; i < 32 * 32; ++i)
        if (om[i] == 1.0) ASSERT_GT(oi[i], 0.5) << "pixel " << i;
}

TEST(DrawTransform, RespectsPolicyRanges) {
    AugmentPolicy p = fixed_policy(15, .5, .5, .7, .9);
    RandomStream rs(42);
    for (int i = 0; i < 200; ++i) {
        TransformDraw d = draw_transform(p, rs);
        EXPECT_LE(std::abs(d.angle), 15.0 * M_PI / 180.0 + 1e-12);
        EXPECT_GE(d.crop_scale, 0.7);
        EXPECT_LT(d.crop_scale, 0.9);
    }
}
