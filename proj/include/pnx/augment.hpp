#pragma once

#include <cmath>
#include <utility>

#include "pnx/errors.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::augment {

struct AugmentPolicy {
    double rotation_degrees = 15.0;  // symmetric range, degrees
    double p_hflip = 0.5;
    double p_vflip = 0.5;
    double crop_scale_min = 0.7;  // retained area fraction
    double crop_scale_max = 1.0;
    bool enabled = true;

    void validate() const {
        if (p_hflip < 0 || p_hflip > 1 || p_vflip < 0 || p_vflip > 1)
            throw UsageError("augment: flip probabilities must be in [0,1]");
        if (crop_scale_min <= 0 || crop_scale_max > 1 ||
            crop_scale_min > crop_scale_max)
            throw UsageError("augment: crop_scale must satisfy 0 < min <= max <= 1");
        if (rotation_degrees < 0)
            throw UsageError("augment: rotation range must be non-negative");
    }
};

// One parameter draw, shared by every frame of a window.
struct TransformDraw {
    double angle = 0.0;  // radians
    bool hflip = false, vflip = false;
    double crop_scale = 1.0;  // retained area fraction
};

// Always consumes the same number of stream draws, so downstream randomness
// does not depend on the policy values.
inline TransformDraw draw_transform(const AugmentPolicy& p, RandomStream& rs) {
    TransformDraw d;
    d.angle = rs.uniform(-p.rotation_degrees, p.rotation_degrees) * M_PI / 180.0;
    d.hflip = rs.bernoulli(p.p_hflip);
    d.vflip = rs.bernoulli(p.p_vflip);
    d.crop_scale = rs.uniform(p.crop_scale_min, p.crop_scale_max);
    return d;
}

// Inverse-mapped warp of one {C, H, W} plane stack: flip -> rotate about the
// center -> center crop of side*sqrt(scale) -> resize back to (H, W).
// Bilinear sampling, zero fill outside the source. The identity draw maps
// every output pixel onto an exact integer source position, so it is a
// bit-exact no-op.
inline Tensor warp(const Tensor& chw, const TransformDraw& d) {
    const int64_t C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    Tensor out({C, H, W});
    const double side = std::sqrt(d.crop_scale);
    const double cw = side * static_cast<double>(W), ch = side * static_cast<double>(H);
    const double x0 = (static_cast<double>(W) - cw) / 2.0;
    const double y0 = (static_cast<double>(H) - ch) / 2.0;
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;
    const double ca = std::cos(-d.angle), sa = std::sin(-d.angle);
    for (int64_t yo = 0; yo < H; ++yo) {
        for (int64_t xo = 0; xo < W; ++xo) {
            // resize-back inverse: output pixel center -> crop coordinates
            const double xr = x0 + (static_cast<double>(xo) + 0.5) * cw /
                                       static_cast<double>(W) - 0.5;
            const double yr = y0 + (static_cast<double>(yo) + 0.5) * ch /
                                       static_cast<double>(H) - 0.5;
            // rotation inverse about the image center
            double xs = cx + ca * (xr - cx) - sa * (yr - cy);
            double ys = cy + sa * (xr - cx) + ca * (yr - cy);
            // flip inverse (flips are involutions)
            if (d.hflip) xs = static_cast<double>(W) - 1.0 - xs;
            if (d.vflip) ys = static_cast<double>(H) - 1.0 - ys;

            const double fx = std::floor(xs), fy = std::floor(ys);
            const int64_t ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
            const double wx = xs - fx, wy = ys - fy;
            for (int64_t c = 0; c < C; ++c) {
                const double* plane = chw.data() + c * H * W;
                auto at = [&](int64_t yy, int64_t xx) {
                    return (yy >= 0 && yy < H && xx >= 0 && xx < W)
                               ? plane[yy * W + xx]
                               : 0.0;
                };
                double v;
                if (wx == 0.0 && wy == 0.0) {
                    v = at(iy, ix);  // exact grid hit (identity / flip paths)
                } else {
                    v = (1 - wy) * ((1 - wx) * at(iy, ix) + wx * at(iy, ix + 1)) +
                        wy * ((1 - wx) * at(iy + 1, ix) + wx * at(iy + 1, ix + 1));
                }
                out[(c * H + yo) * W + xo] = v;
            }
        }
    }
    return out;
}

// images: {1, F, 3, H, W}; masks: {1, F, 1, H, W}. One transform draw per
// window, identical across frames; masks re-binarized at 0.5 after warping.
inline std::pair<Tensor, Tensor> augment_window(const Tensor& images,
                                                const Tensor& masks,
                                                const AugmentPolicy& policy,
                                                RandomStream& rs) {
    policy.validate();
    check(images.ndim() == 5 && masks.ndim() == 5, "augment: expected clip tensors");
    if (images.dim(1) != masks.dim(1))
        throw DataError("augment: image window has " + std::to_string(images.dim(1)) +
                        " frames but mask window has " + std::to_string(masks.dim(1)));
    check(images.dim(3) == masks.dim(3) && images.dim(4) == masks.dim(4),
          "augment: image/mask spatial mismatch");
    if (!policy.enabled) return {images, masks};
    const TransformDraw d = draw_transform(policy, rs);
    const int64_t B = images.dim(0), F = images.dim(1);
    const int64_t H = images.dim(3), W = images.dim(4);
    Tensor oi(images.shape()), om(masks.shape());
    for (int64_t bf = 0; bf < B * F; ++bf) {
        Tensor img({3, H, W});
        std::copy(images.data() + bf * 3 * H * W, images.data() + (bf + 1) * 3 * H * W,
                  img.data());
        Tensor wimg = warp(img, d);
        std::copy(wimg.data(), wimg.data() + wimg.numel(), oi.data() + bf * 3 * H * W);

        Tensor msk({1, H, W});
        std::copy(masks.data() + bf * H * W, masks.data() + (bf + 1) * H * W,
                  msk.data());
        Tensor wmsk = warp(msk, d);
        for (int64_t i = 0; i < H * W; ++i)
            om[bf * H * W + i] = wmsk[i] > 0.5 ? 1.0 : 0.0;
    }
    return {std::move(oi), std::move(om)};
}

}  // namespace pnx::augment
