#pragma once

#include <array>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/nn/act.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/nn/conv.hpp"
#include "pnx/nn/norm.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::encoder {

// One inverted-bottleneck block:
//   x -> dw7x7 -> channel norm -> 1x1 (C->4C) -> GELU -> 1x1 (4C->C)
//     -> layer scale -> (+x)
class Block {
  public:
    struct Cache {
        Tensor x, xn, x1, x2;  // inputs to dw / pw1 / gelu / layer-scale
        nn::ChannelNorm::Cache nc;
    };

    Block() = default;
    Block(const std::string& prefix, int64_t ch, RandomStream& rs)
        : dw_(prefix + ".dw", ch, 7, 3, rs),
          norm_(prefix + ".norm", ch),
          pw1_(prefix + ".pw1", ch, 4 * ch, 1, 1, 0, true, rs),
          pw2_(prefix + ".pw2", 4 * ch, ch, 1, 1, 0, true, rs),
          ls_(prefix + ".ls", ch) {}

    Tensor forward(const Tensor& x, Cache* cc = nullptr) {
        Tensor xdw = dw_.forward(x);
        Tensor xn = norm_.forward(xdw, cc ? &cc->nc : nullptr);
        Tensor x1 = pw1_.forward(xn);
        Tensor xg = nn::Gelu::forward(x1);
        Tensor x2 = pw2_.forward(xg);
        Tensor y = ls_.forward(x2);
        y.add_(x);
        if (cc) {
            cc->x = x;
            cc->xn = std::move(xn);
            cc->x1 = std::move(x1);
            cc->x2 = std::move(x2);
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Cache& cc) {
        Tensor g2 = ls_.backward(gy, cc.x2);
        Tensor xg = nn::Gelu::forward(cc.x1);  // recomputed, cheaper than caching
        Tensor gxg = pw2_.backward(g2, xg);
        Tensor gx1 = nn::Gelu::backward(gxg, cc.x1);
        Tensor gxn = pw1_.backward(gx1, cc.xn);
        Tensor gdw = norm_.backward(gxn, cc.nc);
        Tensor gx = dw_.backward(gdw, cc.x);
        gx.add_(gy);  // residual path
        return gx;
    }

    void collect(nn::ParamRefs& ps) {
        dw_.collect(ps);
        norm_.collect(ps);
        pw1_.collect(ps);
        pw2_.collect(ps);
        ls_.collect(ps);
    }

  private:
    nn::DepthwiseConv2d dw_;
    nn::ChannelNorm norm_;
    nn::Conv2d pw1_, pw2_;
    nn::LayerScale ls_;
};

struct Config {
    std::array<int64_t, 3> channels{96, 192, 384};
    std::array<int64_t, 3> depths{3, 3, 9};
};

// Three-stage hierarchical backbone, strides 4/8/16. The fourth stage of the
// stock backbone is pruned away: the bottleneck stays at stride 16 so the
// temporal fusion sees a 16x16 grid for 256-pixel input.
class ConvNextEncoder {
  public:
    struct Features {
        Tensor s1, s2, s3;  // strides 4, 8, 16
    };

    struct Cache {
        Tensor x_in;
        nn::ChannelNorm::Cache patch_nc, down1_nc, down2_nc;
        Tensor down1_in, down2_in;  // normalized maps entering the 2x2 convs
        std::vector<Block::Cache> b1, b2, b3;
    };

    ConvNextEncoder() = default;
    ConvNextEncoder(const Config& cfg, RandomStream& rs) : cfg_(cfg) {
        const auto& ch = cfg.channels;
        patch_conv_ = nn::Conv2d("encoder.patch.conv", 3, ch[0], 4, 4, 0, true, rs);
        patch_norm_ = nn::ChannelNorm("encoder.patch.norm", ch[0]);
        for (int64_t i = 0; i < cfg.depths[0]; ++i)
            stage1_.emplace_back("encoder.stage1.block" + std::to_string(i), ch[0], rs);
        down1_norm_ = nn::ChannelNorm("encoder.down1.norm", ch[0]);
        down1_conv_ = nn::Conv2d("encoder.down1.conv", ch[0], ch[1], 2, 2, 0, true, rs);
        for (int64_t i = 0; i < cfg.depths[1]; ++i)
            stage2_.emplace_back("encoder.stage2.block" + std::to_string(i), ch[1], rs);
        down2_norm_ = nn::ChannelNorm("encoder.down2.norm", ch[1]);
        down2_conv_ = nn::Conv2d("encoder.down2.conv", ch[1], ch[2], 2, 2, 0, true, rs);
        for (int64_t i = 0; i < cfg.depths[2]; ++i)
            stage3_.emplace_back("encoder.stage3.block" + std::to_string(i), ch[2], rs);
    }

    const Config& config() const { return cfg_; }

    // x: {N, 3, H, W} with H, W divisible by 16.
    Features forward(const Tensor& x, Cache* cc = nullptr) {
        check(x.ndim() == 4 && x.dim(1) == 3, "encoder: expected NCHW rgb, got " + x.shape_str());
        check(x.dim(2) % 16 == 0 && x.dim(3) % 16 == 0,
              "encoder: spatial size must be divisible by 16, got " + x.shape_str());
        if (cc) {
            cc->x_in = x;
            cc->b1.resize(stage1_.size());
            cc->b2.resize(stage2_.size());
            cc->b3.resize(stage3_.size());
        }
        Tensor t = patch_conv_.forward(x);
        t = patch_norm_.forward(t, cc ? &cc->patch_nc : nullptr);
        for (size_t i = 0; i < stage1_.size(); ++i)
            t = stage1_[i].forward(t, cc ? &cc->b1[i] : nullptr);
        Features f;
        f.s1 = t;
        t = down1_norm_.forward(t, cc ? &cc->down1_nc : nullptr);
        if (cc) cc->down1_in = t;
        t = down1_conv_.forward(t);
        for (size_t i = 0; i < stage2_.size(); ++i)
            t = stage2_[i].forward(t, cc ? &cc->b2[i] : nullptr);
        f.s2 = t;
        t = down2_norm_.forward(t, cc ? &cc->down2_nc : nullptr);
        if (cc) cc->down2_in = t;
        t = down2_conv_.forward(t);
        for (size_t i = 0; i < stage3_.size(); ++i)
            t = stage3_[i].forward(t, cc ? &cc->b3[i] : nullptr);
        f.s3 = t;
        return f;
    }

    // Gradients arrive at all three feature maps (skips + bottleneck).
    Tensor backward(const Tensor& gs1, const Tensor& gs2, const Tensor& gs3,
                    const Cache& cc) {
        Tensor g = gs3;
        for (size_t i = stage3_.size(); i-- > 0;)
            g = stage3_[i].backward(g, cc.b3[i]);
        g = down2_conv_.backward(g, cc.down2_in);
        g = down2_norm_.backward(g, cc.down2_nc);
        g.add_(gs2);
        for (size_t i = stage2_.size(); i-- > 0;)
            g = stage2_[i].backward(g, cc.b2[i]);
        g = down1_conv_.backward(g, cc.down1_in);
        g = down1_norm_.backward(g, cc.down1_nc);
        g.add_(gs1);
        for (size_t i = stage1_.size(); i-- > 0;)
            g = stage1_[i].backward(g, cc.b1[i]);
        g = patch_norm_.backward(g, cc.patch_nc);
        return patch_conv_.backward(g, cc.x_in);
    }

    void collect(nn::ParamRefs& ps) {
        patch_conv_.collect(ps);
        patch_norm_.collect(ps);
        for (auto& b : stage1_) b.collect(ps);
        down1_norm_.collect(ps);
        down1_conv_.collect(ps);
        for (auto& b : stage2_) b.collect(ps);
        down2_norm_.collect(ps);
        down2_conv_.collect(ps);
        for (auto& b : stage3_) b.collect(ps);
    }

  private:
    Config cfg_;
    nn::Conv2d patch_conv_;
    nn::ChannelNorm patch_norm_;
    std::vector<Block> stage1_, stage2_, stage3_;
    nn::ChannelNorm down1_norm_, down2_norm_;
    nn::Conv2d down1_conv_, down2_conv_;
};

}  // namespace pnx::encoder
