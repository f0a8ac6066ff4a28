#pragma once

#include <string>

#include "pnx/errors.hpp"
#include "pnx/nn/act.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/nn/conv.hpp"
#include "pnx/nn/norm.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::decoder {

// Two (3x3 conv -> batch norm -> ReLU) units.
class DoubleConv {
  public:
    struct Cache {
        Tensor x, n1, y1, n2;  // conv1 input, relu1 input, conv2 input, relu2 input
        nn::BatchNorm2d::Cache b1, b2;
    };

    DoubleConv() = default;
    DoubleConv(const std::string& prefix, int64_t in_ch, int64_t out_ch,
               RandomStream& rs)
        : conv1_(prefix + ".conv1", in_ch, out_ch, 3, 1, 1, true, rs,
                 nn::ConvInit::he_normal),
          bn1_(prefix + ".bn1", out_ch),
          conv2_(prefix + ".conv2", out_ch, out_ch, 3, 1, 1, true, rs,
                 nn::ConvInit::he_normal),
          bn2_(prefix + ".bn2", out_ch) {}

    Tensor forward(const Tensor& x, bool training, Cache* cc = nullptr) {
        Tensor a1 = conv1_.forward(x);
        Tensor n1 = bn1_.forward(a1, training, cc ? &cc->b1 : nullptr);
        Tensor y1 = nn::Relu::forward(n1);
        Tensor a2 = conv2_.forward(y1);
        Tensor n2 = bn2_.forward(a2, training, cc ? &cc->b2 : nullptr);
        Tensor y = nn::Relu::forward(n2);
        if (cc) {
            cc->x = x;
            cc->n1 = std::move(n1);
            cc->y1 = std::move(y1);
            cc->n2 = std::move(n2);
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Cache& cc) {
        Tensor g = nn::Relu::backward(gy, cc.n2);
        g = bn2_.backward(g, cc.b2);
        g = conv2_.backward(g, cc.y1);
        g = nn::Relu::backward(g, cc.n1);
        g = bn1_.backward(g, cc.b1);
        return conv1_.backward(g, cc.x);
    }

    void collect(nn::ParamRefs& ps) {
        conv1_.collect(ps);
        bn1_.collect(ps);
        conv2_.collect(ps);
        bn2_.collect(ps);
    }

  private:
    nn::Conv2d conv1_, conv2_;
    nn::BatchNorm2d bn1_, bn2_;
};

// Expansion path back to input resolution. Four 2x stages undo the
// encoder's /16; the first two merge skip features by concatenation:
//   d1: up(c3->c2), cat skip2, double conv 2*c2 -> c2      (stride 8)
//   d2: up(c2->c1), cat skip1, double conv 2*c1 -> c1      (stride 4)
//   d3: up(c1->c1/2), double conv c1/2 -> c1/2             (stride 2)
//   d4: up(c1/2->c1/4), 1x1 head -> 1 logit channel        (stride 1)
class Decoder {
  public:
    struct Cache {
        Tensor fused, up2_in, up3_in, up4_in, head_in;
        DoubleConv::Cache d1, d2, d3;
    };

    Decoder() = default;
    Decoder(int64_t c1, int64_t c2, int64_t c3, RandomStream& rs)
        : c1_(c1), c2_(c2), c3_(c3) {
        check(c1 % 4 == 0, "decoder: stage-1 width must divide by 4");
        up1_ = nn::ConvTranspose2d("decoder.stageA.up", c3, c2, 2, rs);
        dc1_ = DoubleConv("decoder.stageA.dc", 2 * c2, c2, rs);
        up2_ = nn::ConvTranspose2d("decoder.stageB.up", c2, c1, 2, rs);
        dc2_ = DoubleConv("decoder.stageB.dc", 2 * c1, c1, rs);
        up3_ = nn::ConvTranspose2d("decoder.stageC.up", c1, c1 / 2, 2, rs);
        dc3_ = DoubleConv("decoder.stageC.dc", c1 / 2, c1 / 2, rs);
        up4_ = nn::ConvTranspose2d("decoder.stageD.up", c1 / 2, c1 / 4, 2, rs);
        head_ = nn::Conv2d("decoder.head", c1 / 4, 1, 1, 1, 0, true, rs);
    }

    // fused: {N, c3, h, w}; skip2: {N, c2, 2h, 2w}; skip1: {N, c1, 4h, 4w}.
    // Returns logits {N, 1, 16h, 16w}.
    Tensor forward(const Tensor& fused, const Tensor& skip2, const Tensor& skip1,
                   bool training, Cache* cc = nullptr) {
        check(fused.dim(1) == c3_ && skip2.dim(1) == c2_ && skip1.dim(1) == c1_,
              "decoder: channel mismatch");
        Tensor u1 = up1_.forward(fused);
        Tensor cat1 = concat_channels(u1, skip2);
        Tensor d1 = dc1_.forward(cat1, training, cc ? &cc->d1 : nullptr);
        Tensor u2 = up2_.forward(d1);
        Tensor cat2 = concat_channels(u2, skip1);
        Tensor d2 = dc2_.forward(cat2, training, cc ? &cc->d2 : nullptr);
        Tensor u3 = up3_.forward(d2);
        Tensor d3 = dc3_.forward(u3, training, cc ? &cc->d3 : nullptr);
        Tensor u4 = up4_.forward(d3);
        Tensor logits = head_.forward(u4);
        if (cc) {
            cc->fused = fused;
            cc->up2_in = std::move(d1);
            cc->up3_in = std::move(d2);
            cc->up4_in = std::move(d3);
            cc->head_in = std::move(u4);
        }
        return logits;
    }

    struct Grads {
        Tensor fused, skip2, skip1;
    };

    Grads backward(const Tensor& glogits, const Cache& cc) {
        Tensor g = head_.backward(glogits, cc.head_in);
        g = up4_.backward(g, cc.up4_in);
        g = dc3_.backward(g, cc.d3);
        g = up3_.backward(g, cc.up3_in);
        g = dc2_.backward(g, cc.d2);
        auto [gu2, gskip1] = split_channels(g, c1_);
        g = up2_.backward(gu2, cc.up2_in);
        g = dc1_.backward(g, cc.d1);
        auto [gu1, gskip2] = split_channels(g, c2_);
        Grads out;
        out.fused = up1_.backward(gu1, cc.fused);
        out.skip2 = std::move(gskip2);
        out.skip1 = std::move(gskip1);
        return out;
    }

    void collect(nn::ParamRefs& ps) {
        up1_.collect(ps);
        dc1_.collect(ps);
        up2_.collect(ps);
        dc2_.collect(ps);
        up3_.collect(ps);
        dc3_.collect(ps);
        up4_.collect(ps);
        head_.collect(ps);
    }

    static Tensor concat_channels(const Tensor& a, const Tensor& b) {
        check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
              "concat: spatial/batch mismatch " + a.shape_str() + " vs " + b.shape_str());
        const int64_t N = a.dim(0), ca = a.dim(1), cb = b.dim(1),
                      hw = a.dim(2) * a.dim(3);
        Tensor y({N, ca + cb, a.dim(2), a.dim(3)});
        for (int64_t n = 0; n < N; ++n) {
            std::copy(a.data() + n * ca * hw, a.data() + (n + 1) * ca * hw,
                      y.data() + n * (ca + cb) * hw);
            std::copy(b.data() + n * cb * hw, b.data() + (n + 1) * cb * hw,
                      y.data() + (n * (ca + cb) + ca) * hw);
        }
        return y;
    }

  private:
    static std::pair<Tensor, Tensor> split_channels(const Tensor& x, int64_t ca) {
        const int64_t N = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        const int64_t cb = c - ca;
        Tensor a({N, ca, x.dim(2), x.dim(3)}), b({N, cb, x.dim(2), x.dim(3)});
        for (int64_t n = 0; n < N; ++n) {
            std::copy(x.data() + n * c * hw, x.data() + (n * c + ca) * hw,
                      a.data() + n * ca * hw);
            std::copy(x.data() + (n * c + ca) * hw, x.data() + (n + 1) * c * hw,
                      b.data() + n * cb * hw);
        }
        return {std::move(a), std::move(b)};
    }

    int64_t c1_ = 0, c2_ = 0, c3_ = 0;
    nn::ConvTranspose2d up1_, up2_, up3_, up4_;
    DoubleConv dc1_, dc2_, dc3_;
    nn::Conv2d head_;
};

}  // namespace pnx::decoder
