#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/nn/attention.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/nn/conv.hpp"
#include "pnx/nn/convlstm.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::fusion {

enum class Kind { bi_convlstm, uni_convlstm, channel_stack, conv3d, mha };

inline const char* kind_name(Kind k) {
    switch (k) {
        case Kind::bi_convlstm: return "bi_convlstm";
        case Kind::uni_convlstm: return "uni_convlstm";
        case Kind::channel_stack: return "channel_stack";
        case Kind::conv3d: return "conv3d";
        case Kind::mha: return "mha";
    }
    return "?";
}

inline Kind parse_kind(const std::string& s) {
    for (Kind k : {Kind::bi_convlstm, Kind::uni_convlstm, Kind::channel_stack,
                   Kind::conv3d, Kind::mha})
        if (s == kind_name(k)) return k;
    throw UsageError("unknown fusion variant '" + s +
                     "' (expected bi_convlstm|uni_convlstm|channel_stack|conv3d|mha)");
}

inline std::vector<Kind> all_kinds() {
    return {Kind::bi_convlstm, Kind::uni_convlstm, Kind::channel_stack, Kind::conv3d,
            Kind::mha};
}

// Temporal mixer over the bottleneck clip tensor. Shape-preserving:
// {B, F, C, h, w} in, same out. Stateful between forward/backward: a
// training-mode forward stores whatever its backward needs.
class TemporalFusion {
  public:
    virtual ~TemporalFusion() = default;
    virtual Kind kind() const = 0;
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& gy) = 0;
    virtual void collect(nn::ParamRefs& ps) = 0;
};

// Two ConvLSTM passes, one per direction, each with C/2 hidden channels;
// outputs are concatenated back to C so the decoder is variant-agnostic.
class BiConvLstm final : public TemporalFusion {
  public:
    BiConvLstm(int64_t ch, int64_t kernel, RandomStream& rs) : ch_(ch) {
        check(ch % 2 == 0, "bi_convlstm: channel count must be even");
        fwd_ = nn::ConvLstmCell("fusion.fwd", ch, ch / 2, kernel, rs);
        bwd_ = nn::ConvLstmCell("fusion.bwd", ch, ch / 2, kernel, rs);
    }
    Kind kind() const override { return Kind::bi_convlstm; }

    Tensor forward(const Tensor& x, bool training) override {
        const int64_t B = x.dim(0), F = x.dim(1), h = x.dim(3), w = x.dim(4);
        const int64_t half = ch_ / 2, hw = h * w;
        Tensor of = nn::ConvLstmRunner::run(fwd_, x, false, training ? &fc_ : nullptr);
        Tensor ob = nn::ConvLstmRunner::run(bwd_, x, true, training ? &bc_ : nullptr);
        Tensor y({B, F, ch_, h, w});
        for (int64_t bf = 0; bf < B * F; ++bf) {
            std::copy(of.data() + bf * half * hw, of.data() + (bf + 1) * half * hw,
                      y.data() + bf * ch_ * hw);
            std::copy(ob.data() + bf * half * hw, ob.data() + (bf + 1) * half * hw,
                      y.data() + (bf * ch_ + half) * hw);
        }
        return y;
    }

    Tensor backward(const Tensor& gy) override {
        const int64_t B = gy.dim(0), F = gy.dim(1), h = gy.dim(3), w = gy.dim(4);
        const int64_t half = ch_ / 2, hw = h * w;
        Tensor gf({B, F, half, h, w}), gb({B, F, half, h, w});
        for (int64_t bf = 0; bf < B * F; ++bf) {
            std::copy(gy.data() + bf * ch_ * hw, gy.data() + (bf * ch_ + half) * hw,
                      gf.data() + bf * half * hw);
            std::copy(gy.data() + (bf * ch_ + half) * hw,
                      gy.data() + (bf + 1) * ch_ * hw, gb.data() + bf * half * hw);
        }
        Tensor gx = nn::ConvLstmRunner::run_backward(fwd_, gf, ch_, fc_);
        Tensor gxb = nn::ConvLstmRunner::run_backward(bwd_, gb, ch_, bc_);
        gx.add_(gxb);
        return gx;
    }

    void collect(nn::ParamRefs& ps) override {
        fwd_.collect(ps);
        bwd_.collect(ps);
    }

    nn::ConvLstmCell& forward_cell() { return fwd_; }
    nn::ConvLstmCell& backward_cell() { return bwd_; }

  private:
    int64_t ch_;
    nn::ConvLstmCell fwd_, bwd_;
    nn::ConvLstmRunner::Cache fc_, bc_;
};

// Single forward pass with full-width hidden state.
class UniConvLstm final : public TemporalFusion {
  public:
    UniConvLstm(int64_t ch, int64_t kernel, RandomStream& rs)
        : cell_(nn::ConvLstmCell("fusion.fwd", ch, ch, kernel, rs)), ch_(ch) {}
    Kind kind() const override { return Kind::uni_convlstm; }

    Tensor forward(const Tensor& x, bool training) override {
        return nn::ConvLstmRunner::run(cell_, x, false, training ? &cc_ : nullptr);
    }
    Tensor backward(const Tensor& gy) override {
        return nn::ConvLstmRunner::run_backward(cell_, gy, ch_, cc_);
    }
    void collect(nn::ParamRefs& ps) override { cell_.collect(ps); }

  private:
    nn::ConvLstmCell cell_;
    nn::ConvLstmRunner::Cache cc_;
    int64_t ch_;
};

// Frames folded into channels, mixed by a 1x1 convolution (F*C -> F*C),
// folded back. Parameter count grows with the clip length.
class ChannelStack final : public TemporalFusion {
  public:
    ChannelStack(int64_t ch, int64_t frames, RandomStream& rs)
        : ch_(ch), frames_(frames),
          mix_("fusion.stack", frames * ch, frames * ch, 1, 1, 0, true, rs) {}
    Kind kind() const override { return Kind::channel_stack; }

    Tensor forward(const Tensor& x, bool training) override {
        check(x.dim(1) == frames_,
              "channel_stack: built for " + std::to_string(frames_) +
                  " frames, got " + std::to_string(x.dim(1)));
        const auto shape = x.shape();
        Tensor flat = Tensor(x).reshaped(
            {shape[0], shape[1] * shape[2], shape[3], shape[4]});
        if (training) x_flat_ = flat;
        Tensor y = mix_.forward(flat);
        return std::move(y).reshaped(shape);
    }

    Tensor backward(const Tensor& gy) override {
        const auto shape = gy.shape();
        Tensor gflat = Tensor(gy).reshaped(
            {shape[0], shape[1] * shape[2], shape[3], shape[4]});
        Tensor gx = mix_.backward(gflat, x_flat_);
        return std::move(gx).reshaped(shape);
    }

    void collect(nn::ParamRefs& ps) override { mix_.collect(ps); }

  private:
    int64_t ch_, frames_;
    nn::Conv2d mix_;
    Tensor x_flat_;
};

// Volumetric convolution whose temporal kernel spans the whole clip, padded
// so the frame count is preserved. Parameters scale with the clip length.
class VolumetricConv final : public TemporalFusion {
  public:
    VolumetricConv(int64_t ch, int64_t frames, RandomStream& rs)
        : ch_(ch), frames_(frames),
          conv_("fusion.conv3d", ch, ch, frames, 3, (frames - 1) / 2,
                frames - 1 - (frames - 1) / 2, 1, rs) {}
    Kind kind() const override { return Kind::conv3d; }

    Tensor forward(const Tensor& x, bool training) override {
        check(x.dim(1) == frames_,
              "conv3d fusion: built for " + std::to_string(frames_) +
                  " frames, got " + std::to_string(x.dim(1)));
        Tensor xv = to_volume(x);
        if (training) x_vol_ = xv;
        Tensor yv = conv_.forward(xv);
        return from_volume(yv);
    }

    Tensor backward(const Tensor& gy) override {
        Tensor gyv = to_volume(gy);
        Tensor gxv = conv_.backward(gyv, x_vol_);
        return from_volume(gxv);
    }

    void collect(nn::ParamRefs& ps) override { conv_.collect(ps); }

  private:
    // {B,F,C,h,w} <-> {B,C,F,h,w}
    static Tensor to_volume(const Tensor& x) {
        const int64_t B = x.dim(0), F = x.dim(1), C = x.dim(2), h = x.dim(3),
                      w = x.dim(4);
        Tensor y({B, C, F, h, w});
        const int64_t hw = h * w;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t f = 0; f < F; ++f)
                for (int64_t c = 0; c < C; ++c)
                    std::copy(x.data() + ((b * F + f) * C + c) * hw,
                              x.data() + ((b * F + f) * C + c + 1) * hw,
                              y.data() + ((b * C + c) * F + f) * hw);
        return y;
    }
    static Tensor from_volume(const Tensor& y) {
        const int64_t B = y.dim(0), C = y.dim(1), F = y.dim(2), h = y.dim(3),
                      w = y.dim(4);
        Tensor x({B, F, C, h, w});
        const int64_t hw = h * w;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t f = 0; f < F; ++f)
                    std::copy(y.data() + ((b * C + c) * F + f) * hw,
                              y.data() + ((b * C + c) * F + f + 1) * hw,
                              x.data() + ((b * F + f) * C + c) * hw);
        return x;
    }

    int64_t ch_, frames_;
    nn::Conv3d conv_;
    Tensor x_vol_;
};

// Self-attention across frames at every bottleneck position.
class FrameMha final : public TemporalFusion {
  public:
    FrameMha(int64_t ch, int64_t heads, RandomStream& rs)
        : ch_(ch), attn_("fusion.attn", ch, heads, rs) {}
    Kind kind() const override { return Kind::mha; }

    Tensor forward(const Tensor& x, bool training) override {
        const auto shape = x.shape();
        Tensor seq = Tensor(x).reshaped({shape[0], shape[1], shape[2],
                                         shape[3] * shape[4]});
        if (training) x_seq_ = seq;
        Tensor y = attn_.forward(seq, training ? &cc_ : nullptr);
        return std::move(y).reshaped(shape);
    }

    Tensor backward(const Tensor& gy) override {
        const auto shape = gy.shape();
        Tensor gseq = Tensor(gy).reshaped({shape[0], shape[1], shape[2],
                                           shape[3] * shape[4]});
        Tensor gx = attn_.backward(gseq, x_seq_, cc_);
        return std::move(gx).reshaped(shape);
    }

    void collect(nn::ParamRefs& ps) override { attn_.collect(ps); }

  private:
    int64_t ch_;
    nn::FrameAttention attn_;
    nn::FrameAttention::Cache cc_;
    Tensor x_seq_;
};

inline std::unique_ptr<TemporalFusion> make_fusion(Kind kind, int64_t ch,
                                                   int64_t frames, int64_t heads,
                                                   int64_t convlstm_kernel,
                                                   RandomStream& rs) {
    switch (kind) {
        case Kind::bi_convlstm:
            return std::make_unique<BiConvLstm>(ch, convlstm_kernel, rs);
        case Kind::uni_convlstm:
            return std::make_unique<UniConvLstm>(ch, convlstm_kernel, rs);
        case Kind::channel_stack:
            return std::make_unique<ChannelStack>(ch, frames, rs);
        case Kind::conv3d: return std::make_unique<VolumetricConv>(ch, frames, rs);
        case Kind::mha: return std::make_unique<FrameMha>(ch, heads, rs);
    }
    throw InvariantError("unreachable fusion kind");
}

}  // namespace pnx::fusion
