#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/linalg.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/tensor.hpp"

namespace pnx::nn {

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Unrolls one sample (C x H x W) into patch columns, (C*k*k) x (Ho*Wo).
// Row layout (c,ki,kj) matches the row-major weight tensor {O,C,k,k}, so the
// forward pass is a single GEMM per sample.
inline void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t k,
                   int64_t stride, int64_t pad, double* cols) {
    const int64_t Ho = conv_out_size(H, k, stride, pad);
    const int64_t Wo = conv_out_size(W, k, stride, pad);
    const int64_t P = Ho * Wo;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ki = 0; ki < k; ++ki) {
            for (int64_t kj = 0; kj < k; ++kj) {
                double* row = cols + ((c * k + ki) * k + kj) * P;
                for (int64_t i = 0; i < Ho; ++i) {
                    const int64_t src_i = i * stride - pad + ki;
                    for (int64_t j = 0; j < Wo; ++j) {
                        const int64_t src_j = j * stride - pad + kj;
                        row[i * Wo + j] =
                            (src_i >= 0 && src_i < H && src_j >= 0 && src_j < W)
                                ? x[(c * H + src_i) * W + src_j]
                                : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-adds patch columns back onto the input plane (adjoint of im2col).
inline void col2im_acc(const double* cols, int64_t C, int64_t H, int64_t W,
                       int64_t k, int64_t stride, int64_t pad, double* x) {
    const int64_t Ho = conv_out_size(H, k, stride, pad);
    const int64_t Wo = conv_out_size(W, k, stride, pad);
    const int64_t P = Ho * Wo;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ki = 0; ki < k; ++ki) {
            for (int64_t kj = 0; kj < k; ++kj) {
                const double* row = cols + ((c * k + ki) * k + kj) * P;
                for (int64_t i = 0; i < Ho; ++i) {
                    const int64_t dst_i = i * stride - pad + ki;
                    if (dst_i < 0 || dst_i >= H) continue;
                    for (int64_t j = 0; j < Wo; ++j) {
                        const int64_t dst_j = j * stride - pad + kj;
                        if (dst_j < 0 || dst_j >= W) continue;
                        x[(c * H + dst_i) * W + dst_j] += row[i * Wo + j];
                    }
                }
            }
        }
    }
}

// Plain 2-D convolution, square kernel, im2col + GEMM. Activations are not
// cached here: backward takes the exact input that produced the output, so
// recurrent modules can keep one conv and many per-step inputs.
class Conv2d {
  public:
    Conv2d() = default;
    Conv2d(const std::string& prefix, int64_t in_ch, int64_t out_ch, int64_t k,
           int64_t stride, int64_t pad, bool bias, RandomStream& rs,
           ConvInit init = ConvInit::trunc_normal)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
          has_bias_(bias) {
        weight_ = Parameter(prefix + ".weight", {out_ch, in_ch, k, k});
        if (init == ConvInit::trunc_normal)
            init_trunc_normal(weight_.value, rs);
        else
            init_he_normal(weight_.value, rs, in_ch * k * k);
        if (has_bias_) {
            bias_ = Parameter(prefix + ".bias", {out_ch});
            bias_.value.zero();
        }
    }

    Tensor forward(const Tensor& x) const {
        check(x.ndim() == 4 && x.dim(1) == in_ch_, "conv2d: bad input " + x.shape_str());
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = conv_out_size(H, k_, stride_, pad_);
        const int64_t Wo = conv_out_size(W, k_, stride_, pad_);
        check(Ho >= 1 && Wo >= 1, "conv2d: output collapsed to zero size");
        const int64_t K = in_ch_ * k_ * k_, P = Ho * Wo;
        Tensor y({N, out_ch_, Ho, Wo});
        std::vector<double> cols(static_cast<size_t>(K * P));
        for (int64_t n = 0; n < N; ++n) {
            im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, k_, stride_, pad_,
                   cols.data());
            double* yn = y.data() + n * out_ch_ * P;
            linalg::matmul(weight_.value.data(), cols.data(), yn, out_ch_, K, P);
            if (has_bias_) {
                for (int64_t o = 0; o < out_ch_; ++o) {
                    const double b = bias_.value[o];
                    for (int64_t p = 0; p < P; ++p) yn[o * P + p] += b;
                }
            }
        }
        return y;
    }

    // Accumulates weight/bias grads, returns grad w.r.t. x.
    Tensor backward(const Tensor& gy, const Tensor& x) {
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = gy.dim(2), Wo = gy.dim(3);
        const int64_t K = in_ch_ * k_ * k_, P = Ho * Wo;
        weight_.ensure_grad();
        if (has_bias_) bias_.ensure_grad();
        Tensor gx = Tensor::zeros(x.shape());
        std::vector<double> cols(static_cast<size_t>(K * P));
        std::vector<double> gcols(static_cast<size_t>(K * P));
        for (int64_t n = 0; n < N; ++n) {
            const double* gyn = gy.data() + n * out_ch_ * P;
            im2col(x.data() + n * in_ch_ * H * W, in_ch_, H, W, k_, stride_, pad_,
                   cols.data());
            // dW += gy_n (O x P) * cols^T (P x K)
            linalg::matmul_bt_acc(gyn, cols.data(), weight_.grad.data(), out_ch_, P, K);
            if (has_bias_) {
                for (int64_t o = 0; o < out_ch_; ++o) {
                    double s = 0.0;
                    for (int64_t p = 0; p < P; ++p) s += gyn[o * P + p];
                    bias_.grad[o] += s;
                }
            }
            // gcols = W^T (K x O) * gy_n (O x P), then fold back onto the plane.
            linalg::matmul_at(weight_.value.data(), gyn, gcols.data(), K, out_ch_, P);
            col2im_acc(gcols.data(), in_ch_, H, W, k_, stride_, pad_,
                       gx.data() + n * in_ch_ * H * W);
        }
        return gx;
    }

    void collect(ParamRefs& ps) {
        ps.push_back(&weight_);
        if (has_bias_) ps.push_back(&bias_);
    }

    const Parameter& weight() const { return weight_; }
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }
    int64_t out_channels() const { return out_ch_; }

  private:
    int64_t in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    bool has_bias_ = true;
    Parameter weight_, bias_;
};

// Depthwise convolution (one k x k filter per channel), direct loops. Used
// for the 7x7 spatial mixing inside encoder blocks.
class DepthwiseConv2d {
  public:
    DepthwiseConv2d() = default;
    DepthwiseConv2d(const std::string& prefix, int64_t ch, int64_t k, int64_t pad,
                    RandomStream& rs)
        : ch_(ch), k_(k), pad_(pad) {
        weight_ = Parameter(prefix + ".weight", {ch, 1, k, k});
        init_trunc_normal(weight_.value, rs);
        bias_ = Parameter(prefix + ".bias", {ch});
        bias_.value.zero();
    }

    Tensor forward(const Tensor& x) const {
        check(x.ndim() == 4 && x.dim(1) == ch_, "dwconv: bad input " + x.shape_str());
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = conv_out_size(H, k_, 1, pad_);
        const int64_t Wo = conv_out_size(W, k_, 1, pad_);
        Tensor y({N, ch_, Ho, Wo});
#pragma omp parallel for schedule(static)
        for (int64_t nc = 0; nc < N * ch_; ++nc) {
            const int64_t c = nc % ch_;
            const double* xp = x.data() + nc * H * W;
            const double* w = weight_.value.data() + c * k_ * k_;
            double* yp = y.data() + nc * Ho * Wo;
            const double b = bias_.value[c];
            for (int64_t i = 0; i < Ho; ++i) {
                for (int64_t j = 0; j < Wo; ++j) {
                    double s = b;
                    for (int64_t ki = 0; ki < k_; ++ki) {
                        const int64_t si = i - pad_ + ki;
                        if (si < 0 || si >= H) continue;
                        for (int64_t kj = 0; kj < k_; ++kj) {
                            const int64_t sj = j - pad_ + kj;
                            if (sj < 0 || sj >= W) continue;
                            s += w[ki * k_ + kj] * xp[si * W + sj];
                        }
                    }
                    yp[i * Wo + j] = s;
                }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Tensor& x) {
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = gy.dim(2), Wo = gy.dim(3);
        weight_.ensure_grad();
        bias_.ensure_grad();
        Tensor gx = Tensor::zeros(x.shape());
        // Per-channel accumulators are disjoint across the parallel loop;
        // the sample loop inside stays ordered for reproducibility.
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < ch_; ++c) {
            const double* w = weight_.value.data() + c * k_ * k_;
            double* gw = weight_.grad.data() + c * k_ * k_;
            double gb = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const double* xp = x.data() + (n * ch_ + c) * H * W;
                const double* gyp = gy.data() + (n * ch_ + c) * Ho * Wo;
                double* gxp = gx.data() + (n * ch_ + c) * H * W;
                for (int64_t i = 0; i < Ho; ++i) {
                    for (int64_t j = 0; j < Wo; ++j) {
                        const double g = gyp[i * Wo + j];
                        gb += g;
                        for (int64_t ki = 0; ki < k_; ++ki) {
                            const int64_t si = i - pad_ + ki;
                            if (si < 0 || si >= H) continue;
                            for (int64_t kj = 0; kj < k_; ++kj) {
                                const int64_t sj = j - pad_ + kj;
                                if (sj < 0 || sj >= W) continue;
                                gw[ki * k_ + kj] += g * xp[si * W + sj];
                                gxp[si * W + sj] += g * w[ki * k_ + kj];
                            }
                        }
                    }
                }
            }
            bias_.grad[c] += gb;
        }
        return gx;
    }

    void collect(ParamRefs& ps) {
        ps.push_back(&weight_);
        ps.push_back(&bias_);
    }

  private:
    int64_t ch_ = 0, k_ = 7, pad_ = 3;
    Parameter weight_, bias_;
};

// Transposed convolution restricted to kernel == stride (the only shape the
// decoder needs): output blocks are disjoint, so each sample is one GEMM
// followed by a scatter.
class ConvTranspose2d {
  public:
    ConvTranspose2d() = default;
    ConvTranspose2d(const std::string& prefix, int64_t in_ch, int64_t out_ch,
                    int64_t k, RandomStream& rs)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k) {
        weight_ = Parameter(prefix + ".weight", {in_ch, out_ch, k, k});
        init_he_normal(weight_.value, rs, in_ch * k * k);
        bias_ = Parameter(prefix + ".bias", {out_ch});
        bias_.value.zero();
    }

    Tensor forward(const Tensor& x) const {
        check(x.ndim() == 4 && x.dim(1) == in_ch_, "convT: bad input " + x.shape_str());
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = H * k_, Wo = W * k_;
        const int64_t P = H * W, R = out_ch_ * k_ * k_;
        // wprime[(o,ki,kj), i] = weight[i,o,ki,kj]
        std::vector<double> wprime(static_cast<size_t>(R * in_ch_));
        pack_wprime(wprime.data());
        std::vector<double> g(static_cast<size_t>(R * P));
        Tensor y({N, out_ch_, Ho, Wo});
        for (int64_t n = 0; n < N; ++n) {
            linalg::matmul(wprime.data(), x.data() + n * in_ch_ * P, g.data(), R,
                           in_ch_, P);
            double* yn = y.data() + n * out_ch_ * Ho * Wo;
            for (int64_t o = 0; o < out_ch_; ++o) {
                const double b = bias_.value[o];
                for (int64_t ki = 0; ki < k_; ++ki)
                    for (int64_t kj = 0; kj < k_; ++kj) {
                        const double* src = g.data() + ((o * k_ + ki) * k_ + kj) * P;
                        for (int64_t i = 0; i < H; ++i)
                            for (int64_t j = 0; j < W; ++j)
                                yn[(o * Ho + i * k_ + ki) * Wo + j * k_ + kj] =
                                    src[i * W + j] + b;
                    }
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Tensor& x) {
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t Ho = H * k_, Wo = W * k_;
        const int64_t P = H * W, R = out_ch_ * k_ * k_;
        weight_.ensure_grad();
        bias_.ensure_grad();
        std::vector<double> wprime(static_cast<size_t>(R * in_ch_));
        pack_wprime(wprime.data());
        std::vector<double> gwprime(static_cast<size_t>(R * in_ch_), 0.0);
        std::vector<double> gg(static_cast<size_t>(R * P));
        Tensor gx({x.shape()});
        for (int64_t n = 0; n < N; ++n) {
            const double* gyn = gy.data() + n * out_ch_ * Ho * Wo;
            // Gather gy into the block layout used by forward's scatter.
            for (int64_t o = 0; o < out_ch_; ++o) {
                double bsum = 0.0;
                for (int64_t ki = 0; ki < k_; ++ki)
                    for (int64_t kj = 0; kj < k_; ++kj) {
                        double* dst = gg.data() + ((o * k_ + ki) * k_ + kj) * P;
                        for (int64_t i = 0; i < H; ++i)
                            for (int64_t j = 0; j < W; ++j) {
                                const double v =
                                    gyn[(o * Ho + i * k_ + ki) * Wo + j * k_ + kj];
                                dst[i * W + j] = v;
                                bsum += v;
                            }
                    }
                bias_.grad[o] += bsum;
            }
            linalg::matmul_bt_acc(gg.data(), x.data() + n * in_ch_ * P,
                                  gwprime.data(), R, P, in_ch_);
            linalg::matmul_at(wprime.data(), gg.data(), gx.data() + n * in_ch_ * P,
                              in_ch_, R, P);
        }
        // Fold gwprime back into the {in,out,k,k} layout.
        for (int64_t i = 0; i < in_ch_; ++i)
            for (int64_t o = 0; o < out_ch_; ++o)
                for (int64_t ki = 0; ki < k_; ++ki)
                    for (int64_t kj = 0; kj < k_; ++kj)
                        weight_.grad[((i * out_ch_ + o) * k_ + ki) * k_ + kj] +=
                            gwprime[(((o * k_ + ki) * k_ + kj)) * in_ch_ + i];
        return gx;
    }

    void collect(ParamRefs& ps) {
        ps.push_back(&weight_);
        ps.push_back(&bias_);
    }

  private:
    void pack_wprime(double* wprime) const {
        for (int64_t i = 0; i < in_ch_; ++i)
            for (int64_t o = 0; o < out_ch_; ++o)
                for (int64_t ki = 0; ki < k_; ++ki)
                    for (int64_t kj = 0; kj < k_; ++kj)
                        wprime[(((o * k_ + ki) * k_ + kj)) * in_ch_ + i] =
                            weight_.value[((i * out_ch_ + o) * k_ + ki) * k_ + kj];
    }

    int64_t in_ch_ = 0, out_ch_ = 0, k_ = 2;
    Parameter weight_, bias_;
};

// Volumetric convolution over (time, height, width) with per-axis padding.
// Time padding may differ front/back so a kernel spanning all frames can
// keep "same" output length.
class Conv3d {
  public:
    Conv3d() = default;
    Conv3d(const std::string& prefix, int64_t in_ch, int64_t out_ch, int64_t kt,
           int64_t ks, int64_t pad_t_front, int64_t pad_t_back, int64_t pad_s,
           RandomStream& rs)
        : in_ch_(in_ch), out_ch_(out_ch), kt_(kt), ks_(ks), ptf_(pad_t_front),
          ptb_(pad_t_back), ps_(pad_s) {
        weight_ = Parameter(prefix + ".weight", {out_ch, in_ch, kt, ks, ks});
        init_trunc_normal(weight_.value, rs);
        bias_ = Parameter(prefix + ".bias", {out_ch});
        bias_.value.zero();
    }

    // x: {N, C, T, H, W} -> y: {N, O, To, Ho, Wo}, stride 1 on every axis.
    Tensor forward(const Tensor& x) const {
        check(x.ndim() == 5 && x.dim(1) == in_ch_, "conv3d: bad input " + x.shape_str());
        const int64_t N = x.dim(0), T = x.dim(2), H = x.dim(3), W = x.dim(4);
        const int64_t To = T + ptf_ + ptb_ - kt_ + 1;
        const int64_t Ho = H + 2 * ps_ - ks_ + 1, Wo = W + 2 * ps_ - ks_ + 1;
        check(To >= 1 && Ho >= 1 && Wo >= 1, "conv3d: output collapsed");
        const int64_t K = in_ch_ * kt_ * ks_ * ks_, P = To * Ho * Wo;
        Tensor y({N, out_ch_, To, Ho, Wo});
        std::vector<double> cols(static_cast<size_t>(K * P));
        for (int64_t n = 0; n < N; ++n) {
            vol2col(x.data() + n * in_ch_ * T * H * W, T, H, W, cols.data());
            double* yn = y.data() + n * out_ch_ * P;
            linalg::matmul(weight_.value.data(), cols.data(), yn, out_ch_, K, P);
            for (int64_t o = 0; o < out_ch_; ++o) {
                const double b = bias_.value[o];
                for (int64_t p = 0; p < P; ++p) yn[o * P + p] += b;
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Tensor& x) {
        const int64_t N = x.dim(0), T = x.dim(2), H = x.dim(3), W = x.dim(4);
        const int64_t To = gy.dim(2), Ho = gy.dim(3), Wo = gy.dim(4);
        const int64_t K = in_ch_ * kt_ * ks_ * ks_, P = To * Ho * Wo;
        weight_.ensure_grad();
        bias_.ensure_grad();
        Tensor gx = Tensor::zeros(x.shape());
        std::vector<double> cols(static_cast<size_t>(K * P));
        std::vector<double> gcols(static_cast<size_t>(K * P));
        for (int64_t n = 0; n < N; ++n) {
            const double* gyn = gy.data() + n * out_ch_ * P;
            vol2col(x.data() + n * in_ch_ * T * H * W, T, H, W, cols.data());
            linalg::matmul_bt_acc(gyn, cols.data(), weight_.grad.data(), out_ch_, P, K);
            for (int64_t o = 0; o < out_ch_; ++o) {
                double s = 0.0;
                for (int64_t p = 0; p < P; ++p) s += gyn[o * P + p];
                bias_.grad[o] += s;
            }
            linalg::matmul_at(weight_.value.data(), gyn, gcols.data(), K, out_ch_, P);
            col2vol_acc(gcols.data(), T, H, W, gx.data() + n * in_ch_ * T * H * W);
        }
        return gx;
    }

    void collect(ParamRefs& ps) {
        ps.push_back(&weight_);
        ps.push_back(&bias_);
    }

  private:
    void vol2col(const double* x, int64_t T, int64_t H, int64_t W,
                 double* cols) const {
        const int64_t To = T + ptf_ + ptb_ - kt_ + 1;
        const int64_t Ho = H + 2 * ps_ - ks_ + 1, Wo = W + 2 * ps_ - ks_ + 1;
        const int64_t P = To * Ho * Wo;
        int64_t r = 0;
        for (int64_t c = 0; c < in_ch_; ++c)
            for (int64_t kt = 0; kt < kt_; ++kt)
                for (int64_t ki = 0; ki < ks_; ++ki)
                    for (int64_t kj = 0; kj < ks_; ++kj, ++r) {
                        double* row = cols + r * P;
                        for (int64_t t = 0; t < To; ++t) {
                            const int64_t st = t - ptf_ + kt;
                            for (int64_t i = 0; i < Ho; ++i) {
                                const int64_t si = i - ps_ + ki;
                                for (int64_t j = 0; j < Wo; ++j) {
                                    const int64_t sj = j - ps_ + kj;
                                    row[(t * Ho + i) * Wo + j] =
                                        (st >= 0 && st < T && si >= 0 && si < H &&
                                         sj >= 0 && sj < W)
                                            ? x[((c * T + st) * H + si) * W + sj]
                                            : 0.0;
                                }
                            }
                        }
                    }
    }

    void col2vol_acc(const double* cols, int64_t T, int64_t H, int64_t W,
                     double* x) const {
        const int64_t To = T + ptf_ + ptb_ - kt_ + 1;
        const int64_t Ho = H + 2 * ps_ - ks_ + 1, Wo = W + 2 * ps_ - ks_ + 1;
        const int64_t P = To * Ho * Wo;
        int64_t r = 0;
        for (int64_t c = 0; c < in_ch_; ++c)
            for (int64_t kt = 0; kt < kt_; ++kt)
                for (int64_t ki = 0; ki < ks_; ++ki)
                    for (int64_t kj = 0; kj < ks_; ++kj, ++r) {
                        const double* row = cols + r * P;
                        for (int64_t t = 0; t < To; ++t) {
                            const int64_t dt = t - ptf_ + kt;
                            if (dt < 0 || dt >= T) continue;
                            for (int64_t i = 0; i < Ho; ++i) {
                                const int64_t di = i - ps_ + ki;
                                if (di < 0 || di >= H) continue;
                                for (int64_t j = 0; j < Wo; ++j) {
                                    const int64_t dj = j - ps_ + kj;
                                    if (dj < 0 || dj >= W) continue;
                                    x[((c * T + dt) * H + di) * W + dj] +=
                                        row[(t * Ho + i) * Wo + j];
                                }
                            }
                        }
                    }
    }

    int64_t in_ch_ = 0, out_ch_ = 0, kt_ = 1, ks_ = 3, ptf_ = 0, ptb_ = 0, ps_ = 1;
    Parameter weight_, bias_;
};

}  // namespace pnx::nn
