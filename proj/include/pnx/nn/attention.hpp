#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/linalg.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/tensor.hpp"

namespace pnx::nn {

// Multi-head self-attention along the frame axis. Every spatial position of
// the feature map is treated as an independent sequence of F tokens with C
// channels; heads split C. Input/output layout: {B, F, C, S} with S = H*W.
class FrameAttention {
  public:
    struct Cache {
        int64_t B = 0, F = 0, S = 0;
        Tensor q, k, v;  // {B*S, F, C}, contiguous per sequence
        Tensor attn;     // {B*S, nh, F, F}, softmaxed
    };

    FrameAttention() = default;
    FrameAttention(const std::string& prefix, int64_t ch, int64_t heads,
                   RandomStream& rs)
        : ch_(ch), heads_(heads) {
        check(ch % heads == 0, "attention: channels not divisible by head count");
        dh_ = ch / heads;
        auto make = [&](const char* nm) {
            Parameter p(prefix + "." + nm + ".weight", {ch, ch});
            init_trunc_normal(p.value, rs);
            return p;
        };
        wq_ = make("q");
        wk_ = make("k");
        wv_ = make("v");
        wo_ = make("out");
        auto mkb = [&](const char* nm) {
            Parameter p(prefix + "." + nm + ".bias", {ch});
            p.value.zero();
            return p;
        };
        bq_ = mkb("q");
        bk_ = mkb("k");
        bv_ = mkb("v");
        bo_ = mkb("out");
    }

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const {
        check(x.ndim() == 4 && x.dim(2) == ch_, "attention: bad input " + x.shape_str());
        const int64_t B = x.dim(0), F = x.dim(1), S = x.dim(3);
        Tensor y(x.shape());
        Cache local;
        Cache& cc = cache ? *cache : local;
        cc.B = B;
        cc.F = F;
        cc.S = S;
        cc.q = Tensor({B * S, F, ch_});
        cc.k = Tensor({B * S, F, ch_});
        cc.v = Tensor({B * S, F, ch_});
        cc.attn = Tensor({B * S, heads_, F, F});
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh_));
        std::vector<double> xs(static_cast<size_t>(F * ch_));
        std::vector<double> out(static_cast<size_t>(F * ch_));
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t s = 0; s < S; ++s) {
                const int64_t seq = b * S + s;
                gather(x, b, s, xs.data());
                double* q = cc.q.data() + seq * F * ch_;
                double* k = cc.k.data() + seq * F * ch_;
                double* v = cc.v.data() + seq * F * ch_;
                project(xs.data(), F, wq_, bq_, q);
                project(xs.data(), F, wk_, bk_, k);
                project(xs.data(), F, wv_, bv_, v);
                double* attn = cc.attn.data() + seq * heads_ * F * F;
                for (int64_t h = 0; h < heads_; ++h) {
                    double* a = attn + h * F * F;
                    for (int64_t i = 0; i < F; ++i) {
                        const double* qi = q + i * ch_ + h * dh_;
                        double rowmax = -1e300;
                        for (int64_t j = 0; j < F; ++j) {
                            const double* kj = k + j * ch_ + h * dh_;
                            double dot = 0.0;
                            for (int64_t d = 0; d < dh_; ++d) dot += qi[d] * kj[d];
                            a[i * F + j] = dot * scale;
                            rowmax = std::max(rowmax, a[i * F + j]);
                        }
                        double z = 0.0;
                        for (int64_t j = 0; j < F; ++j) {
                            a[i * F + j] = std::exp(a[i * F + j] - rowmax);
                            z += a[i * F + j];
                        }
                        for (int64_t j = 0; j < F; ++j) a[i * F + j] /= z;
                    }
                    // out rows accumulate A_h * V_h into the head's slice
                    for (int64_t i = 0; i < F; ++i) {
                        double* oi = out.data() + i * ch_ + h * dh_;
                        for (int64_t d = 0; d < dh_; ++d) oi[d] = 0.0;
                        for (int64_t j = 0; j < F; ++j) {
                            const double aij = a[i * F + j];
                            const double* vj = v + j * ch_ + h * dh_;
                            for (int64_t d = 0; d < dh_; ++d) oi[d] += aij * vj[d];
                        }
                    }
                }
                // y = out * Wo^T + bo, scattered back to strided layout
                std::vector<double> yo(static_cast<size_t>(F * ch_));
                project(out.data(), F, wo_, bo_, yo.data());
                scatter(yo.data(), b, s, y);
            }
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Tensor& x, const Cache& cc) {
        const int64_t B = cc.B, F = cc.F, S = cc.S;
        for (Parameter* p : {&wq_, &wk_, &wv_, &wo_, &bq_, &bk_, &bv_, &bo_})
            p->ensure_grad();
        Tensor gx = Tensor::zeros(x.shape());
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh_));
        std::vector<double> xs(static_cast<size_t>(F * ch_));
        std::vector<double> gys(static_cast<size_t>(F * ch_));
        std::vector<double> o(static_cast<size_t>(F * ch_));
        std::vector<double> go(static_cast<size_t>(F * ch_));
        std::vector<double> gq(static_cast<size_t>(F * ch_));
        std::vector<double> gk(static_cast<size_t>(F * ch_));
        std::vector<double> gv(static_cast<size_t>(F * ch_));
        std::vector<double> gxs(static_cast<size_t>(F * ch_));
        std::vector<double> da(static_cast<size_t>(F * F));
        for (int64_t b = 0; b < B; ++b) {
            for (int64_t s = 0; s < S; ++s) {
                const int64_t seq = b * S + s;
                gather(x, b, s, xs.data());
                gather(gy, b, s, gys.data());
                const double* q = cc.q.data() + seq * F * ch_;
                const double* k = cc.k.data() + seq * F * ch_;
                const double* v = cc.v.data() + seq * F * ch_;
                const double* attn = cc.attn.data() + seq * heads_ * F * F;
                // Rebuild head outputs o = A*V (cheaper to recompute than cache).
                for (int64_t h = 0; h < heads_; ++h) {
                    const double* a = attn + h * F * F;
                    for (int64_t i = 0; i < F; ++i) {
                        double* oi = o.data() + i * ch_ + h * dh_;
                        for (int64_t d = 0; d < dh_; ++d) oi[d] = 0.0;
                        for (int64_t j = 0; j < F; ++j) {
                            const double aij = a[i * F + j];
                            const double* vj = v + j * ch_ + h * dh_;
                            for (int64_t d = 0; d < dh_; ++d) oi[d] += aij * vj[d];
                        }
                    }
                }
                // Output projection: y = o*Wo^T + bo
                // dWo += gy^T * o ; dbo += colsum gy ; do = gy * Wo
                linalg::matmul_at_acc(gys.data(), o.data(), wo_.grad.data(), ch_, F, ch_);
                for (int64_t i = 0; i < F; ++i)
                    for (int64_t c = 0; c < ch_; ++c) bo_.grad[c] += gys[i * ch_ + c];
                linalg::matmul(gys.data(), wo_.value.data(), go.data(), F, ch_, ch_);
                // Heads: dA, dV, then softmax backward, then dQ/dK.
                std::fill(gq.begin(), gq.end(), 0.0);
                std::fill(gk.begin(), gk.end(), 0.0);
                std::fill(gv.begin(), gv.end(), 0.0);
                for (int64_t h = 0; h < heads_; ++h) {
                    const double* a = attn + h * F * F;
                    for (int64_t i = 0; i < F; ++i) {
                        const double* goi = go.data() + i * ch_ + h * dh_;
                        // dA_ij = dO_i . V_j ; dV_j += A_ij * dO_i
                        for (int64_t j = 0; j < F; ++j) {
                            const double* vj = v + j * ch_ + h * dh_;
                            double* gvj = gv.data() + j * ch_ + h * dh_;
                            double dot = 0.0;
                            const double aij = a[i * F + j];
                            for (int64_t d = 0; d < dh_; ++d) {
                                dot += goi[d] * vj[d];
                                gvj[d] += aij * goi[d];
                            }
                            da[i * F + j] = dot;
                        }
                        // softmax row backward: dS = A .* (dA - sum(dA .* A))
                        double dotr = 0.0;
                        for (int64_t j = 0; j < F; ++j)
                            dotr += da[i * F + j] * a[i * F + j];
                        for (int64_t j = 0; j < F; ++j)
                            da[i * F + j] = a[i * F + j] * (da[i * F + j] - dotr);
                        // S = scale * Q K^T : dQ_i += scale * sum_j dS_ij K_j
                        //                     dK_j += scale * dS_ij Q_i
                        double* gqi = gq.data() + i * ch_ + h * dh_;
                        const double* qi = q + i * ch_ + h * dh_;
                        for (int64_t j = 0; j < F; ++j) {
                            const double ds = da[i * F + j] * scale;
                            const double* kj = k + j * ch_ + h * dh_;
                            double* gkj = gk.data() + j * ch_ + h * dh_;
                            for (int64_t d = 0; d < dh_; ++d) {
                                gqi[d] += ds * kj[d];
                                gkj[d] += ds * qi[d];
                            }
                        }
                    }
                }
                // Input projections.
                project_backward(gq.data(), xs.data(), F, wq_, bq_, gxs.data(), true);
                project_backward(gk.data(), xs.data(), F, wk_, bk_, gxs.data(), false);
                project_backward(gv.data(), xs.data(), F, wv_, bv_, gxs.data(), false);
                scatter_acc(gxs.data(), b, s, gx);
            }
        }
        return gx;
    }

    void collect(ParamRefs& ps) {
        for (Parameter* p : {&wq_, &wk_, &wv_, &wo_, &bq_, &bk_, &bv_, &bo_})
            ps.push_back(p);
    }

  private:
    // y(F x C) = x(F x C) * W^T + b
    static void project(const double* x, int64_t F, const Parameter& w,
                        const Parameter& b, double* y) {
        const int64_t C = w.value.dim(0);
        linalg::matmul_bt(x, w.value.data(), y, F, C, C);
        for (int64_t i = 0; i < F; ++i)
            for (int64_t c = 0; c < C; ++c) y[i * C + c] += b.value[c];
    }

    // Given dY of a projection, accumulate dW/db and fold dX into gxs
    // (overwrite on the first projection, accumulate afterwards).
    void project_backward(const double* dy, const double* x, int64_t F, Parameter& w,
                          Parameter& b, double* gxs, bool overwrite) {
        linalg::matmul_at_acc(dy, x, w.grad.data(), ch_, F, ch_);
        for (int64_t i = 0; i < F; ++i)
            for (int64_t c = 0; c < ch_; ++c) b.grad[c] += dy[i * ch_ + c];
        if (overwrite)
            linalg::matmul(dy, w.value.data(), gxs, F, ch_, ch_);
        else {
            std::vector<double> tmp(static_cast<size_t>(F * ch_));
            linalg::matmul(dy, w.value.data(), tmp.data(), F, ch_, ch_);
            for (int64_t i = 0; i < F * ch_; ++i) gxs[i] += tmp[i];
        }
    }

    // {B,F,C,S} strided sequence <-> contiguous (F x C) buffer.
    void gather(const Tensor& x, int64_t b, int64_t s, double* xs) const {
        const int64_t F = x.dim(1), S = x.dim(3);
        for (int64_t f = 0; f < F; ++f)
            for (int64_t c = 0; c < ch_; ++c)
                xs[f * ch_ + c] = x[((b * F + f) * ch_ + c) * S + s];
    }
    void scatter(const double* ys, int64_t b, int64_t s, Tensor& y) const {
        const int64_t F = y.dim(1), S = y.dim(3);
        for (int64_t f = 0; f < F; ++f)
            for (int64_t c = 0; c < ch_; ++c)
                y[((b * F + f) * ch_ + c) * S + s] = ys[f * ch_ + c];
    }
    void scatter_acc(const double* ys, int64_t b, int64_t s, Tensor& y) const {
        const int64_t F = y.dim(1), S = y.dim(3);
        for (int64_t f = 0; f < F; ++f)
            for (int64_t c = 0; c < ch_; ++c)
                y[((b * F + f) * ch_ + c) * S + s] += ys[f * ch_ + c];
    }

    int64_t ch_ = 0, heads_ = 8, dh_ = 0;
    Parameter wq_, wk_, wv_, wo_, bq_, bk_, bv_, bo_;
};

}  // namespace pnx::nn
