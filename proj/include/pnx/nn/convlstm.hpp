#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/linalg.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/nn/conv.hpp"
#include "pnx/tensor.hpp"

namespace pnx::nn {

// Convolutional LSTM cell. One k x k convolution maps the concatenated
// [input, hidden] stack to the four gate pre-activations:
//   i = sigmoid(a_i), f = sigmoid(a_f), g = tanh(a_g), o = sigmoid(a_o)
//   c_t = f .* c_{t-1} + i .* g
//   h_t = o .* tanh(c_t)
// No peephole terms. The forget-gate bias starts at 1 so memory survives the
// first updates; the gate convolution starts orthogonal per gate slab.
class ConvLstmCell {
  public:
    // Everything backward needs for one unrolled step.
    struct StepCache {
        Tensor z;           // concat [x, h_prev], {N, in+hid, H, W}
        Tensor i, f, g, o;  // post-activation gates, {N, hid, H, W}
        Tensor c_prev;      // {N, hid, H, W}
        Tensor c;           // cell state after the step
    };

    ConvLstmCell() = default;
    ConvLstmCell(const std::string& prefix, int64_t in_ch, int64_t hid_ch,
                 int64_t k, RandomStream& rs)
        : in_ch_(in_ch), hid_ch_(hid_ch), k_(k) {
        check(k % 2 == 1, "convlstm: kernel must be odd");
        gates_ = Conv2d(prefix + ".gates", in_ch + hid_ch, 4 * hid_ch, k, 1,
                        (k - 1) / 2, /*bias=*/true, rs);
        // Orthogonal slab per gate: rows of each (hid*k*k?) no — per-gate
        // weight block is (hid_ch) x (in+hid)*k*k; orthogonalize each block.
        const int64_t cols = (in_ch + hid_ch) * k * k;
        for (int64_t gate = 0; gate < 4; ++gate) {
            double* block = gates_.weight().value.data() + gate * hid_ch * cols;
            linalg::orthogonal_fill(block, hid_ch, cols, [&rs] { return rs.normal(); });
        }
        // bias layout follows gate order i, f, g, o
        for (int64_t c = 0; c < hid_ch; ++c)
            gates_.bias().value[hid_ch + c] = 1.0;
    }

    int64_t hidden_channels() const { return hid_ch_; }

    // One timestep. h_prev/c_prev are {N, hid, H, W}; x is {N, in, H, W}.
    void step(const Tensor& x, const Tensor& h_prev, const Tensor& c_prev,
              Tensor& h_out, Tensor& c_out, StepCache* cache = nullptr) const {
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t HW = H * W;
        Tensor z({N, in_ch_ + hid_ch_, H, W});
        for (int64_t n = 0; n < N; ++n) {
            std::copy(x.data() + n * in_ch_ * HW, x.data() + (n + 1) * in_ch_ * HW,
                      z.data() + n * (in_ch_ + hid_ch_) * HW);
            std::copy(h_prev.data() + n * hid_ch_ * HW,
                      h_prev.data() + (n + 1) * hid_ch_ * HW,
                      z.data() + (n * (in_ch_ + hid_ch_) + in_ch_) * HW);
        }
        Tensor a = gates_.forward(z);  // {N, 4*hid, H, W}
        h_out = Tensor({N, hid_ch_, H, W});
        c_out = Tensor({N, hid_ch_, H, W});
        Tensor gi({N, hid_ch_, H, W}), gf({N, hid_ch_, H, W}), gg({N, hid_ch_, H, W}),
            go({N, hid_ch_, H, W});
#pragma omp parallel for schedule(static)
        for (int64_t nc = 0; nc < N * hid_ch_; ++nc) {
            const int64_t n = nc / hid_ch_, c = nc % hid_ch_;
            const double* ai = a.data() + ((n * 4 + 0) * hid_ch_ + c) * HW;
            const double* af = a.data() + ((n * 4 + 1) * hid_ch_ + c) * HW;
            const double* ag = a.data() + ((n * 4 + 2) * hid_ch_ + c) * HW;
            const double* ao = a.data() + ((n * 4 + 3) * hid_ch_ + c) * HW;
            const double* cp = c_prev.data() + nc * HW;
            double* pi = gi.data() + nc * HW;
            double* pf = gf.data() + nc * HW;
            double* pg = gg.data() + nc * HW;
            double* po = go.data() + nc * HW;
            double* pc = c_out.data() + nc * HW;
            double* ph = h_out.data() + nc * HW;
            for (int64_t p = 0; p < HW; ++p) {
                pi[p] = sigmoid(ai[p]);
                pf[p] = sigmoid(af[p]);
                pg[p] = std::tanh(ag[p]);
                po[p] = sigmoid(ao[p]);
                pc[p] = pf[p] * cp[p] + pi[p] * pg[p];
                ph[p] = po[p] * std::tanh(pc[p]);
            }
        }
        if (cache) {
            cache->z = std::move(z);
            cache->i = std::move(gi);
            cache->f = std::move(gf);
            cache->g = std::move(gg);
            cache->o = std::move(go);
            cache->c_prev = c_prev;
            cache->c = c_out;
        }
    }

    // Backward of one step. gh/gc are gradients flowing into h_t and c_t;
    // returns gradients for x, h_prev, c_prev. Accumulates conv grads.
    void step_backward(const Tensor& gh, const Tensor& gc_in, const StepCache& cc,
                       Tensor& gx, Tensor& gh_prev, Tensor& gc_prev) {
        const int64_t N = gh.dim(0), H = gh.dim(2), W = gh.dim(3);
        const int64_t HW = H * W;
        Tensor da({N, 4 * hid_ch_, H, W});
        gc_prev = Tensor({N, hid_ch_, H, W});
#pragma omp parallel for schedule(static)
        for (int64_t nc = 0; nc < N * hid_ch_; ++nc) {
            const int64_t n = nc / hid_ch_, c = nc % hid_ch_;
            const double* pi = cc.i.data() + nc * HW;
            const double* pf = cc.f.data() + nc * HW;
            const double* pg = cc.g.data() + nc * HW;
            const double* po = cc.o.data() + nc * HW;
            const double* pc = cc.c.data() + nc * HW;
            const double* pcp = cc.c_prev.data() + nc * HW;
            const double* pgh = gh.data() + nc * HW;
            const double* pgc = gc_in.data() + nc * HW;
            double* dai = da.data() + ((n * 4 + 0) * hid_ch_ + c) * HW;
            double* daf = da.data() + ((n * 4 + 1) * hid_ch_ + c) * HW;
            double* dag = da.data() + ((n * 4 + 2) * hid_ch_ + c) * HW;
            double* dao = da.data() + ((n * 4 + 3) * hid_ch_ + c) * HW;
            double* pgcp = gc_prev.data() + nc * HW;
            for (int64_t p = 0; p < HW; ++p) {
                const double tc = std::tanh(pc[p]);
                const double go_ = pgh[p] * tc;                       // d/do
                const double gc = pgc[p] + pgh[p] * po[p] * (1.0 - tc * tc);
                const double gi_ = gc * pg[p];
                const double gf_ = gc * pcp[p];
                const double gg_ = gc * pi[p];
                pgcp[p] = gc * pf[p];
                dai[p] = gi_ * pi[p] * (1.0 - pi[p]);
                daf[p] = gf_ * pf[p] * (1.0 - pf[p]);
                dag[p] = gg_ * (1.0 - pg[p] * pg[p]);
                dao[p] = go_ * po[p] * (1.0 - po[p]);
            }
        }
        Tensor gz = gates_.backward(da, cc.z);
        gx = Tensor({N, in_ch_, H, W});
        gh_prev = Tensor({N, hid_ch_, H, W});
        for (int64_t n = 0; n < N; ++n) {
            std::copy(gz.data() + n * (in_ch_ + hid_ch_) * HW,
                      gz.data() + (n * (in_ch_ + hid_ch_) + in_ch_) * HW,
                      gx.data() + n * in_ch_ * HW);
            std::copy(gz.data() + (n * (in_ch_ + hid_ch_) + in_ch_) * HW,
                      gz.data() + (n + 1) * (in_ch_ + hid_ch_) * HW,
                      gh_prev.data() + n * hid_ch_ * HW);
        }
    }

    void collect(ParamRefs& ps) { gates_.collect(ps); }
    Conv2d& gates() { return gates_; }

  private:
    int64_t in_ch_ = 0, hid_ch_ = 0, k_ = 3;
    Conv2d gates_;
};

// Runs a cell across a clip in one direction, zero initial states.
// x: {B, F, C, H, W}; returns hidden states {B, F, hid, H, W} in *input*
// frame order (the reverse pass writes its outputs back reversed).
class ConvLstmRunner {
  public:
    struct Cache {
        std::vector<ConvLstmCell::StepCache> steps;
        std::vector<int64_t> order;  // processing order of frame indices
        int64_t B = 0, H = 0, W = 0;
    };

    static Tensor run(const ConvLstmCell& cell, const Tensor& x, bool reverse,
                      Cache* cache = nullptr) {
        const int64_t B = x.dim(0), F = x.dim(1), C = x.dim(2), H = x.dim(3),
                      W = x.dim(4);
        Tensor out({B, F, cell.hidden_channels(), H, W});
        Tensor h = Tensor::zeros({B, cell.hidden_channels(), H, W});
        Tensor c = Tensor::zeros({B, cell.hidden_channels(), H, W});
        if (cache) {
            cache->steps.resize(static_cast<size_t>(F));
            cache->order.clear();
            cache->B = B;
            cache->H = H;
            cache->W = W;
        }
        const int64_t frame_sz = C * H * W;
        const int64_t hid_sz = cell.hidden_channels() * H * W;
        for (int64_t t = 0; t < F; ++t) {
            const int64_t f = reverse ? F - 1 - t : t;
            Tensor xt({B, C, H, W});
            for (int64_t b = 0; b < B; ++b)
                std::copy(x.data() + (b * F + f) * frame_sz,
                          x.data() + (b * F + f + 1) * frame_sz,
                          xt.data() + b * frame_sz);
            Tensor h_next, c_next;
            cell.step(xt, h, c,
                      h_next, c_next,
                      cache ? &cache->steps[static_cast<size_t>(t)] : nullptr);
            if (cache) cache->order.push_back(f);
            for (int64_t b = 0; b < B; ++b)
                std::copy(h_next.data() + b * hid_sz, h_next.data() + (b + 1) * hid_sz,
                          out.data() + (b * F + f) * hid_sz);
            h = std::move(h_next);
            c = std::move(c_next);
        }
        return out;
    }

    // BPTT. g_out is the gradient w.r.t. the {B,F,hid,H,W} output (in input
    // frame order); returns the gradient w.r.t. x.
    static Tensor run_backward(ConvLstmCell& cell, const Tensor& g_out,
                               int64_t in_ch, const Cache& cc) {
        const int64_t F = g_out.dim(1), B = cc.B, H = cc.H, W = cc.W;
        const int64_t hid = cell.hidden_channels();
        const int64_t hid_sz = hid * H * W, in_sz = in_ch * H * W;
        Tensor gx = Tensor::zeros({B, F, in_ch, H, W});
        Tensor gh = Tensor::zeros({B, hid, H, W});
        Tensor gc = Tensor::zeros({B, hid, H, W});
        for (int64_t t = F - 1; t >= 0; --t) {
            const int64_t f = cc.order[static_cast<size_t>(t)];
            // add gradient arriving directly at h_f from the output
            for (int64_t b = 0; b < B; ++b) {
                const double* src = g_out.data() + (b * F + f) * hid_sz;
                double* dst = gh.data() + b * hid_sz;
                for (int64_t i = 0; i < hid_sz; ++i) dst[i] += src[i];
            }
            Tensor gxt, gh_prev, gc_prev;
            cell.step_backward(gh, gc, cc.steps[static_cast<size_t>(t)], gxt,
                               gh_prev, gc_prev);
            for (int64_t b = 0; b < B; ++b)
                std::copy(gxt.data() + b * in_sz, gxt.data() + (b + 1) * in_sz,
                          gx.data() + (b * F + f) * in_sz);
            gh = std::move(gh_prev);
            gc = std::move(gc_prev);
        }
        return gx;
    }
};

}  // namespace pnx::nn
