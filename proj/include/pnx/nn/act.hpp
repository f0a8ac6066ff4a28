#pragma once

#include <string>

#include "pnx/nn/common.hpp"
#include "pnx/tensor.hpp"

namespace pnx::nn {

// Exact (erf-based) GELU.
struct Gelu {
    static Tensor forward(const Tensor& x) {
        Tensor y(x.shape());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = gelu(x[i]);
        return y;
    }
    static Tensor backward(const Tensor& gy, const Tensor& x) {
        Tensor gx(x.shape());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.numel(); ++i) gx[i] = gy[i] * gelu_grad(x[i]);
        return gx;
    }
};

struct Relu {
    static Tensor forward(const Tensor& x) {
        Tensor y(x.shape());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
        return y;
    }
    static Tensor backward(const Tensor& gy, const Tensor& x) {
        Tensor gx(x.shape());
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.numel(); ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
        return gx;
    }
};

// Per-channel learned residual scaling, y = gamma_c * x. The tiny init keeps
// fresh residual branches close to identity.
class LayerScale {
  public:
    LayerScale() = default;
    LayerScale(const std::string& prefix, int64_t ch, double init = 1e-6) : ch_(ch) {
        gamma_ = Parameter(prefix + ".gamma", {ch});
        gamma_.value.fill(init);
    }

    Tensor forward(const Tensor& x) const {
        const int64_t N = x.dim(0), HW = x.dim(2) * x.dim(3);
        Tensor y(x.shape());
#pragma omp parallel for schedule(static)
        for (int64_t nc = 0; nc < N * ch_; ++nc) {
            const double g = gamma_.value[nc % ch_];
            const double* xp = x.data() + nc * HW;
            double* yp = y.data() + nc * HW;
            for (int64_t p = 0; p < HW; ++p) yp[p] = g * xp[p];
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Tensor& x) {
        const int64_t N = x.dim(0), HW = x.dim(2) * x.dim(3);
        gamma_.ensure_grad();
        Tensor gx(x.shape());
        for (int64_t c = 0; c < ch_; ++c) {
            double dg = 0.0;
            const double g = gamma_.value[c];
            for (int64_t n = 0; n < N; ++n) {
                const double* xp = x.data() + (n * ch_ + c) * HW;
                const double* gp = gy.data() + (n * ch_ + c) * HW;
                double* gxp = gx.data() + (n * ch_ + c) * HW;
                for (int64_t p = 0; p < HW; ++p) {
                    dg += gp[p] * xp[p];
                    gxp[p] = g * gp[p];
                }
            }
            gamma_.grad[c] += dg;
        }
        return gx;
    }

    void collect(ParamRefs& ps) { ps.push_back(&gamma_); }

  private:
    int64_t ch_ = 0;
    Parameter gamma_;
};

}  // namespace pnx::nn
