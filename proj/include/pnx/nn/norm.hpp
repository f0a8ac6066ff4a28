#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/nn/common.hpp"
#include "pnx/tensor.hpp"

namespace pnx::nn {

// Layer norm across the channel axis, applied independently at every spatial
// position of an NCHW tensor.
//   y = (x - mu) / sqrt(var + eps) * gamma + beta,   mu/var over C
class ChannelNorm {
  public:
    struct Cache {
        Tensor xhat;     // normalized activations, same shape as x
        Tensor inv_std;  // {N, H, W}
    };

    ChannelNorm() = default;
    ChannelNorm(const std::string& prefix, int64_t ch, double eps = 1e-6)
        : ch_(ch), eps_(eps) {
        gamma_ = Parameter(prefix + ".gamma", {ch});
        gamma_.value.fill(1.0);
        beta_ = Parameter(prefix + ".beta", {ch});
        beta_.value.zero();
    }

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const {
        check(x.ndim() == 4 && x.dim(1) == ch_, "channel_norm: bad input " + x.shape_str());
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t HW = H * W;
        Tensor y(x.shape());
        if (cache) {
            cache->xhat = Tensor(x.shape());
            cache->inv_std = Tensor({N, H, W});
        }
#pragma omp parallel for schedule(static)
        for (int64_t np = 0; np < N * HW; ++np) {
            const int64_t n = np / HW, p = np % HW;
            const double* xp = x.data() + n * ch_ * HW + p;
            double mu = 0.0;
            for (int64_t c = 0; c < ch_; ++c) mu += xp[c * HW];
            mu /= static_cast<double>(ch_);
            double var = 0.0;
            for (int64_t c = 0; c < ch_; ++c) {
                const double d = xp[c * HW] - mu;
                var += d * d;
            }
            var /= static_cast<double>(ch_);
            const double istd = 1.0 / std::sqrt(var + eps_);
            double* yp = y.data() + n * ch_ * HW + p;
            for (int64_t c = 0; c < ch_; ++c) {
                const double xh = (xp[c * HW] - mu) * istd;
                yp[c * HW] = xh * gamma_.value[c] + beta_.value[c];
                if (cache) cache->xhat.data()[n * ch_ * HW + c * HW + p] = xh;
            }
            if (cache) cache->inv_std[np] = istd;
        }
        return y;
    }

    Tensor backward(const Tensor& gy, const Cache& cache) {
        const int64_t N = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
        const int64_t HW = H * W;
        gamma_.ensure_grad();
        beta_.ensure_grad();
        Tensor gx(gy.shape());
        // dgamma/dbeta: reductions over every position, kept sequential in c-major
        // order so accumulation order is fixed.
        for (int64_t c = 0; c < ch_; ++c) {
            double dg = 0.0, db = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const double* gp = gy.data() + (n * ch_ + c) * HW;
                const double* xh = cache.xhat.data() + (n * ch_ + c) * HW;
                for (int64_t p = 0; p < HW; ++p) {
                    dg += gp[p] * xh[p];
                    db += gp[p];
                }
            }
            gamma_.grad[c] += dg;
            beta_.grad[c] += db;
        }
#pragma omp parallel for schedule(static)
        for (int64_t np = 0; np < N * HW; ++np) {
            const int64_t n = np / HW, p = np % HW;
            const double* gp = gy.data() + n * ch_ * HW + p;
            const double* xh = cache.xhat.data() + n * ch_ * HW + p;
            const double istd = cache.inv_std[np];
            // g = gy * gamma; dx = istd * (g - mean(g) - xhat * mean(g*xhat))
            double mg = 0.0, mgx = 0.0;
            for (int64_t c = 0; c < ch_; ++c) {
                const double g = gp[c * HW] * gamma_.value[c];
                mg += g;
                mgx += g * xh[c * HW];
            }
            mg /= static_cast<double>(ch_);
            mgx /= static_cast<double>(ch_);
            double* gxp = gx.data() + n * ch_ * HW + p;
            for (int64_t c = 0; c < ch_; ++c) {
                const double g = gp[c * HW] * gamma_.value[c];
                gxp[c * HW] = istd * (g - mg - xh[c * HW] * mgx);
            }
        }
        return gx;
    }

    void collect(ParamRefs& ps) {
        ps.push_back(&gamma_);
        ps.push_back(&beta_);
    }

  private:
    int64_t ch_ = 0;
    double eps_ = 1e-6;
    Parameter gamma_, beta_;
};

// Batch normalization over (N, H, W) per channel. Normalizes with the biased
// batch variance; running_var tracks the unbiased estimate. Running stats are
// buffers: saved in checkpoints, excluded from trainable-parameter counts.
class BatchNorm2d {
  public:
    struct Cache {
        Tensor xhat;
        std::vector<double> inv_std;  // per channel
    };

    BatchNorm2d() = default;
    BatchNorm2d(const std::string& prefix, int64_t ch, double eps = 1e-5,
                double momentum = 0.1)
        : ch_(ch), eps_(eps), momentum_(momentum) {
        gamma_ = Parameter(prefix + ".gamma", {ch});
        gamma_.value.fill(1.0);
        beta_ = Parameter(prefix + ".beta", {ch});
        beta_.value.zero();
        running_mean_ = Parameter(prefix + ".running_mean", {ch}, /*train=*/false);
        running_mean_.value.zero();
        running_var_ = Parameter(prefix + ".running_var", {ch}, /*train=*/false);
        running_var_.value.fill(1.0);
    }

    Tensor forward(const Tensor& x, bool training, Cache* cache = nullptr) {
        check(x.ndim() == 4 && x.dim(1) == ch_, "batch_norm: bad input " + x.shape_str());
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int64_t HW = H * W, M = N * HW;
        Tensor y(x.shape());
        if (training && cache) {
            cache->xhat = Tensor(x.shape());
            cache->inv_std.assign(static_cast<size_t>(ch_), 0.0);
        }
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < ch_; ++c) {
            double mu, istd;
            if (training) {
                double s = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const double* xp = x.data() + (n * ch_ + c) * HW;
                    for (int64_t p = 0; p < HW; ++p) s += xp[p];
                }
                mu = s / static_cast<double>(M);
                double v = 0.0;
                for (int64_t n = 0; n < N; ++n) {
                    const double* xp = x.data() + (n * ch_ + c) * HW;
                    for (int64_t p = 0; p < HW; ++p) {
                        const double d = xp[p] - mu;
                        v += d * d;
                    }
                }
                const double var = v / static_cast<double>(M);
                istd = 1.0 / std::sqrt(var + eps_);
                const double unbiased =
                    M > 1 ? v / static_cast<double>(M - 1) : var;
                running_mean_.value[c] =
                    (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mu;
                running_var_.value[c] =
                    (1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
                if (cache) cache->inv_std[static_cast<size_t>(c)] = istd;
            } else {
                mu = running_mean_.value[c];
                istd = 1.0 / std::sqrt(running_var_.value[c] + eps_);
            }
            const double g = gamma_.value[c], b = beta_.value[c];
            for (int64_t n = 0; n < N; ++n) {
                const double* xp = x.data() + (n * ch_ + c) * HW;
                double* yp = y.data() + (n * ch_ + c) * HW;
                double* xhp = (training && cache)
                                  ? cache->xhat.data() + (n * ch_ + c) * HW
                                  : nullptr;
                for (int64_t p = 0; p < HW; ++p) {
                    const double xh = (xp[p] - mu) * istd;
                    if (xhp) xhp[p] = xh;
                    yp[p] = xh * g + b;
                }
            }
        }
        return y;
    }

    // Training-mode backward (the batch statistics are functions of x).
    Tensor backward(const Tensor& gy, const Cache& cache) {
        const int64_t N = gy.dim(0), H = gy.dim(2), W = gy.dim(3);
        const int64_t HW = H * W, M = N * HW;
        gamma_.ensure_grad();
        beta_.ensure_grad();
        Tensor gx(gy.shape());
#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < ch_; ++c) {
            double sg = 0.0, sgx = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const double* gp = gy.data() + (n * ch_ + c) * HW;
                const double* xh = cache.xhat.data() + (n * ch_ + c) * HW;
                for (int64_t p = 0; p < HW; ++p) {
                    sg += gp[p];
                    sgx += gp[p] * xh[p];
                }
            }
            gamma_.grad[c] += sgx;
            beta_.grad[c] += sg;
            const double istd = cache.inv_std[static_cast<size_t>(c)];
            const double scale = gamma_.value[c] * istd / static_cast<double>(M);
            for (int64_t n = 0; n < N; ++n) {
                const double* gp = gy.data() + (n * ch_ + c) * HW;
                const double* xh = cache.xhat.data() + (n * ch_ + c) * HW;
                double* gxp = gx.data() + (n * ch_ + c) * HW;
                for (int64_t p = 0; p < HW; ++p)
                    gxp[p] = scale * (static_cast<double>(M) * gp[p] - sg -
                                      xh[p] * sgx);
            }
        }
        return gx;
    }

    void collect(ParamRefs& ps) {
        ps.push_back(&gamma_);
        ps.push_back(&beta_);
        ps.push_back(&running_mean_);
        ps.push_back(&running_var_);
    }

  private:
    int64_t ch_ = 0;
    double eps_ = 1e-5, momentum_ = 0.1;
    Parameter gamma_, beta_, running_mean_, running_var_;
};

}  // namespace pnx::nn
