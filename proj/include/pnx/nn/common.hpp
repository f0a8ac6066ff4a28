#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::nn {

// Named trainable tensor plus its gradient accumulator. Buffers (e.g.
// batch-norm running statistics) reuse the type with trainable=false.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // lazily allocated on first backward
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, std::vector<int64_t> shape, bool train = true)
        : name(std::move(n)), value(std::move(shape)), trainable(train) {}

    void ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    }
    void zero_grad() {
        if (grad.numel() > 0) grad.zero();
    }
    int64_t numel() const { return value.numel(); }
};

using ParamRefs = std::vector<Parameter*>;

inline int64_t total_params(const ParamRefs& ps) {
    int64_t n = 0;
    for (const Parameter* p : ps)
        if (p->trainable) n += p->numel();
    return n;
}

// Weight init flavours. Encoder-style layers use truncated normal 0.02,
// ReLU conv stacks use He fan-in scaling.
inline void init_trunc_normal(Tensor& w, RandomStream& rs, double std = 0.02) {
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rs.trunc_normal(0.0, std);
}

inline void init_he_normal(Tensor& w, RandomStream& rs, int64_t fan_in) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rs.normal(0.0, std);
}

enum class ConvInit { trunc_normal, he_normal };

// Scalar activations.
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

}  // namespace pnx::nn
