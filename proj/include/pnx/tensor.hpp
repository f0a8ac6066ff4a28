#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pnx/errors.hpp"

namespace pnx {

// Dense row-major tensor of doubles with value semantics. All network
// activations, parameters and masks use this one type; layout metadata
// (which axis is batch, frames, channels...) is carried by the call site.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(compute_numel(shape_)), 0.0);
    }

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check(static_cast<int64_t>(data_.size()) == compute_numel(shape_),
              "tensor data size does not match shape");
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t ndim() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Same storage, new shape; element count must be preserved.
    Tensor reshaped(std::vector<int64_t> shape) const& {
        Tensor t = *this;
        t.set_shape(std::move(shape));
        return t;
    }
    Tensor reshaped(std::vector<int64_t> shape) && {
        set_shape(std::move(shape));
        return std::move(*this);
    }

    void zero() { std::fill(data_.begin(), data_.end(), 0.0); }
    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& other) {
        check(other.numel() == numel(), "add_: size mismatch");
        const double* o = other.data();
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o[i];
    }

    void scale_(double s) {
        for (double& v : data_) v *= s;
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    double abs_max() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

private:
    static int64_t compute_numel(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            check(d >= 0, "negative tensor dimension");
            n *= d;
        }
        return n;
    }

    void set_shape(std::vector<int64_t> shape) {
        check(compute_numel(shape) == numel(), "reshape changes element count");
        shape_ = std::move(shape);
    }

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    check(a.numel() == b.numel(), "max_abs_diff: size mismatch");
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

// Shape helpers for the B x F x C x H x W exchange format.

// B,F,C,H,W -> (B*F),C,H,W. Pure reshape: storage is row-major.
inline Tensor flatten_clip(Tensor x) {
    check(x.ndim() == 5, "flatten_clip expects a 5-axis tensor");
    auto s = x.shape();
    return std::move(x).reshaped({s[0] * s[1], s[2], s[3], s[4]});
}

// (B*F),C,H,W -> B,F,C,H,W.
inline Tensor unflatten_clip(Tensor x, int64_t batch, int64_t frames) {
    check(x.ndim() == 4, "unflatten_clip expects a 4-axis tensor");
    check(x.dim(0) == batch * frames, "unflatten_clip: leading axis is not B*F");
    auto s = x.shape();
    return std::move(x).reshaped({batch, frames, s[1], s[2], s[3]});
}

}  // namespace pnx
