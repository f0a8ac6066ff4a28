#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pnx {

// 64-bit FNV-1a, used to derive independent named substreams from one seed.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Deterministic random stream (SplitMix64 core). Unlike the standard
// library distributions, every draw here is bit-reproducible across
// platforms and compilers, which the replicability contract relies on.
class RandomStream {
public:
    explicit RandomStream(uint64_t seed) : state_(seed) {}

    // Independent substream: same (seed, name) always yields the same
    // stream, and distinct names decorrelate even for equal seeds.
    static RandomStream named(uint64_t seed, std::string_view name) {
        uint64_t s = seed * 0x9e3779b97f4a7c15ull + fnv1a64(name);
        RandomStream r(s);
        r.next_u64();  // discard one output to decouple from the raw seed
        return r;
    }

    RandomStream substream(std::string_view name) const {
        return named(state_, name);
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; the pair is drawn eagerly so the stream advances by a
    // fixed amount per call.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Normal truncated to mean +/- 2*stddev via rejection.
    double trunc_normal(double mean, double stddev) {
        double v = normal();
        while (std::abs(v) > 2.0) v = normal();
        return mean + stddev * v;
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(0, i);
            std::swap(v[i], v[static_cast<size_t>(j)]);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace pnx
