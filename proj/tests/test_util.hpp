// Shared helpers for the test binaries: temp dirs, finite differences,
// tiny dataset fixtures.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pnx/data.hpp"
#include "pnx/synth.hpp"
#include "pnx/tensor.hpp"

namespace testutil {

// Unique scratch directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = (std::filesystem::temp_directory_path() /
                 ("pnxtest_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++)))
                    .string();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

// Central finite difference of `loss` w.r.t. one scalar location.
inline double numeric_grad(double& slot, const std::function<double()>& loss,
                           double h = 1e-5) {
    const double keep = slot;
    slot = keep + h;
    const double up = loss();
    slot = keep - h;
    const double dn = loss();
    slot = keep;
    return (up - dn) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

// Synthesizes a small dataset once per tag and returns its records.
inline std::vector<pnx::data::ClipRecord> synth_records(const std::string& root,
                                                        int64_t train_clips = 2,
                                                        int64_t frames = 6,
                                                        int64_t size = 64,
                                                        uint64_t seed = 7) {
    pnx::data::SynthSpec spec;
    spec.out_dir = root;
    spec.train_clips = train_clips;
    spec.easy_clips = 1;
    spec.hard_clips = 1;
    spec.frames_per_clip = frames;
    spec.size = size;
    spec.seed = seed;
    spec.force = true;
    pnx::data::synthesize_dataset(spec);
    return pnx::data::scan_dataset(root, root + "/manifest.json");
}

inline std::vector<pnx::data::ClipRecord> filter_split(
    const std::vector<pnx::data::ClipRecord>& records, pnx::data::Split s) {
    std::vector<pnx::data::ClipRecord> out;
    for (const auto& r : records)
        if (r.split == s) out.push_back(r);
    return out;
}

}  // namespace testutil
