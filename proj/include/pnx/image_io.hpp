#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/tensor.hpp"

namespace pnx::data {

// Reads an 8-bit RGB image, resizes (bilinear, at 8-bit precision so results
// are platform-stable), returns {3, H, W} scaled to [0, 1].
inline Tensor read_image(const std::string& path, int64_t H, int64_t W) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image " + path);
    if (bgr.rows != H || bgr.cols != W)
        cv::resize(bgr, bgr, cv::Size(static_cast<int>(W), static_cast<int>(H)), 0,
                   0, cv::INTER_LINEAR);
    Tensor out({3, H, W});
    for (int64_t i = 0; i < H; ++i) {
        const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(i));
        for (int64_t j = 0; j < W; ++j) {
            // BGR -> RGB
            out[(0 * H + i) * W + j] = row[j][2] / 255.0;
            out[(1 * H + i) * W + j] = row[j][1] / 255.0;
            out[(2 * H + i) * W + j] = row[j][0] / 255.0;
        }
    }
    return out;
}

// Reads a mask, resizes nearest-neighbor, thresholds at 127 to stay binary.
// Returns {1, H, W} with values in {0, 1}.
inline Tensor read_mask(const std::string& path, int64_t H, int64_t W) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read mask " + path);
    if (m.rows != H || m.cols != W)
        cv::resize(m, m, cv::Size(static_cast<int>(W), static_cast<int>(H)), 0, 0,
                   cv::INTER_NEAREST);
    Tensor out({1, H, W});
    for (int64_t i = 0; i < H; ++i) {
        const auto* row = m.ptr<uint8_t>(static_cast<int>(i));
        for (int64_t j = 0; j < W; ++j) out[i * W + j] = row[j] > 127 ? 1.0 : 0.0;
    }
    return out;
}

// rgb: {3, H, W} with byte values 0..255 (doubles). Fixed JPEG quality keeps
// synthetic trees byte-reproducible.
inline void write_jpeg(const std::string& path, const Tensor& rgb) {
    const int64_t H = rgb.dim(1), W = rgb.dim(2);
    cv::Mat bgr(static_cast<int>(H), static_cast<int>(W), CV_8UC3);
    for (int64_t i = 0; i < H; ++i) {
        auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(i));
        for (int64_t j = 0; j < W; ++j) {
            auto clamp8 = [](double v) {
                return static_cast<uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v + 0.5));
            };
            row[j][2] = clamp8(rgb[(0 * H + i) * W + j]);
            row[j][1] = clamp8(rgb[(1 * H + i) * W + j]);
            row[j][0] = clamp8(rgb[(2 * H + i) * W + j]);
        }
    }
    if (!cv::imwrite(path, bgr, {cv::IMWRITE_JPEG_QUALITY, 95}))
        throw DataError("cannot write image " + path);
}

// mask: {1, H, W} or {H, W} binary; written as 0/255 single-channel PNG.
inline void write_mask_png(const std::string& path, const Tensor& mask) {
    const int64_t W = mask.dim(mask.ndim() - 1);
    const int64_t H = mask.dim(mask.ndim() - 2);
    cv::Mat m(static_cast<int>(H), static_cast<int>(W), CV_8UC1);
    for (int64_t i = 0; i < H; ++i) {
        auto* row = m.ptr<uint8_t>(static_cast<int>(i));
        for (int64_t j = 0; j < W; ++j)
            row[j] = mask[i * W + j] > 0.5 ? 255 : 0;
    }
    if (!cv::imwrite(path, m)) throw DataError("cannot write mask " + path);
}

}  // namespace pnx::data
