#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "pnx/data.hpp"
#include "pnx/errors.hpp"
#include "pnx/image_io.hpp"
#include "pnx/rng.hpp"
#include "pnx/tensor.hpp"

namespace pnx::data {

struct SynthSpec {
    std::string out_dir;
    int64_t train_clips = 8;
    int64_t easy_clips = 2;
    int64_t hard_clips = 2;
    int64_t frames_per_clip = 10;
    int64_t size = 256;
    uint64_t seed = 0;
    bool force = false;
};

namespace synth_detail {

// Wobbled-ellipse "polyp": radius 1 + amp*sin(3*phi + phase) in normalized
// elliptic coordinates. The mask and the rendering share this exact test, so
// ground truth is pixel-perfect by construction.
struct PolypShape {
    double cx = 0, cy = 0;    // center, pixels
    double a = 1, b = 1;      // semi-axes, pixels
    double theta = 0;         // orientation, radians
    double wob_amp = 0;       // radial wobble amplitude
    double wob_phase = 0;

    bool inside(double x, double y, double* rho_out = nullptr,
                double* phi_out = nullptr) const {
        const double dx = x - cx, dy = y - cy;
        const double u = dx * std::cos(theta) + dy * std::sin(theta);
        const double v = -dx * std::sin(theta) + dy * std::cos(theta);
        const double eu = u / a, ev = v / b;
        const double rho = std::sqrt(eu * eu + ev * ev);
        const double phi = std::atan2(ev, eu);
        if (rho_out) *rho_out = rho;
        if (phi_out) *phi_out = phi;
        return rho <= 1.0 + wob_amp * std::sin(3.0 * phi + wob_phase);
    }
};

// Stateless per-pixel noise (SplitMix64 finalizer) so backgrounds do not
// consume stream draws in raster order.
inline double pixel_noise(uint64_t clip, uint64_t x, uint64_t y, uint64_t ch) {
    uint64_t z = clip * 0x9e3779b97f4a7c15ULL + (x << 32) + (y << 8) + ch;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;  // [0,1)
}

struct ClipPlan {
    std::vector<PolypShape> shapes;        // one per frame
    std::set<std::string> attributes;
    // per-clip appearance
    double bg_r, bg_g, bg_b;
    double poly_r, poly_g, poly_b;
    double tex_fx, tex_fy, tex_phase;
    // occluder bar (OCC) / instrument (SI) geometry
    double occ_width = 0;
    std::vector<double> occ_x;             // per frame
};

inline ClipPlan plan_clip(int64_t clip_index, const std::set<std::string>& attrs,
                          int64_t frames, int64_t S, RandomStream& rs) {
    ClipPlan plan;
    plan.attributes = attrs;
    const double Sd = static_cast<double>(S);
    const bool so = attrs.count("SO"), lo = attrs.count("LO"), fm = attrs.count("FM"),
               sv = attrs.count("SV"), ov = attrs.count("OV");

    double a0, b0;
    if (so) {
        a0 = 0.07 * Sd * rs.uniform(0.9, 1.05);
        b0 = 0.05 * Sd * rs.uniform(0.9, 1.05);
    } else if (lo) {
        a0 = 0.28 * Sd * rs.uniform(1.0, 1.08);
        b0 = 0.22 * Sd * rs.uniform(1.0, 1.08);
    } else {
        a0 = 0.16 * Sd * rs.uniform(0.85, 1.15);
        b0 = 0.12 * Sd * rs.uniform(0.85, 1.15);
    }
    const double wob = rs.uniform(0.04, 0.10);
    const double scale_max = sv ? 1.45 : 1.0;
    // Keep the whole polyp inside the frame (except OV, which hugs an edge).
    const double margin = std::min(0.45 * Sd, a0 * (1.0 + wob) * scale_max + 2.0);

    double cx = rs.uniform(margin, Sd - margin);
    double cy = rs.uniform(margin, Sd - margin);
    if (ov) cx = rs.uniform(-0.3, 0.2) * a0;  // straddle the left edge
    double theta = rs.uniform(0.0, M_PI);
    double phase = rs.uniform(0.0, 2.0 * M_PI);

    // Smooth drift for ordinary clips; fresh large jumps for FM.
    double vx = 0, vy = 0;
    if (!fm) {
        const double speed = rs.uniform(1.5, 4.0);
        const double dir = rs.uniform(0.0, 2.0 * M_PI);
        vx = speed * std::cos(dir);
        vy = speed * std::sin(dir);
    }
    const double sv_phase = rs.uniform(0.0, 2.0 * M_PI);

    for (int64_t t = 0; t < frames; ++t) {
        PolypShape sh;
        const double scale =
            sv ? 1.025 + 0.425 * std::sin(2.0 * M_PI * t / std::max<int64_t>(frames, 2) +
                                          sv_phase)
               : 1.0;
        sh.a = a0 * scale;
        sh.b = b0 * scale;
        sh.cx = cx;
        sh.cy = cy;
        sh.theta = theta;
        sh.wob_amp = wob;
        sh.wob_phase = phase;
        plan.shapes.push_back(sh);

        if (fm) {
            // jump 22..28 px; bounce off margins so the displacement
            // magnitude survives exactly (> 20 px per frame)
            const double mag = rs.uniform(22.0, 28.0);
            const double dir = rs.uniform(0.0, 2.0 * M_PI);
            double jx = mag * std::cos(dir), jy = mag * std::sin(dir);
            if (cx + jx < margin || cx + jx > Sd - margin) jx = -jx;
            if (cy + jy < margin || cy + jy > Sd - margin) jy = -jy;
            cx += jx;
            cy += jy;
        } else {
            double nx = cx + vx, ny = cy + vy;
            if (!ov && (nx < margin || nx > Sd - margin)) vx = -vx;
            if (ny < margin || ny > Sd - margin) vy = -vy;
            if (ov) {
                cx += 0.2 * vx;  // slow horizontal slide along the edge
                cy += vy;
            } else {
                cx += vx;
                cy += vy;
            }
        }
        theta += rs.uniform(-0.05, 0.05);
        phase += rs.uniform(-0.15, 0.15);
    }

    plan.bg_r = rs.uniform(140.0, 175.0);
    plan.bg_g = rs.uniform(85.0, 110.0);
    plan.bg_b = rs.uniform(75.0, 100.0);
    plan.poly_r = rs.uniform(185.0, 215.0);
    plan.poly_g = rs.uniform(105.0, 135.0);
    plan.poly_b = rs.uniform(95.0, 125.0);
    plan.tex_fx = rs.uniform(0.01, 0.04);
    plan.tex_fy = rs.uniform(0.01, 0.04);
    plan.tex_phase = rs.uniform(0.0, 2.0 * M_PI);

    if (attrs.count("OCC")) {
        plan.occ_width = 0.10 * Sd;
        const double start = rs.uniform(0.05, 0.25) * Sd;
        const double step = (0.9 * Sd - plan.occ_width - start) /
                            std::max<double>(1.0, static_cast<double>(frames - 1));
        for (int64_t t = 0; t < frames; ++t)
            plan.occ_x.push_back(start + step * static_cast<double>(t));
    }
    return plan;
}

inline void render_frame(const ClipPlan& plan, int64_t clip_index, int64_t t,
                         int64_t S, Tensor& rgb, Tensor& mask) {
    const double Sd = static_cast<double>(S);
    const PolypShape& sh = plan.shapes[static_cast<size_t>(t)];
    const bool gh = plan.attributes.count("GH"), ib = plan.attributes.count("IB"),
               ho = plan.attributes.count("HO"), si = plan.attributes.count("SI");
    const bool occ = !plan.occ_x.empty();
    const double cx0 = Sd / 2.0, cy0 = Sd / 2.0;
    const double dmax2 = cx0 * cx0 + cy0 * cy0;

    for (int64_t y = 0; y < S; ++y) {
        for (int64_t x = 0; x < S; ++x) {
            const double fx = static_cast<double>(x), fy = static_cast<double>(y);
            // mucosa background: tinted waves + static grain + vignette
            const double wave =
                18.0 * std::sin(2.0 * M_PI * (plan.tex_fx * fx + plan.tex_fy * fy) +
                                plan.tex_phase + 0.15 * static_cast<double>(t));
            double r = plan.bg_r + wave +
                       14.0 * (pixel_noise(clip_index, x, y, 0) - 0.5);
            double g = plan.bg_g + 0.7 * wave +
                       12.0 * (pixel_noise(clip_index, x, y, 1) - 0.5);
            double b = plan.bg_b + 0.5 * wave +
                       12.0 * (pixel_noise(clip_index, x, y, 2) - 0.5);
            const double dx = fx - cx0, dy = fy - cy0;
            const double vig = 1.0 - 0.35 * (dx * dx + dy * dy) / dmax2;
            r *= vig;
            g *= vig;
            b *= vig;

            double rho, phi;
            const bool in = sh.inside(fx, fy, &rho, &phi);
            mask[y * S + x] = in ? 1.0 : 0.0;
            if (in) {
                const double shade = 1.0 - 0.30 * rho * rho;
                double pr = plan.poly_r * shade, pg = plan.poly_g * shade,
                       pb = plan.poly_b * shade;
                if (ho) {
                    // heterogeneous surface: three angular sectors, distinct tint
                    const int sector =
                        static_cast<int>(std::floor((phi + M_PI) / (2.0 * M_PI / 3.0))) % 3;
                    if (sector == 0) pr = std::min(pr + 30.0, 255.0);
                    if (sector == 1) pg = std::min(pg + 26.0, 255.0);
                    if (sector == 2) {
                        pr *= 0.8;
                        pg *= 0.9;
                    }
                }
                // specular highlight near the shifted apex
                const double hl = std::exp(-8.0 * ((rho - 0.25) * (rho - 0.25)));
                pr += 28.0 * hl;
                pg += 24.0 * hl;
                pb += 22.0 * hl;
                if (ib) {
                    // indefinite boundary: heavy blend toward the mucosa
                    const double alpha = 0.35;
                    pr = alpha * pr + (1.0 - alpha) * r;
                    pg = alpha * pg + (1.0 - alpha) * g;
                    pb = alpha * pb + (1.0 - alpha) * b;
                }
                r = pr;
                g = pg;
                b = pb;
            } else if (gh && rho < 1.35) {
                // ghost fringe just outside the polyp: channel-split halo
                const double w = (1.35 - rho) / 0.35;
                r = std::min(r + 35.0 * w, 255.0);
                b = std::min(b + 25.0 * w, 255.0);
            }

            if (si) {
                // instrument shaft from the bottom-right corner
                const double ox = Sd - 1.0 - fx, oy = Sd - 1.0 - fy;
                const double along = (ox + oy) * 0.5;
                const double across = std::abs(ox - oy) * 0.5;
                if (along < 0.38 * Sd && across < 0.045 * Sd) {
                    const double metal = 120.0 + 60.0 * pixel_noise(clip_index, x, y, 3);
                    r = metal;
                    g = metal;
                    b = metal + 10.0;
                }
            }
            if (occ) {
                const double ox = plan.occ_x[static_cast<size_t>(t)];
                if (fx >= ox && fx < ox + plan.occ_width) {
                    const double stripe =
                        35.0 + 20.0 * std::sin(0.9 * fy + 0.3 * static_cast<double>(t));
                    r = stripe;
                    g = stripe + 4.0;
                    b = stripe + 8.0;
                }
            }

            rgb[(0 * S + y) * S + x] = r;
            rgb[(1 * S + y) * S + x] = g;
            rgb[(2 * S + y) * S + x] = b;
        }
    }
}

inline const std::vector<std::set<std::string>>& attribute_plans() {
    static const std::vector<std::set<std::string>> plans = {
        {},      {"SO"}, {"LO"}, {"FM"}, {"GH", "OCC"},
        {"IB"},  {"HO"}, {"SI"}, {"SV"}, {"OV"},
    };
    return plans;
}

}  // namespace synth_detail

// Writes a synthetic dataset tree in the standard clip layout:
//   <out>/<split>/<clip>/Frame/%05d.jpg, .../GT/%05d.png, <out>/manifest.json
// Deterministic for a fixed spec; re-running with --force rebuilds from
// scratch so trees stay byte-identical.
inline void synthesize_dataset(const SynthSpec& spec) {
    namespace fs = std::filesystem;
    if (spec.size < 64)
        throw UsageError("synth: size must be >= 64 (got " +
                         std::to_string(spec.size) + ")");
    if (spec.frames_per_clip < 1) throw UsageError("synth: frames must be >= 1");
    if (spec.train_clips < 1) throw UsageError("synth: need at least one train clip");
    if (spec.easy_clips < 0 || spec.hard_clips < 0)
        throw UsageError("synth: clip counts must be non-negative");

    const fs::path root(spec.out_dir);
    if (fs::exists(root) && !fs::is_empty(root)) {
        if (!spec.force)
            throw UsageError("synth: output directory " + spec.out_dir +
                             " is not empty (pass --force to rebuild)");
        fs::remove_all(root);
    }
    fs::create_directories(root);

    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    const int64_t total = spec.train_clips + spec.easy_clips + spec.hard_clips;
    for (int64_t i = 0; i < total; ++i) {
        Split split = Split::train;
        if (i >= spec.train_clips + spec.easy_clips)
            split = Split::hard_unseen;
        else if (i >= spec.train_clips)
            split = Split::easy_unseen;

        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "c%04lld", static_cast<long long>(i + 1));
        const std::string clip_id(idbuf);
        std::snprintf(idbuf, sizeof idbuf, "p%04lld", static_cast<long long>(i + 1));
        const std::string case_id(idbuf);

        const auto& attrs = synth_detail::attribute_plans()[static_cast<size_t>(
            i % static_cast<int64_t>(synth_detail::attribute_plans().size()))];
        RandomStream rs = RandomStream::named(spec.seed, "synth/" + clip_id);
        auto plan = synth_detail::plan_clip(i, attrs, spec.frames_per_clip,
                                            spec.size, rs);

        const fs::path clip_dir = root / split_name(split) / clip_id;
        fs::create_directories(clip_dir / "Frame");
        fs::create_directories(clip_dir / "GT");
        Tensor rgb({3, spec.size, spec.size});
        Tensor mask({spec.size, spec.size});
        for (int64_t t = 0; t < spec.frames_per_clip; ++t) {
            synth_detail::render_frame(plan, i, t, spec.size, rgb, mask);
            char fbuf[32];
            std::snprintf(fbuf, sizeof fbuf, "%05lld", static_cast<long long>(t));
            write_jpeg((clip_dir / "Frame" / (std::string(fbuf) + ".jpg")).string(), rgb);
            write_mask_png((clip_dir / "GT" / (std::string(fbuf) + ".png")).string(), mask);
        }

        nlohmann::ordered_json entry;
        entry["clip_id"] = clip_id;
        entry["case_id"] = case_id;
        entry["split"] = split_name(split);
        entry["attributes"] = std::vector<std::string>(attrs.begin(), attrs.end());
        manifest.push_back(entry);
    }
    std::ofstream mf(root / "manifest.json");
    if (!mf) throw DataError("synth: cannot write manifest");
    mf << manifest.dump(2) << "\n";
}

}  // namespace pnx::data
