#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "pnx/errors.hpp"
#include "pnx/textfmt.hpp"

namespace pnx::plot {

// One panel: mean line, shaded lo..hi band, a circle at the best x.
struct Panel {
    std::string title;
    std::vector<double> x, mean, lo, hi;
    double best_x = 0.0;
};

namespace detail {

inline std::string num(double v) { return textfmt::fixed(v, 2); }

struct Scale {
    double x0, x1, y0, y1;  // data ranges
    double px, py, pw, ph;  // pixel viewport
    double sx(double v) const { return px + (v - x0) / (x1 - x0) * pw; }
    double sy(double v) const { return py + ph - (v - y0) / (y1 - y0) * ph; }
};

inline void render_panel(std::string& svg, const Panel& p, double ox, double oy,
                         double w, double h) {
    const double ml = 46, mr = 12, mt = 26, mb = 30;  // margins
    Scale sc;
    sc.px = ox + ml;
    sc.py = oy + mt;
    sc.pw = w - ml - mr;
    sc.ph = h - mt - mb;
    sc.x0 = *std::min_element(p.x.begin(), p.x.end());
    sc.x1 = *std::max_element(p.x.begin(), p.x.end());
    if (sc.x1 == sc.x0) {
        sc.x0 -= 0.5;
        sc.x1 += 0.5;
    }
    double ymin = *std::min_element(p.lo.begin(), p.lo.end());
    double ymax = *std::max_element(p.hi.begin(), p.hi.end());
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad = 0.08 * (ymax - ymin);
    sc.y0 = ymin - pad;
    sc.y1 = ymax + pad;

    svg += "<g>\n";
    svg += "<text x=\"" + num(ox + w / 2) + "\" y=\"" + num(oy + 16) +
           "\" text-anchor=\"middle\" font-size=\"13\" font-weight=\"bold\">" +
           p.title + "</text>\n";
    // axes
    svg += "<line x1=\"" + num(sc.px) + "\" y1=\"" + num(sc.py + sc.ph) +
           "\" x2=\"" + num(sc.px + sc.pw) + "\" y2=\"" + num(sc.py + sc.ph) +
           "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + num(sc.px) + "\" y1=\"" + num(sc.py) + "\" x2=\"" +
           num(sc.px) + "\" y2=\"" + num(sc.py + sc.ph) +
           "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
    // x ticks at the data points themselves
    for (double xv : p.x) {
        svg += "<line x1=\"" + num(sc.sx(xv)) + "\" y1=\"" + num(sc.py + sc.ph) +
               "\" x2=\"" + num(sc.sx(xv)) + "\" y2=\"" + num(sc.py + sc.ph + 4) +
               "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + num(sc.sx(xv)) + "\" y=\"" + num(sc.py + sc.ph + 16) +
               "\" text-anchor=\"middle\" font-size=\"10\">" +
               textfmt::fixed(xv, 0) + "</text>\n";
    }
    // y ticks: lo, mid, hi
    for (double t : {sc.y0 + pad, (sc.y0 + sc.y1) / 2, sc.y1 - pad}) {
        svg += "<line x1=\"" + num(sc.px - 4) + "\" y1=\"" + num(sc.sy(t)) +
               "\" x2=\"" + num(sc.px) + "\" y2=\"" + num(sc.sy(t)) +
               "\" stroke=\"#333\"/>\n";
        svg += "<text x=\"" + num(sc.px - 6) + "\" y=\"" + num(sc.sy(t) + 3) +
               "\" text-anchor=\"end\" font-size=\"10\">" + textfmt::fixed(t, 3) +
               "</text>\n";
    }
    // min-max band
    if (p.x.size() > 1) {
        std::string pts;
        for (size_t i = 0; i < p.x.size(); ++i)
            pts += num(sc.sx(p.x[i])) + "," + num(sc.sy(p.lo[i])) + " ";
        for (size_t i = p.x.size(); i-- > 0;)
            pts += num(sc.sx(p.x[i])) + "," + num(sc.sy(p.hi[i])) + " ";
        svg += "<polygon points=\"" + pts +
               "\" fill=\"#4a7fb5\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
    } else {
        svg += "<line x1=\"" + num(sc.sx(p.x[0])) + "\" y1=\"" +
               num(sc.sy(p.lo[0])) + "\" x2=\"" + num(sc.sx(p.x[0])) + "\" y2=\"" +
               num(sc.sy(p.hi[0])) +
               "\" stroke=\"#4a7fb5\" stroke-opacity=\"0.5\" stroke-width=\"6\"/>\n";
    }
    // mean line + markers
    std::string pts;
    for (size_t i = 0; i < p.x.size(); ++i)
        pts += num(sc.sx(p.x[i])) + "," + num(sc.sy(p.mean[i])) + " ";
    svg += "<polyline points=\"" + pts +
           "\" fill=\"none\" stroke=\"#1f4e79\" stroke-width=\"1.5\"/>\n";
    for (size_t i = 0; i < p.x.size(); ++i)
        svg += "<circle cx=\"" + num(sc.sx(p.x[i])) + "\" cy=\"" +
               num(sc.sy(p.mean[i])) + "\" r=\"2.5\" fill=\"#1f4e79\"/>\n";
    // best marker: open black circle around the winning point
    for (size_t i = 0; i < p.x.size(); ++i)
        if (p.x[i] == p.best_x)
            svg += "<circle cx=\"" + num(sc.sx(p.x[i])) + "\" cy=\"" +
                   num(sc.sy(p.mean[i])) +
                   "\" r=\"6\" fill=\"none\" stroke=\"#000\" stroke-width=\"1.5\"/>\n";
    svg += "</g>\n";
}

}  // namespace detail

// Grid of panels, two per row.
inline std::string render_panels(const std::vector<Panel>& panels) {
    const double pw = 380, ph = 260;
    const int cols = 2;
    const int rows = (static_cast<int>(panels.size()) + cols - 1) / cols;
    const double W = pw * cols, H = ph * rows;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      detail::num(W) + "\" height=\"" + detail::num(H) +
                      "\" font-family=\"sans-serif\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (size_t i = 0; i < panels.size(); ++i) {
        const double ox = static_cast<double>(i % cols) * pw;
        const double oy = static_cast<double>(i / cols) * ph;
        detail::render_panel(svg, panels[i], ox, oy, pw, ph);
    }
    svg += "</svg>\n";
    return svg;
}

inline void write_svg(const std::vector<Panel>& panels, const std::string& path) {
    for (const auto& p : panels) {
        check(!p.x.empty() && p.x.size() == p.mean.size() &&
                  p.x.size() == p.lo.size() && p.x.size() == p.hi.size(),
              "plot: inconsistent series lengths");
    }
    std::ofstream f(path);
    if (!f) throw DataError("plot: cannot write " + path);
    f << render_panels(panels);
}

}  // namespace pnx::plot
