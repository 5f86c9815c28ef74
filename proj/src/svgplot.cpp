#include "svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pxf {

namespace {

const char* const kPalette[] = {"#1f6fb2", "#d1495b", "#3a7d44", "#b8860b", "#6a4c93", "#444444"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct Range {
    double lo = 0.0, hi = 1.0;
};

Range span_of(const std::vector<PlotSeries>& series, bool use_x) {
    bool any = false;
    Range r{0.0, 1.0};
    for (const PlotSeries& s : series) {
        const std::vector<double>& v = use_x ? s.x : s.y;
        for (double val : v) {
            if (!std::isfinite(val)) continue;
            if (!any) {
                r.lo = r.hi = val;
                any = true;
            } else {
                r.lo = std::min(r.lo, val);
                r.hi = std::max(r.hi, val);
            }
        }
    }
    if (!any) return {0.0, 1.0};
    if (r.hi == r.lo) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    return r;
}

}  // namespace

std::string render_svg_lines(const std::vector<PlotSeries>& series, const std::string& title,
                             const std::string& x_label, const std::string& y_label, int width, int height) {
    for (const PlotSeries& s : series) {
        if (s.x.size() != s.y.size()) throw std::invalid_argument("plot: series '" + s.label + "' has mismatched x/y");
    }
    const double ml = 64, mr = 16, mt = 36, mb = 48;  // margins
    const double pw = width - ml - mr, ph = height - mt - mb;
    const Range xr = span_of(series, true), yr = span_of(series, false);
    auto px = [&](double x) { return ml + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return mt + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"14\">" << title << "</text>\n";

    // axes
    out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml) << "\" y2=\"" << fmt(mt + ph)
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(ml + pw) << "\" y2=\""
        << fmt(mt + ph) << "\" stroke=\"black\"/>\n";

    // ticks: five per axis
    for (int i = 0; i <= 4; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        out << "<line x1=\"" << fmt(px(fx)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(px(fx)) << "\" y2=\""
            << fmt(mt + ph + 5) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(px(fx)) << "\" y=\"" << fmt(mt + ph + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fx) << "</text>\n";
        out << "<line x1=\"" << fmt(ml - 5) << "\" y1=\"" << fmt(py(fy)) << "\" x2=\"" << fmt(ml) << "\" y2=\""
            << fmt(py(fy)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(ml - 8) << "\" y=\"" << fmt(py(fy) + 3)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fmt(fy) << "</text>\n";
    }
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(height - 10.0)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << x_label << "</text>\n";
    out << "<text x=\"14\" y=\"" << fmt(mt + ph / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\" transform=\"rotate(-90 14 " << fmt(mt + ph / 2) << ")\">" << y_label << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = kPalette[si % kPaletteSize];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (i) out << " ";
            out << fmt(px(s.x[i])) << "," << fmt(py(s.y[i]));
        }
        out << "\"/>\n";
        const double ly = mt + 14 + 14 * static_cast<double>(si);
        out << "<line x1=\"" << fmt(ml + pw - 120) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(ml + pw - 100)
            << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        out << "<text x=\"" << fmt(ml + pw - 94) << "\" y=\"" << fmt(ly)
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

void write_svg_lines(const std::string& path, const std::vector<PlotSeries>& series, const std::string& title,
                     const std::string& x_label, const std::string& y_label, int width, int height) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("plot: cannot open for write: " + path);
    out << render_svg_lines(series, title, x_label, y_label, width, height);
    if (!out) throw std::runtime_error("plot: write failed: " + path);
}

}  // namespace pxf
