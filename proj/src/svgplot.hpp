#pragma once

// Minimal hand-rolled SVG line plots: axes, tick labels, one polyline per
// series, and a legend. Output is deterministic text, so rerenders are
// byte-identical.

#include <string>
#include <vector>

namespace pxf {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;  // same length as x
};

std::string render_svg_lines(const std::vector<PlotSeries>& series, const std::string& title,
                             const std::string& x_label, const std::string& y_label, int width = 720,
                             int height = 440);

void write_svg_lines(const std::string& path, const std::vector<PlotSeries>& series, const std::string& title,
                     const std::string& x_label, const std::string& y_label, int width = 720, int height = 440);

}  // namespace pxf
