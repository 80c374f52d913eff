#pragma once

// Minimal self-contained SVG line plots.

#include <filesystem>
#include <string>
#include <vector>

namespace mvgamlss {

struct LineSeries {
    std::string name;
    std::vector<double> y;
    bool dashed = false;
};

struct LinePlot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<double> x;
    std::vector<LineSeries> series;
};

// Non-finite points break the line.
std::string render_svg(const LinePlot& plot);
void write_svg(const LinePlot& plot, const std::filesystem::path& path);

}  // namespace mvgamlss
