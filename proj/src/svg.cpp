#include "mvgamlss/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mvgamlss/errors.hpp"

namespace mvgamlss {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;
constexpr const char* kColors[] = {"#1b4f72", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#7f8c8d"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_svg(const LinePlot& plot) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (double x : plot.x) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
    }
    for (const auto& s : plot.series) {
        for (double y : s.y) {
            if (!std::isfinite(y)) continue;
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (!(xmax > xmin)) xmax = xmin + 1.0;
    if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
    if (!(ymax > ymin)) ymin -= 0.5, ymax += 0.5;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto sx = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
    auto sy = [&](double y) { return kTop + (ymax - y) / (ymax - ymin) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(plot.title) << "</text>\n";
    o << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double xv = xmin + (xmax - xmin) * t / 4.0;
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        o << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(kTop + ph + 18) << "\" text-anchor=\"middle\">"
          << label(xv) << "</text>\n";
        o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(sy(yv) + 4) << "\" text-anchor=\"end\">" << label(yv)
          << "</text>\n";
        o << "<line x1=\"" << num(kLeft) << "\" x2=\"" << num(kLeft + pw) << "\" y1=\"" << num(sy(yv)) << "\" y2=\""
          << num(sy(yv)) << "\" stroke=\"#e5e5e5\"/>\n";
    }
    o << "<text x=\"" << num(kLeft + pw / 2) << "\" y=\"" << num(kHeight - 10) << "\" text-anchor=\"middle\">"
      << escape(plot.x_label) << "</text>\n";
    if (!plot.y_label.empty()) {
        o << "<text transform=\"translate(16," << num(kTop + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
          << escape(plot.y_label) << "</text>\n";
    }
    for (std::size_t k = 0; k < plot.series.size(); ++k) {
        const auto& s = plot.series[k];
        const char* color = kColors[k % std::size(kColors)];
        std::string points;
        auto flush = [&] {
            if (points.empty()) return;
            o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\""
              << (s.dashed ? " stroke-dasharray=\"5,4\"" : "") << " points=\"" << points << "\"/>\n";
            points.clear();
        };
        for (std::size_t i = 0; i < std::min(s.y.size(), plot.x.size()); ++i) {
            if (!std::isfinite(s.y[i])) {
                flush();
                continue;
            }
            points += num(sx(plot.x[i])) + "," + num(sy(s.y[i])) + " ";
        }
        flush();
        const double ly = kTop + 14.0 + 18.0 * static_cast<double>(k);
        o << "<line x1=\"" << num(kLeft + pw + 10) << "\" x2=\"" << num(kLeft + pw + 34) << "\" y1=\"" << num(ly)
          << "\" y2=\"" << num(ly) << "\" stroke=\"" << color << "\" stroke-width=\"1.8\""
          << (s.dashed ? " stroke-dasharray=\"5,4\"" : "") << "/>\n";
        o << "<text x=\"" << num(kLeft + pw + 40) << "\" y=\"" << num(ly + 4) << "\">" << escape(s.name)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

void write_svg(const LinePlot& plot, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path.string() + "'");
    out << render_svg(plot);
}

}  // namespace mvgamlss
