#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "firmcast/error.hpp"
#include "firmcast/util.hpp"

namespace firmcast {

// Small deterministic SVG writer for the report plots. No styling knobs, just
// enough to mirror the line / CDF / grouped-bar layouts of the analyses.

struct SvgSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

namespace svg_detail {

inline const char* palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

struct Frame {
    double width = 640, height = 420;
    double left = 60, right = 20, top = 36, bottom = 46;
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

    double px(double x) const { return left + (x - x_min) / (x_max - x_min) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom); }
};

inline void open_svg(std::ostream& out, const Frame& f, const std::string& title) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
        << "font-family=\"sans-serif\">" << title << "</text>\n";
}

inline void axes(std::ostream& out, const Frame& f, const std::string& x_label, const std::string& y_label) {
    out << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\"" << f.width - f.right
        << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
        << f.height - f.bottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x_min + (f.x_max - f.x_min) * i / 4.0;
        const double yv = f.y_min + (f.y_max - f.y_min) * i / 4.0;
        out << "<text x=\"" << f.px(xv) << "\" y=\"" << f.height - f.bottom + 16
            << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" << format_short(xv)
            << "</text>\n";
        out << "<text x=\"" << f.left - 6 << "\" y=\"" << f.py(yv) + 3
            << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">" << format_short(yv)
            << "</text>\n";
    }
    out << "<text x=\"" << (f.left + f.width - f.right) / 2 << "\" y=\"" << f.height - 8
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << x_label << "</text>\n";
    out << "<text x=\"14\" y=\"" << (f.top + f.height - f.bottom) / 2
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\" transform=\"rotate(-90 14 "
        << (f.top + f.height - f.bottom) / 2 << ")\">" << y_label << "</text>\n";
}

inline void legend(std::ostream& out, const Frame& f, const std::vector<std::string>& labels) {
    double y = f.top + 6;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << "<rect x=\"" << f.width - f.right - 130 << "\" y=\"" << y - 8
            << "\" width=\"10\" height=\"10\" fill=\"" << palette(i) << "\"/>\n";
        out << "<text x=\"" << f.width - f.right - 115 << "\" y=\"" << y + 1
            << "\" font-size=\"10\" font-family=\"sans-serif\">" << labels[i] << "</text>\n";
        y += 14;
    }
}

} // namespace svg_detail

/// Multi-series line chart (MAE-vs-step, CDF curves, ...).
inline void write_line_chart(const std::filesystem::path& path, const std::string& title, const std::string& x_label,
                             const std::string& y_label, const std::vector<SvgSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write plot: " + path.string());

    svg_detail::Frame f;
    bool any = false;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!any) {
                f.x_min = f.x_max = x;
                f.y_min = f.y_max = y;
                any = true;
            }
            f.x_min = std::min(f.x_min, x);
            f.x_max = std::max(f.x_max, x);
            f.y_min = std::min(f.y_min, y);
            f.y_max = std::max(f.y_max, y);
        }
    if (!any) {
        f.x_min = 0;
        f.x_max = 1;
    }
    if (f.x_max == f.x_min) f.x_max = f.x_min + 1;
    if (f.y_max == f.y_min) f.y_max = f.y_min + 1;
    f.y_min = std::min(0.0, f.y_min);

    svg_detail::open_svg(out, f, title);
    svg_detail::axes(out, f, x_label, y_label);
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < series.size(); ++i) {
        labels.push_back(series[i].label);
        if (series[i].points.empty()) continue;
        out << "<polyline fill=\"none\" stroke=\"" << svg_detail::palette(i) << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : series[i].points) out << f.px(x) << "," << f.py(y) << " ";
        out << "\"/>\n";
    }
    svg_detail::legend(out, f, labels);
    out << "</svg>\n";
}

/// Grouped bar chart: one cluster per group label, one bar per series.
inline void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                            const std::vector<std::string>& groups, const std::vector<std::string>& series,
                            const std::vector<std::vector<double>>& values /* groups x series */,
                            const std::string& y_label) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write plot: " + path.string());

    svg_detail::Frame f;
    f.x_min = 0;
    f.x_max = static_cast<double>(groups.size());
    f.y_min = 0;
    f.y_max = 1e-12;
    for (const auto& row : values)
        for (double v : row) f.y_max = std::max(f.y_max, v);
    f.y_max *= 1.1;

    svg_detail::open_svg(out, f, title);
    svg_detail::axes(out, f, "", y_label);
    const double cluster = (f.width - f.left - f.right) / static_cast<double>(groups.size());
    const double bar = cluster * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t s = 0; s < series.size(); ++s) {
            const double v = values[g][s];
            const double x = f.left + cluster * static_cast<double>(g) + cluster * 0.1 + bar * static_cast<double>(s);
            const double y = f.py(v);
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar * 0.92 << "\" height=\""
                << (f.height - f.bottom) - y << "\" fill=\"" << svg_detail::palette(s) << "\"/>\n";
        }
        out << "<text x=\"" << f.left + cluster * (static_cast<double>(g) + 0.5) << "\" y=\""
            << f.height - f.bottom + 16 << "\" text-anchor=\"middle\" font-size=\"10\" "
            << "font-family=\"sans-serif\">" << groups[g] << "</text>\n";
    }
    svg_detail::legend(out, f, series);
    out << "</svg>\n";
}

/// Category-colored scatter (the 2-D representation plot).
inline void write_scatter(const std::filesystem::path& path, const std::string& title,
                          const std::vector<std::array<double, 2>>& points, const std::vector<std::string>& categories,
                          const std::string& x_label, const std::string& y_label) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write plot: " + path.string());
    if (points.size() != categories.size()) throw ConfigError("write_scatter: point/category size mismatch");

    std::vector<std::string> labels;
    for (const auto& c : categories)
        if (std::find(labels.begin(), labels.end(), c) == labels.end()) labels.push_back(c);

    svg_detail::Frame f;
    bool any = false;
    for (const auto& p : points) {
        if (!any) {
            f.x_min = f.x_max = p[0];
            f.y_min = f.y_max = p[1];
            any = true;
        }
        f.x_min = std::min(f.x_min, p[0]);
        f.x_max = std::max(f.x_max, p[0]);
        f.y_min = std::min(f.y_min, p[1]);
        f.y_max = std::max(f.y_max, p[1]);
    }
    if (!any || f.x_max == f.x_min) f.x_max = f.x_min + 1;
    if (!any || f.y_max == f.y_min) f.y_max = f.y_min + 1;

    svg_detail::open_svg(out, f, title);
    svg_detail::axes(out, f, x_label, y_label);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto cat = static_cast<std::size_t>(
            std::find(labels.begin(), labels.end(), categories[i]) - labels.begin());
        out << "<circle cx=\"" << f.px(points[i][0]) << "\" cy=\"" << f.py(points[i][1])
            << "\" r=\"2.5\" fill=\"" << svg_detail::palette(cat) << "\" fill-opacity=\"0.7\"/>\n";
    }
    svg_detail::legend(out, f, labels);
    out << "</svg>\n";
}

} // namespace firmcast
