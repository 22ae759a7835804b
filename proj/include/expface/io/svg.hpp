#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "expface/error.hpp"
#include "expface/io/csv.hpp"

namespace expface::io {

struct SvgSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string svg_num(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Single-panel SVG 1.1 chart: a frame, min/max axis labels and one polyline
/// per series. Non-finite points are skipped.
inline std::string render_svg(const std::string& title, const std::string& x_label,
                              const std::vector<SvgSeries>& series) {
    constexpr double width = 640, height = 400, margin = 50;
    double x_lo = HUGE_VAL, x_hi = -HUGE_VAL, y_lo = HUGE_VAL, y_hi = -HUGE_VAL;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (!(x_lo <= x_hi)) x_lo = 0, x_hi = 1, y_lo = 0, y_hi = 1;
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) y_hi = y_lo + 1;
    auto px = [&](double x) { return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin); };
    auto py = [&](double y) {
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin);
    };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
       << "\" height=\"" << height << "\">\n"
       << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin
       << "\" height=\"" << height - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n"
       << "<text x=\"" << width / 2 << "\" y=\"30\" text-anchor=\"middle\">"
       << detail::svg_escape(title) << "</text>\n"
       << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
       << detail::svg_escape(x_label) << "</text>\n"
       << "<text x=\"" << margin << "\" y=\"" << height - margin + 15
       << "\" text-anchor=\"middle\">" << format_short(x_lo) << "</text>\n"
       << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 15
       << "\" text-anchor=\"middle\">" << format_short(x_hi) << "</text>\n"
       << "<text x=\"" << margin - 5 << "\" y=\"" << height - margin
       << "\" text-anchor=\"end\">" << format_short(y_lo) << "</text>\n"
       << "<text x=\"" << margin - 5 << "\" y=\"" << margin + 5 << "\" text-anchor=\"end\">"
       << format_short(y_hi) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = colors[k % std::size(colors)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        bool first = true;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!first) os << ' ';
            os << detail::svg_num(px(s.x[i])) << ',' << detail::svg_num(py(s.y[i]));
            first = false;
        }
        os << "\"/>\n";
        os << "<text x=\"" << width - margin + 5 << "\" y=\"" << margin + 15 * (k + 1)
           << "\" fill=\"" << color << "\" font-size=\"10\">" << detail::svg_escape(s.name)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace expface::io
