#pragma once

#include "reprobe/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace reprobe {

// One polyline; band, when present, shades y +/- band[i].
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> band;
};

struct ChartOptions {
    int width = 720;
    int height = 460;
    std::string title;
    std::string x_label;
    std::string y_label;
};

namespace detail {

inline std::string svg_num(double v, int precision = 2) {
    if (!std::isfinite(v)) return "0";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    if (ec != std::errc{}) return "0";
    return std::string(buf, end);
}

inline std::string tick_num(double v) {
    if (!std::isfinite(v)) return "0";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 4);
    if (ec != std::errc{}) return "0";
    return std::string(buf, end);
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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

inline const std::vector<std::string>& palette() {
    static const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c",
                                                    "#9467bd", "#ff7f0e", "#8c564b"};
    return colors;
}

} // namespace detail

// Deterministic line chart: no timestamps, fixed ordering, fixed palette, so
// equal inputs produce byte-identical SVG text.
inline std::string render_line_chart(std::span<const Series> series, const ChartOptions& opts = {}) {
    if (series.empty()) {
        throw std::invalid_argument("render_line_chart: no series");
    }
    const std::size_t points = series.front().x.size();
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) {
            throw std::invalid_argument("render_line_chart: series '" + s.label + "' x/y mismatch");
        }
        if (!s.band.empty() && s.band.size() != s.y.size()) {
            throw std::invalid_argument("render_line_chart: series '" + s.label + "' band mismatch");
        }
        if (s.x.size() != points) {
            throw std::invalid_argument("render_line_chart: mismatched series lengths");
        }
        if (s.x.empty()) {
            throw std::invalid_argument("render_line_chart: empty series");
        }
    }

    double x_min = series[0].x[0], x_max = x_min;
    double y_min = 0.0, y_max = 0.0;
    bool y_init = false;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            const double band = s.band.empty() ? 0.0 : s.band[i];
            const double lo = s.y[i] - band, hi = s.y[i] + band;
            if (!y_init) {
                y_min = lo;
                y_max = hi;
                y_init = true;
            } else {
                y_min = std::min(y_min, lo);
                y_max = std::max(y_max, hi);
            }
        }
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) y_max = y_min + 1.0;
    const double y_pad = (y_max - y_min) * 0.05;
    y_min -= y_pad;
    y_max += y_pad;

    const double margin_left = 64, margin_right = 24, margin_top = 40, margin_bottom = 48;
    const double plot_w = opts.width - margin_left - margin_right;
    const double plot_h = opts.height - margin_top - margin_bottom;
    auto px = [&](double x) { return margin_left + (x - x_min) / (x_max - x_min) * plot_w; };
    auto py = [&](double y) { return margin_top + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opts.width) +
           "\" height=\"" + std::to_string(opts.height) + "\" viewBox=\"0 0 " +
           std::to_string(opts.width) + " " + std::to_string(opts.height) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opts.title.empty()) {
        out += "<text x=\"" + detail::svg_num(opts.width / 2.0) +
               "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
               detail::xml_escape(opts.title) + "</text>\n";
    }

    // axes + ticks
    out += "<g stroke=\"#333333\" stroke-width=\"1\">\n";
    out += "<line x1=\"" + detail::svg_num(margin_left) + "\" y1=\"" + detail::svg_num(margin_top) +
           "\" x2=\"" + detail::svg_num(margin_left) + "\" y2=\"" +
           detail::svg_num(margin_top + plot_h) + "\"/>\n";
    out += "<line x1=\"" + detail::svg_num(margin_left) + "\" y1=\"" +
           detail::svg_num(margin_top + plot_h) + "\" x2=\"" + detail::svg_num(margin_left + plot_w) +
           "\" y2=\"" + detail::svg_num(margin_top + plot_h) + "\"/>\n";
    out += "</g>\n";

    const int ticks = 5;
    out += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
    for (int t = 0; t <= ticks; ++t) {
        const double fx = x_min + (x_max - x_min) * t / ticks;
        const double fy = y_min + (y_max - y_min) * t / ticks;
        out += "<text x=\"" + detail::svg_num(px(fx)) + "\" y=\"" +
               detail::svg_num(margin_top + plot_h + 16) + "\" text-anchor=\"middle\">" +
               detail::tick_num(fx) + "</text>\n";
        out += "<text x=\"" + detail::svg_num(margin_left - 6) + "\" y=\"" +
               detail::svg_num(py(fy) + 4) + "\" text-anchor=\"end\">" + detail::tick_num(fy) +
               "</text>\n";
    }
    if (!opts.x_label.empty()) {
        out += "<text x=\"" + detail::svg_num(margin_left + plot_w / 2) + "\" y=\"" +
               detail::svg_num(opts.height - 10.0) + "\" text-anchor=\"middle\">" +
               detail::xml_escape(opts.x_label) + "</text>\n";
    }
    if (!opts.y_label.empty()) {
        out += "<text x=\"14\" y=\"" + detail::svg_num(margin_top + plot_h / 2) +
               "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
               detail::svg_num(margin_top + plot_h / 2) + ")\">" + detail::xml_escape(opts.y_label) +
               "</text>\n";
    }
    out += "</g>\n";

    // bands under the lines
    for (std::size_t s = 0; s < series.size(); ++s) {
        if (series[s].band.empty()) continue;
        const auto& color = detail::palette()[s % detail::palette().size()];
        out += "<polygon fill=\"" + color + "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
        for (std::size_t i = 0; i < points; ++i) {
            out += detail::svg_num(px(series[s].x[i])) + "," +
                   detail::svg_num(py(series[s].y[i] + series[s].band[i])) + " ";
        }
        for (std::size_t i = points; i-- > 0;) {
            out += detail::svg_num(px(series[s].x[i])) + "," +
                   detail::svg_num(py(series[s].y[i] - series[s].band[i])) + " ";
        }
        out += "\"/>\n";
    }

    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& color = detail::palette()[s % detail::palette().size()];
        out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < points; ++i) {
            out += detail::svg_num(px(series[s].x[i])) + "," + detail::svg_num(py(series[s].y[i]));
            if (i + 1 < points) out += " ";
        }
        out += "\"/>\n";
    }

    // legend, input order
    out += "<g font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const double ly = margin_top + 8 + 18.0 * static_cast<double>(s);
        const auto& color = detail::palette()[s % detail::palette().size()];
        out += "<rect x=\"" + detail::svg_num(margin_left + plot_w - 150) + "\" y=\"" +
               detail::svg_num(ly - 9) + "\" width=\"12\" height=\"12\" fill=\"" + color + "\"/>\n";
        out += "<text x=\"" + detail::svg_num(margin_left + plot_w - 132) + "\" y=\"" +
               detail::svg_num(ly + 1) + "\">" + detail::xml_escape(series[s].label) + "</text>\n";
    }
    out += "</g>\n</svg>\n";
    return out;
}

} // namespace reprobe
