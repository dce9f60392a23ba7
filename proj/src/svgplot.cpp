#include "abcsmc/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "abcsmc/error.hpp"

namespace abcsmc {

namespace {

constexpr double width = 800, height = 600;
constexpr double margin_left = 80, margin_right = 170, margin_top = 50,
                 margin_bottom = 60;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string series_colour(const std::string& label) {
    const std::uint64_t h = fnv1a(label);
    const int hue = static_cast<int>(h % 360);
    const int sat = 55 + static_cast<int>((h >> 16) % 30);
    const int light = 30 + static_cast<int>((h >> 32) % 25);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "hsl(%d,%d%%,%d%%)", hue, sat, light);
    return buf;
}

std::string render_line_chart(const PlotSpec& spec,
                              const std::vector<PlotSeries>& series) {
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    auto usable = [&](double v, bool log_axis) {
        return std::isfinite(v) && (!log_axis || v > 0.0);
    };
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!usable(x, spec.log_x) || !usable(y, spec.log_y)) continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (!std::isfinite(xmin) || !std::isfinite(ymin))
        throw Error("empty-group", "no plottable points");
    auto tx = [&](double v) { return spec.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return spec.log_y ? std::log10(v) : v; };
    double x0 = tx(xmin), x1 = tx(xmax), y0 = ty(ymin), y1 = ty(ymax);
    if (x1 - x0 < 1e-12) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;

    auto px = [&](double v) {
        return margin_left +
               (tx(v) - x0) / (x1 - x0) * (width - margin_left - margin_right);
    };
    auto py = [&](double v) {
        return height - margin_bottom -
               (ty(v) - y0) / (y1 - y0) * (height - margin_top - margin_bottom);
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
    out << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
    out << "<text x=\"400\" y=\"28\" text-anchor=\"middle\" font-size=\"18\" "
           "font-family=\"sans-serif\">"
        << spec.title << "</text>\n";
    // axes
    out << "<line x1=\"" << margin_left << "\" y1=\"" << height - margin_bottom
        << "\" x2=\"" << width - margin_right << "\" y2=\""
        << height - margin_bottom << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << margin_left << "\" y1=\"" << margin_top << "\" x2=\""
        << margin_left << "\" y2=\"" << height - margin_bottom
        << "\" stroke=\"black\"/>\n";
    // ticks (5 per axis, in data units)
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0;
        const double vx = spec.log_x ? std::pow(10.0, fx) : fx;
        const double posx = px(vx);
        out << "<line x1=\"" << posx << "\" y1=\"" << height - margin_bottom
            << "\" x2=\"" << posx << "\" y2=\"" << height - margin_bottom + 5
            << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << posx << "\" y=\"" << height - margin_bottom + 20
            << "\" text-anchor=\"middle\" font-size=\"11\" "
               "font-family=\"sans-serif\">"
            << fmt(vx) << "</text>\n";
        const double fy = y0 + (y1 - y0) * i / 4.0;
        const double vy = spec.log_y ? std::pow(10.0, fy) : fy;
        const double posy = py(vy);
        out << "<line x1=\"" << margin_left - 5 << "\" y1=\"" << posy
            << "\" x2=\"" << margin_left << "\" y2=\"" << posy
            << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << margin_left - 8 << "\" y=\"" << posy + 4
            << "\" text-anchor=\"end\" font-size=\"11\" "
               "font-family=\"sans-serif\">"
            << fmt(vy) << "</text>\n";
    }
    out << "<text x=\"" << (margin_left + width - margin_right) / 2 << "\" y=\""
        << height - 15
        << "\" text-anchor=\"middle\" font-size=\"13\" "
           "font-family=\"sans-serif\">"
        << spec.x_label << "</text>\n";
    out << "<text x=\"20\" y=\"" << (margin_top + height - margin_bottom) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" "
           "font-family=\"sans-serif\" transform=\"rotate(-90 20 "
        << (margin_top + height - margin_bottom) / 2 << ")\">" << spec.y_label
        << "</text>\n";

    double legend_y = margin_top + 10;
    for (const auto& s : series) {
        const std::string colour = series_colour(s.label);
        std::ostringstream pts;
        for (const auto& [x, y] : s.points) {
            if (!usable(x, spec.log_x) || !usable(y, spec.log_y)) continue;
            pts << fmt(px(x)) << ',' << fmt(py(y)) << ' ';
        }
        out << "<polyline fill=\"none\" stroke=\"" << colour
            << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
        out << "<line x1=\"" << width - margin_right + 10 << "\" y1=\""
            << legend_y << "\" x2=\"" << width - margin_right + 30 << "\" y2=\""
            << legend_y << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << width - margin_right + 35 << "\" y=\""
            << legend_y + 4
            << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label
            << "</text>\n";
        legend_y += 18;
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace abcsmc
