#include "scp/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace scp::plot {
namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// Roughly five "nice" tick values covering [lo, hi].
std::vector<double> nice_ticks(double lo, double hi) {
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        step = m * mag;
        if (span / step <= 6.0) break;
    }
    std::vector<double> ticks;
    for (double t = std::ceil(lo / step) * step; t <= hi + step * 1e-9; t += step) ticks.push_back(t);
    return ticks;
}

}  // namespace

std::vector<double> smooth(const std::vector<double>& values, int window) {
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum += values[i];
        if (i >= static_cast<std::size_t>(window)) sum -= values[i - window];
        out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, window));
    }
    return out;
}

std::string line_chart(const std::vector<Series>& series, const ChartOptions& o) {
    const double left = 70, right = 160, top = 40, bottom = 50;
    const double pw = o.width - left - right, ph = o.height - top - bottom;

    auto ty = [&](double y) { return o.log_y ? std::log10(y) : y; };
    auto usable = [&](double x, double y) { return std::isfinite(x) && std::isfinite(y) && (!o.log_y || y > 0); };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };
    auto py_raw = [&](double v) { return top + (1.0 - (v - y0) / (y1 - y0)) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(o.title)
        << "</text>\n";
    svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (double t : nice_ticks(x0, x1)) {
        svg << "<line x1=\"" << px(t) << "\" y1=\"" << top + ph << "\" x2=\"" << px(t) << "\" y2=\"" << top + ph + 5
            << "\" stroke=\"#333\"/><text x=\"" << px(t) << "\" y=\"" << top + ph + 18
            << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
    }
    for (double t : nice_ticks(y0, y1)) {
        const double label = o.log_y ? std::pow(10.0, t) : t;
        svg << "<line x1=\"" << left - 5 << "\" y1=\"" << py_raw(t) << "\" x2=\"" << left + pw << "\" y2=\""
            << py_raw(t) << "\" stroke=\"#ddd\"/><text x=\"" << left - 8 << "\" y=\"" << py_raw(t) + 4
            << "\" text-anchor=\"end\">" << num(label) << "</text>\n";
    }
    svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << o.height - 10 << "\" text-anchor=\"middle\">"
        << escape(o.x_label) << "</text>\n";
    svg << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(o.y_label) << "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        std::ostringstream pts;
        for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
            if (!usable(s.x[i], s.y[i])) continue;
            pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
            if (o.markers) {
                svg << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << color
                    << "\"/>\n";
            }
        }
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts.str()
            << "\"/>\n";
        const double ly = top + 14 + 18 * static_cast<double>(si);
        svg << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 32 << "\" y2=\""
            << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << left + pw + 38
            << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace scp::plot
