#pragma once

#include <string>
#include <vector>

namespace scp::plot {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartOptions {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_y = false;
    bool markers = false;
    int width = 720;
    int height = 420;
};

// Static SVG line chart with axes, ticks and a legend. Non-finite points are skipped.
std::string line_chart(const std::vector<Series>& series, const ChartOptions& options);

// Moving average over a trailing window, for noisy per-iteration losses.
std::vector<double> smooth(const std::vector<double>& values, int window);

}  // namespace scp::plot
