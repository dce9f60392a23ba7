#pragma once

#include <string>
#include <utility>
#include <vector>

namespace abcsmc {

struct PlotSeries {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
};

// Self-contained 800x600 SVG line chart; series colours come from a stable
// hash of the label.
std::string render_line_chart(const PlotSpec& spec,
                              const std::vector<PlotSeries>& series);

std::string series_colour(const std::string& label);

}  // namespace abcsmc
