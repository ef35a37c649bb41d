#pragma once

#include <string>
#include <vector>

namespace prorad {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Static SVG line chart (step-free polylines). `note` lands in an XML comment.
[[nodiscard]] std::string line_chart_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                         const std::vector<Series>& series, double xmax, double ymax,
                                         const std::string& note = {});

/// Horizontal bars, one per label, signed values around a zero axis.
[[nodiscard]] std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                                        const std::vector<double>& values, const std::string& note = {});

void write_text(const std::string& text, const std::string& path);

}  // namespace prorad
