#pragma once

#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace tumls::plot {

/// Distinct RGB colour for series/cluster index i.
cv::Scalar palette(int i);

struct Series {
    std::string label;
    std::vector<double> values;  // one per category
};

/// Grouped bar chart with y axis, tick labels, category labels and legend. RGB.
cv::Mat bar_chart(const std::string& title, const std::vector<std::string>& categories,
                  const std::vector<Series>& series, double y_min = 0.0, double y_max = 1.0);

/// Pie chart with a legend listing label and percentage. RGB.
cv::Mat pie_chart(const std::string& title, const std::vector<std::string>& labels,
                  const std::vector<double>& fractions);

/// Lays out equally sized tiles in rows with a caption to the left of each row.
cv::Mat grid(const std::vector<std::vector<cv::Mat>>& rows, const std::vector<std::string>& captions,
             int tile = 128);

void text(cv::Mat& img, const std::string& s, cv::Point origin, double scale = 0.45,
          cv::Scalar color = {20, 20, 20});

}  // namespace tumls::plot
