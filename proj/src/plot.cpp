#include "tumls/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <opencv2/imgproc.hpp>

namespace tumls::plot {

cv::Scalar palette(int i) {
    static const cv::Scalar colors[] = {{31, 119, 180},  {255, 127, 14}, {44, 160, 44},  {214, 39, 40},
                                        {148, 103, 189}, {140, 86, 75},  {227, 119, 194}, {127, 127, 127},
                                        {188, 189, 34},  {23, 190, 207}};
    return colors[((i % 10) + 10) % 10];
}

void text(cv::Mat& img, const std::string& s, cv::Point origin, double scale, cv::Scalar color) {
    cv::putText(img, s, origin, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

cv::Mat bar_chart(const std::string& title, const std::vector<std::string>& categories,
                  const std::vector<Series>& series, double y_min, double y_max) {
    const int left = 60, right = 170, top = 40, bottom = 110;
    const int group_w = std::max(40, 14 * static_cast<int>(series.size()) + 16);
    const int plot_w = std::max(240, group_w * static_cast<int>(categories.size()));
    const int plot_h = 260;
    cv::Mat img(top + plot_h + bottom, left + plot_w + right, CV_8UC3, cv::Scalar(255, 255, 255));
    text(img, title, {left, 24}, 0.6);

    const cv::Point origin(left, top + plot_h);
    auto y_of = [&](double v) {
        const double t = (std::clamp(v, y_min, y_max) - y_min) / (y_max - y_min);
        return origin.y - static_cast<int>(std::lround(t * plot_h));
    };
    for (int i = 0; i <= 4; ++i) {
        const double v = y_min + (y_max - y_min) * i / 4.0;
        const int y = y_of(v);
        cv::line(img, {left, y}, {left + plot_w, y}, cv::Scalar(225, 225, 225), 1);
        text(img, fmt(v), {8, y + 4}, 0.4);
    }
    cv::line(img, origin, {left, top}, cv::Scalar(0, 0, 0), 1);
    cv::line(img, origin, {left + plot_w, origin.y}, cv::Scalar(0, 0, 0), 1);

    const int slot = plot_w / std::max<int>(1, static_cast<int>(categories.size()));
    const int bar_w = std::max(4, (slot - 12) / std::max<int>(1, static_cast<int>(series.size())));
    for (std::size_t c = 0; c < categories.size(); ++c) {
        const int x0 = left + static_cast<int>(c) * slot + 6;
        for (std::size_t s = 0; s < series.size(); ++s) {
            if (c >= series[s].values.size() || !std::isfinite(series[s].values[c])) continue;
            const int x = x0 + static_cast<int>(s) * bar_w;
            cv::rectangle(img, {x, y_of(series[s].values[c])}, {x + bar_w - 2, origin.y},
                          palette(static_cast<int>(s)), cv::FILLED);
        }
        // Rotated category label drawn onto a small canvas.
        cv::Mat label(16, bottom - 10, CV_8UC3, cv::Scalar(255, 255, 255));
        text(label, categories[c], {2, 12}, 0.4);
        cv::Mat rot;
        cv::rotate(label, rot, cv::ROTATE_90_COUNTERCLOCKWISE);
        const int lx = x0 + slot / 2 - 8;
        if (lx >= 0 && lx + rot.cols <= img.cols) rot.copyTo(img(cv::Rect(lx, origin.y + 6, rot.cols, rot.rows)));
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        const int y = top + 10 + static_cast<int>(s) * 20;
        const int x = left + plot_w + 16;
        cv::rectangle(img, {x, y - 10}, {x + 12, y + 2}, palette(static_cast<int>(s)), cv::FILLED);
        text(img, series[s].label, {x + 18, y}, 0.45);
    }
    return img;
}

cv::Mat pie_chart(const std::string& title, const std::vector<std::string>& labels,
                  const std::vector<double>& fractions) {
    cv::Mat img(320, 480, CV_8UC3, cv::Scalar(255, 255, 255));
    text(img, title, {16, 24}, 0.6);
    const cv::Point center(150, 175);
    const int radius = 115;
    double start = -90.0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double sweep = 360.0 * fractions[i];
        cv::ellipse(img, center, {radius, radius}, 0.0, start, start + sweep, palette(static_cast<int>(i)),
                    cv::FILLED, cv::LINE_AA);
        start += sweep;
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = 70 + static_cast<int>(i) * 24;
        cv::rectangle(img, {300, y - 12}, {314, y + 2}, palette(static_cast<int>(i)), cv::FILLED);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * (i < fractions.size() ? fractions[i] : 0.0));
        text(img, labels[i] + "  " + buf, {320, y}, 0.45);
    }
    return img;
}

cv::Mat grid(const std::vector<std::vector<cv::Mat>>& rows, const std::vector<std::string>& captions, int tile) {
    const int caption_w = 110, pad = 6;
    std::size_t cols = 1;
    for (const auto& r : rows) cols = std::max(cols, r.size());
    const int w = caption_w + static_cast<int>(cols) * (tile + pad) + pad;
    const int h = static_cast<int>(rows.size()) * (tile + pad) + pad;
    cv::Mat img(std::max(h, 1), w, CV_8UC3, cv::Scalar(255, 255, 255));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int y = pad + static_cast<int>(r) * (tile + pad);
        if (r < captions.size()) text(img, captions[r], {6, y + tile / 2}, 0.45);
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            cv::Mat t;
            cv::resize(rows[r][c], t, {tile, tile}, 0, 0, cv::INTER_NEAREST);
            if (t.channels() == 1) cv::cvtColor(t, t, cv::COLOR_GRAY2RGB);
            t.copyTo(img(cv::Rect(caption_w + static_cast<int>(c) * (tile + pad), y, tile, tile)));
        }
    }
    return img;
}

}  // namespace tumls::plot
