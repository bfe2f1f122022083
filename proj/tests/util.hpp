#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <opencv2/core.hpp>

namespace test {

inline cv::Mat random_rgb(int w, int h, std::uint64_t seed) {
    cv::Mat m(h, w, CV_8UC3);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto it = m.begin<cv::Vec3b>(); it != m.end<cv::Vec3b>(); ++it)
        for (int c = 0; c < 3; ++c) (*it)[c] = static_cast<uchar>(d(rng));
    return m;
}

inline cv::Mat random_gray(int w, int h, std::uint64_t seed, int lo = 0, int hi = 255) {
    cv::Mat m(h, w, CV_8UC1);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(lo, hi);
    for (auto it = m.begin<uchar>(); it != m.end<uchar>(); ++it) *it = static_cast<uchar>(d(rng));
    return m;
}

inline bool equal(const cv::Mat& a, const cv::Mat& b) {
    if (a.size() != b.size() || a.type() != b.type()) return false;
    cv::Mat diff;
    cv::absdiff(a, b, diff);
    return cv::countNonZero(diff.reshape(1)) == 0;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("tumls_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Filled disk of value 255 on a zero background.
inline cv::Mat disk_image(cv::Size size, cv::Point2d c, double r) {
    cv::Mat m(size, CV_8UC1, cv::Scalar(0));
    for (int y = 0; y < size.height; ++y)
        for (int x = 0; x < size.width; ++x)
            if ((x - c.x) * (x - c.x) + (y - c.y) * (y - c.y) <= r * r) m.at<uchar>(y, x) = 255;
    return m;
}

}  // namespace test
