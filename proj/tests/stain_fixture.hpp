#pragma once

#include <random>

#include <opencv2/core.hpp>

namespace test {

/// Concentration maps where a fifth of the pixels carry only hematoxylin,
/// a fifth only eosin and the rest a random mixture, so the angular extremes
/// of the OD cloud are the generating stains themselves. With `pure` off
/// every pixel is mixed, so no concentration sits at the clamp.
inline void stain_fields(int size, std::uint64_t seed, cv::Mat& h, cv::Mat& e, double scale = 1.0,
                         bool pure = true) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.2, 0.9);
    h.create(size, size, CV_64FC1);
    e.create(size, size, CV_64FC1);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const int kind = pure ? (y * size + x) % 5 : 4;
            double hv = u(rng), ev = u(rng) * 0.6;
            if (kind == 0) ev = 0.0;
            if (kind == 1) hv = 0.0;
            h.at<double>(y, x) = hv * scale;
            e.at<double>(y, x) = ev * scale;
        }
}

}  // namespace test
