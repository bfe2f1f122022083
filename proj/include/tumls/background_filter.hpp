#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "tumls/pyramid.hpp"

namespace tumls::background {

struct FilterConfig {
    double min_saturation_mean = 0.07;  // [0,1]
    double max_brightness_mean = 220.0; // [0,255]
    double min_gray_std = 6.0;          // [0,255]

    void validate() const;
};

struct PatchStats {
    double saturation_mean = 0.0;
    double gray_mean = 0.0;
    double gray_std = 0.0;
};

PatchStats patch_stats(const cv::Mat& rgb);

/// Background when the patch is both pale and bright, or nearly flat.
bool is_tissue(const cv::Mat& rgb, const FilterConfig& cfg);

struct FilterResult {
    std::vector<pyramid::Patch> kept;
    std::vector<pyramid::Patch> rejected;
    nlohmann::json stats;
};

FilterResult filter_patchset(const std::vector<pyramid::Patch>& patches, const FilterConfig& cfg);

nlohmann::json to_json(const FilterConfig& cfg);
FilterConfig filter_config_from_json(const nlohmann::json& j);

}  // namespace tumls::background
