#include "tumls/background_filter.hpp"

#include <algorithm>
#include <cmath>

#include "tumls/error.hpp"
#include "tumls/parallel.hpp"

namespace tumls::background {

void FilterConfig::validate() const {
    if (!(min_saturation_mean >= 0.0 && min_saturation_mean <= 1.0))
        throw ConfigError("filter.min_saturation_mean must lie in [0,1]");
    if (!(max_brightness_mean >= 0.0 && max_brightness_mean <= 255.0))
        throw ConfigError("filter.max_brightness_mean must lie in [0,255]");
    if (!(min_gray_std >= 0.0 && min_gray_std <= 255.0))
        throw ConfigError("filter.min_gray_std must lie in [0,255]");
}

PatchStats patch_stats(const cv::Mat& rgb) {
    CV_Assert(rgb.type() == CV_8UC3);
    double sat = 0.0, sum = 0.0, sum_sq = 0.0;
    const double n = static_cast<double>(rgb.total());
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            const auto& p = row[x];
            const int mx = std::max({p[0], p[1], p[2]});
            const int mn = std::min({p[0], p[1], p[2]});
            sat += mx == 0 ? 0.0 : static_cast<double>(mx - mn) / mx;
            const double g = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            sum += g;
            sum_sq += g * g;
        }
    }
    PatchStats s;
    s.saturation_mean = sat / n;
    s.gray_mean = sum / n;
    s.gray_std = std::sqrt(std::max(0.0, sum_sq / n - s.gray_mean * s.gray_mean));
    return s;
}

bool is_tissue(const cv::Mat& rgb, const FilterConfig& cfg) {
    const PatchStats s = patch_stats(rgb);
    const bool pale_and_bright =
        s.saturation_mean < cfg.min_saturation_mean && s.gray_mean > cfg.max_brightness_mean;
    const bool flat = s.gray_std < cfg.min_gray_std;
    return !(pale_and_bright || flat);
}

FilterResult filter_patchset(const std::vector<pyramid::Patch>& patches, const FilterConfig& cfg) {
    cfg.validate();
    std::vector<char> verdict(patches.size(), 0);
    parallel_for(patches.size(), [&](std::size_t i) { verdict[i] = is_tissue(patches[i].pixels, cfg); });

    FilterResult r;
    for (std::size_t i = 0; i < patches.size(); ++i)
        (verdict[i] ? r.kept : r.rejected).push_back(patches[i]);
    r.stats = {{"total", patches.size()},
               {"kept", r.kept.size()},
               {"rejected", r.rejected.size()},
               {"thresholds", to_json(cfg)}};
    return r;
}

nlohmann::json to_json(const FilterConfig& cfg) {
    return {{"min_saturation_mean", cfg.min_saturation_mean},
            {"max_brightness_mean", cfg.max_brightness_mean},
            {"min_gray_std", cfg.min_gray_std}};
}

FilterConfig filter_config_from_json(const nlohmann::json& j) {
    FilterConfig c;
    c.min_saturation_mean = j.value("min_saturation_mean", c.min_saturation_mean);
    c.max_brightness_mean = j.value("max_brightness_mean", c.max_brightness_mean);
    c.min_gray_std = j.value("min_gray_std", c.min_gray_std);
    c.validate();
    return c;
}

}  // namespace tumls::background
