#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "tumls/stain.hpp"

namespace tumls::nucleus {

enum class NoiseType { None, BlackRegion, GrayNoise, Both };
std::string to_string(NoiseType t);

struct DenoiseParams {
    int black_max_value = 40;        // HSV value (0-255) below which a pixel may be black noise
    double black_max_saturation = 0.15;
    double gray_max_saturation = 0.10;
    int gray_min_value = 90;
    int gray_max_value = 200;
    double min_region_fraction = 0.005;  // of patch area
    double max_noise_fraction = 0.90;    // beyond this the patch is rejected
};

struct DenoiseReport {
    NoiseType noise_type = NoiseType::None;
    double replaced_fraction = 0.0;
    cv::Mat black_mask;  // CV_8UC1 0/255
    cv::Mat gray_mask;   // CV_8UC1 0/255
    cv::Mat replaced_mask() const;
};

struct DenoiseResult {
    cv::Mat clean;  // CV_8UC3
    DenoiseReport report;
};

/// Replaces large black and gray-veil regions with the per-channel median of
/// the remaining pixels. Throws DataError("patch unusable") when almost the
/// whole patch is noise.
DenoiseResult denoise(const cv::Mat& rgb, const DenoiseParams& params = {});

using Histogram = std::array<std::uint64_t, 256>;

/// Three-class thresholds: class 0 = [0, t1], class 1 = (t1, t2],
/// class 2 = (t2, 255].
struct OtsuThresholds {
    int t1 = 0;
    int t2 = 0;
    double between_class_variance = 0.0;
};

Histogram histogram(const cv::Mat& gray);

/// sum_k n_k * (mu_k - mu)^2 / N, computed from integer class counts and
/// intensity sums. Empty classes contribute nothing.
double between_class_variance(std::uint64_t n0, std::uint64_t s0, std::uint64_t n1,
                              std::uint64_t s1, std::uint64_t n2, std::uint64_t s2);

/// Exhaustive search over 0 < t1 < t2 < 255; the lexicographically smallest
/// pair wins ties. Throws DataError("degenerate histogram") when fewer than
/// two gray levels are populated.
OtsuThresholds multi_otsu(const Histogram& hist);
OtsuThresholds multi_otsu(const cv::Mat& gray);

/// (1 - w) * luminance(normalized) + w * (255 - hema), rounded. CV_8UC1.
cv::Mat combine(const cv::Mat& normalized_rgb, const cv::Mat& hema, double weight = 0.5);

/// Class index 0/1/2 per pixel. CV_8UC1.
cv::Mat class_map(const cv::Mat& gray, const OtsuThresholds& t);

/// Renumbers the populated classes 0, 1, ... in order, so the darkest
/// populated class is always 0.
cv::Mat compact_classes(const cv::Mat& classes);

struct NucleusMask {
    cv::Mat binary;  // CV_8UC1 0/255
    cv::Mat labels;  // CV_32SC1, 0 = background, 8-connected components
    int variant = 0;
    int count = 0;
};

struct Component {
    int id = 0;
    int area = 0;
    double cx = 0.0;
    double cy = 0.0;
};

std::vector<Component> components(const NucleusMask& mask);
nlohmann::json component_table(const NucleusMask& mask);

struct MaskParams {
    int close_radius = 2;
    int open_radius = 2;
    int min_area = 30;
    double seed_min_separation = 5.0;
    double seed_min_distance = 3.0;
    int median_ksize = 5;
};

/// Disk structuring element: offsets with dx^2 + dy^2 <= r^2.
cv::Mat disk(int radius);

/// 8-connected labels of a 0/non-zero image; returns the component count.
int label_components(const cv::Mat& binary, cv::Mat& labels);

/// Drops 8-connected components smaller than min_area pixels.
cv::Mat remove_small(const cv::Mat& binary, int min_area);

NucleusMask make_mask(const cv::Mat& binary, int variant);

/// Closing then opening with disk elements.
cv::Mat close_open(const cv::Mat& binary, int close_radius, int open_radius);

NucleusMask mask_variant_1(const cv::Mat& classes, const MaskParams& p = {});
NucleusMask mask_variant_2(const cv::Mat& classes, const MaskParams& p = {});
NucleusMask mask_variant_3(const cv::Mat& classes, const MaskParams& p = {});

/// Splits touching blobs of a binary mask with a marker watershed on its
/// Euclidean distance transform.
NucleusMask demerge(const cv::Mat& binary, const MaskParams& p = {});

struct SegmentParams {
    DenoiseParams denoise;
    stain::StainParams stain;
    double combine_weight = 0.5;
    int min_dynamic_range = 10;  // flatter combined images yield no nuclei
    MaskParams mask;
};

nlohmann::json to_json(const SegmentParams& p);
SegmentParams segment_params_from_json(const nlohmann::json& j);

struct SegmentResult {
    std::array<NucleusMask, 3> masks;
    DenoiseReport denoise;
    std::optional<OtsuThresholds> thresholds;
    stain::StainResult stain;
    cv::Mat denoised;
    cv::Mat combined;
    cv::Mat classes;
    std::string note;
};

SegmentResult segment(const cv::Mat& rgb, const SegmentParams& params = {});

/// Writes mask_<v>.png, components_<v>.json and, with steps, the intermediates.
void save_segmentation(const std::filesystem::path& dir, const cv::Mat& rgb,
                       const SegmentResult& r, bool steps);

nlohmann::json to_json(const DenoiseReport& r);
nlohmann::json to_json(const OtsuThresholds& t);

}  // namespace tumls::nucleus
