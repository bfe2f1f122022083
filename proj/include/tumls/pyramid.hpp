#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

namespace tumls::pyramid {

/// Multi-resolution RGB image. Level 0 is the finest; every following level
/// halves each axis (rounding up) and doubles the downsample factor.
struct ImagePyramid {
    std::vector<cv::Mat> levels;  // CV_8UC3, RGB channel order
    std::vector<int> downsample;
    std::string source_id;

    int num_levels() const { return static_cast<int>(levels.size()); }
};

/// A square patch on a level's patch grid. The pixel origin is grid * size,
/// which is the non-overlapping tiling used throughout the pipeline.
struct PatchAddress {
    int level = 0;
    int gx = 0;
    int gy = 0;
    int size = 0;

    bool operator==(const PatchAddress&) const = default;
    auto operator<=>(const PatchAddress&) const = default;
};

struct Patch {
    cv::Mat pixels;  // size x size, CV_8UC3 RGB
    PatchAddress address;
    std::string source_id;
};

cv::Mat read_rgb(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const cv::Mat& rgb);

ImagePyramid build_pyramid(const cv::Mat& rgb, int num_levels, std::string source_id = {});

/// Raster-order tiling of one level. Border tiles that would run past the
/// level edge are dropped. Grid coordinates are origin / stride.
std::vector<Patch> extract_patches(const ImagePyramid& pyr, int level, int size, int stride);

/// Maps an address onto the identical physical region at another level.
PatchAddress corresponding_region(const ImagePyramid& pyr, const PatchAddress& addr,
                                  int target_level);

/// Cuts the pixels an address refers to out of the pyramid.
cv::Mat crop(const ImagePyramid& pyr, const PatchAddress& addr);

std::string patch_file_name(const PatchAddress& addr);

void save_patchset(const std::filesystem::path& dir, const std::vector<Patch>& patches,
                   const nlohmann::json& params = nlohmann::json::object());
std::vector<Patch> load_patchset(const std::filesystem::path& dir);

/// Directory layout: manifest.json plus level_<i>.png per level.
void save_pyramid(const std::filesystem::path& dir, const ImagePyramid& pyr);
ImagePyramid load_pyramid(const std::filesystem::path& dir);

nlohmann::json to_json(const PatchAddress& addr);
PatchAddress address_from_json(const nlohmann::json& j);

}  // namespace tumls::pyramid
