#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "tumls/nucleus_seg.hpp"
#include "tumls/pyramid.hpp"

namespace tumls::features {

/// Normalized co-occurrence probabilities over `levels` quantized gray levels.
struct GLCM {
    int levels = 0;
    std::vector<double> p;  // row-major levels x levels, sums to 1

    double at(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

/// Symmetric co-occurrence matrix for offset (dx, dy); gray g maps to level
/// g * levels / 256.
GLCM glcm(const cv::Mat& gray, int dx = 1, int dy = 0, int levels = 32);

double contrast(const GLCM& g);
double homogeneity(const GLCM& g);

struct IntensityStats {
    std::optional<double> intensity;           // mean gray over nucleus pixels
    std::optional<double> staining_intensity;  // mean hematoxylin concentration over nucleus pixels
};

/// `conc` is the CV_64FC2 concentration map of the same patch.
IntensityStats intensity_stats(const cv::Mat& rgb, const nucleus::NucleusMask& mask, const cv::Mat& conc);

struct ComponentShape {
    int area = 0;
    double perimeter = 0.0;
    double circularity = 0.0;
    double eccentricity = 0.0;
    double cx = 0.0, cy = 0.0;
};

/// Per-component area, 8-connected contour perimeter (1 per axial step,
/// sqrt(2) per diagonal step), circularity 4*pi*A/P^2 and moment-ellipse
/// eccentricity.
std::vector<ComponentShape> component_shapes(const nucleus::NucleusMask& mask);

struct Morphology {
    int num_nuclei = 0;
    std::optional<double> size;  // mean component area
    std::optional<double> circularity;
    std::optional<double> eccentricity;
    double total_area = 0.0;
};

Morphology morphology(const nucleus::NucleusMask& mask);

double density(const nucleus::NucleusMask& mask);

/// Population std of all pairwise centroid distances; absent below 2 points.
std::optional<double> spread(const std::vector<cv::Point2d>& centroids);
std::optional<double> spread(const nucleus::NucleusMask& mask);

struct FeatureVector {
    pyramid::PatchAddress address;
    int cluster = -1;
    std::optional<double> contrast;
    std::optional<double> homogeneity;
    std::optional<double> intensity;
    std::optional<double> staining_intensity;
    std::optional<double> num_nuclei;
    std::optional<double> size;
    std::optional<double> circularity;
    std::optional<double> density;
    std::optional<double> eccentricity;
    std::optional<double> spread;
    std::optional<double> total_area;  // auxiliary

    static const std::vector<std::string>& names();  // the ten primary features
    std::vector<std::optional<double>> values() const;
    void set(std::size_t i, std::optional<double> v);
};

FeatureVector extract_all(const cv::Mat& rgb, const nucleus::NucleusMask& mask, const cv::Mat& conc);

/// Per-feature min-max scaling across the list. Constant features map to
/// 0.5; absent entries stay absent.
std::vector<FeatureVector> normalize_features(const std::vector<FeatureVector>& rows);

void write_csv(const std::filesystem::path& path, const std::vector<FeatureVector>& rows);
std::vector<FeatureVector> read_csv(const std::filesystem::path& path);

std::string format_number(double v);

}  // namespace tumls::features
