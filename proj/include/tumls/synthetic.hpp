#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <opencv2/core.hpp>

#include "tumls/metrics.hpp"
#include "tumls/stain.hpp"

namespace tumls::synthetic {

/// Axis-aligned elliptical nucleus.
struct Nucleus {
    double cx = 0.0, cy = 0.0;
    double rx = 0.0, ry = 0.0;
};

/// Polygon approximation of a nucleus outline.
metrics::Polygon outline(const Nucleus& n, int vertices = 32);

/// Beer-Lambert rendering of two CV_64FC1 concentration maps through a
/// stain model, with optional Gaussian OD noise.
cv::Mat render_stains(const cv::Mat& hema, const cv::Mat& eosin,
                      const stain::StainModel& model = stain::reference_model(), double od_noise = 0.0,
                      std::uint64_t seed = 0);

struct PatchStyle {
    double nucleus_hema = 0.9;
    double nucleus_eosin = 0.05;
    double stroma_hema = 0.05;
    double stroma_eosin = 0.35;
    double od_noise = 0.0;
};

/// H&E-like patch with the given nuclei on an eosin background.
cv::Mat nuclei_patch(cv::Size size, const std::vector<Nucleus>& nuclei, const PatchStyle& style = {},
                     std::uint64_t seed = 0);

/// Binary mask of a set of nuclei (polygon rasterization).
cv::Mat nuclei_mask(cv::Size size, const std::vector<Nucleus>& nuclei);

/// Non-overlapping nuclei scattered over a region.
std::vector<Nucleus> scatter_nuclei(cv::Rect region, int count, double r_min, double r_max,
                                    double max_elongation, std::mt19937_64& rng, double min_gap = 3.0);

/// 16x16 two-texture training set: pink striped stroma vs purple dotted cells.
std::vector<cv::Mat> two_texture_patches(std::size_t n, std::uint64_t seed, int size = 16);

struct DemoSlide {
    cv::Mat image;                 // RGB
    std::vector<Nucleus> nuclei;   // level-0 coordinates
    int tissue_top = 0;            // rows above this are blank glass
};

/// Square slide: glass band on top, dense small-nucleus tissue on the left
/// half, sparse large-nucleus eosin-rich tissue on the right half.
DemoSlide demo_slide(int size, std::uint64_t seed);

/// MoNuSeg-schema annotation document.
std::string annotation_xml(const std::vector<metrics::Polygon>& polygons);

/// Writes slide.png, a small evaluation dataset cut from the slide, and a
/// ready-to-run config.json into dir.
void write_demo(const std::filesystem::path& dir, int size, std::uint64_t seed);

}  // namespace tumls::synthetic
