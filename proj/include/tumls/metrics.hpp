#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "tumls/nucleus_seg.hpp"

namespace tumls::metrics {

/// 2|A n B| / (|A| + |B|) over non-zero pixels; 1.0 when both are empty.
double dice(const cv::Mat& pred, const cv::Mat& gt);

/// |A n B| / |A u B|; 1.0 when both are empty.
double jaccard(const cv::Mat& pred, const cv::Mat& gt);

/// Mean squared difference over all elements. The autoencoder loss uses
/// the same routine.
double mse(std::span<const double> pred, std::span<const double> target);
double mse(const cv::Mat& pred, const cv::Mat& target);

using Polygon = std::vector<cv::Point2d>;

/// Even-odd fill sampled at pixel centres (x + 0.5, y + 0.5); every polygon
/// is filled on its own and the results are OR-ed.
cv::Mat rasterize(const std::vector<Polygon>& polygons, cv::Size size);

struct GroundTruth {
    std::string image_id;
    std::string organ;
    std::vector<Polygon> polygons;
    cv::Mat mask;  // CV_8UC1 0/255
    std::vector<std::string> warnings;
};

/// Reads Region/Vertices/Vertex(X,Y) elements in document order. Vertices
/// are clamped to the image bounds. Malformed XML raises DataError with the
/// line number.
GroundTruth parse_annotations(const std::string& xml_text, cv::Size dims, const std::string& image_id = {});

/// Organ name from a TCGA barcode's tissue source site code, or "unknown".
std::string organ_from_tcga(const std::string& image_id);

struct EvalRow {
    std::string image;
    std::string organ;
    int variant = 0;
    double dice = 0.0;
    double jaccard = 0.0;
};

struct EvalResult {
    std::vector<EvalRow> rows;
    // organ -> variant(1..3) -> (mean dice, mean jaccard)
    std::map<std::string, std::map<int, std::pair<double, double>>> per_organ;
    std::map<int, std::pair<double, double>> overall;
    std::vector<std::string> warnings;

    int best_variant() const;
    nlohmann::json to_json() const;
};

/// Scores pre-computed masks (variants 1..3) against ground truth.
std::vector<EvalRow> score_image(const std::string& image, const std::string& organ,
                                 const std::array<nucleus::NucleusMask, 3>& masks, const cv::Mat& gt);

/// Unweighted mean over images within an organ, then over organs.
void aggregate(EvalResult& result);

/// Runs segmentation over <dataset>/images against <dataset>/annotations.
/// An optional <dataset>/organs.csv (image,organ) overrides the organ lookup.
EvalResult evaluate(const std::filesystem::path& dataset, const nucleus::SegmentParams& params);

void write_eval(const std::filesystem::path& out_dir, const EvalResult& result);

}  // namespace tumls::metrics
