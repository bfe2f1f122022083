#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tumls/features.hpp"
#include "tumls/pyramid.hpp"

namespace tumls::report {

struct RepresentativeEntry {
    pyramid::PatchAddress low;   // address on the clustering level
    pyramid::PatchAddress high;  // same region on the segmentation level
    int rank = 0;
    double distance = 0.0;
    double normalized_distance = 0.0;
    std::string patch_file;                 // high-resolution patch, relative to the run root
    std::array<std::string, 3> mask_files;  // relative to the run root
    features::FeatureVector features;
};

struct ClusterInsight {
    int id = 0;
    std::size_t members = 0;
    double fraction = 0.0;
    std::vector<RepresentativeEntry> representatives;  // rank order
};

/// Everything the report shows, as plain data. Images are referenced by
/// path; all numbers live here.
struct InsightBundle {
    std::string source_id;
    std::string config_hash;
    nlohmann::json seeds = nlohmann::json::object();
    std::optional<std::string> timestamp;
    int mask_variant = 1;
    std::vector<ClusterInsight> clusters;

    int k() const { return static_cast<int>(clusters.size()); }
};

nlohmann::json to_json(const InsightBundle& b);
InsightBundle bundle_from_json(const nlohmann::json& j);

/// Per-cluster mean of each feature over the representatives, then min-max
/// normalized across clusters.
std::vector<features::FeatureVector> comparison_rows(const InsightBundle& b);

/// representatives/cluster_<id>.png rows plus representatives/grid.png.
void render_representatives(const InsightBundle& b, const std::filesystem::path& root,
                            const std::filesystem::path& out);

/// insights/cluster_<id>.png: original patch, overlay, feature listing.
void render_insights(const InsightBundle& b, const std::filesystem::path& root, const std::filesystem::path& out);

/// comparison.csv always; comparison.png only when there are >= 2 clusters.
/// Returns false when the chart was suppressed.
bool render_comparison(const InsightBundle& b, const std::filesystem::path& out);

/// distribution.json + distribution.png.
void render_distribution(const InsightBundle& b, const std::filesystem::path& out);

/// Mask boundary in green over an alpha-blended fill.
cv::Mat overlay(const cv::Mat& rgb, const cv::Mat& mask);

/// Renders every artifact, bundle.json and a static index.html into out.
void build_report(const InsightBundle& b, const std::filesystem::path& root, const std::filesystem::path& out);

}  // namespace tumls::report
