#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tumls/autoencoder.hpp"
#include "tumls/background_filter.hpp"
#include "tumls/clustering.hpp"
#include "tumls/features.hpp"
#include "tumls/metrics.hpp"
#include "tumls/nucleus_seg.hpp"
#include "tumls/pyramid.hpp"
#include "tumls/report.hpp"

namespace tumls::pipeline {

struct PyramidSizes {
    int high = 1024;
    int low = 16;
    int steps = 6;

    int high_level() const { return 0; }
    int low_level() const { return steps; }
    int num_levels() const { return steps + 1; }
};

/// Throws ConfigError unless high = low * 2^steps.
void validate_sizes(const PyramidSizes& s);

struct ClusterConfig {
    int k_max = 10;
    int n_representatives = 5;
    std::uint64_t seed = 42;
    std::size_t max_points = 2000;
    int max_iter = 300;
    double tol = 1e-6;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    std::filesystem::path base_dir;  // relative paths below resolve against this
    std::string image;               // single RGB image to build the pyramid from
    std::string pyramid_dir;         // or an existing pyramid directory
    std::string source_id;
    std::string out = "run";
    PyramidSizes pyramid;
    background::FilterConfig filter;
    ae::TrainConfig train;
    ClusterConfig cluster;
    nucleus::SegmentParams segment;
    int feature_mask_variant = 1;
    std::string eval_dataset;  // optional

    std::filesystem::path resolve(const std::string& p) const;
    void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Missing keys take their defaults; unknown top-level sections are rejected.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical JSON of the config minus `out`, as 16 hex digits.
std::string config_hash(const PipelineConfig& c);

/// Writes JSON with a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

struct LatentSet {
    std::vector<pyramid::PatchAddress> addresses;
    std::vector<std::vector<double>> latents;
};

void save_latents(const std::filesystem::path& path, const LatentSet& s);
LatentSet load_latents(const std::filesystem::path& path);

// Stages. Each reads and writes only its documented artifacts.
pyramid::ImagePyramid stage_pyramid(const PipelineConfig& c, const std::filesystem::path& out);
std::vector<pyramid::Patch> stage_extract(const PipelineConfig& c, const pyramid::ImagePyramid& pyr,
                                          const std::filesystem::path& out);
std::vector<pyramid::Patch> stage_filter(const PipelineConfig& c, const std::vector<pyramid::Patch>& patches,
                                         const std::filesystem::path& out);
ae::AEModel stage_train(const PipelineConfig& c, const std::vector<pyramid::Patch>& patches,
                        const std::filesystem::path& checkpoint);
LatentSet stage_embed(const ae::AEModel& model, const std::vector<pyramid::Patch>& patches,
                      const std::filesystem::path& out);

struct ClusterOutput {
    clustering::ClusterModel model;
    std::vector<std::vector<clustering::Representative>> representatives;
};

/// Writes the cluster model to `out` plus dendrogram.json and
/// representatives.json beside it.
ClusterOutput stage_cluster(const PipelineConfig& c, const LatentSet& latents, const std::filesystem::path& out);

/// Maps representatives to the high level, segments them, extracts features
/// and assembles the insight bundle. Artifacts go to out/segment and
/// out/features.csv.
report::InsightBundle stage_segment_features(const PipelineConfig& c, const pyramid::ImagePyramid& pyr,
                                             const ClusterOutput& clusters, const std::filesystem::path& out);

/// Runs every stage into the configured output directory and returns the
/// report directory.
std::filesystem::path run_full(const PipelineConfig& c);

}  // namespace tumls::pipeline
