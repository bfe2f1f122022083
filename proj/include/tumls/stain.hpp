#pragma once

#include <array>
#include <string>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

namespace tumls::stain {

using StainVector = std::array<double, 3>;  // optical density per R, G, B

/// Two unit-norm stain vectors (hematoxylin first) and the 99th-percentile
/// concentration of each stain.
struct StainModel {
    std::array<StainVector, 2> stains{};
    std::array<double, 2> max_concentrations{};
};

/// Common H&E reference: stain columns (0.5626, 0.7201, 0.4062) and
/// (0.2159, 0.8012, 0.5581), maxima 1.9705 and 1.0308 converted from
/// natural-log to log10 optical density.
StainModel reference_model();

struct StainParams {
    double beta = 0.15;   // OD below this on every channel is treated as background
    double alpha = 1.0;   // angular percentile (alpha, 100 - alpha)
    double io = 255.0;    // transmitted light intensity
    int min_pixels = 100;
    double min_stain_angle_deg = 5.0;  // closer stain estimates are treated as rank-1
    StainModel reference = reference_model();
};

nlohmann::json to_json(const StainModel& m);
StainModel stain_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StainParams& p);
StainParams stain_params_from_json(const nlohmann::json& j);

/// OD = -log10((pixel + 1) / io) per channel, CV_64FC3.
cv::Mat to_optical_density(const cv::Mat& rgb, double io = 255.0);

/// Inverse of to_optical_density, rounded and clamped to 8 bits.
cv::Mat from_optical_density(const cv::Mat& od, double io = 255.0);

/// Macenko estimate from an RGB patch. Throws DataError("insufficient stain
/// signal") when too few tissue pixels remain or the OD cloud is rank-1.
StainModel estimate_stains(const cv::Mat& rgb, const StainParams& params = {});
StainModel estimate_stains_od(const cv::Mat& od, const StainParams& params = {});

/// Per-pixel least-squares solve of OD = S * C, negatives clamped to 0. CV_64FC2.
cv::Mat concentrations_od(const cv::Mat& od, const StainModel& model);
cv::Mat concentrations(const cv::Mat& rgb, const StainModel& model, double io = 255.0);

/// OD = S * C rendered back to RGB.
cv::Mat render(const cv::Mat& conc, const StainModel& model, double io = 255.0);

/// Rescales concentrations to the reference maxima and renders through the
/// reference stain matrix.
cv::Mat normalize(const cv::Mat& rgb, const StainModel& source, const StainModel& reference,
                  double io = 255.0);

/// Hematoxylin concentration scaled to [0,255] after clipping at its 99th
/// percentile; nuclei come out bright. CV_8UC1.
cv::Mat hematoxylin_channel(const cv::Mat& conc);

struct StainResult {
    cv::Mat normalized;      // CV_8UC3
    cv::Mat concentrations;  // CV_64FC2, against the source model
    cv::Mat hematoxylin;     // CV_8UC1
    StainModel model;
    bool fallback = false;
    std::string warning;
};

/// Estimate + normalize + hematoxylin, falling back to the reference model
/// when estimation fails.
StainResult process(const cv::Mat& rgb, const StainParams& params = {});

/// Linear-interpolated percentile (q in [0,100]); reorders `values`.
double percentile(std::vector<double>& values, double q);

double angle_deg(const StainVector& a, const StainVector& b);

}  // namespace tumls::stain
