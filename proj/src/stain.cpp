#include "tumls/stain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "tumls/error.hpp"

namespace tumls::stain {

namespace {

StainVector unit(StainVector v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 0.0 && std::abs(n - 1.0) > 1e-12)
        for (double& x : v) x /= n;
    return v;
}

}  // namespace

StainModel reference_model() {
    StainModel m;
    m.stains[0] = unit({0.5626, 0.7201, 0.4062});
    m.stains[1] = unit({0.2159, 0.8012, 0.5581});
    m.max_concentrations = {1.9705 / std::numbers::ln10, 1.0308 / std::numbers::ln10};
    return m;
}

nlohmann::json to_json(const StainModel& m) {
    return {{"hematoxylin", m.stains[0]},
            {"eosin", m.stains[1]},
            {"max_concentrations", m.max_concentrations}};
}

StainModel stain_model_from_json(const nlohmann::json& j) {
    StainModel m;
    m.stains[0] = unit(j.at("hematoxylin").get<StainVector>());
    m.stains[1] = unit(j.at("eosin").get<StainVector>());
    m.max_concentrations = j.at("max_concentrations").get<std::array<double, 2>>();
    return m;
}

nlohmann::json to_json(const StainParams& p) {
    return {{"beta", p.beta},
            {"alpha", p.alpha},
            {"io", p.io},
            {"min_pixels", p.min_pixels},
            {"min_stain_angle_deg", p.min_stain_angle_deg},
            {"reference", to_json(p.reference)}};
}

StainParams stain_params_from_json(const nlohmann::json& j) {
    StainParams p;
    p.beta = j.value("beta", p.beta);
    p.alpha = j.value("alpha", p.alpha);
    p.io = j.value("io", p.io);
    p.min_pixels = j.value("min_pixels", p.min_pixels);
    p.min_stain_angle_deg = j.value("min_stain_angle_deg", p.min_stain_angle_deg);
    if (j.contains("reference")) p.reference = stain_model_from_json(j["reference"]);
    if (!(p.alpha >= 0.0 && p.alpha < 50.0)) throw ConfigError("stain.alpha must lie in [0,50)");
    if (!(p.beta >= 0.0)) throw ConfigError("stain.beta must be non-negative");
    if (!(p.io > 0.0)) throw ConfigError("stain.io must be positive");
    return p;
}

cv::Mat to_optical_density(const cv::Mat& rgb, double io) {
    CV_Assert(rgb.type() == CV_8UC3);
    cv::Mat od(rgb.size(), CV_64FC3);
    double lut[256];
    for (int v = 0; v < 256; ++v) lut[v] = -std::log10((v + 1.0) / io);
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* src = rgb.ptr<cv::Vec3b>(y);
        auto* dst = od.ptr<cv::Vec3d>(y);
        for (int x = 0; x < rgb.cols; ++x)
            for (int c = 0; c < 3; ++c) dst[x][c] = lut[src[x][c]];
    }
    return od;
}

cv::Mat from_optical_density(const cv::Mat& od, double io) {
    CV_Assert(od.type() == CV_64FC3);
    cv::Mat rgb(od.size(), CV_8UC3);
    for (int y = 0; y < od.rows; ++y) {
        const auto* src = od.ptr<cv::Vec3d>(y);
        auto* dst = rgb.ptr<cv::Vec3b>(y);
        for (int x = 0; x < od.cols; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = io * std::pow(10.0, -src[x][c]) - 1.0;
                dst[x][c] = static_cast<uchar>(std::clamp(std::lround(v), 0L, 255L));
            }
    }
    return rgb;
}

double percentile(std::vector<double>& values, double q) {
    if (values.empty()) throw DataError("percentile of empty set");
    std::sort(values.begin(), values.end());
    const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

double angle_deg(const StainVector& a, const StainVector& b) {
    const StainVector ua = unit(a), ub = unit(b);
    const double dot = std::clamp(ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2], -1.0, 1.0);
    return std::acos(dot) * 180.0 / std::numbers::pi;
}

StainModel estimate_stains_od(const cv::Mat& od, const StainParams& p) {
    CV_Assert(od.type() == CV_64FC3);
    std::vector<cv::Vec3d> tissue;
    tissue.reserve(od.total());
    for (int y = 0; y < od.rows; ++y) {
        const auto* row = od.ptr<cv::Vec3d>(y);
        for (int x = 0; x < od.cols; ++x) {
            const auto& v = row[x];
            if (v[0] < p.beta && v[1] < p.beta && v[2] < p.beta) continue;
            tissue.push_back(v);
        }
    }
    if (static_cast<int>(tissue.size()) < p.min_pixels) throw DataError("insufficient stain signal");

    // Covariance of the OD cloud and its top two principal directions.
    cv::Vec3d mean(0, 0, 0);
    for (const auto& v : tissue) mean += v;
    mean *= 1.0 / static_cast<double>(tissue.size());
    cv::Matx33d cov = cv::Matx33d::zeros();
    for (const auto& v : tissue) {
        const cv::Vec3d d = v - mean;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) cov(i, j) += d[i] * d[j];
    }
    cov *= 1.0 / static_cast<double>(tissue.size() - 1);
    cv::Mat evals, evecs;
    cv::eigen(cv::Mat(cov), evals, evecs);  // descending, rows are eigenvectors
    cv::Vec3d e1(evecs.at<double>(0, 0), evecs.at<double>(0, 1), evecs.at<double>(0, 2));
    cv::Vec3d e2(evecs.at<double>(1, 0), evecs.at<double>(1, 1), evecs.at<double>(1, 2));
    if (e1[0] + e1[1] + e1[2] < 0) e1 = -e1;
    if (e2[0] + e2[1] + e2[2] < 0) e2 = -e2;

    std::vector<double> phi;
    phi.reserve(tissue.size());
    for (const auto& v : tissue) phi.push_back(std::atan2(v.dot(e2), v.dot(e1)));
    const double lo = percentile(phi, p.alpha);
    const double hi = percentile(phi, 100.0 - p.alpha);

    auto direction = [&](double a) {
        cv::Vec3d v = e1 * std::cos(a) + e2 * std::sin(a);
        if (v[0] + v[1] + v[2] < 0) v = -v;
        return unit({v[0], v[1], v[2]});
    };
    StainVector v_lo = direction(lo), v_hi = direction(hi);
    if (angle_deg(v_lo, v_hi) < p.min_stain_angle_deg) throw DataError("insufficient stain signal");

    StainModel m;
    if (v_lo[0] > v_hi[0]) {
        m.stains = {v_lo, v_hi};
    } else {
        m.stains = {v_hi, v_lo};
    }

    cv::Mat conc = concentrations_od(od, m);
    std::vector<double> ch(conc.total());
    for (int s = 0; s < 2; ++s) {
        std::size_t i = 0;
        for (int y = 0; y < conc.rows; ++y) {
            const auto* row = conc.ptr<cv::Vec2d>(y);
            for (int x = 0; x < conc.cols; ++x) ch[i++] = row[x][s];
        }
        m.max_concentrations[s] = percentile(ch, 99.0);
    }
    if (!(m.max_concentrations[0] > 0.0 && m.max_concentrations[1] > 0.0))
        throw DataError("insufficient stain signal");
    return m;
}

StainModel estimate_stains(const cv::Mat& rgb, const StainParams& p) {
    return estimate_stains_od(to_optical_density(rgb, p.io), p);
}

cv::Mat concentrations_od(const cv::Mat& od, const StainModel& m) {
    CV_Assert(od.type() == CV_64FC3);
    const auto& h = m.stains[0];
    const auto& e = m.stains[1];
    // Normal equations (S^T S) c = S^T od.
    const double a = h[0] * h[0] + h[1] * h[1] + h[2] * h[2];
    const double b = h[0] * e[0] + h[1] * e[1] + h[2] * e[2];
    const double d = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    const double det = a * d - b * b;
    if (!(std::abs(det) > 1e-12)) throw NumericError("stain matrix is singular");
    cv::Mat conc(od.size(), CV_64FC2);
    for (int y = 0; y < od.rows; ++y) {
        const auto* src = od.ptr<cv::Vec3d>(y);
        auto* dst = conc.ptr<cv::Vec2d>(y);
        for (int x = 0; x < od.cols; ++x) {
            const auto& v = src[x];
            const double rh = h[0] * v[0] + h[1] * v[1] + h[2] * v[2];
            const double re = e[0] * v[0] + e[1] * v[1] + e[2] * v[2];
            dst[x][0] = std::max(0.0, (d * rh - b * re) / det);
            dst[x][1] = std::max(0.0, (a * re - b * rh) / det);
        }
    }
    return conc;
}

cv::Mat concentrations(const cv::Mat& rgb, const StainModel& m, double io) {
    return concentrations_od(to_optical_density(rgb, io), m);
}

cv::Mat render(const cv::Mat& conc, const StainModel& m, double io) {
    CV_Assert(conc.type() == CV_64FC2);
    cv::Mat od(conc.size(), CV_64FC3);
    for (int y = 0; y < conc.rows; ++y) {
        const auto* src = conc.ptr<cv::Vec2d>(y);
        auto* dst = od.ptr<cv::Vec3d>(y);
        for (int x = 0; x < conc.cols; ++x)
            for (int c = 0; c < 3; ++c)
                dst[x][c] = m.stains[0][c] * src[x][0] + m.stains[1][c] * src[x][1];
    }
    return from_optical_density(od, io);
}

cv::Mat normalize(const cv::Mat& rgb, const StainModel& source, const StainModel& reference,
                  double io) {
    cv::Mat conc = concentrations(rgb, source, io);
    const double sh = reference.max_concentrations[0] / source.max_concentrations[0];
    const double se = reference.max_concentrations[1] / source.max_concentrations[1];
    for (int y = 0; y < conc.rows; ++y) {
        auto* row = conc.ptr<cv::Vec2d>(y);
        for (int x = 0; x < conc.cols; ++x) {
            row[x][0] *= sh;
            row[x][1] *= se;
        }
    }
    return render(conc, reference, io);
}

cv::Mat hematoxylin_channel(const cv::Mat& conc) {
    CV_Assert(conc.type() == CV_64FC2);
    std::vector<double> h;
    h.reserve(conc.total());
    for (int y = 0; y < conc.rows; ++y) {
        const auto* row = conc.ptr<cv::Vec2d>(y);
        for (int x = 0; x < conc.cols; ++x) h.push_back(row[x][0]);
    }
    const double top = h.empty() ? 0.0 : percentile(h, 99.0);
    cv::Mat out(conc.size(), CV_8UC1, cv::Scalar(0));
    if (!(top > 0.0)) return out;
    for (int y = 0; y < conc.rows; ++y) {
        const auto* row = conc.ptr<cv::Vec2d>(y);
        auto* dst = out.ptr<uchar>(y);
        for (int x = 0; x < conc.cols; ++x)
            dst[x] = static_cast<uchar>(std::lround(std::min(row[x][0], top) / top * 255.0));
    }
    return out;
}

StainResult process(const cv::Mat& rgb, const StainParams& p) {
    StainResult r;
    try {
        r.model = estimate_stains(rgb, p);
    } catch (const DataError& e) {
        r.model = p.reference;
        r.fallback = true;
        r.warning = e.what();
    }
    r.concentrations = concentrations(rgb, r.model, p.io);
    r.normalized = normalize(rgb, r.model, p.reference, p.io);
    r.hematoxylin = hematoxylin_channel(r.concentrations);
    return r;
}

}  // namespace tumls::stain
