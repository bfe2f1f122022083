#include "tumls/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tumls/error.hpp"
#include "tumls/plot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tumls::report {

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json features_json(const features::FeatureVector& f) {
    json j;
    const auto& names = features::FeatureVector::names();
    const auto values = f.values();
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = optional_json(values[i]);
    j["total_area"] = optional_json(f.total_area);
    return j;
}

features::FeatureVector features_from(const json& j) {
    features::FeatureVector f;
    const auto& names = features::FeatureVector::names();
    for (std::size_t i = 0; i < names.size(); ++i) f.set(i, optional_from(j.at(names[i])));
    f.total_area = optional_from(j.at("total_area"));
    return f;
}

}  // namespace

json to_json(const InsightBundle& b) {
    json clusters = json::array();
    for (const auto& c : b.clusters) {
        json reps = json::array();
        for (const auto& r : c.representatives)
            reps.push_back({{"rank", r.rank},
                            {"low_address", pyramid::to_json(r.low)},
                            {"high_address", pyramid::to_json(r.high)},
                            {"distance", r.distance},
                            {"normalized_distance", r.normalized_distance},
                            {"patch", r.patch_file},
                            {"masks", r.mask_files},
                            {"features", features_json(r.features)}});
        clusters.push_back({{"id", c.id}, {"members", c.members}, {"fraction", c.fraction}, {"representatives", reps}});
    }
    json prov = {{"config_hash", b.config_hash}, {"seeds", b.seeds}};
    if (b.timestamp) prov["timestamp"] = *b.timestamp;
    return {{"format", "tumls-insights"},
            {"version", 1},
            {"source_id", b.source_id},
            {"provenance", prov},
            {"mask_variant", b.mask_variant},
            {"k", b.k()},
            {"feature_names", features::FeatureVector::names()},
            {"clusters", clusters}};
}

InsightBundle bundle_from_json(const json& j) {
    InsightBundle b;
    b.source_id = j.at("source_id").get<std::string>();
    const auto& prov = j.at("provenance");
    b.config_hash = prov.at("config_hash").get<std::string>();
    b.seeds = prov.at("seeds");
    if (prov.contains("timestamp")) b.timestamp = prov["timestamp"].get<std::string>();
    b.mask_variant = j.value("mask_variant", 1);
    for (const auto& cj : j.at("clusters")) {
        ClusterInsight c;
        c.id = cj.at("id").get<int>();
        c.members = cj.at("members").get<std::size_t>();
        c.fraction = cj.at("fraction").get<double>();
        for (const auto& rj : cj.at("representatives")) {
            RepresentativeEntry r;
            r.rank = rj.at("rank").get<int>();
            r.low = pyramid::address_from_json(rj.at("low_address"));
            r.high = pyramid::address_from_json(rj.at("high_address"));
            r.distance = rj.at("distance").get<double>();
            r.normalized_distance = rj.at("normalized_distance").get<double>();
            r.patch_file = rj.at("patch").get<std::string>();
            r.mask_files = rj.at("masks").get<std::array<std::string, 3>>();
            r.features = features_from(rj.at("features"));
            r.features.address = r.high;
            r.features.cluster = c.id;
            c.representatives.push_back(std::move(r));
        }
        b.clusters.push_back(std::move(c));
    }
    return b;
}

std::vector<features::FeatureVector> comparison_rows(const InsightBundle& b) {
    std::vector<features::FeatureVector> means;
    const std::size_t nf = features::FeatureVector::names().size();
    for (const auto& c : b.clusters) {
        features::FeatureVector m;
        m.cluster = c.id;
        for (std::size_t k = 0; k < nf; ++k) {
            double s = 0.0;
            int n = 0;
            for (const auto& r : c.representatives)
                if (auto v = r.features.values()[k]) {
                    s += *v;
                    ++n;
                }
            if (n > 0) m.set(k, s / n);
        }
        means.push_back(m);
    }
    return features::normalize_features(means);
}

namespace {

cv::Mat load(const fs::path& p) { return pyramid::read_rgb(p); }

cv::Mat load_mask(const fs::path& p) {
    cv::Mat m = cv::imread(p.string(), cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read mask " + p.string());
    return m;
}

}  // namespace

cv::Mat overlay(const cv::Mat& rgb, const cv::Mat& mask) {
    cv::Mat out = rgb.clone();
    const cv::Vec3b fill(60, 200, 60), edge(0, 255, 0);
    cv::Mat eroded;
    cv::erode(mask, eroded, cv::getStructuringElement(cv::MORPH_RECT, {3, 3}));
    for (int y = 0; y < out.rows; ++y)
        for (int x = 0; x < out.cols; ++x) {
            if (!mask.at<uchar>(y, x)) continue;
            auto& p = out.at<cv::Vec3b>(y, x);
            if (!eroded.at<uchar>(y, x)) {
                p = edge;
            } else {
                for (int c = 0; c < 3; ++c) p[c] = static_cast<uchar>(std::lround(0.65 * p[c] + 0.35 * fill[c]));
            }
        }
    return out;
}

void render_representatives(const InsightBundle& b, const fs::path& root, const fs::path& out) {
    fs::create_directories(out / "representatives");
    std::vector<std::vector<cv::Mat>> rows;
    std::vector<std::string> captions;
    for (const auto& c : b.clusters) {
        std::vector<cv::Mat> row;
        for (const auto& r : c.representatives) row.push_back(load(root / r.patch_file));
        pyramid::write_rgb(out / "representatives" / ("cluster_" + std::to_string(c.id) + ".png"),
                           plot::grid({row}, {"tissue " + std::to_string(c.id)}));
        rows.push_back(std::move(row));
        captions.push_back("tissue " + std::to_string(c.id));
    }
    pyramid::write_rgb(out / "representatives" / "grid.png", plot::grid(rows, captions));
}

void render_insights(const InsightBundle& b, const fs::path& root, const fs::path& out) {
    fs::create_directories(out / "insights");
    const int tile = 256;
    for (const auto& c : b.clusters) {
        if (c.representatives.empty()) continue;
        const auto& best = c.representatives.front();
        const cv::Mat patch = load(root / best.patch_file);
        const cv::Mat mask = load_mask(root / best.mask_files[b.mask_variant - 1]);
        cv::Mat a, o;
        cv::resize(patch, a, {tile, tile}, 0, 0, cv::INTER_NEAREST);
        cv::resize(overlay(patch, mask), o, {tile, tile}, 0, 0, cv::INTER_NEAREST);

        cv::Mat panel(tile + 40, 2 * tile + 300, CV_8UC3, cv::Scalar(255, 255, 255));
        a.copyTo(panel(cv::Rect(0, 40, tile, tile)));
        o.copyTo(panel(cv::Rect(tile, 40, tile, tile)));
        plot::text(panel, "tissue " + std::to_string(c.id) + ": best representative and nucleus mask overlay",
                   {6, 24}, 0.5);
        const auto& names = features::FeatureVector::names();
        const auto values = best.features.values();
        for (std::size_t i = 0; i < names.size(); ++i) {
            const std::string v = values[i] ? features::format_number(std::round(*values[i] * 1e4) / 1e4) : "n/a";
            plot::text(panel, names[i] + ": " + v, {2 * tile + 12, 60 + static_cast<int>(i) * 22}, 0.45);
        }
        pyramid::write_rgb(out / "insights" / ("cluster_" + std::to_string(c.id) + ".png"), panel);
    }
}

bool render_comparison(const InsightBundle& b, const fs::path& out) {
    fs::create_directories(out);
    const auto rows = comparison_rows(b);
    features::write_csv(out / "comparison.csv", rows);
    if (b.k() < 2) return false;
    std::vector<plot::Series> series;
    for (const auto& r : rows) {
        plot::Series s{"tissue " + std::to_string(r.cluster), {}};
        for (const auto& v : r.values()) s.values.push_back(v ? *v : std::nan(""));
        series.push_back(std::move(s));
    }
    pyramid::write_rgb(out / "comparison.png",
                       plot::bar_chart("Normalized features per tissue", features::FeatureVector::names(), series));
    return true;
}

void render_distribution(const InsightBundle& b, const fs::path& out) {
    fs::create_directories(out);
    json j = json::array();
    std::vector<std::string> labels;
    std::vector<double> fractions;
    for (const auto& c : b.clusters) {
        j.push_back({{"cluster", c.id}, {"members", c.members}, {"fraction", c.fraction}});
        labels.push_back("tissue " + std::to_string(c.id));
        fractions.push_back(c.fraction);
    }
    std::ofstream(out / "distribution.json") << json{{"clusters", j}}.dump(2) << '\n';
    pyramid::write_rgb(out / "distribution.png", plot::pie_chart("Tissue distribution", labels, fractions));
}

namespace {

std::string html_escape(const std::string& s) {
    std::string o;
    for (char ch : s) {
        switch (ch) {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            case '"': o += "&quot;"; break;
            default: o += ch;
        }
    }
    return o;
}

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

}  // namespace

void build_report(const InsightBundle& b, const fs::path& root, const fs::path& out) {
    fs::create_directories(out);
    double total = 0.0;
    for (const auto& c : b.clusters) total += c.fraction;
    if (!b.clusters.empty() && std::abs(total - 1.0) > 1e-9) throw DataError("tissue fractions do not sum to 1");

    std::ofstream(out / "bundle.json") << to_json(b).dump(2) << '\n';
    render_representatives(b, root, out);
    render_insights(b, root, out);
    const bool chart = render_comparison(b, out);
    render_distribution(b, out);

    std::ofstream html(out / "index.html");
    html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Tissue insights: "
         << html_escape(b.source_id) << "</title>\n"
         << "<style>body{font-family:sans-serif;margin:2em;max-width:1100px}img{max-width:100%}"
            "table{border-collapse:collapse}td,th{border:1px solid #bbb;padding:3px 8px;text-align:right}</style>"
            "</head><body>\n";
    html << "<h1>Tissue insights for " << html_escape(b.source_id) << "</h1>\n";
    html << "<p>" << b.k() << " tissue type(s) detected. Config hash <code>" << b.config_hash
         << "</code>. Nucleus mask variant " << b.mask_variant << ".</p>\n";
    html << "<h2>Representatives</h2>\n<p>Rank 1 (closest to the cluster centroid) is leftmost.</p>\n"
         << "<img src=\"representatives/grid.png\" alt=\"representatives\">\n";
    html << "<h2>Main insights</h2>\n";
    for (const auto& c : b.clusters) {
        html << "<h3>Tissue " << c.id << "</h3>\n<img src=\"insights/cluster_" << c.id << ".png\" alt=\"tissue "
             << c.id << "\">\n<table><tr><th>rank</th><th>patch</th><th>normalized distance</th></tr>\n";
        for (const auto& r : c.representatives)
            html << "<tr><td>" << r.rank << "</td><td>" << html_escape(r.patch_file) << "</td><td>"
                 << features::format_number(r.normalized_distance) << "</td></tr>\n";
        html << "</table>\n";
    }
    html << "<h2>Comparison</h2>\n";
    if (chart) {
        html << "<img src=\"comparison.png\" alt=\"comparison\">\n";
    } else {
        html << "<p>Only one tissue was detected, so there is nothing to compare.</p>\n";
    }
    html << "<p>Values: <a href=\"comparison.csv\">comparison.csv</a></p>\n";
    html << "<h2>Tissue distribution</h2>\n<img src=\"distribution.png\" alt=\"distribution\">\n"
         << "<p>Values: <a href=\"distribution.json\">distribution.json</a></p>\n";
    html << "<p><a href=\"bundle.json\">bundle.json</a> &middot; generated " << now_utc() << "</p>\n";
    html << "</body></html>\n";
}

}  // namespace tumls::report
