#include "tumls/nucleus_seg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <tuple>

#include <opencv2/imgproc.hpp>

#include "tumls/error.hpp"
#include "tumls/pyramid.hpp"

namespace fs = std::filesystem;

namespace tumls::nucleus {

std::string to_string(NoiseType t) {
    switch (t) {
        case NoiseType::None: return "none";
        case NoiseType::BlackRegion: return "black_region";
        case NoiseType::GrayNoise: return "gray_noise";
        case NoiseType::Both: return "both";
    }
    return "unknown";
}

cv::Mat DenoiseReport::replaced_mask() const {
    cv::Mat m;
    cv::bitwise_or(black_mask, gray_mask, m);
    return m;
}

namespace {

// Keeps components (8-connected) of `candidates` whose area exceeds min_area.
cv::Mat large_components(const cv::Mat& candidates, double min_area) {
    cv::Mat labels, stats, centroids;
    const int n = cv::connectedComponentsWithStats(candidates, labels, stats, centroids, 8, CV_32S);
    std::vector<char> keep(n, 0);
    for (int i = 1; i < n; ++i) keep[i] = stats.at<int>(i, cv::CC_STAT_AREA) > min_area;
    cv::Mat out(candidates.size(), CV_8UC1, cv::Scalar(0));
    for (int y = 0; y < labels.rows; ++y) {
        const int* l = labels.ptr<int>(y);
        uchar* o = out.ptr<uchar>(y);
        for (int x = 0; x < labels.cols; ++x)
            if (keep[l[x]]) o[x] = 255;
    }
    return out;
}

}  // namespace

DenoiseResult denoise(const cv::Mat& rgb, const DenoiseParams& p) {
    CV_Assert(rgb.type() == CV_8UC3);
    cv::Mat black(rgb.size(), CV_8UC1, cv::Scalar(0));
    cv::Mat gray(rgb.size(), CV_8UC1, cv::Scalar(0));
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<cv::Vec3b>(y);
        uchar* b = black.ptr<uchar>(y);
        uchar* g = gray.ptr<uchar>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            const int v = std::max({row[x][0], row[x][1], row[x][2]});
            const int mn = std::min({row[x][0], row[x][1], row[x][2]});
            const double s = v == 0 ? 0.0 : static_cast<double>(v - mn) / v;
            if (v < p.black_max_value && s < p.black_max_saturation) b[x] = 255;
            if (s < p.gray_max_saturation && v >= p.gray_min_value && v <= p.gray_max_value) g[x] = 255;
        }
    }
    const double min_area = p.min_region_fraction * static_cast<double>(rgb.total());
    DenoiseResult r;
    r.report.black_mask = large_components(black, min_area);
    r.report.gray_mask = large_components(gray, min_area);
    const bool has_black = cv::countNonZero(r.report.black_mask) > 0;
    const bool has_gray = cv::countNonZero(r.report.gray_mask) > 0;
    r.report.noise_type = has_black && has_gray ? NoiseType::Both
                          : has_black           ? NoiseType::BlackRegion
                          : has_gray            ? NoiseType::GrayNoise
                                                : NoiseType::None;

    const cv::Mat replaced = r.report.replaced_mask();
    const int n_replaced = cv::countNonZero(replaced);
    r.report.replaced_fraction = static_cast<double>(n_replaced) / static_cast<double>(rgb.total());
    if (r.report.replaced_fraction > p.max_noise_fraction) throw DataError("patch unusable");

    r.clean = rgb.clone();
    if (n_replaced == 0) return r;

    // Per-channel median of the untouched pixels.
    std::array<std::array<std::uint64_t, 256>, 3> hist{};
    std::uint64_t kept = 0;
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* row = rgb.ptr<cv::Vec3b>(y);
        const uchar* m = replaced.ptr<uchar>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            if (m[x]) continue;
            ++kept;
            for (int c = 0; c < 3; ++c) ++hist[c][row[x][c]];
        }
    }
    cv::Vec3b fill;
    for (int c = 0; c < 3; ++c) {
        std::uint64_t acc = 0;
        int v = 0;
        for (; v < 255; ++v) {
            acc += hist[c][v];
            if (2 * acc >= kept + 1) break;
        }
        fill[c] = static_cast<uchar>(v);
    }
    r.clean.setTo(fill, replaced);
    return r;
}

Histogram histogram(const cv::Mat& gray) {
    CV_Assert(gray.type() == CV_8UC1);
    Histogram h{};
    for (int y = 0; y < gray.rows; ++y) {
        const uchar* row = gray.ptr<uchar>(y);
        for (int x = 0; x < gray.cols; ++x) ++h[row[x]];
    }
    return h;
}

double between_class_variance(std::uint64_t n0, std::uint64_t s0, std::uint64_t n1,
                              std::uint64_t s1, std::uint64_t n2, std::uint64_t s2) {
    const double n = static_cast<double>(n0 + n1 + n2);
    const double mu = static_cast<double>(s0 + s1 + s2) / n;
    double acc = 0.0;
    auto term = [&](std::uint64_t nk, std::uint64_t sk) {
        if (nk == 0) return;
        const double d = static_cast<double>(sk) / static_cast<double>(nk) - mu;
        acc += static_cast<double>(nk) * d * d;
    };
    term(n0, s0);
    term(n1, s1);
    term(n2, s2);
    return acc / n;
}

OtsuThresholds multi_otsu(const Histogram& hist) {
    int populated = 0;
    for (auto c : hist) populated += c > 0;
    if (populated < 2) throw DataError("degenerate histogram");

    std::array<std::uint64_t, 256> cn{}, cs{};
    std::uint64_t n = 0, s = 0;
    for (int i = 0; i < 256; ++i) {
        n += hist[i];
        s += hist[i] * static_cast<std::uint64_t>(i);
        cn[i] = n;
        cs[i] = s;
    }

    OtsuThresholds best{1, 2, -1.0};
    for (int t1 = 1; t1 <= 253; ++t1) {
        for (int t2 = t1 + 1; t2 <= 254; ++t2) {
            const double v = between_class_variance(cn[t1], cs[t1], cn[t2] - cn[t1], cs[t2] - cs[t1],
                                                    n - cn[t2], s - cs[t2]);
            if (v > best.between_class_variance) best = {t1, t2, v};
        }
    }
    return best;
}

OtsuThresholds multi_otsu(const cv::Mat& gray) { return multi_otsu(histogram(gray)); }

cv::Mat combine(const cv::Mat& normalized_rgb, const cv::Mat& hema, double weight) {
    CV_Assert(normalized_rgb.type() == CV_8UC3 && hema.type() == CV_8UC1);
    CV_Assert(normalized_rgb.size() == hema.size());
    if (!(weight >= 0.0 && weight <= 1.0)) throw ConfigError("combine weight must lie in [0,1]");
    cv::Mat out(hema.size(), CV_8UC1);
    for (int y = 0; y < out.rows; ++y) {
        const auto* rgb = normalized_rgb.ptr<cv::Vec3b>(y);
        const uchar* h = hema.ptr<uchar>(y);
        uchar* o = out.ptr<uchar>(y);
        for (int x = 0; x < out.cols; ++x) {
            const double lum = 0.299 * rgb[x][0] + 0.587 * rgb[x][1] + 0.114 * rgb[x][2];
            const double v = (1.0 - weight) * lum + weight * (255.0 - h[x]);
            o[x] = static_cast<uchar>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return out;
}

cv::Mat class_map(const cv::Mat& gray, const OtsuThresholds& t) {
    CV_Assert(gray.type() == CV_8UC1);
    cv::Mat out(gray.size(), CV_8UC1);
    for (int y = 0; y < gray.rows; ++y) {
        const uchar* g = gray.ptr<uchar>(y);
        uchar* o = out.ptr<uchar>(y);
        for (int x = 0; x < gray.cols; ++x) o[x] = g[x] <= t.t1 ? 0 : g[x] <= t.t2 ? 1 : 2;
    }
    return out;
}

cv::Mat compact_classes(const cv::Mat& classes) {
    CV_Assert(classes.type() == CV_8UC1);
    std::array<bool, 256> present{};
    for (int y = 0; y < classes.rows; ++y) {
        const uchar* c = classes.ptr<uchar>(y);
        for (int x = 0; x < classes.cols; ++x) present[c[x]] = true;
    }
    cv::Mat lut(1, 256, CV_8UC1, cv::Scalar(0));
    int next = 0;
    for (int i = 0; i < 256; ++i)
        if (present[i]) lut.at<uchar>(0, i) = static_cast<uchar>(next++);
    cv::Mat out;
    cv::LUT(classes, lut, out);
    return out;
}

cv::Mat disk(int radius) {
    const int d = 2 * radius + 1;
    cv::Mat k(d, d, CV_8UC1, cv::Scalar(0));
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            if (x * x + y * y <= radius * radius) k.at<uchar>(y + radius, x + radius) = 1;
    return k;
}

int label_components(const cv::Mat& binary, cv::Mat& labels) {
    return cv::connectedComponents(binary, labels, 8, CV_32S) - 1;
}

cv::Mat remove_small(const cv::Mat& binary, int min_area) {
    cv::Mat labels, stats, centroids;
    cv::connectedComponentsWithStats(binary, labels, stats, centroids, 8, CV_32S);
    cv::Mat out(binary.size(), CV_8UC1, cv::Scalar(0));
    for (int y = 0; y < labels.rows; ++y) {
        const int* l = labels.ptr<int>(y);
        uchar* o = out.ptr<uchar>(y);
        for (int x = 0; x < labels.cols; ++x)
            if (l[x] > 0 && stats.at<int>(l[x], cv::CC_STAT_AREA) >= min_area) o[x] = 255;
    }
    return out;
}

NucleusMask make_mask(const cv::Mat& binary, int variant) {
    NucleusMask m;
    m.variant = variant;
    cv::compare(binary, 0, m.binary, cv::CMP_GT);
    m.count = label_components(m.binary, m.labels);
    return m;
}

cv::Mat close_open(const cv::Mat& binary, int close_radius, int open_radius) {
    cv::Mat out;
    cv::morphologyEx(binary, out, cv::MORPH_CLOSE, disk(close_radius));
    cv::morphologyEx(out, out, cv::MORPH_OPEN, disk(open_radius));
    return out;
}

namespace {

cv::Mat darkest(const cv::Mat& classes) {
    cv::Mat b;
    cv::compare(classes, 0, b, cv::CMP_EQ);
    return b;
}

}  // namespace

NucleusMask mask_variant_1(const cv::Mat& classes, const MaskParams& p) {
    cv::Mat b = close_open(darkest(classes), p.close_radius, p.open_radius);
    return make_mask(remove_small(b, p.min_area), 1);
}

NucleusMask demerge(const cv::Mat& binary, const MaskParams& p) {
    cv::Mat bin;
    cv::compare(binary, 0, bin, cv::CMP_GT);
    const int rows = bin.rows, cols = bin.cols;

    cv::Mat dist;
    cv::distanceTransform(bin, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE, CV_32F);

    // Peak candidates: maxima of the dilation window, grouped into plateaus.
    const int win = static_cast<int>(std::ceil(p.seed_min_separation));
    cv::Mat dil;
    cv::dilate(dist, dil, cv::getStructuringElement(cv::MORPH_RECT, {2 * win + 1, 2 * win + 1}));
    cv::Mat cand(bin.size(), CV_8UC1, cv::Scalar(0));
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x) {
            const float d = dist.at<float>(y, x);
            if (d >= p.seed_min_distance && d >= dil.at<float>(y, x)) cand.at<uchar>(y, x) = 255;
        }
    cv::Mat plateau, pstats, pcent;
    const int np = cv::connectedComponentsWithStats(cand, plateau, pstats, pcent, 8, CV_32S);

    struct Peak {
        float value;
        int y, x;
    };
    std::vector<Peak> peaks;
    {
        // Plateau representative: its member closest to the plateau centroid.
        std::vector<Peak> rep(np, Peak{-1.0f, 0, 0});
        std::vector<double> best(np, 1e300);
        for (int y = 0; y < rows; ++y)
            for (int x = 0; x < cols; ++x) {
                const int l = plateau.at<int>(y, x);
                if (l == 0) continue;
                const double dx = x - pcent.at<double>(l, 0), dy = y - pcent.at<double>(l, 1);
                const double d2 = dx * dx + dy * dy;
                if (d2 < best[l]) {
                    best[l] = d2;
                    rep[l] = {dist.at<float>(y, x), y, x};
                }
            }
        for (int l = 1; l < np; ++l) peaks.push_back(rep[l]);
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        return std::tie(b.value, a.y, a.x) < std::tie(a.value, b.y, b.x);
    });
    std::vector<Peak> seeds;
    for (const auto& pk : peaks) {
        bool ok = true;
        for (const auto& s : seeds) {
            const double dx = pk.x - s.x, dy = pk.y - s.y;
            if (std::sqrt(dx * dx + dy * dy) <= p.seed_min_separation) {
                ok = false;
                break;
            }
        }
        if (ok) seeds.push_back(pk);
    }

    // Priority flood from the seeds, highest distance first, 8-neighbourhood.
    cv::Mat labels(bin.size(), CV_32SC1, cv::Scalar(0));
    using Item = std::tuple<float, std::uint64_t, int, int>;  // -dist, order, y, x
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    std::uint64_t order = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        labels.at<int>(seeds[i].y, seeds[i].x) = static_cast<int>(i + 1);
        queue.emplace(-seeds[i].value, order++, seeds[i].y, seeds[i].x);
    }
    while (!queue.empty()) {
        const auto [neg, ord, y, x] = queue.top();
        queue.pop();
        const int lab = labels.at<int>(y, x);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int ny = y + dy, nx = x + dx;
                if ((dy == 0 && dx == 0) || ny < 0 || nx < 0 || ny >= rows || nx >= cols) continue;
                if (!bin.at<uchar>(ny, nx) || labels.at<int>(ny, nx) != 0) continue;
                labels.at<int>(ny, nx) = lab;
                queue.emplace(-dist.at<float>(ny, nx), order++, ny, nx);
            }
    }

    // Blobs the flood never reached keep their own identity.
    cv::Mat leftover;
    cv::bitwise_and(bin, labels == 0, leftover);
    cv::Mat extra;
    label_components(leftover, extra);
    const int base = static_cast<int>(seeds.size());
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x)
            if (const int e = extra.at<int>(y, x); e > 0) labels.at<int>(y, x) = base + e;

    // Carve a separating line: a pixel touching a lower-numbered basin is
    // cleared, so basins never touch under 8-connectivity.
    cv::Mat out = bin.clone();
    for (int y = 0; y < rows; ++y)
        for (int x = 0; x < cols; ++x) {
            const int l = labels.at<int>(y, x);
            if (l == 0) continue;
            bool carve = false;
            for (int dy = -1; dy <= 1 && !carve; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || nx < 0 || ny >= rows || nx >= cols) continue;
                    const int o = labels.at<int>(ny, nx);
                    if (o > 0 && o < l) {
                        carve = true;
                        break;
                    }
                }
            if (carve) out.at<uchar>(y, x) = 0;
        }
    return make_mask(out, 2);
}

NucleusMask mask_variant_2(const cv::Mat& classes, const MaskParams& p) {
    return demerge(mask_variant_1(classes, p).binary, p);
}

NucleusMask mask_variant_3(const cv::Mat& classes, const MaskParams& p) {
    cv::Mat b;
    cv::medianBlur(darkest(classes), b, p.median_ksize);
    return make_mask(remove_small(b, p.min_area), 3);
}

std::vector<Component> components(const NucleusMask& mask) {
    std::vector<Component> out(mask.count);
    for (int i = 0; i < mask.count; ++i) out[i].id = i + 1;
    for (int y = 0; y < mask.labels.rows; ++y) {
        const int* l = mask.labels.ptr<int>(y);
        for (int x = 0; x < mask.labels.cols; ++x) {
            if (l[x] <= 0) continue;
            auto& c = out[l[x] - 1];
            ++c.area;
            c.cx += x;
            c.cy += y;
        }
    }
    for (auto& c : out)
        if (c.area > 0) {
            c.cx /= c.area;
            c.cy /= c.area;
        }
    return out;
}

nlohmann::json component_table(const NucleusMask& mask) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : components(mask))
        rows.push_back({{"id", c.id}, {"area", c.area}, {"centroid", {c.cx, c.cy}}});
    return {{"variant", mask.variant}, {"count", mask.count}, {"components", rows}};
}

nlohmann::json to_json(const SegmentParams& p) {
    return {{"denoise",
             {{"black_max_value", p.denoise.black_max_value},
              {"black_max_saturation", p.denoise.black_max_saturation},
              {"gray_max_saturation", p.denoise.gray_max_saturation},
              {"gray_min_value", p.denoise.gray_min_value},
              {"gray_max_value", p.denoise.gray_max_value},
              {"min_region_fraction", p.denoise.min_region_fraction},
              {"max_noise_fraction", p.denoise.max_noise_fraction}}},
            {"combine_weight", p.combine_weight},
            {"min_dynamic_range", p.min_dynamic_range},
            {"close_radius", p.mask.close_radius},
            {"open_radius", p.mask.open_radius},
            {"min_area", p.mask.min_area},
            {"seed_min_separation", p.mask.seed_min_separation},
            {"seed_min_distance", p.mask.seed_min_distance},
            {"median_ksize", p.mask.median_ksize}};
}

SegmentParams segment_params_from_json(const nlohmann::json& j) {
    SegmentParams p;
    if (j.contains("denoise")) {
        const auto& d = j["denoise"];
        p.denoise.black_max_value = d.value("black_max_value", p.denoise.black_max_value);
        p.denoise.black_max_saturation = d.value("black_max_saturation", p.denoise.black_max_saturation);
        p.denoise.gray_max_saturation = d.value("gray_max_saturation", p.denoise.gray_max_saturation);
        p.denoise.gray_min_value = d.value("gray_min_value", p.denoise.gray_min_value);
        p.denoise.gray_max_value = d.value("gray_max_value", p.denoise.gray_max_value);
        p.denoise.min_region_fraction = d.value("min_region_fraction", p.denoise.min_region_fraction);
        p.denoise.max_noise_fraction = d.value("max_noise_fraction", p.denoise.max_noise_fraction);
    }
    p.combine_weight = j.value("combine_weight", p.combine_weight);
    p.min_dynamic_range = j.value("min_dynamic_range", p.min_dynamic_range);
    p.mask.close_radius = j.value("close_radius", p.mask.close_radius);
    p.mask.open_radius = j.value("open_radius", p.mask.open_radius);
    p.mask.min_area = j.value("min_area", p.mask.min_area);
    p.mask.seed_min_separation = j.value("seed_min_separation", p.mask.seed_min_separation);
    p.mask.seed_min_distance = j.value("seed_min_distance", p.mask.seed_min_distance);
    p.mask.median_ksize = j.value("median_ksize", p.mask.median_ksize);
    if (!(p.combine_weight >= 0.0 && p.combine_weight <= 1.0))
        throw ConfigError("segment.combine_weight must lie in [0,1]");
    if (p.mask.median_ksize < 3 || p.mask.median_ksize % 2 == 0)
        throw ConfigError("segment.median_ksize must be odd and >= 3");
    if (p.mask.close_radius < 0 || p.mask.open_radius < 0 || p.mask.min_area < 0)
        throw ConfigError("segment radii and min_area must be non-negative");
    return p;
}

SegmentResult segment(const cv::Mat& rgb, const SegmentParams& p) {
    if (rgb.empty() || rgb.type() != CV_8UC3) throw DataError("segment expects an 8-bit RGB patch");
    SegmentResult r;
    DenoiseResult d = denoise(rgb, p.denoise);
    r.denoised = d.clean;
    r.denoise = std::move(d.report);
    r.stain = stain::process(r.denoised, p.stain);
    r.combined = combine(r.stain.normalized, r.stain.hematoxylin, p.combine_weight);

    double lo = 0.0, hi = 0.0;
    cv::minMaxLoc(r.combined, &lo, &hi);
    if (hi - lo >= p.min_dynamic_range) {
        try {
            r.thresholds = multi_otsu(r.combined);
        } catch (const DataError& e) {
            r.note = e.what();
        }
    } else {
        r.note = "combined image has no usable contrast";
    }

    if (r.thresholds) {
        r.classes = compact_classes(class_map(r.combined, *r.thresholds));
        r.masks[0] = mask_variant_1(r.classes, p.mask);
        r.masks[1] = demerge(r.masks[0].binary, p.mask);
        r.masks[2] = mask_variant_3(r.classes, p.mask);
    } else {
        r.classes = cv::Mat(rgb.size(), CV_8UC1, cv::Scalar(2));
        const cv::Mat empty(rgb.size(), CV_8UC1, cv::Scalar(0));
        for (int v = 0; v < 3; ++v) r.masks[v] = make_mask(empty, v + 1);
    }
    return r;
}

nlohmann::json to_json(const DenoiseReport& r) {
    return {{"noise_type", to_string(r.noise_type)}, {"replaced_fraction", r.replaced_fraction}};
}

nlohmann::json to_json(const OtsuThresholds& t) {
    return {{"t1", t.t1}, {"t2", t.t2}, {"between_class_variance", t.between_class_variance}};
}

void save_segmentation(const fs::path& dir, const cv::Mat& rgb, const SegmentResult& r, bool steps) {
    fs::create_directories(dir);
    nlohmann::json summary;
    summary["denoise"] = to_json(r.denoise);
    summary["thresholds"] = r.thresholds ? to_json(*r.thresholds) : nlohmann::json(nullptr);
    summary["stain"] = {{"model", stain::to_json(r.stain.model)},
                        {"fallback", r.stain.fallback},
                        {"warning", r.stain.warning}};
    if (!r.note.empty()) summary["note"] = r.note;
    for (const auto& m : r.masks) {
        const std::string v = std::to_string(m.variant);
        pyramid::write_rgb(dir / ("mask_" + v + ".png"), m.binary);
        std::ofstream(dir / ("components_" + v + ".json")) << component_table(m).dump(2) << '\n';
        summary["counts"][v] = m.count;
    }
    std::ofstream(dir / "segment.json") << summary.dump(2) << '\n';
    if (!steps) return;

    pyramid::write_rgb(dir / "step_0_input.png", rgb);
    pyramid::write_rgb(dir / "step_1_denoised.png", r.denoised);
    pyramid::write_rgb(dir / "step_1_noise_mask.png", r.denoise.replaced_mask());
    pyramid::write_rgb(dir / "step_2_normalized.png", r.stain.normalized);
    pyramid::write_rgb(dir / "step_3_hematoxylin.png", r.stain.hematoxylin);
    pyramid::write_rgb(dir / "step_4_combined.png", r.combined);
    cv::Mat classes = r.classes * 127;
    pyramid::write_rgb(dir / "step_5_classes.png", classes);
}

}  // namespace tumls::nucleus
