#include "tumls/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tumls/pyramid.hpp"

namespace fs = std::filesystem;

namespace tumls::synthetic {

metrics::Polygon outline(const Nucleus& n, int vertices) {
    metrics::Polygon p;
    p.reserve(vertices);
    for (int i = 0; i < vertices; ++i) {
        const double a = 2.0 * std::numbers::pi * i / vertices;
        p.emplace_back(n.cx + n.rx * std::cos(a), n.cy + n.ry * std::sin(a));
    }
    return p;
}

cv::Mat render_stains(const cv::Mat& hema, const cv::Mat& eosin, const stain::StainModel& m, double od_noise,
                      std::uint64_t seed) {
    CV_Assert(hema.type() == CV_64FC1 && eosin.type() == CV_64FC1 && hema.size() == eosin.size());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, od_noise > 0.0 ? od_noise : 1.0);
    cv::Mat od(hema.size(), CV_64FC3);
    for (int y = 0; y < od.rows; ++y)
        for (int x = 0; x < od.cols; ++x) {
            const double h = hema.at<double>(y, x), e = eosin.at<double>(y, x);
            auto& v = od.at<cv::Vec3d>(y, x);
            for (int c = 0; c < 3; ++c) {
                v[c] = m.stains[0][c] * h + m.stains[1][c] * e;
                if (od_noise > 0.0) v[c] += noise(rng);
            }
        }
    return stain::from_optical_density(od);
}

cv::Mat nuclei_mask(cv::Size size, const std::vector<Nucleus>& nuclei) {
    std::vector<metrics::Polygon> polys;
    for (const auto& n : nuclei) polys.push_back(outline(n));
    return metrics::rasterize(polys, size);
}

cv::Mat nuclei_patch(cv::Size size, const std::vector<Nucleus>& nuclei, const PatchStyle& s, std::uint64_t seed) {
    const cv::Mat mask = nuclei_mask(size, nuclei);
    cv::Mat h(size, CV_64FC1, cv::Scalar(s.stroma_hema));
    cv::Mat e(size, CV_64FC1, cv::Scalar(s.stroma_eosin));
    h.setTo(s.nucleus_hema, mask);
    e.setTo(s.nucleus_eosin, mask);
    return render_stains(h, e, stain::reference_model(), s.od_noise, seed);
}

std::vector<Nucleus> scatter_nuclei(cv::Rect region, int count, double r_min, double r_max, double max_elongation,
                                    std::mt19937_64& rng, double min_gap) {
    std::uniform_real_distribution<double> ur(r_min, r_max), ue(1.0, max_elongation), u01(0.0, 1.0);
    std::vector<Nucleus> out;
    for (int attempt = 0; attempt < count * 50 && static_cast<int>(out.size()) < count; ++attempt) {
        const double r = ur(rng);
        const double el = ue(rng);
        Nucleus n;
        if (u01(rng) < 0.5) {
            n.rx = r * el;
            n.ry = r;
        } else {
            n.rx = r;
            n.ry = r * el;
        }
        const double mx = std::max(n.rx, n.ry) + 1.0;
        if (region.width <= 2 * mx || region.height <= 2 * mx) continue;
        n.cx = region.x + mx + u01(rng) * (region.width - 2 * mx);
        n.cy = region.y + mx + u01(rng) * (region.height - 2 * mx);
        bool ok = true;
        for (const auto& o : out) {
            const double need = std::max(n.rx, n.ry) + std::max(o.rx, o.ry) + min_gap;
            if (std::hypot(n.cx - o.cx, n.cy - o.cy) < need) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(n);
    }
    return out;
}

std::vector<cv::Mat> two_texture_patches(std::size_t n, std::uint64_t seed, int size) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi), u01(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, 0.02);
    std::vector<cv::Mat> out;
    out.reserve(n);
    const stain::StainModel ref = stain::reference_model();
    for (std::size_t i = 0; i < n; ++i) {
        cv::Mat h(size, size, CV_64FC1), e(size, size, CV_64FC1);
        const double ph = phase(rng);
        if (i % 2 == 0) {
            // Stroma: eosin-dominant diagonal fibres.
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    e.at<double>(y, x) = 0.30 + 0.12 * std::sin(0.9 * (x + y) + ph) + jitter(rng);
                    h.at<double>(y, x) = 0.05 + jitter(rng) * 0.5;
                }
        } else {
            // Cellular: hematoxylin dots on a lighter eosin background.
            const double ox = u01(rng) * 8.0, oy = u01(rng) * 8.0;
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double dx = std::fmod(x + ox, 8.0) - 4.0, dy = std::fmod(y + oy, 8.0) - 4.0;
                    const double blob = std::exp(-(dx * dx + dy * dy) / 4.0);
                    h.at<double>(y, x) = 0.15 + 0.6 * blob + jitter(rng);
                    e.at<double>(y, x) = 0.15 + jitter(rng) * 0.5;
                }
        }
        cv::max(h, 0.0, h);
        cv::max(e, 0.0, e);
        out.push_back(render_stains(h, e, ref));
    }
    return out;
}

DemoSlide demo_slide(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DemoSlide d;
    d.tissue_top = size / 8;
    const cv::Rect left(0, d.tissue_top, size / 2, size - d.tissue_top);
    const cv::Rect right(size / 2, d.tissue_top, size - size / 2, size - d.tissue_top);
    const double area_scale = static_cast<double>(size) * size / (2048.0 * 2048.0);

    auto dense = scatter_nuclei(left, static_cast<int>(2600 * area_scale), 5.0, 7.0, 1.3, rng, 4.0);
    auto sparse = scatter_nuclei(right, static_cast<int>(500 * area_scale), 9.0, 13.0, 1.6, rng, 6.0);

    cv::Mat h(size, size, CV_64FC1, cv::Scalar(0.0)), e(size, size, CV_64FC1, cv::Scalar(0.0));
    std::normal_distribution<double> texture(0.0, 0.03);
    for (int y = d.tissue_top; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool is_left = x < size / 2;
            const double wave = 0.06 * std::sin(0.05 * x) * std::cos(0.04 * y);
            h.at<double>(y, x) = std::max(0.0, (is_left ? 0.12 : 0.05) + texture(rng));
            e.at<double>(y, x) = std::max(0.0, (is_left ? 0.22 : 0.45) + wave + texture(rng));
        }
    const cv::Mat mask_dense = nuclei_mask(h.size(), dense);
    const cv::Mat mask_sparse = nuclei_mask(h.size(), sparse);
    h.setTo(0.85, mask_dense);
    e.setTo(0.08, mask_dense);
    h.setTo(0.70, mask_sparse);
    e.setTo(0.12, mask_sparse);

    d.image = render_stains(h, e, stain::reference_model(), 0.01, seed ^ 0x9e3779b97f4a7c15ULL);
    d.nuclei = std::move(dense);
    d.nuclei.insert(d.nuclei.end(), sparse.begin(), sparse.end());
    return d;
}

std::string annotation_xml(const std::vector<metrics::Polygon>& polygons) {
    std::ostringstream os;
    os.precision(10);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<Annotations MicronsPerPixel=\"0.252\">\n"
       << "  <Annotation Id=\"1\" Type=\"4\">\n    <Regions>\n";
    int id = 1;
    for (const auto& p : polygons) {
        os << "      <Region Id=\"" << id++ << "\" Type=\"0\">\n        <Vertices>\n";
        for (const auto& v : p) os << "          <Vertex X=\"" << v.x << "\" Y=\"" << v.y << "\" Z=\"0\"/>\n";
        os << "        </Vertices>\n      </Region>\n";
    }
    os << "    </Regions>\n  </Annotation>\n</Annotations>\n";
    return os.str();
}

void write_demo(const fs::path& dir, int size, std::uint64_t seed) {
    fs::create_directories(dir / "dataset" / "images");
    fs::create_directories(dir / "dataset" / "annotations");
    const DemoSlide slide = demo_slide(size, seed);
    pyramid::write_rgb(dir / "slide.png", slide.image);

    // Four evaluation tiles, two per tissue, with polygon ground truth.
    const int tile = std::min(256, size / 4);
    const std::vector<std::pair<std::string, cv::Point>> tiles{
        {"demo-dense-1", {size / 8, size / 4}},
        {"demo-dense-2", {size / 8, size / 2 + size / 8}},
        {"demo-sparse-1", {size / 2 + size / 8, size / 4}},
        {"demo-sparse-2", {size / 2 + size / 8, size / 2 + size / 8}}};
    std::ofstream organs(dir / "dataset" / "organs.csv");
    organs << "image,organ\n";
    for (const auto& [name, origin] : tiles) {
        const cv::Rect r(origin.x, origin.y, tile, tile);
        pyramid::write_rgb(dir / "dataset" / "images" / (name + ".png"), slide.image(r));
        std::vector<metrics::Polygon> polys;
        for (const auto& n : slide.nuclei) {
            if (n.cx + n.rx < r.x || n.cx - n.rx >= r.x + r.width || n.cy + n.ry < r.y ||
                n.cy - n.ry >= r.y + r.height)
                continue;
            auto p = outline(n);
            for (auto& v : p) v -= cv::Point2d(r.x, r.y);
            polys.push_back(std::move(p));
        }
        std::ofstream(dir / "dataset" / "annotations" / (name + ".xml")) << annotation_xml(polys);
        organs << name << ',' << (name.find("dense") != std::string::npos ? "DenseTissue" : "SparseTissue") << '\n';
    }

    nlohmann::json cfg = {
        {"seed", seed},
        {"input", {{"image", "slide.png"}, {"source_id", "demo-slide"}}},
        {"pyramid", {{"high", 128}, {"low", 16}, {"steps", 3}}},
        {"train", {{"max_epochs", 40}, {"rng_seed", seed}}},
        {"cluster", {{"k_max", 10}, {"n_representatives", 5}, {"seed", seed}}},
        {"eval", {{"dataset", "dataset"}}}};
    std::ofstream(dir / "config.json") << cfg.dump(2) << '\n';
}

}  // namespace tumls::synthetic
