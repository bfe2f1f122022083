#include "tumls/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "tumls/error.hpp"
#include "tumls/features.hpp"
#include "tumls/parallel.hpp"
#include "tumls/pyramid.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace tumls::metrics {

namespace {

struct Overlap {
    long long a = 0, b = 0, both = 0;
};

Overlap overlap(const cv::Mat& pred, const cv::Mat& gt) {
    if (pred.size() != gt.size()) throw DataError("mask dimensions differ");
    CV_Assert(pred.type() == CV_8UC1 && gt.type() == CV_8UC1);
    Overlap o;
    for (int y = 0; y < pred.rows; ++y) {
        const uchar* p = pred.ptr<uchar>(y);
        const uchar* g = gt.ptr<uchar>(y);
        for (int x = 0; x < pred.cols; ++x) {
            const bool a = p[x] != 0, b = g[x] != 0;
            o.a += a;
            o.b += b;
            o.both += a && b;
        }
    }
    return o;
}

}  // namespace

double dice(const cv::Mat& pred, const cv::Mat& gt) {
    const Overlap o = overlap(pred, gt);
    if (o.a + o.b == 0) return 1.0;
    return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double jaccard(const cv::Mat& pred, const cv::Mat& gt) {
    const Overlap o = overlap(pred, gt);
    const long long uni = o.a + o.b - o.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.both) / static_cast<double>(uni);
}

double mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) throw DataError("mse: size mismatch");
    if (pred.empty()) throw DataError("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

double mse(const cv::Mat& pred, const cv::Mat& target) {
    if (pred.size() != target.size() || pred.channels() != target.channels())
        throw DataError("mse: shape mismatch");
    cv::Mat a, b;
    pred.reshape(1, 1).convertTo(a, CV_64F);
    target.reshape(1, 1).convertTo(b, CV_64F);
    return mse(std::span<const double>(a.ptr<double>(), a.total()),
               std::span<const double>(b.ptr<double>(), b.total()));
}

cv::Mat rasterize(const std::vector<Polygon>& polygons, cv::Size size) {
    cv::Mat mask(size, CV_8UC1, cv::Scalar(0));
    std::vector<double> xs;
    for (const auto& poly : polygons) {
        if (poly.size() < 3) continue;
        double ymin = poly[0].y, ymax = poly[0].y;
        for (const auto& p : poly) {
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
        const int y0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
        const int y1 = std::min(size.height - 1, static_cast<int>(std::ceil(ymax)));
        for (int y = y0; y <= y1; ++y) {
            const double yc = y + 0.5;
            xs.clear();
            for (std::size_t i = 0; i < poly.size(); ++i) {
                const auto& a = poly[i];
                const auto& b = poly[(i + 1) % poly.size()];
                if ((a.y <= yc && yc < b.y) || (b.y <= yc && yc < a.y))
                    xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
            }
            std::sort(xs.begin(), xs.end());
            uchar* row = mask.ptr<uchar>(y);
            for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
                const int xa = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
                const int xb = std::min(size.width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
                for (int x = xa; x < xb; ++x) row[x] = 255;
            }
        }
    }
    return mask;
}

namespace {

void collect_regions(const pt::ptree& node, const cv::Size dims, std::vector<Polygon>& out) {
    for (const auto& [name, child] : node) {
        if (name == "Region") {
            Polygon poly;
            if (auto verts = child.get_child_optional("Vertices")) {
                for (const auto& [vname, v] : *verts) {
                    if (vname != "Vertex") continue;
                    const double x = v.get<double>("<xmlattr>.X");
                    const double y = v.get<double>("<xmlattr>.Y");
                    poly.emplace_back(std::clamp(x, 0.0, static_cast<double>(dims.width)),
                                      std::clamp(y, 0.0, static_cast<double>(dims.height)));
                }
            }
            out.push_back(std::move(poly));
        } else if (name != "<xmlattr>") {
            collect_regions(child, dims, out);
        }
    }
}

}  // namespace

GroundTruth parse_annotations(const std::string& xml_text, cv::Size dims, const std::string& image_id) {
    GroundTruth gt;
    gt.image_id = image_id;
    gt.organ = organ_from_tcga(image_id);
    pt::ptree tree;
    std::istringstream in(xml_text);
    try {
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw DataError("malformed annotation XML" + (image_id.empty() ? "" : " for " + image_id) +
                        " at line " + std::to_string(e.line()) + ": " + e.message());
    }
    try {
        collect_regions(tree, dims, gt.polygons);
    } catch (const pt::ptree_error& e) {
        throw DataError("malformed annotation vertex" + (image_id.empty() ? "" : " in " + image_id) + ": " +
                        e.what());
    }
    if (gt.polygons.empty()) gt.warnings.push_back("annotation has no regions; ground truth is empty");
    gt.mask = rasterize(gt.polygons, dims);
    return gt;
}

std::string organ_from_tcga(const std::string& id) {
    static const std::map<std::string, std::string> sites{
        {"A7", "Breast"}, {"AC", "Breast"}, {"AO", "Breast"}, {"AR", "Breast"}, {"E2", "Breast"},
        {"2Z", "Kidney"}, {"GL", "Kidney"}, {"IZ", "Kidney"}, {"B0", "Kidney"}, {"HE", "Kidney"},
        {"44", "Lung"},   {"69", "Lung"},   {"38", "Lung"},   {"49", "Lung"},   {"50", "Lung"},
        {"21", "Lung"},   {"18", "Lung"},   {"EJ", "Prostate"}, {"HC", "Prostate"}, {"G9", "Prostate"},
        {"CH", "Prostate"}, {"CU", "Bladder"}, {"ZF", "Bladder"}, {"DK", "Bladder"}, {"BL", "Bladder"},
        {"A6", "Colon"},  {"AY", "Colon"},  {"AA", "Colon"},  {"CM", "Colon"},  {"HT", "Brain"},
        {"FG", "Brain"},  {"DU", "Brain"},  {"CS", "Brain"},  {"06", "Brain"},  {"NJ", "Lung"},
        {"RD", "Stomach"}, {"KB", "Stomach"}};
    if (id.rfind("TCGA-", 0) != 0 || id.size() < 7) return "unknown";
    const auto it = sites.find(id.substr(5, 2));
    return it == sites.end() ? "unknown" : it->second;
}

int EvalResult::best_variant() const {
    int best = 1;
    double bd = -1.0;
    for (const auto& [v, s] : overall)
        if (s.first > bd) {
            bd = s.first;
            best = v;
        }
    return best;
}

nlohmann::json EvalResult::to_json() const {
    nlohmann::json j;
    for (const auto& [organ, vs] : per_organ)
        for (const auto& [v, s] : vs)
            j["per_organ"][organ]["mask_" + std::to_string(v)] = {{"dice", s.first}, {"jaccard", s.second}};
    for (const auto& [v, s] : overall)
        j["overall"]["mask_" + std::to_string(v)] = {{"dice", s.first}, {"jaccard", s.second}};
    j["best_variant"] = overall.empty() ? 0 : best_variant();
    j["images"] = rows.size() / 3;
    j["warnings"] = warnings;
    return j;
}

std::vector<EvalRow> score_image(const std::string& image, const std::string& organ,
                                 const std::array<nucleus::NucleusMask, 3>& masks, const cv::Mat& gt) {
    std::vector<EvalRow> rows;
    for (const auto& m : masks) {
        EvalRow r{image, organ, m.variant, dice(m.binary, gt), jaccard(m.binary, gt)};
        if (std::abs(r.jaccard - r.dice / (2.0 - r.dice)) > 1e-12)
            throw NumericError("dice/jaccard identity violated for " + image);
        rows.push_back(r);
    }
    return rows;
}

void aggregate(EvalResult& res) {
    std::map<std::string, std::map<int, std::vector<std::pair<double, double>>>> acc;
    for (const auto& r : res.rows) acc[r.organ][r.variant].emplace_back(r.dice, r.jaccard);
    res.per_organ.clear();
    res.overall.clear();
    std::map<int, std::vector<std::pair<double, double>>> organ_means;
    for (const auto& [organ, vs] : acc)
        for (const auto& [v, list] : vs) {
            double d = 0.0, j = 0.0;
            for (const auto& [dd, jj] : list) {
                d += dd;
                j += jj;
            }
            const double n = static_cast<double>(list.size());
            res.per_organ[organ][v] = {d / n, j / n};
            organ_means[v].emplace_back(d / n, j / n);
        }
    for (const auto& [v, list] : organ_means) {
        double d = 0.0, j = 0.0;
        for (const auto& [dd, jj] : list) {
            d += dd;
            j += jj;
        }
        res.overall[v] = {d / static_cast<double>(list.size()), j / static_cast<double>(list.size())};
    }
}

namespace {

std::map<std::string, std::string> read_organ_table(const fs::path& path) {
    std::map<std::string, std::string> table;
    std::ifstream is(path);
    std::string line;
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        std::string image = line.substr(0, comma), organ = line.substr(comma + 1);
        while (!organ.empty() && (organ.back() == '\r' || organ.back() == ' ')) organ.pop_back();
        if (image == "image") continue;
        table[image] = organ;
    }
    return table;
}

}  // namespace

EvalResult evaluate(const fs::path& dataset, const nucleus::SegmentParams& params) {
    const fs::path images = dataset / "images", annotations = dataset / "annotations";
    if (!fs::is_directory(images)) throw DataError("missing " + images.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(images)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".tif" || ext == ".tiff" || ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    const auto organs = fs::exists(dataset / "organs.csv") ? read_organ_table(dataset / "organs.csv")
                                                           : std::map<std::string, std::string>{};

    EvalResult res;
    std::vector<std::vector<EvalRow>> per_image(files.size());
    std::vector<std::string> warn(files.size());
    parallel_for(files.size(), [&](std::size_t i) {
        const std::string stem = files[i].stem().string();
        const fs::path xml = annotations / (stem + ".xml");
        if (!fs::exists(xml)) {
            warn[i] = "no ground truth for " + stem + "; skipped";
            return;
        }
        const cv::Mat rgb = pyramid::read_rgb(files[i]);
        std::ifstream is(xml);
        std::stringstream ss;
        ss << is.rdbuf();
        GroundTruth gt = parse_annotations(ss.str(), rgb.size(), stem);
        if (auto it = organs.find(stem); it != organs.end()) gt.organ = it->second;
        for (const auto& w : gt.warnings) warn[i] += stem + ": " + w;
        const auto seg = nucleus::segment(rgb, params);
        per_image[i] = score_image(stem, gt.organ, seg.masks, gt.mask);
    });
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!warn[i].empty()) {
            std::cerr << "warning: " << warn[i] << '\n';
            res.warnings.push_back(warn[i]);
        }
        for (auto& r : per_image[i]) res.rows.push_back(std::move(r));
    }
    aggregate(res);
    return res;
}

void write_eval(const fs::path& out_dir, const EvalResult& res) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "eval.csv");
    csv << "image,organ,variant,dice,jaccard\n";
    for (const auto& r : res.rows)
        csv << r.image << ',' << r.organ << ',' << r.variant << ',' << features::format_number(r.dice) << ','
            << features::format_number(r.jaccard) << '\n';
    std::ofstream(out_dir / "eval.json") << res.to_json().dump(2) << '\n';
}

}  // namespace tumls::metrics
