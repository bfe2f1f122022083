#include "tumls/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "tumls/error.hpp"

namespace tumls::features {

GLCM glcm(const cv::Mat& gray, int dx, int dy, int levels) {
    CV_Assert(gray.type() == CV_8UC1);
    if (levels < 1 || levels > 256) throw ConfigError("GLCM levels must lie in [1,256]");
    GLCM g;
    g.levels = levels;
    g.p.assign(static_cast<std::size_t>(levels) * levels, 0.0);
    double total = 0.0;
    for (int y = 0; y < gray.rows; ++y) {
        const int y2 = y + dy;
        if (y2 < 0 || y2 >= gray.rows) continue;
        for (int x = 0; x < gray.cols; ++x) {
            const int x2 = x + dx;
            if (x2 < 0 || x2 >= gray.cols) continue;
            const int a = gray.at<uchar>(y, x) * levels / 256;
            const int b = gray.at<uchar>(y2, x2) * levels / 256;
            g.p[static_cast<std::size_t>(a) * levels + b] += 1.0;
            g.p[static_cast<std::size_t>(b) * levels + a] += 1.0;
            total += 2.0;
        }
    }
    if (total > 0.0)
        for (double& v : g.p) v /= total;
    return g;
}

double contrast(const GLCM& g) {
    double s = 0.0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j) s += g.at(i, j) * static_cast<double>((i - j) * (i - j));
    return s;
}

double homogeneity(const GLCM& g) {
    double s = 0.0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j) s += g.at(i, j) / (1.0 + static_cast<double>((i - j) * (i - j)));
    return s;
}

IntensityStats intensity_stats(const cv::Mat& rgb, const nucleus::NucleusMask& mask, const cv::Mat& conc) {
    CV_Assert(rgb.type() == CV_8UC3 && conc.type() == CV_64FC2);
    double gsum = 0.0, hsum = 0.0;
    long long n = 0;
    for (int y = 0; y < rgb.rows; ++y) {
        const auto* px = rgb.ptr<cv::Vec3b>(y);
        const auto* c = conc.ptr<cv::Vec2d>(y);
        const uchar* m = mask.binary.ptr<uchar>(y);
        for (int x = 0; x < rgb.cols; ++x) {
            if (!m[x]) continue;
            gsum += 0.299 * px[x][0] + 0.587 * px[x][1] + 0.114 * px[x][2];
            hsum += c[x][0];
            ++n;
        }
    }
    IntensityStats s;
    if (n > 0) {
        s.intensity = gsum / static_cast<double>(n);
        s.staining_intensity = hsum / static_cast<double>(n);
    }
    return s;
}

namespace {

double contour_length(const std::vector<cv::Point>& c) {
    if (c.size() < 2) return 0.0;
    double len = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const cv::Point d = c[(i + 1) % c.size()] - c[i];
        len += (d.x != 0 && d.y != 0) ? std::numbers::sqrt2 : 1.0;
    }
    return len;
}

}  // namespace

std::vector<ComponentShape> component_shapes(const nucleus::NucleusMask& mask) {
    std::vector<ComponentShape> shapes(mask.count);
    // Raw moments per component.
    std::vector<double> sx(mask.count, 0), sy(mask.count, 0), sxx(mask.count, 0),
        syy(mask.count, 0), sxy(mask.count, 0);
    std::vector<cv::Rect> box(mask.count);
    for (int y = 0; y < mask.labels.rows; ++y) {
        const int* l = mask.labels.ptr<int>(y);
        for (int x = 0; x < mask.labels.cols; ++x) {
            if (l[x] <= 0) continue;
            const int i = l[x] - 1;
            auto& s = shapes[i];
            box[i] = s.area == 0 ? cv::Rect(x, y, 1, 1) : (box[i] | cv::Rect(x, y, 1, 1));
            ++s.area;
            sx[i] += x;
            sy[i] += y;
            sxx[i] += static_cast<double>(x) * x;
            syy[i] += static_cast<double>(y) * y;
            sxy[i] += static_cast<double>(x) * y;
        }
    }
    for (int i = 0; i < mask.count; ++i) {
        auto& s = shapes[i];
        if (s.area == 0) continue;
        const double a = s.area;
        s.cx = sx[i] / a;
        s.cy = sy[i] / a;
        const double mu20 = sxx[i] / a - s.cx * s.cx;
        const double mu02 = syy[i] / a - s.cy * s.cy;
        const double mu11 = sxy[i] / a - s.cx * s.cy;
        const double mean = 0.5 * (mu20 + mu02);
        const double root = std::sqrt(0.25 * (mu20 - mu02) * (mu20 - mu02) + mu11 * mu11);
        const double l1 = mean + root, l2 = std::max(0.0, mean - root);
        s.eccentricity = l1 > 0.0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;

        // Outer contour of this component inside a padded crop.
        const cv::Rect r = box[i];
        cv::Mat crop(r.height + 2, r.width + 2, CV_8UC1, cv::Scalar(0));
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x)
                if (mask.labels.at<int>(r.y + y, r.x + x) == i + 1) crop.at<uchar>(y + 1, x + 1) = 255;
        std::vector<std::vector<cv::Point>> contours;
        cv::findContours(crop, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_NONE);
        double best = 0.0;
        for (const auto& c : contours) best = std::max(best, contour_length(c));
        s.perimeter = best;
        s.circularity = best > 0.0 ? 4.0 * std::numbers::pi * a / (best * best) : 0.0;
    }
    return shapes;
}

Morphology morphology(const nucleus::NucleusMask& mask) {
    Morphology m;
    const auto shapes = component_shapes(mask);
    m.num_nuclei = static_cast<int>(shapes.size());
    if (shapes.empty()) return m;
    double area = 0.0, circ = 0.0, ecc = 0.0;
    int circ_n = 0;
    for (const auto& s : shapes) {
        area += s.area;
        ecc += s.eccentricity;
        if (s.perimeter > 0.0) {
            circ += s.circularity;
            ++circ_n;
        }
    }
    m.total_area = area;
    m.size = area / static_cast<double>(shapes.size());
    m.eccentricity = ecc / static_cast<double>(shapes.size());
    if (circ_n > 0) m.circularity = circ / circ_n;
    return m;
}

double density(const nucleus::NucleusMask& mask) {
    const double area = static_cast<double>(mask.binary.total());
    return area > 0.0 ? static_cast<double>(mask.count) / area : 0.0;
}

std::optional<double> spread(const std::vector<cv::Point2d>& c) {
    if (c.size() < 2) return std::nullopt;
    std::vector<double> d;
    d.reserve(c.size() * (c.size() - 1) / 2);
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = i + 1; j < c.size(); ++j) d.push_back(std::hypot(c[i].x - c[j].x, c[i].y - c[j].y));
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(d.size()));
}

std::optional<double> spread(const nucleus::NucleusMask& mask) {
    std::vector<cv::Point2d> c;
    for (const auto& comp : nucleus::components(mask)) c.emplace_back(comp.cx, comp.cy);
    return spread(c);
}

const std::vector<std::string>& FeatureVector::names() {
    static const std::vector<std::string> n{"contrast", "homogeneity", "intensity", "staining_intensity",
                                            "num_nuclei", "size", "circularity", "density",
                                            "eccentricity", "spread"};
    return n;
}

std::vector<std::optional<double>> FeatureVector::values() const {
    return {contrast, homogeneity, intensity, staining_intensity, num_nuclei,
            size,     circularity, density,   eccentricity,       spread};
}

void FeatureVector::set(std::size_t i, std::optional<double> v) {
    std::optional<double>* slots[] = {&contrast, &homogeneity, &intensity, &staining_intensity, &num_nuclei,
                                      &size,     &circularity, &density,   &eccentricity,       &spread};
    *slots[i] = v;
}

FeatureVector extract_all(const cv::Mat& rgb, const nucleus::NucleusMask& mask, const cv::Mat& conc) {
    CV_Assert(rgb.type() == CV_8UC3);
    cv::Mat gray;
    cv::cvtColor(rgb, gray, cv::COLOR_RGB2GRAY);
    const GLCM g = glcm(gray);
    FeatureVector f;
    f.contrast = contrast(g);
    f.homogeneity = homogeneity(g);
    const auto st = intensity_stats(rgb, mask, conc);
    f.intensity = st.intensity;
    f.staining_intensity = st.staining_intensity;
    const auto m = morphology(mask);
    f.num_nuclei = m.num_nuclei;
    f.size = m.size;
    f.circularity = m.circularity;
    f.eccentricity = m.eccentricity;
    f.density = density(mask);
    f.spread = spread(mask);
    f.total_area = m.total_area;
    return f;
}

std::vector<FeatureVector> normalize_features(const std::vector<FeatureVector>& rows) {
    std::vector<FeatureVector> out = rows;
    const std::size_t nf = FeatureVector::names().size();
    for (std::size_t k = 0; k < nf; ++k) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& r : rows)
            if (auto v = r.values()[k]) {
                lo = std::min(lo, *v);
                hi = std::max(hi, *v);
            }
        for (auto& r : out) {
            auto v = r.values()[k];
            if (!v) continue;
            r.set(k, hi > lo ? (*v - lo) / (hi - lo) : 0.5);
        }
    }
    return out;
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; }

std::optional<double> parse_cell(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

const char* kHeader =
    "level,gx,gy,size_px,cluster,contrast,homogeneity,intensity,staining_intensity,num_nuclei,size,"
    "circularity,density,eccentricity,spread,total_area";

}  // namespace

void write_csv(const std::filesystem::path& path, const std::vector<FeatureVector>& rows) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << kHeader << '\n';
    for (const auto& r : rows) {
        os << r.address.level << ',' << r.address.gx << ',' << r.address.gy << ',' << r.address.size << ','
           << r.cluster;
        for (const auto& v : r.values()) os << ',' << cell(v);
        os << ',' << cell(r.total_area) << '\n';
    }
}

std::vector<FeatureVector> read_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != kHeader) throw DataError("unexpected feature CSV header in " + path.string());
    std::vector<FeatureVector> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != 16) throw DataError("malformed feature CSV row: " + line);
        FeatureVector f;
        f.address = {std::stoi(cells[0]), std::stoi(cells[1]), std::stoi(cells[2]), std::stoi(cells[3])};
        f.cluster = std::stoi(cells[4]);
        for (std::size_t k = 0; k < 10; ++k) f.set(k, parse_cell(cells[5 + k]));
        f.total_area = parse_cell(cells[15]);
        rows.push_back(f);
    }
    return rows;
}

}  // namespace tumls::features
