#include "tumls/pyramid.hpp"

#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tumls/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tumls::pyramid {

cv::Mat read_rgb(const fs::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image: " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    return rgb;
}

void write_rgb(const fs::path& path, const cv::Mat& rgb) {
    cv::Mat out;
    if (rgb.channels() == 3) {
        cv::cvtColor(rgb, out, cv::COLOR_RGB2BGR);
    } else {
        out = rgb;
    }
    if (!cv::imwrite(path.string(), out)) throw DataError("cannot write image: " + path.string());
}

namespace {

cv::Mat box_downsample(const cv::Mat& src) {
    const int w = (src.cols + 1) / 2;
    const int h = (src.rows + 1) / 2;
    cv::Mat dst(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int sum[3] = {0, 0, 0};
            int n = 0;
            for (int dy = 0; dy < 2; ++dy) {
                const int sy = 2 * y + dy;
                if (sy >= src.rows) continue;
                for (int dx = 0; dx < 2; ++dx) {
                    const int sx = 2 * x + dx;
                    if (sx >= src.cols) continue;
                    const auto& p = src.at<cv::Vec3b>(sy, sx);
                    for (int c = 0; c < 3; ++c) sum[c] += p[c];
                    ++n;
                }
            }
            auto& q = dst.at<cv::Vec3b>(y, x);
            for (int c = 0; c < 3; ++c) q[c] = static_cast<uchar>((sum[c] + n / 2) / n);
        }
    }
    return dst;
}

void require_level(const ImagePyramid& pyr, int level) {
    if (level < 0 || level >= pyr.num_levels())
        throw DataError("level " + std::to_string(level) + " out of range [0, " +
                        std::to_string(pyr.num_levels()) + ")");
}

}  // namespace

ImagePyramid build_pyramid(const cv::Mat& rgb, int num_levels, std::string source_id) {
    if (num_levels < 1) throw ConfigError("num_levels must be >= 1");
    if (rgb.empty()) throw DataError("empty image");
    if (rgb.type() != CV_8UC3) throw DataError("pyramid input must be 8-bit RGB");
    const long long need = 1LL << (num_levels - 1);
    if (rgb.cols < need || rgb.rows < need) throw DataError("pyramid too deep");

    ImagePyramid pyr;
    pyr.source_id = std::move(source_id);
    pyr.levels.push_back(rgb.clone());
    pyr.downsample.push_back(1);
    for (int i = 1; i < num_levels; ++i) {
        pyr.levels.push_back(box_downsample(pyr.levels.back()));
        pyr.downsample.push_back(pyr.downsample.back() * 2);
    }
    return pyr;
}

std::vector<Patch> extract_patches(const ImagePyramid& pyr, int level, int size, int stride) {
    require_level(pyr, level);
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (size < 1) throw ConfigError("patch size must be >= 1");
    const cv::Mat& img = pyr.levels[level];
    if (size > img.cols || size > img.rows)
        throw DataError("patch size " + std::to_string(size) + " exceeds level " +
                        std::to_string(level) + " dimensions " + std::to_string(img.cols) + "x" +
                        std::to_string(img.rows));

    const int nx = (img.cols - size) / stride + 1;
    const int ny = (img.rows - size) / stride + 1;
    std::vector<Patch> out;
    out.reserve(static_cast<std::size_t>(nx) * ny);
    for (int gy = 0; gy < ny; ++gy) {
        for (int gx = 0; gx < nx; ++gx) {
            Patch p;
            p.pixels = img(cv::Rect(gx * stride, gy * stride, size, size)).clone();
            p.address = {level, gx, gy, size};
            p.source_id = pyr.source_id;
            out.push_back(std::move(p));
        }
    }
    return out;
}

PatchAddress corresponding_region(const ImagePyramid& pyr, const PatchAddress& addr,
                                  int target_level) {
    require_level(pyr, addr.level);
    require_level(pyr, target_level);
    PatchAddress out = addr;
    out.level = target_level;
    const int diff = addr.level - target_level;
    if (diff >= 0) {
        out.size = addr.size << diff;
    } else {
        if (addr.size % (1 << -diff) != 0)
            throw DataError("patch size " + std::to_string(addr.size) +
                            " not divisible when mapping to coarser level");
        out.size = addr.size >> -diff;
    }
    const cv::Mat& img = pyr.levels[target_level];
    if (static_cast<long long>(out.gx + 1) * out.size > img.cols ||
        static_cast<long long>(out.gy + 1) * out.size > img.rows)
        throw DataError("corresponding region exceeds level " + std::to_string(target_level) +
                        " bounds");
    return out;
}

cv::Mat crop(const ImagePyramid& pyr, const PatchAddress& addr) {
    require_level(pyr, addr.level);
    const cv::Mat& img = pyr.levels[addr.level];
    const cv::Rect r(addr.gx * addr.size, addr.gy * addr.size, addr.size, addr.size);
    if (r.x < 0 || r.y < 0 || r.x + r.width > img.cols || r.y + r.height > img.rows)
        throw DataError("patch address outside level bounds");
    return img(r).clone();
}

std::string patch_file_name(const PatchAddress& a) {
    return "L" + std::to_string(a.level) + "_x" + std::to_string(a.gx) + "_y" +
           std::to_string(a.gy) + ".png";
}

json to_json(const PatchAddress& a) {
    return json{{"level", a.level}, {"gx", a.gx}, {"gy", a.gy}, {"size", a.size}};
}

PatchAddress address_from_json(const json& j) {
    PatchAddress a;
    a.level = j.at("level").get<int>();
    a.gx = j.at("gx").get<int>();
    a.gy = j.at("gy").get<int>();
    a.size = j.at("size").get<int>();
    return a;
}

void save_patchset(const fs::path& dir, const std::vector<Patch>& patches, const json& params) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "tumls-patchset";
    manifest["version"] = 1;
    manifest["source_id"] = patches.empty() ? std::string{} : patches.front().source_id;
    manifest["params"] = params;
    json entries = json::array();
    for (const auto& p : patches) {
        const std::string name = patch_file_name(p.address);
        write_rgb(dir / name, p.pixels);
        json e = to_json(p.address);
        e["file"] = name;
        e["source_id"] = p.source_id;
        entries.push_back(std::move(e));
    }
    manifest["patches"] = std::move(entries);
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

std::vector<Patch> load_patchset(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("missing patch manifest in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("corrupt patch manifest " + (dir / "manifest.json").string() + ": " +
                        e.what());
    }
    if (!manifest.contains("patches") || !manifest["patches"].is_array())
        throw DataError("corrupt patch manifest: no patches array");

    std::vector<Patch> out;
    const auto& entries = manifest["patches"];
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        Patch p;
        try {
            p.address = address_from_json(e);
            p.source_id = e.value("source_id", manifest.value("source_id", std::string{}));
            const std::string file = e.at("file").get<std::string>();
            p.pixels = read_rgb(dir / file);
        } catch (const std::exception& ex) {
            throw DataError("corrupt patch manifest entry " + std::to_string(i) + " (" +
                            e.dump() + "): " + ex.what());
        }
        if (p.pixels.cols != p.address.size || p.pixels.rows != p.address.size)
            throw DataError("corrupt patch manifest entry " + std::to_string(i) + " (" +
                            e.dump() + "): image size does not match declared size");
        out.push_back(std::move(p));
    }
    return out;
}

void save_pyramid(const fs::path& dir, const ImagePyramid& pyr) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "tumls-pyramid";
    manifest["version"] = 1;
    manifest["source_id"] = pyr.source_id;
    manifest["numbering"] = "level 0 is the finest resolution; level i has downsample 2^i";
    json levels = json::array();
    for (int i = 0; i < pyr.num_levels(); ++i) {
        const std::string name = "level_" + std::to_string(i) + ".png";
        write_rgb(dir / name, pyr.levels[i]);
        levels.push_back({{"file", name},
                          {"width", pyr.levels[i].cols},
                          {"height", pyr.levels[i].rows},
                          {"downsample", pyr.downsample[i]}});
    }
    manifest["levels"] = std::move(levels);
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

ImagePyramid load_pyramid(const fs::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("missing pyramid manifest in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(std::string("corrupt pyramid manifest: ") + e.what());
    }
    ImagePyramid pyr;
    pyr.source_id = manifest.value("source_id", std::string{});
    const auto& levels = manifest.at("levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& e = levels[i];
        cv::Mat img = read_rgb(dir / e.at("file").get<std::string>());
        const int ds = e.at("downsample").get<int>();
        if (img.cols != e.at("width").get<int>() || img.rows != e.at("height").get<int>())
            throw DataError("pyramid level " + std::to_string(i) + " dimensions mismatch manifest");
        if (ds != (1 << i)) throw DataError("pyramid level " + std::to_string(i) +
                                            " downsample must be " + std::to_string(1 << i));
        if (i > 0) {
            const cv::Mat& prev = pyr.levels.back();
            if (img.cols != (prev.cols + 1) / 2 || img.rows != (prev.rows + 1) / 2)
                throw DataError("pyramid level " + std::to_string(i) +
                                " is not half the size of its predecessor");
        }
        pyr.levels.push_back(std::move(img));
        pyr.downsample.push_back(ds);
    }
    if (pyr.levels.empty()) throw DataError("pyramid manifest lists no levels");
    return pyr;
}

}  // namespace tumls::pyramid
