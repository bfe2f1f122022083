#include <cmath>

#include <gtest/gtest.h>

#include "tumls/features.hpp"
#include "tumls/synthetic.hpp"
#include "util.hpp"

using namespace tumls;
using namespace tumls::features;

namespace {

nucleus::NucleusMask mask_of(const cv::Mat& binary) { return nucleus::make_mask(binary, 1); }

cv::Mat ellipse_image(cv::Size size, cv::Point2d c, double rx, double ry) {
    cv::Mat m(size, CV_8UC1, cv::Scalar(0));
    for (int y = 0; y < size.height; ++y)
        for (int x = 0; x < size.width; ++x) {
            const double u = (x - c.x) / rx, v = (y - c.y) / ry;
            if (u * u + v * v <= 1.0) m.at<uchar>(y, x) = 255;
        }
    return m;
}

}  // namespace

TEST(Glcm, ConstantImage) {
    const auto g = glcm(cv::Mat(10, 10, CV_8UC1, cv::Scalar(100)));
    EXPECT_DOUBLE_EQ(g.at(100 * 32 / 256, 100 * 32 / 256), 1.0);
    EXPECT_EQ(contrast(g), 0.0);
    EXPECT_DOUBLE_EQ(homogeneity(g), 1.0);
}

TEST(Glcm, CheckerboardIsOffDiagonal) {
    cv::Mat m(6, 6, CV_8UC1);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) m.at<uchar>(y, x) = (x + y) % 2 ? 255 : 0;
    const auto g = glcm(m, 1, 0, 2);
    EXPECT_EQ(g.at(0, 0), 0.0);
    EXPECT_EQ(g.at(1, 1), 0.0);
    EXPECT_DOUBLE_EQ(g.at(0, 1) + g.at(1, 0), 1.0);
}

TEST(Glcm, MatchesNestedLoopOracle) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const cv::Mat img = test::random_gray(8, 8, seed);
        const auto g = glcm(img);
        std::vector<long> count(32 * 32, 0);
        long pairs = 0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x + 1 < 8; ++x) {
                const int a = img.at<uchar>(y, x) / 8, b = img.at<uchar>(y, x + 1) / 8;
                ++count[a * 32 + b];
                ++count[b * 32 + a];
                pairs += 2;
            }
        for (int i = 0; i < 32 * 32; ++i) EXPECT_EQ(g.p[i], count[i] / static_cast<double>(pairs));
    }
}

TEST(Shape, DiskRadiusFifty) {
    const auto shapes = component_shapes(mask_of(test::disk_image({128, 128}, {64, 64}, 50)));
    ASSERT_EQ(shapes.size(), 1u);
    EXPECT_GE(shapes[0].circularity, 0.9);
    EXPECT_LE(shapes[0].circularity, 1.1);
    EXPECT_LT(shapes[0].eccentricity, 0.1);
}

TEST(Shape, FourToOneEllipse) {
    const auto shapes = component_shapes(mask_of(ellipse_image({200, 80}, {100, 40}, 80, 20)));
    ASSERT_EQ(shapes.size(), 1u);
    EXPECT_NEAR(shapes[0].eccentricity, std::sqrt(15.0) / 4.0, 0.02);
}

TEST(Shape, PerimeterOfSquare) {
    cv::Mat b(20, 20, CV_8UC1, cv::Scalar(0));
    b(cv::Rect(5, 5, 10, 10)).setTo(255);
    const auto s = component_shapes(mask_of(b));
    ASSERT_EQ(s.size(), 1u);
    EXPECT_DOUBLE_EQ(s[0].perimeter, 36.0);  // 4 * 9 axial steps along pixel centres
    EXPECT_EQ(s[0].area, 100);
}

TEST(Morphology, EmptyMask) {
    const auto m = morphology(mask_of(cv::Mat(32, 32, CV_8UC1, cv::Scalar(0))));
    EXPECT_EQ(m.num_nuclei, 0);
    EXPECT_FALSE(m.size);
    EXPECT_FALSE(m.circularity);
    EXPECT_FALSE(m.eccentricity);
    const auto f = extract_all(cv::Mat(32, 32, CV_8UC3, cv::Scalar::all(200)),
                               mask_of(cv::Mat(32, 32, CV_8UC1, cv::Scalar(0))), cv::Mat(32, 32, CV_64FC2, cv::Scalar::all(0)));
    EXPECT_EQ(f.num_nuclei, 0.0);
    EXPECT_FALSE(f.intensity);
    EXPECT_FALSE(f.staining_intensity);
    EXPECT_FALSE(f.spread);
}

TEST(Spread, Examples) {
    EXPECT_EQ(spread(std::vector<cv::Point2d>{{0, 0}, {5, 5}}), 0.0);
    EXPECT_NEAR(*spread(std::vector<cv::Point2d>{{0, 0}, {0, 3}, {0, 6}}), std::sqrt(2.0), 1e-12);
    EXPECT_FALSE(spread(std::vector<cv::Point2d>{{1, 1}}));
}

TEST(Density, CountPerPixel) {
    const cv::Mat b = test::disk_image({40, 40}, {10, 10}, 5) | test::disk_image({40, 40}, {30, 30}, 5);
    EXPECT_DOUBLE_EQ(density(mask_of(b)), 2.0 / 1600.0);
}

TEST(Intensity, MeansOverNucleusPixels) {
    cv::Mat rgb(10, 10, CV_8UC3, cv::Scalar(200, 200, 200));
    rgb(cv::Rect(0, 0, 5, 10)).setTo(cv::Scalar(50, 50, 50));
    cv::Mat b(10, 10, CV_8UC1, cv::Scalar(0));
    b(cv::Rect(0, 0, 5, 10)).setTo(255);
    cv::Mat conc(10, 10, CV_64FC2, cv::Scalar(0.2, 0.1));
    conc(cv::Rect(0, 0, 5, 10)).setTo(cv::Scalar(1.5, 0.0));
    const auto s = intensity_stats(rgb, mask_of(b), conc);
    EXPECT_NEAR(*s.intensity, 50.0, 1e-9);
    EXPECT_NEAR(*s.staining_intensity, 1.5, 1e-12);
}

TEST(FeatureVector, NamesAndSetters) {
    EXPECT_EQ(FeatureVector::names().size(), 10u);
    FeatureVector f;
    for (std::size_t i = 0; i < 10; ++i) f.set(i, static_cast<double>(i));
    const auto v = f.values();
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(v[i], static_cast<double>(i));
}

TEST(Normalize, MinMaxAndConstant) {
    std::vector<FeatureVector> rows(3);
    for (int i = 0; i < 3; ++i) {
        rows[i].contrast = 10.0 * i;
        rows[i].homogeneity = 0.7;
    }
    rows[1].size = 3.0;
    const auto n = normalize_features(rows);
    EXPECT_EQ(*n[0].contrast, 0.0);
    EXPECT_EQ(*n[1].contrast, 0.5);
    EXPECT_EQ(*n[2].contrast, 1.0);
    EXPECT_EQ(*n[0].homogeneity, 0.5);
    EXPECT_EQ(*n[1].size, 0.5);
    EXPECT_FALSE(n[0].size);
}

TEST(Csv, RoundTripWithAbsentCells) {
    const auto dir = test::temp_dir("features_csv");
    const auto nuclei = std::vector<synthetic::Nucleus>{{20, 20, 6, 6}, {45, 40, 8, 5}};
    const cv::Mat rgb = synthetic::nuclei_patch({64, 64}, nuclei);
    auto f = extract_all(rgb, mask_of(synthetic::nuclei_mask({64, 64}, nuclei)), cv::Mat(64, 64, CV_64FC2, cv::Scalar(0.5, 0.2)));
    f.address = {0, 1, 2, 64};
    f.cluster = 1;
    FeatureVector empty;
    empty.address = {0, 0, 0, 64};
    empty.num_nuclei = 0.0;
    write_csv(dir / "f.csv", {f, empty});
    const auto back = read_csv(dir / "f.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].address, f.address);
    EXPECT_EQ(back[0].cluster, 1);
    EXPECT_NEAR(*back[0].spread, *f.spread, 1e-10 * *f.spread);
    EXPECT_FALSE(back[1].spread);
    EXPECT_EQ(back[1].num_nuclei, 0.0);
    write_csv(dir / "g.csv", back);
    const auto again = read_csv(dir / "g.csv");
    EXPECT_EQ(again[0].values(), back[0].values());
}
