#include <random>

#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include "otsu_oracle.hpp"
#include "tumls/error.hpp"
#include "tumls/nucleus_seg.hpp"
#include "tumls/synthetic.hpp"
#include "util.hpp"

using namespace tumls;
using namespace tumls::nucleus;

namespace {

std::vector<synthetic::Nucleus> twelve_nuclei() {
    std::vector<synthetic::Nucleus> v;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) v.push_back({20.0 + 40 * c, 20.0 + 40 * r, 7.0 + (r + c) % 3, 7.0});
    return v;
}

}  // namespace

TEST(Otsu, TriModalSpikes) {
    Histogram h{};
    h[30] = 500;
    h[128] = 300;
    h[220] = 200;
    const auto t = multi_otsu(h);
    EXPECT_GE(t.t1, 30);
    EXPECT_LT(t.t1, 128);
    EXPECT_GE(t.t2, 128);
    EXPECT_LT(t.t2, 220);
    EXPECT_EQ(t.t1, 30);  // lexicographically smallest of the tied pairs
    EXPECT_EQ(t.t2, 128);
}

TEST(Otsu, TwoValueImage) {
    Histogram h{};
    h[0] = 300;
    h[255] = 100;
    const auto t = multi_otsu(h);
    const double two_class = 300.0 * 100.0 / (400.0 * 400.0) * 255.0 * 255.0;
    EXPECT_NEAR(t.between_class_variance, two_class, 1e-9 * two_class);
    EXPECT_EQ(t.t1, 1);
    EXPECT_EQ(t.t2, 2);
}

TEST(Otsu, RandomImageMatchesOracleExactly) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto h = histogram(test::random_gray(64, 64, seed));
        const auto t = multi_otsu(h);
        const auto o = test::otsu_oracle(h);
        EXPECT_EQ(t.between_class_variance, o.variance);
        EXPECT_EQ(t.t1, o.t1);
        EXPECT_EQ(t.t2, o.t2);
    }
}

TEST(Otsu, DegenerateHistogram) {
    EXPECT_THROW(multi_otsu(cv::Mat(8, 8, CV_8UC1, cv::Scalar(77))), DataError);
}

TEST(Otsu, ClassMapFollowsConvention) {
    cv::Mat g(1, 4, CV_8UC1);
    g.at<uchar>(0, 0) = 10;
    g.at<uchar>(0, 1) = 11;
    g.at<uchar>(0, 2) = 50;
    g.at<uchar>(0, 3) = 51;
    const cv::Mat c = class_map(g, {10, 50, 0.0});
    EXPECT_EQ(c.at<uchar>(0, 0), 0);
    EXPECT_EQ(c.at<uchar>(0, 1), 1);
    EXPECT_EQ(c.at<uchar>(0, 2), 1);
    EXPECT_EQ(c.at<uchar>(0, 3), 2);
}

TEST(Combine, Weights) {
    const cv::Mat rgb = test::random_rgb(8, 8, 3);
    const cv::Mat hema = test::random_gray(8, 8, 4);
    cv::Mat lum;
    const cv::Mat c0 = combine(rgb, hema, 0.0);
    const cv::Mat c1 = combine(rgb, hema, 1.0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            const auto p = rgb.at<cv::Vec3b>(y, x);
            EXPECT_EQ(c0.at<uchar>(y, x), std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
            EXPECT_EQ(c1.at<uchar>(y, x), 255 - hema.at<uchar>(y, x));
        }
}

TEST(Combine, NucleiFallInDarkestClass) {
    const auto nuclei = twelve_nuclei();
    const cv::Mat rgb = synthetic::nuclei_patch({160, 120}, nuclei);
    const auto r = segment(rgb);
    for (const auto& n : nuclei) EXPECT_EQ(r.classes.at<uchar>(int(n.cy), int(n.cx)), 0);
}

TEST(Denoise, CleanPatchIsUntouched) {
    const cv::Mat rgb = synthetic::nuclei_patch({96, 96}, {{30, 30, 8, 8}, {60, 64, 7, 9}});
    const auto r = denoise(rgb);
    EXPECT_EQ(r.report.noise_type, NoiseType::None);
    EXPECT_EQ(r.report.replaced_fraction, 0.0);
    EXPECT_TRUE(test::equal(r.clean, rgb));
}

TEST(Denoise, BlackSquareIsReplaced) {
    cv::Mat rgb = synthetic::nuclei_patch({100, 100}, {{70, 70, 8, 8}});
    const cv::Mat original = rgb.clone();
    rgb(cv::Rect(5, 5, 32, 32)).setTo(cv::Scalar(5, 5, 5));  // ~10% of the patch
    const auto r = denoise(rgb);
    EXPECT_TRUE(r.report.noise_type == NoiseType::BlackRegion || r.report.noise_type == NoiseType::Both);
    EXPECT_NEAR(r.report.replaced_fraction, 0.1024, 1e-9);
    EXPECT_EQ(cv::countNonZero(r.report.black_mask(cv::Rect(5, 5, 32, 32))), 32 * 32);
    EXPECT_GT(r.clean.at<cv::Vec3b>(20, 20)[0], 100);
    cv::Mat outside = cv::Mat::ones(100, 100, CV_8UC1);
    outside(cv::Rect(5, 5, 32, 32)).setTo(0);
    for (int y = 0; y < 100; ++y)
        for (int x = 0; x < 100; ++x)
            if (outside.at<uchar>(y, x)) {
                ASSERT_EQ(r.clean.at<cv::Vec3b>(y, x), original.at<cv::Vec3b>(y, x));
            }
}

TEST(Denoise, GrayVeilKeepsHiddenNuclei) {
    const std::vector<synthetic::Nucleus> nuclei{{30, 40, 7, 7}, {62, 44, 8, 6}};
    cv::Mat rgb = synthetic::nuclei_patch({96, 96}, nuclei);
    const cv::Mat mask = synthetic::nuclei_mask({96, 96}, nuclei);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> d(-6, 6);
    for (int y = 10; y < 80; ++y)
        for (int x = 10; x < 90; ++x) {
            auto& p = rgb.at<cv::Vec3b>(y, x);
            if (mask.at<uchar>(y, x)) {
                p = cv::Vec3b(p[0] * 7 / 10, p[1] * 7 / 10, p[2] * 7 / 10);  // veil darkens nuclei
            } else {
                const int v = 160 + d(rng);
                p = cv::Vec3b(v, v, v + 2);
            }
        }
    const auto r = segment(rgb);
    EXPECT_TRUE(r.denoise.noise_type == NoiseType::GrayNoise || r.denoise.noise_type == NoiseType::Both);
    for (const auto& n : nuclei) {
        EXPECT_EQ(r.classes.at<uchar>(int(n.cy), int(n.cx)), 0);
        EXPECT_GT(r.masks[0].binary.at<uchar>(int(n.cy), int(n.cx)), 0);
    }
    EXPECT_EQ(r.masks[0].count, 2);
}

TEST(Denoise, AllNoiseIsUnusable) {
    EXPECT_THROW(denoise(cv::Mat(40, 40, CV_8UC3, cv::Scalar(3, 3, 3))), DataError);
}

TEST(Morphology, DiskElement) {
    const cv::Mat d = disk(2);
    EXPECT_EQ(d.size(), cv::Size(5, 5));
    EXPECT_EQ(cv::countNonZero(d), 13);
    EXPECT_EQ(cv::countNonZero(disk(0)), 1);
}

TEST(Morphology, RemoveSmallAndLabels) {
    cv::Mat b(40, 40, CV_8UC1, cv::Scalar(0));
    b(cv::Rect(2, 2, 5, 5)).setTo(255);    // 25 px
    b(cv::Rect(20, 20, 6, 6)).setTo(255);  // 36 px
    b.at<uchar>(30, 30) = 255;
    b.at<uchar>(31, 31) = 255;             // diagonal pair: one 8-connected component
    cv::Mat labels;
    EXPECT_EQ(label_components(b, labels), 3);
    const cv::Mat kept = remove_small(b, 30);
    EXPECT_EQ(cv::countNonZero(kept), 36);
}

TEST(Masks, TwelveDisjointNuclei) {
    const auto nuclei = twelve_nuclei();
    const auto r = segment(synthetic::nuclei_patch({160, 120}, nuclei));
    for (const auto& m : r.masks) EXPECT_EQ(m.count, 12) << "variant " << m.variant;
    EXPECT_TRUE(test::equal(r.masks[0].binary, r.masks[1].binary));
}

TEST(Masks, OverlappingDisksAreSplit) {
    const cv::Mat both = test::disk_image({64, 64}, {22, 32}, 12) | test::disk_image({64, 64}, {40, 32}, 12);
    cv::Mat labels;
    EXPECT_EQ(label_components(both, labels), 1);
    const auto split = demerge(both);
    EXPECT_EQ(split.count, 2);

    const auto r = segment(synthetic::nuclei_patch({64, 64}, {{22, 32, 12, 12}, {40, 32, 12, 12}}));
    EXPECT_EQ(r.masks[0].count, 1);
    EXPECT_EQ(r.masks[1].count, 2);
}

TEST(Masks, DemergeLeavesSingleDiskAlone) {
    const cv::Mat one = test::disk_image({64, 64}, {32, 32}, 15);
    const auto r = demerge(one);
    EXPECT_EQ(r.count, 1);
    EXPECT_TRUE(test::equal(r.binary, one));
}

TEST(Masks, ComponentTable) {
    const cv::Mat b = test::disk_image({50, 50}, {20, 25}, 6);
    const auto m = make_mask(b, 1);
    const auto cs = components(m);
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(cs[0].area, cv::countNonZero(b));
    EXPECT_NEAR(cs[0].cx, 20, 1e-9);
    EXPECT_NEAR(cs[0].cy, 25, 1e-9);
    const auto t = component_table(m);
    EXPECT_EQ(t["components"][0]["area"], cs[0].area);
}

TEST(Segment, BlankPatchYieldsEmptyMasks) {
    const auto r = segment(cv::Mat(64, 64, CV_8UC3, cv::Scalar::all(245)));
    EXPECT_TRUE(r.stain.fallback);
    for (const auto& m : r.masks) EXPECT_EQ(m.count, 0);
    EXPECT_FALSE(r.note.empty());
}

TEST(Segment, SaveSteps) {
    const auto dir = test::temp_dir("segment_steps");
    const cv::Mat rgb = synthetic::nuclei_patch({64, 64}, {{30, 30, 8, 8}});
    save_segmentation(dir, rgb, segment(rgb), true);
    for (const char* f : {"mask_1.png", "mask_2.png", "mask_3.png", "components_2.json", "segment.json",
                          "step_0_input.png", "step_5_classes.png"})
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
}

TEST(SegmentParams, JsonRoundTripAndValidation) {
    SegmentParams p;
    p.mask.min_area = 12;
    EXPECT_EQ(segment_params_from_json(to_json(p)).mask.min_area, 12);
    EXPECT_THROW(segment_params_from_json({{"median_ksize", 4}}), ConfigError);
    EXPECT_THROW(segment_params_from_json({{"combine_weight", 1.5}}), ConfigError);
}
