#include <cmath>

#include <gtest/gtest.h>

#include "stain_fixture.hpp"
#include "tumls/error.hpp"
#include "tumls/stain.hpp"
#include "tumls/synthetic.hpp"
#include "util.hpp"

using namespace tumls;
using namespace tumls::stain;

namespace {

int max_abs_diff(const cv::Mat& a, const cv::Mat& b) {
    cv::Mat d;
    cv::absdiff(a, b, d);
    double mx = 0;
    cv::minMaxLoc(d.reshape(1), nullptr, &mx);
    return static_cast<int>(mx);
}

cv::Mat od_pixel(const StainVector& h, const StainVector& e, double ch, double ce) {
    cv::Mat od(1, 1, CV_64FC3);
    for (int c = 0; c < 3; ++c) od.at<cv::Vec3d>(0, 0)[c] = h[c] * ch + e[c] * ce;
    return od;
}

}  // namespace

TEST(OpticalDensity, Examples) {
    cv::Mat px(1, 2, CV_8UC3);
    px.at<cv::Vec3b>(0, 0) = {254, 254, 254};
    px.at<cv::Vec3b>(0, 1) = {0, 0, 0};
    const cv::Mat od = to_optical_density(px);
    EXPECT_NEAR(od.at<cv::Vec3d>(0, 0)[0], 0.0, 1e-15);
    EXPECT_NEAR(od.at<cv::Vec3d>(0, 1)[2], 2.4065, 1e-4);
}

TEST(OpticalDensity, WhiteIsNearZero) {
    const cv::Mat od = to_optical_density(cv::Mat(4, 4, CV_8UC3, cv::Scalar::all(255)));
    double mx = 0;
    const cv::Mat a = cv::abs(od);
    cv::minMaxLoc(a.reshape(1), nullptr, &mx);
    EXPECT_LT(mx, 0.002);
}

TEST(OpticalDensity, InverseIsExactOnEveryLevel) {
    cv::Mat px(1, 256, CV_8UC3);
    for (int i = 0; i < 256; ++i) px.at<cv::Vec3b>(0, i) = cv::Vec3b(i, 255 - i, i / 2);
    EXPECT_TRUE(test::equal(from_optical_density(to_optical_density(px)), px));
}

TEST(Reference, UnitColumnsAndLog10Maxima) {
    const auto r = reference_model();
    for (const auto& s : r.stains) EXPECT_NEAR(s[0] * s[0] + s[1] * s[1] + s[2] * s[2], 1.0, 1e-12);
    EXPECT_NEAR(r.max_concentrations[0], 1.9705 / std::log(10.0), 1e-12);
    EXPECT_NEAR(r.max_concentrations[1], 1.0308 / std::log(10.0), 1e-12);
    EXPECT_GT(r.stains[0][0], r.stains[1][0]);
}

TEST(Estimate, RecoversStainsUnderNoise) {
    cv::Mat h, e;
    test::stain_fields(128, 1, h, e);
    const auto ref = reference_model();
    const cv::Mat rgb = synthetic::render_stains(h, e, ref, 0.01, 2);
    const auto m = estimate_stains(rgb);
    EXPECT_LT(angle_deg(m.stains[0], ref.stains[0]), 3.0);
    EXPECT_LT(angle_deg(m.stains[1], ref.stains[1]), 3.0);
    for (const auto& s : m.stains) EXPECT_NEAR(std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]), 1.0, 1e-12);
}

TEST(Estimate, BlankPatchHasNoSignal) {
    try {
        estimate_stains(cv::Mat(64, 64, CV_8UC3, cv::Scalar::all(250)));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_STREQ(e.what(), "insufficient stain signal");
    }
}

TEST(Estimate, SingleStainIsRankOne) {
    cv::Mat h, e;
    test::stain_fields(64, 3, h, e);
    e.setTo(0.0);
    EXPECT_THROW(estimate_stains(synthetic::render_stains(h, e, reference_model(), 0.0)), DataError);
}

TEST(Concentrations, InvertsForwardModel) {
    const auto ref = reference_model();
    const auto c = concentrations_od(od_pixel(ref.stains[0], ref.stains[1], 2.0, 0.0), ref).at<cv::Vec2d>(0, 0);
    EXPECT_NEAR(c[0], 2.0, 1e-6);
    EXPECT_NEAR(c[1], 0.0, 1e-6);
    const auto z = concentrations_od(od_pixel(ref.stains[0], ref.stains[1], 0.0, 0.0), ref).at<cv::Vec2d>(0, 0);
    EXPECT_EQ(z[0], 0.0);
    EXPECT_EQ(z[1], 0.0);
}

TEST(Concentrations, ResidualOnRankTwoDataIsTiny) {
    const auto ref = reference_model();
    cv::Mat h, e;
    test::stain_fields(32, 5, h, e);
    cv::Mat od(h.size(), CV_64FC3);
    for (int y = 0; y < od.rows; ++y)
        for (int x = 0; x < od.cols; ++x)
            od.at<cv::Vec3d>(y, x) = od_pixel(ref.stains[0], ref.stains[1], h.at<double>(y, x), e.at<double>(y, x)).at<cv::Vec3d>(0, 0);
    const cv::Mat c = concentrations_od(od, ref);
    double worst = 0;
    for (int y = 0; y < od.rows; ++y)
        for (int x = 0; x < od.cols; ++x) {
            const auto cc = c.at<cv::Vec2d>(y, x);
            const auto back = od_pixel(ref.stains[0], ref.stains[1], cc[0], cc[1]).at<cv::Vec3d>(0, 0);
            worst = std::max(worst, cv::norm(back - od.at<cv::Vec3d>(y, x)));
        }
    EXPECT_LT(worst, 1e-8);
}

TEST(Render, NoiseFreeRoundTripWithinTwoLevels) {
    cv::Mat h, e;
    test::stain_fields(96, 6, h, e);
    const cv::Mat rgb = synthetic::render_stains(h, e, reference_model(), 0.0);
    const auto m = estimate_stains(rgb);
    EXPECT_LE(max_abs_diff(render(concentrations(rgb, m), m), rgb), 2);
}

TEST(Normalize, ReferenceIsAFixedPoint) {
    cv::Mat h, e;
    test::stain_fields(64, 7, h, e, 1.0, false);
    const auto ref = reference_model();
    const cv::Mat rgb = synthetic::render_stains(h, e, ref, 0.0);
    EXPECT_LE(max_abs_diff(normalize(rgb, ref, ref), rgb), 1);
}

TEST(Normalize, PureStainPixelsMayHitTheClamp) {
    cv::Mat h, e;
    test::stain_fields(64, 7, h, e);
    const auto ref = reference_model();
    const cv::Mat rgb = synthetic::render_stains(h, e, ref, 0.0);
    EXPECT_LE(max_abs_diff(normalize(rgb, ref, ref), rgb), 2);
}

TEST(Normalize, OverStainedPatchComesBack) {
    cv::Mat h, e, h2, e2;
    test::stain_fields(64, 8, h, e, 1.0, false);
    test::stain_fields(64, 8, h2, e2, 2.0, false);
    const auto ref = reference_model();
    const cv::Mat once = synthetic::render_stains(h, e, ref, 0.0);
    const cv::Mat twice = synthetic::render_stains(h2, e2, ref, 0.0);
    StainModel source = ref;
    source.max_concentrations = {2 * ref.max_concentrations[0], 2 * ref.max_concentrations[1]};
    // Doubled concentrations push some pixels below 10, where one grey level
    // spans a large OD step.
    EXPECT_LE(max_abs_diff(normalize(twice, source, ref), once), 4);

    const auto m1 = estimate_stains(once), m2 = estimate_stains(twice);
    EXPECT_NEAR(m2.max_concentrations[0] / m1.max_concentrations[0], 2.0, 0.1);
    EXPECT_NEAR(m2.max_concentrations[1] / m1.max_concentrations[1], 2.0, 0.1);
}

TEST(Process, FallsBackOnBlankPatch) {
    const auto r = process(cv::Mat(32, 32, CV_8UC3, cv::Scalar::all(252)));
    EXPECT_TRUE(r.fallback);
    EXPECT_FALSE(r.warning.empty());
    EXPECT_EQ(r.normalized.type(), CV_8UC3);
    EXPECT_EQ(r.hematoxylin.type(), CV_8UC1);
}

TEST(Process, HematoxylinChannelIsBrightOnNuclei) {
    const std::vector<synthetic::Nucleus> nuclei{{20, 20, 6, 6}, {44, 40, 7, 5}};
    const cv::Mat rgb = synthetic::nuclei_patch({64, 64}, nuclei);
    const auto r = process(rgb);
    EXPECT_GT(r.hematoxylin.at<uchar>(20, 20), 200);
    EXPECT_LT(r.hematoxylin.at<uchar>(2, 2), 60);
}

TEST(StainJson, RoundTrip) {
    StainParams p;
    p.alpha = 2.0;
    const auto back = stain_params_from_json(to_json(p));
    EXPECT_EQ(back.alpha, 2.0);
    EXPECT_EQ(back.reference.stains, p.reference.stains);
    const auto m = stain_model_from_json(to_json(reference_model()));
    EXPECT_EQ(m.max_concentrations, reference_model().max_concentrations);
}
