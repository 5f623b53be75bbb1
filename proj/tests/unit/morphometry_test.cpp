#include <cmath>
#include <numbers>
#include <numeric>

#include <gtest/gtest.h>

#include "meibo/error.hpp"
#include "meibo/morphometry.hpp"
#include "synthetic.hpp"

namespace {

using namespace meibo;
using namespace meibo::morph;
using meibo::synth::full_roi;

std::string error_code(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

TEST(Geometry, ShoelaceMatchesHandArea) {
    // Right triangle with legs 6 and 4: half of 24.
    EXPECT_DOUBLE_EQ(polygon_area({{0, 0}, {6, 0}, {0, 4}}), 12.0);
    // Orientation does not change the magnitude.
    EXPECT_DOUBLE_EQ(polygon_area({{0, 0}, {0, 4}, {6, 0}}), 12.0);
}

TEST(Geometry, BowtieIsNotSimple) {
    EXPECT_FALSE(polygon_is_simple({{0, 0}, {10, 10}, {10, 0}, {0, 10}}));
    EXPECT_TRUE(polygon_is_simple({{0, 0}, {10, 0}, {10, 10}, {0, 10}}));
}

TEST(Geometry, RasterizeUsesPixelCentres) {
    // Square [0, 10) covers exactly 100 pixel centres.
    EXPECT_EQ(rasterize(full_roi(10, 10), 20, 20).cast<int>().sum(), 100);
    // An edge at x = 2.4 keeps pixel 1 (centre 1.5) and drops pixel 2 (centre 2.5).
    const auto r = rasterize({{0, 0}, {2.4, 0}, {2.4, 1}, {0, 1}}, 5, 1);
    EXPECT_EQ(r(0, 1), 1);
    EXPECT_EQ(r(0, 2), 0);
}

TEST(MakeMask, RejectsBadScaleAndRoi) {
    LabelImage img = LabelImage::Zero(10, 10);
    EXPECT_EQ(error_code([&] { make_mask(img, full_roi(10, 10), 0.0, "1_1_R"); }), "invalid_scale");
    EXPECT_EQ(error_code([&] { make_mask(img, full_roi(10, 10), -0.1, "1_1_R"); }), "invalid_scale");
    EXPECT_EQ(error_code([&] { make_mask(img, {{0, 0}, {5, 5}, {10, 10}}, 0.05, "1_1_R"); }), "invalid_roi");
    EXPECT_EQ(error_code([&] { make_mask(img, {{0, 0}, {10, 10}, {10, 0}, {0, 10}}, 0.05, "1_1_R"); }),
              "invalid_roi");
}

TEST(MakeMask, RenumbersLabelsContiguously) {
    LabelImage img = LabelImage::Zero(20, 20);
    img.block(2, 2, 3, 10) = 9;
    img.block(10, 2, 3, 10) = 5;
    const auto mask = make_mask(img, full_roi(20, 20), 0.05, "1_1_R");
    EXPECT_EQ(mask.gland_count, 2);
    EXPECT_EQ(mask.labels(10, 2), 1);  // old 5
    EXPECT_EQ(mask.labels(2, 2), 2);   // old 9
}

TEST(Skeleton, StraightRectangleOracle) {
    const auto m = quantify(synth::straight_gland_mask());
    ASSERT_EQ(m.per_gland.size(), 1u);
    const auto& g = m.per_gland[0];
    EXPECT_NEAR(g.length_mm, 5.0, 0.05 * 5.0);
    EXPECT_NEAR(g.width_mm, 0.5, 0.10 * 0.5);
    EXPECT_LT(g.tortuosity, 0.02);
    EXPECT_TRUE(g.flags.empty());
}

TEST(Skeleton, SemicircleTortuosity) {
    const auto m = quantify(synth::semicircle_gland_mask());
    ASSERT_EQ(m.per_gland.size(), 1u);
    const double expected = std::numbers::pi / 2 - 1;
    EXPECT_NEAR(m.per_gland[0].tortuosity, expected, 0.10 * expected);
    // Centreline arc length: pi * 100 px.
    EXPECT_NEAR(m.per_gland[0].length_mm, std::numbers::pi * 100 * 0.05, 0.05 * std::numbers::pi * 5);
}

TEST(Skeleton, QuarterArcLength) {
    const auto m = quantify(synth::quarter_arc_gland_mask());
    ASSERT_EQ(m.per_gland.size(), 1u);
    const double expected = std::numbers::pi / 2 * 100 * 0.05;
    EXPECT_NEAR(m.per_gland[0].length_mm, expected, 0.05 * expected);
}

TEST(Skeleton, LengthRobustToRotation) {
    // 120 px stadium; every orientation within 5% of the axis-aligned value.
    for (int k = 0; k < 12; ++k) {
        const double angle = k * std::numbers::pi / 12;
        const auto m = quantify(synth::rotated_gland_mask(angle));
        ASSERT_EQ(m.per_gland.size(), 1u) << "angle " << angle;
        EXPECT_NEAR(m.per_gland[0].length_mm, 6.0, 0.05 * 6.0) << "angle " << angle;
        EXPECT_LT(m.per_gland[0].tortuosity, 0.03) << "angle " << angle;
    }
}

TEST(Skeleton, PathLengthOfStraightRunIsPixelCount) {
    std::vector<Pixel> path;
    for (int x = 0; x < 11; ++x) path.emplace_back(x, 3);
    EXPECT_NEAR(path_length_px(path), 10.0, 1e-12);
    EXPECT_NEAR(gland_tortuosity(path), 0.0, 1e-12);
}

TEST(Skeleton, BrokenPathIsRejected) {
    EXPECT_EQ(error_code([] { path_length_px({{0, 0}, {3, 0}}); }), "broken_path");
}

TEST(Skeleton, SinglePixelGlandIsDegenerate) {
    LabelImage img = LabelImage::Zero(10, 10);
    img(5, 5) = 1;
    const auto m = quantify(make_mask(img, full_roi(10, 10), 0.05, "1_1_R"));
    ASSERT_EQ(m.per_gland.size(), 1u);
    const auto& g = m.per_gland[0];
    EXPECT_EQ(g.tortuosity, 0.0);
    EXPECT_NE(std::find(g.flags.begin(), g.flags.end(), "degenerate_skeleton"), g.flags.end());
}

TEST(Width, DegenerateWhenSkeletonHasNoLength) {
    const auto w = gland_width(4, 0.0, 0.05);
    EXPECT_TRUE(w.degenerate);
    EXPECT_EQ(w.width_mm, 0.0);
    // area / length in px, then scaled.
    EXPECT_DOUBLE_EQ(gland_width(1000, 100.0, 0.05).width_mm, 0.5);
}

TEST(Contrast, GlandMinusRingMean) {
    IntensityImage img = IntensityImage::Constant(20, 20, 40);
    PixelSet gland;
    for (int y = 8; y < 12; ++y)
        for (int x = 8; x < 12; ++x) {
            img(y, x) = 100;
            gland.emplace_back(x, y);
        }
    EXPECT_DOUBLE_EQ(gland_local_contrast(gland, img), 60.0);

    BinaryImage none = BinaryImage::Zero(20, 20);
    EXPECT_EQ(error_code([&] { gland_local_contrast(gland, img, none); }), "no_local_background");
}

TEST(Quantify, GlandsOutsideRoiAreExcluded) {
    LabelImage img = LabelImage::Zero(40, 40);
    img.block(5, 5, 20, 4) = 1;
    img.block(5, 30, 20, 4) = 2;  // right of the ROI
    const auto m = quantify(make_mask(img, {{0, 0}, {20, 0}, {20, 40}, {0, 40}}, 0.05, "1_1_R"));
    EXPECT_EQ(m.gland_count, 1);
    EXPECT_EQ(m.excluded_gland_ids, std::vector<int>{2});
}

TEST(Quantify, EmptyMaskHasNoAverages) {
    const auto m = quantify(make_mask(LabelImage::Zero(10, 10), full_roi(10, 10), 0.05, "1_1_R"));
    EXPECT_EQ(m.gland_count, 0);
    EXPECT_FALSE(m.avg_length.has_value());
    EXPECT_EQ(*m.gland_density, 0.0);
    EXPECT_EQ(*m.percent_atrophy, 100.0);
}

TEST(Quantify, ContrastOnlyWithImage) {
    const auto e = synth::synthetic_eyelid(3, 4);
    EXPECT_FALSE(quantify(e.mask).avg_contrast.has_value());
    const auto with = quantify(e.mask, &e.image);
    ASSERT_TRUE(with.avg_contrast.has_value());
    EXPECT_GT(*with.avg_contrast, 50.0);  // glands ~170, background ~70
}

TEST(Quantify, DimensionMismatchThrows) {
    const auto e = synth::synthetic_eyelid(3, 2);
    IntensityImage small = IntensityImage::Zero(5, 5);
    EXPECT_EQ(error_code([&] { quantify(e.mask, &small); }), "dimension_mismatch");
}

// Property checks over randomized eyelids.
class EyelidProperty : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(EyelidProperty, AtrophyAndDensityAreComplementary) {
    const auto e = synth::synthetic_eyelid(GetParam(), 5);
    const auto m = quantify(e.mask, &e.image);
    EXPECT_EQ(*m.percent_atrophy + 100.0 * *m.gland_density, 100.0);
    EXPECT_GE(*m.gland_density, 0.0);
    EXPECT_LE(*m.gland_density, 1.0);
}

TEST_P(EyelidProperty, AveragesArePerGlandMeans) {
    const auto e = synth::synthetic_eyelid(GetParam(), 5);
    const auto m = quantify(e.mask, &e.image);
    ASSERT_FALSE(m.per_gland.empty());
    auto mean = [&](auto field) {
        double s = 0;
        for (const auto& g : m.per_gland) s += field(g);
        return s / static_cast<double>(m.per_gland.size());
    };
    EXPECT_NEAR(*m.avg_length, mean([](const auto& g) { return g.length_mm; }), 1e-9);
    EXPECT_NEAR(*m.avg_width, mean([](const auto& g) { return g.width_mm; }), 1e-9);
    EXPECT_NEAR(*m.avg_tortuosity, mean([](const auto& g) { return g.tortuosity; }), 1e-9);
    EXPECT_NEAR(*m.avg_contrast, mean([](const auto& g) { return *g.local_contrast; }), 1e-9);
}

TEST_P(EyelidProperty, ScaleEquivariance) {
    auto e = synth::synthetic_eyelid(GetParam(), 4, 0.05);
    const auto base = quantify(e.mask, &e.image);
    e.mask.mm_per_px = 0.10;
    const auto doubled = quantify(e.mask, &e.image);
    ASSERT_EQ(base.per_gland.size(), doubled.per_gland.size());
    for (std::size_t i = 0; i < base.per_gland.size(); ++i) {
        const auto& a = base.per_gland[i];
        const auto& b = doubled.per_gland[i];
        EXPECT_NEAR(b.length_mm, 2 * a.length_mm, 1e-12 * a.length_mm);
        EXPECT_NEAR(b.width_mm, 2 * a.width_mm, 1e-12 * a.width_mm);
        EXPECT_NEAR(b.area_mm2, 4 * a.area_mm2, 1e-12 * a.area_mm2);
        EXPECT_EQ(b.tortuosity, a.tortuosity);
        EXPECT_EQ(b.local_contrast, a.local_contrast);
    }
    EXPECT_EQ(*doubled.gland_density, *base.gland_density);
    EXPECT_EQ(*doubled.percent_atrophy, *base.percent_atrophy);
}

TEST_P(EyelidProperty, WidthTimesLengthIsArea) {
    const auto e = synth::synthetic_eyelid(GetParam(), 4);
    for (const auto& g : quantify(e.mask).per_gland) {
        if (!g.flags.empty()) continue;
        EXPECT_NEAR(g.width_mm * g.length_mm, g.area_mm2, 1e-9);
    }
}

INSTANTIATE_TEST_SUITE_P(Seeds, EyelidProperty, ::testing::Range<std::uint64_t>(1, 9));

TEST(MorphologyJson, RoundTrip) {
    const auto e = synth::synthetic_eyelid(11, 3);
    const auto m = quantify(e.mask, &e.image);
    const auto back = morphology_from_json(to_json(m));
    EXPECT_EQ(to_json(back), to_json(m));
}

TEST(MorphologyJson, MissingAggregatesStayAbsent) {
    const auto m = morphology_from_json({{"subject_eye_id", "42_2_R"}, {"avg_length", 4.878048}});
    EXPECT_TRUE(m.avg_length.has_value());
    EXPECT_FALSE(m.percent_atrophy.has_value());
    EXPECT_FALSE(m.gland_density.has_value());
}

}  // namespace
