#include "synthetic.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <json.hpp>

#include "meibo/png_io.hpp"

namespace meibo::synth {

namespace fs = std::filesystem;

fs::path fixture(const std::string& name) { return fs::path(MEIBO_FIXTURES) / name; }

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

Polygon full_roi(int width, int height) {
    return {{0.0, 0.0}, {double(width), 0.0}, {double(width), double(height)}, {0.0, double(height)}};
}

void paint_rectangle(LabelImage& img, int x0, int y0, int w, int h, std::uint16_t label) {
    img.block(y0, x0, h, w) = label;
}

void paint_polyline(LabelImage& img, const std::vector<Eigen::Vector2d>& pts, double half_width, std::uint16_t label) {
    for (int y = 0; y < img.rows(); ++y) {
        for (int x = 0; x < img.cols(); ++x) {
            const Eigen::Vector2d p(x, y);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
                const Eigen::Vector2d d = pts[i + 1] - pts[i];
                const double t = std::clamp((p - pts[i]).dot(d) / d.squaredNorm(), 0.0, 1.0);
                best = std::min(best, (pts[i] + t * d - p).norm());
            }
            if (best <= half_width) img(y, x) = label;
        }
    }
}

void paint_arc_band(LabelImage& img, Eigen::Vector2d c, double radius, double width, double a0, double a1,
                    std::uint16_t label) {
    for (int y = 0; y < img.rows(); ++y) {
        for (int x = 0; x < img.cols(); ++x) {
            const double dx = x - c.x(), dy = y - c.y();
            const double d = std::hypot(dx, dy);
            const double a = std::atan2(dy, dx);
            if (d >= radius - width / 2 && d < radius + width / 2 && a >= a0 && a <= a1) img(y, x) = label;
        }
    }
}

morph::GlandInstanceMask straight_gland_mask(double mm_per_px) {
    LabelImage img = LabelImage::Zero(50, 140);
    paint_rectangle(img, 20, 20, 100, 10, 1);
    return morph::make_mask(std::move(img), full_roi(140, 50), mm_per_px, "1_1_R");
}

morph::GlandInstanceMask semicircle_gland_mask(double mm_per_px) {
    LabelImage img = LabelImage::Zero(120, 420);
    paint_arc_band(img, {205, 5}, 100, 10, 0.0, std::numbers::pi, 1);
    return morph::make_mask(std::move(img), full_roi(420, 120), mm_per_px, "1_1_R");
}

morph::GlandInstanceMask quarter_arc_gland_mask(double mm_per_px) {
    LabelImage img = LabelImage::Zero(120, 120);
    paint_arc_band(img, {5, 5}, 100, 10, 0.0, std::numbers::pi / 2, 1);
    return morph::make_mask(std::move(img), full_roi(120, 120), mm_per_px, "1_1_R");
}

morph::GlandInstanceMask rotated_gland_mask(double angle, double length, double width, double mm_per_px) {
    const int size = static_cast<int>(length + 4 * width + 20);
    const Eigen::Vector2d c(size / 2.0, size / 2.0);
    const Eigen::Vector2d dir(std::cos(angle), std::sin(angle));
    const Eigen::Vector2d a = c - dir * (length - width) / 2, b = c + dir * (length - width) / 2;
    // Stadium shape; end caps keep the outline free of rotation-specific corners.
    LabelImage img = LabelImage::Zero(size, size);
    paint_polyline(img, {a, b}, width / 2, 1);
    return morph::make_mask(std::move(img), full_roi(size, size), mm_per_px, "1_1_R");
}

SyntheticEyelid synthetic_eyelid(std::uint64_t seed, int glands, double mm_per_px, std::string id) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-4.0, 4.0), bend(-8.0, 8.0), halfw(2.5, 4.5);
    std::uniform_real_distribution<double> top(18.0, 35.0), bottom(110.0, 150.0);
    const int width = 30 * glands + 40, height = 160;

    LabelImage labels = LabelImage::Zero(height, width);
    for (int k = 0; k < glands; ++k) {
        const double xc = 35.0 + 30.0 * k;
        const std::vector<Eigen::Vector2d> pts{{xc + jitter(rng), top(rng)},
                                               {xc + bend(rng), 80.0},
                                               {xc + jitter(rng), bottom(rng)}};
        paint_polyline(labels, pts, halfw(rng), static_cast<std::uint16_t>(k + 1));
    }

    std::normal_distribution<double> noise(0.0, 6.0);
    IntensityImage image(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double base = labels(y, x) ? 170.0 : 70.0;
            image(y, x) = static_cast<std::uint8_t>(std::clamp(base + noise(rng), 0.0, 255.0));
        }
    }
    const Polygon roi{{10.0, 12.0}, {width - 10.0, 12.0}, {width - 10.0, height - 12.0}, {10.0, height - 12.0}};
    return {morph::make_mask(std::move(labels), roi, mm_per_px, std::move(id)), std::move(image)};
}

void write_mask_files(const SyntheticEyelid& e, const fs::path& masks_dir, const std::string& stem,
                      const fs::path* images_dir) {
    fs::create_directories(masks_dir);
    png::write_gray16(masks_dir / (stem + ".png"), e.mask.labels);
    nlohmann::json roi = nlohmann::json::array();
    for (const auto& v : e.mask.roi) roi.push_back({v.x(), v.y()});
    std::ofstream(masks_dir / (stem + ".json"))
        << nlohmann::json{{"subject_eye_id", e.mask.subject_eye_id}, {"mm_per_px", e.mask.mm_per_px}, {"roi", roi}}
               .dump();
    if (images_dir) {
        fs::create_directories(*images_dir);
        png::write_gray8(*images_dir / (stem + ".png"), e.image);
    }
}

DiseaseLabels random_labels(std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    DiseaseLabels l;
    for (Disease d : kAllDiseases) l[d] = coin(rng) ? TriState::Yes : TriState::No;
    return l;
}

clinical::ClinicalRecord random_full_record(std::mt19937_64& rng, const std::string& id) {
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    static const char* races[] = {"Asian", "White", "Black", "Hispanic", "Other"};

    clinical::ClinicalRecord r;
    r.subject_eye_id = id;
    r.gender = std::bernoulli_distribution(0.5)(rng) ? clinical::Gender::Male : clinical::Gender::Female;
    r.age = std::uniform_int_distribution<int>(18, 90)(rng);
    r.race = races[std::uniform_int_distribution<int>(0, 4)(rng)];
    r.tmh_mm = uni(0.05, 0.6);
    r.nikbut_s = uni(1.0, 25.0);
    r.ftbut_s = uni(1.0, 20.0);
    r.schirmer_mm = uni(0.0, 35.0);
    r.osdi = uni(0.0, 100.0);
    r.bulbar_hyperemia = uni(0.0, 4.0);
    r.mg_expression_quality = std::uniform_int_distribution<int>(0, 3)(rng);
    r.mg_expression_quantity = std::uniform_int_distribution<int>(0, 3)(rng);

    morph::EyelidMorphology m;
    m.subject_eye_id = id;
    m.gland_count = std::uniform_int_distribution<int>(5, 30)(rng);
    m.avg_length = uni(1.0, 8.0);
    m.avg_width = uni(0.1, 1.0);
    m.avg_contrast = uni(-5.0, 40.0);
    m.avg_tortuosity = uni(0.0, 1.0);
    m.gland_density = uni(0.05, 0.6);
    m.percent_atrophy = 100.0 - 100.0 * *m.gland_density;
    r.morphology = m;

    r.labels = random_labels(rng);
    return r;
}

std::vector<std::string> synthetic_ids(std::size_t subjects, std::size_t records, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> per(subjects, 1);
    std::uniform_int_distribution<std::size_t> pick(0, subjects - 1);
    for (std::size_t i = subjects; i < records; ++i) ++per[pick(rng)];
    std::vector<std::string> ids;
    for (std::size_t p = 0; p < subjects; ++p) {
        for (std::size_t c = 0; c < per[p]; ++c)
            ids.push_back(std::to_string(p + 1) + "_" + std::to_string(c / 2 + 1) + "_" + (c % 2 ? "R" : "L"));
    }
    return ids;
}

}  // namespace meibo::synth
