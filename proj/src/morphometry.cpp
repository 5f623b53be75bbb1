#include "meibo/morphometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "meibo/error.hpp"
#include "meibo/png_io.hpp"

namespace meibo::morph {

using nlohmann::json;

namespace {

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

int orientation(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const double v = cross(b - a, c - a);
    return (v > 0) - (v < 0);
}

bool on_segment(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) &&
           std::min(a.y(), b.y()) <= p.y() && p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2, const Eigen::Vector2d& q1,
                        const Eigen::Vector2d& q2) {
    const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    return (o1 == 0 && on_segment(p1, p2, q1)) || (o2 == 0 && on_segment(p1, p2, q2)) ||
           (o3 == 0 && on_segment(q1, q2, p1)) || (o4 == 0 && on_segment(q1, q2, p2));
}

template <typename T>
std::optional<double> mean_of(const std::vector<GlandMorphometry>& glands, T field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& g : glands) {
        if (auto v = field(g)) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from_json(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_number()) throw Error("malformed_morphology", std::string("non-numeric ") + key);
    return it->get<double>();
}

}  // namespace

double polygon_area(const Polygon& polygon) {
    double twice = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        twice += cross(polygon[i], polygon[(i + 1) % polygon.size()]);
    }
    return std::abs(twice) / 2.0;
}

bool polygon_is_simple(const Polygon& polygon) {
    const std::size_t n = polygon.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        if (polygon[i] == polygon[(i + 1) % n]) return false;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) continue;
            if (segments_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n])) return false;
        }
    }
    return true;
}

bool point_in_polygon(const Polygon& polygon, const Eigen::Vector2d& p) {
    bool inside = false;
    for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
        const auto& a = polygon[i];
        const auto& b = polygon[j];
        if ((a.y() > p.y()) != (b.y() > p.y()) &&
            p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
            inside = !inside;
        }
    }
    return inside;
}

BinaryImage rasterize(const Polygon& polygon, int width, int height) {
    BinaryImage out = BinaryImage::Zero(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            out(y, x) = point_in_polygon(polygon, Eigen::Vector2d(x + 0.5, y + 0.5)) ? 1 : 0;
    return out;
}

GlandInstanceMask make_mask(LabelImage labels, Polygon roi, double mm_per_px, std::string subject_eye_id) {
    if (!std::isfinite(mm_per_px) || mm_per_px <= 0.0) throw Error("invalid_scale", "invalid scale");
    if (roi.size() < 3 || polygon_area(roi) <= 0.0) throw Error("invalid_roi", "zero-area ROI");
    if (!polygon_is_simple(roi)) throw Error("invalid_roi", "ROI polygon is self-intersecting");

    std::map<std::uint16_t, std::uint16_t> remap;
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        if (labels.data()[i] != 0) remap.emplace(labels.data()[i], 0);
    }
    std::uint16_t next = 1;
    for (auto& [from, to] : remap) to = next++;
    for (Eigen::Index i = 0; i < labels.size(); ++i) {
        auto& v = labels.data()[i];
        if (v != 0) v = remap[v];
    }

    GlandInstanceMask mask;
    mask.labels = std::move(labels);
    mask.roi = std::move(roi);
    mask.mm_per_px = mm_per_px;
    mask.subject_eye_id = std::move(subject_eye_id);
    mask.gland_count = static_cast<int>(remap.size());
    return mask;
}

GlandInstanceMask load_labeled_mask(const std::filesystem::path& mask_path,
                                    const std::filesystem::path& sidecar_path) {
    if (!std::filesystem::exists(mask_path)) throw Error("missing_file", "missing file: " + mask_path.string());
    std::ifstream in(sidecar_path);
    if (!in) throw Error("missing_file", "missing file: " + sidecar_path.string());

    json side;
    std::string subject;
    double scale = 0.0;
    Polygon roi;
    try {
        side = json::parse(in);
        subject = side.at("subject_eye_id").get<std::string>();
        scale = side.at("mm_per_px").get<double>();
        for (const auto& v : side.at("roi")) {
            if (!v.is_array() || v.size() != 2) throw Error("malformed_sidecar", "ROI vertex must be [x, y]");
            roi.emplace_back(v[0].get<double>(), v[1].get<double>());
        }
    } catch (const json::exception& e) {
        throw Error("malformed_sidecar", "malformed sidecar " + sidecar_path.string() + ": " + e.what());
    }
    return make_mask(png::read_gray16(mask_path), std::move(roi), scale, std::move(subject));
}

double gland_local_contrast(const PixelSet& gland, const IntensityImage& image, const BinaryImage& background) {
    if (gland.empty()) throw Error("empty_gland", "empty pixel set");
    if (background.rows() != image.rows() || background.cols() != image.cols())
        throw Error("dimension_mismatch", "background mask does not match image");

    double gland_sum = 0.0;
    for (const Pixel& p : gland) {
        if (!in_bounds(image, p.x(), p.y())) throw Error("dimension_mismatch", "gland pixel outside image");
        gland_sum += image(p.y(), p.x());
    }

    BinaryImage ring = BinaryImage::Zero(image.rows(), image.cols());
    constexpr int r = kContrastRingPx;
    for (const Pixel& p : gland) {
        const int y0 = std::max(0, p.y() - r), y1 = std::min<int>(image.rows() - 1, p.y() + r);
        const int x0 = std::max(0, p.x() - r), x1 = std::min<int>(image.cols() - 1, p.x() + r);
        ring.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1) = 1;
    }
    for (const Pixel& p : gland) ring(p.y(), p.x()) = 0;

    double ring_sum = 0.0;
    long ring_n = 0;
    for (Eigen::Index y = 0; y < ring.rows(); ++y)
        for (Eigen::Index x = 0; x < ring.cols(); ++x)
            if (ring(y, x) && background(y, x)) {
                ring_sum += image(y, x);
                ++ring_n;
            }
    if (ring_n == 0) throw Error("no_local_background", "no local background");
    return gland_sum / static_cast<double>(gland.size()) - ring_sum / static_cast<double>(ring_n);
}

double gland_local_contrast(const PixelSet& gland, const IntensityImage& image) {
    BinaryImage background = BinaryImage::Ones(image.rows(), image.cols());
    for (const Pixel& p : gland)
        if (in_bounds(background, p.x(), p.y())) background(p.y(), p.x()) = 0;
    return gland_local_contrast(gland, image, background);
}

EyelidMorphology quantify(const GlandInstanceMask& mask, const IntensityImage* image) {
    const int w = mask.width_px(), h = mask.height_px();
    if (image && (image->rows() != h || image->cols() != w))
        throw Error("dimension_mismatch", "intensity image does not match mask dimensions");

    const BinaryImage roi = rasterize(mask.roi, w, h);
    const long roi_px = roi.cast<long>().sum();
    if (roi_px == 0) throw Error("invalid_roi", "ROI covers no image pixels");

    std::vector<PixelSet> glands(static_cast<std::size_t>(mask.gland_count) + 1);
    BinaryImage background = roi;
    long gland_px = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto id = mask.labels(y, x);
            if (id == 0 || !roi(y, x)) continue;
            if (id > mask.gland_count) throw Error("invalid_labels", "labels are not contiguous");
            glands[id].emplace_back(x, y);
            background(y, x) = 0;
            ++gland_px;
        }
    }

    EyelidMorphology out;
    out.subject_eye_id = mask.subject_eye_id;
    const double mm = mask.mm_per_px;

    for (int id = 1; id <= mask.gland_count; ++id) {
        const PixelSet& pixels = glands[id];
        if (pixels.empty()) {
            out.excluded_gland_ids.push_back(id);
            continue;
        }
        GlandMorphometry g;
        g.gland_id = id;
        g.area_px = static_cast<long>(pixels.size());
        g.area_mm2 = static_cast<double>(g.area_px) * mm * mm;

        const SkeletonPath skel = skeletonize(pixels);
        g.skeleton_length_px = skel.length_px;
        g.length_mm = skel.length_px * mm;
        const WidthEstimate width = gland_width(g.area_px, skel.length_px, mm);
        g.width_mm = width.width_mm;
        try {
            g.tortuosity = gland_tortuosity(skel);
        } catch (const Error&) {
            g.tortuosity = 0.0;
            g.flags.emplace_back("degenerate_skeleton");
        }
        if (width.degenerate && g.flags.empty()) g.flags.emplace_back("degenerate_skeleton");
        if (g.width_mm > g.length_mm) g.flags.emplace_back("width_exceeds_length");

        if (image) {
            try {
                g.local_contrast = gland_local_contrast(pixels, *image, background);
            } catch (const Error& e) {
                if (e.code() != "no_local_background") throw;
                g.flags.emplace_back("no_local_background");
            }
        }
        out.per_gland.push_back(std::move(g));
    }

    out.gland_count = static_cast<int>(out.per_gland.size());
    const double density = static_cast<double>(gland_px) / static_cast<double>(roi_px);
    out.gland_density = density;
    out.percent_atrophy = 100.0 - 100.0 * density;

    out.avg_length = mean_of(out.per_gland, [](const auto& g) { return std::optional(g.length_mm); });
    out.avg_width = mean_of(out.per_gland, [](const auto& g) { return std::optional(g.width_mm); });
    out.avg_tortuosity = mean_of(out.per_gland, [](const auto& g) { return std::optional(g.tortuosity); });
    if (image) out.avg_contrast = mean_of(out.per_gland, [](const auto& g) { return g.local_contrast; });
    return out;
}

json to_json(const EyelidMorphology& m) {
    json glands = json::array();
    for (const auto& g : m.per_gland) {
        glands.push_back({{"gland_id", g.gland_id},
                          {"length_mm", g.length_mm},
                          {"width_mm", g.width_mm},
                          {"tortuosity", g.tortuosity},
                          {"local_contrast", optional_to_json(g.local_contrast)},
                          {"area_mm2", g.area_mm2},
                          {"area_px", g.area_px},
                          {"flags", g.flags}});
    }
    return json{{"subject_eye_id", m.subject_eye_id},
                {"gland_count", m.gland_count},
                {"avg_length", optional_to_json(m.avg_length)},
                {"avg_width", optional_to_json(m.avg_width)},
                {"avg_contrast", optional_to_json(m.avg_contrast)},
                {"avg_tortuosity", optional_to_json(m.avg_tortuosity)},
                {"percent_atrophy", optional_to_json(m.percent_atrophy)},
                {"gland_density", optional_to_json(m.gland_density)},
                {"per_gland", glands},
                {"excluded_gland_ids", m.excluded_gland_ids}};
}

EyelidMorphology morphology_from_json(const json& j) {
    if (!j.is_object()) throw Error("malformed_morphology", "morphology must be a JSON object");
    EyelidMorphology m;
    try {
        m.subject_eye_id = j.value("subject_eye_id", "");
        m.avg_length = optional_from_json(j, "avg_length");
        m.avg_width = optional_from_json(j, "avg_width");
        m.avg_contrast = optional_from_json(j, "avg_contrast");
        m.avg_tortuosity = optional_from_json(j, "avg_tortuosity");
        m.percent_atrophy = optional_from_json(j, "percent_atrophy");
        m.gland_density = optional_from_json(j, "gland_density");
        if (auto it = j.find("per_gland"); it != j.end()) {
            for (const auto& gj : *it) {
                GlandMorphometry g;
                g.gland_id = gj.at("gland_id").get<int>();
                g.length_mm = gj.at("length_mm").get<double>();
                g.width_mm = gj.at("width_mm").get<double>();
                g.tortuosity = gj.at("tortuosity").get<double>();
                g.local_contrast = optional_from_json(gj, "local_contrast");
                g.area_mm2 = gj.at("area_mm2").get<double>();
                g.area_px = gj.value("area_px", 0L);
                g.flags = gj.value("flags", std::vector<std::string>{});
                m.per_gland.push_back(std::move(g));
            }
        }
        m.gland_count = j.value("gland_count", static_cast<int>(m.per_gland.size()));
        m.excluded_gland_ids = j.value("excluded_gland_ids", std::vector<int>{});
    } catch (const json::exception& e) {
        throw Error("malformed_morphology", std::string("malformed morphology: ") + e.what());
    }
    return m;
}

}  // namespace meibo::morph
