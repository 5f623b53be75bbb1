#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meibo/raster.hpp"

namespace meibo::morph {

/// Labeled gland instances over an eyelid region of interest.
///
/// Labels are contiguous 1..gland_count (0 is background). Construct through
/// make_mask() or load_labeled_mask(), which validate and renumber.
struct GlandInstanceMask {
    LabelImage labels;
    Polygon roi;
    double mm_per_px = 0.0;
    std::string subject_eye_id;
    int gland_count = 0;

    int width_px() const { return static_cast<int>(labels.cols()); }
    int height_px() const { return static_cast<int>(labels.rows()); }
};

struct GlandMorphometry {
    int gland_id = 0;
    double length_mm = 0.0;
    double width_mm = 0.0;
    double tortuosity = 0.0;
    std::optional<double> local_contrast;
    double area_mm2 = 0.0;
    long area_px = 0;
    double skeleton_length_px = 0.0;
    /// Measurement caveats such as "degenerate_skeleton" or "width_exceeds_length".
    std::vector<std::string> flags;
};

/// Eyelid-level aggregate morphology. Averages are absent when no glands were
/// measured; avg_contrast is absent when no intensity image was supplied.
/// percent_atrophy and gland_density are absent only for records that carry
/// externally supplied summaries without them.
struct EyelidMorphology {
    std::string subject_eye_id;
    int gland_count = 0;
    std::optional<double> avg_length;
    std::optional<double> avg_width;
    std::optional<double> avg_contrast;
    std::optional<double> avg_tortuosity;
    std::optional<double> percent_atrophy;
    std::optional<double> gland_density;
    std::vector<GlandMorphometry> per_gland;
    /// Mask ids whose pixels all fall outside the ROI.
    std::vector<int> excluded_gland_ids;
};

/// Longest geodesic path through a gland skeleton, ordered end to end.
///
/// Thinning erodes each end by roughly half the gland width, so both ends are
/// extended along the local path tangent to the gland boundary. `start` and
/// `end` are the extended endpoints; length_px includes both extensions.
struct SkeletonPath {
    std::vector<Pixel> pixels;
    double arc_px = 0.0;
    double start_extension_px = 0.0;
    double end_extension_px = 0.0;
    double length_px = 0.0;
    Eigen::Vector2d start = Eigen::Vector2d::Zero();
    Eigen::Vector2d end = Eigen::Vector2d::Zero();
};

// --- construction & I/O ---------------------------------------------------

/// Validates scale and ROI and renumbers labels to contiguous 1..N in
/// ascending order of the original ids.
GlandInstanceMask make_mask(LabelImage labels, Polygon roi, double mm_per_px, std::string subject_eye_id);

GlandInstanceMask load_labeled_mask(const std::filesystem::path& mask_path,
                                    const std::filesystem::path& sidecar_path);

// --- geometry helpers -----------------------------------------------------

double polygon_area(const Polygon& polygon);
bool polygon_is_simple(const Polygon& polygon);
bool point_in_polygon(const Polygon& polygon, const Eigen::Vector2d& p);

/// Pixels whose centres lie inside the polygon.
BinaryImage rasterize(const Polygon& polygon, int width, int height);

// --- per-gland measurements -------------------------------------------------

/// Zhang-Suen thinning of the pixel set, then the longest geodesic path
/// through the 8-connected skeleton (4-neighbour steps cost 1, diagonal sqrt 2),
/// measured with path_length_px and end-extended. A single-pixel skeleton has
/// length 0.
SkeletonPath skeletonize(const PixelSet& gland);

/// Tangent window, in path pixels, used to direct the end extension.
inline constexpr int kEndTangentPx = 6;

/// Length of an ordered 8-connected path, measured along the polyline through
/// the moving-average-smoothed pixel centres. Raw 1/sqrt(2) step costs
/// overestimate curved arcs by up to ~5.5%; smoothing removes the staircase.
double path_length_px(const std::vector<Pixel>& path);

inline constexpr int kPathSmoothingHalfWindow = 3;

double gland_length(const PixelSet& gland, double mm_per_px);

struct WidthEstimate {
    double width_mm = 0.0;
    bool degenerate = false;  // zero-length skeleton, width defined as 0
};
WidthEstimate gland_width(long area_px, double skeleton_length_px, double mm_per_px);

/// (arc length / endpoint chord) - 1. Throws "degenerate skeleton" when the
/// endpoints coincide.
double gland_tortuosity(const std::vector<Pixel>& path);

/// Same ratio on an extended skeleton: length_px over |end - start|.
double gland_tortuosity(const SkeletonPath& skeleton);

/// Mean gland intensity minus mean intensity of the 3-px dilation ring.
/// `background` marks pixels eligible for the ring (inside the ROI and not
/// covered by any gland). Throws "no local background" when the ring is empty.
double gland_local_contrast(const PixelSet& gland, const IntensityImage& image, const BinaryImage& background);

/// Overload treating every pixel outside `gland` as eligible background.
double gland_local_contrast(const PixelSet& gland, const IntensityImage& image);

inline constexpr int kContrastRingPx = 3;

// --- eyelid-level -------------------------------------------------------------

EyelidMorphology quantify(const GlandInstanceMask& mask, const IntensityImage* image = nullptr);

nlohmann::json to_json(const EyelidMorphology& m);
EyelidMorphology morphology_from_json(const nlohmann::json& j);

}  // namespace meibo::morph
