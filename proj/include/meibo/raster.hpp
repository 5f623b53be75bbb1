#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace meibo {

/// Row-major raster indexed (row = y, col = x).
template <typename Scalar>
using Raster = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using LabelImage = Raster<std::uint16_t>;
using IntensityImage = Raster<std::uint8_t>;
using BinaryImage = Raster<std::uint8_t>;

using Pixel = Eigen::Vector2i;  // (x, y)
using PixelSet = std::vector<Pixel>;

/// Closed polygon in pixel coordinates; the last vertex connects back to the first.
/// Pixel (x, y) covers the unit square [x, x+1) x [y, y+1).
using Polygon = std::vector<Eigen::Vector2d>;

template <typename Scalar>
bool in_bounds(const Raster<Scalar>& r, int x, int y) {
    return x >= 0 && y >= 0 && x < r.cols() && y < r.rows();
}

}  // namespace meibo
