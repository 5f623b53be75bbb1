#pragma once

#include <filesystem>

#include "meibo/raster.hpp"

namespace meibo::png {

/// Reads a single-channel 8- or 16-bit PNG as 16-bit values.
LabelImage read_gray16(const std::filesystem::path& path);

/// Reads a single-channel 8-bit PNG. 16-bit input is rejected.
IntensityImage read_gray8(const std::filesystem::path& path);

void write_gray16(const std::filesystem::path& path, const LabelImage& image);
void write_gray8(const std::filesystem::path& path, const IntensityImage& image);

}  // namespace meibo::png
