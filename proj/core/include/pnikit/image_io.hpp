#pragma once

#include <filesystem>

#include "pnikit/image.hpp"

namespace pnikit {

/// Reads an 8-bit PNG as grayscale or RGB. Palette, low-bit-depth, 16-bit and
/// alpha variants are normalized to 8-bit gray/RGB on load.
RasterImage read_png(const std::filesystem::path& path);

/// Lossless 8-bit PNG, gray or RGB to match the image.
void write_png(const std::filesystem::path& path, const RasterImage& image);

/// Baseline JPEG at the given quality (the patch export format). Gray or RGB.
void write_jpeg(const std::filesystem::path& path, const RasterImage& image,
                int quality);

RasterImage read_jpeg(const std::filesystem::path& path);

}  // namespace pnikit
