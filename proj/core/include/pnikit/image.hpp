#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace pnikit {

/// Interleaved 8-bit raster, row-major. channels is 1 (gray) or 3 (RGB).
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  static RasterImage make(int width, int height, int channels,
                          std::uint8_t fill = 0);

  std::size_t index(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 &&
           c < channels);
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }

  bool same_shape(const RasterImage& other) const {
    return width == other.width && height == other.height &&
           channels == other.channels;
  }
  bool empty() const { return width == 0 || height == 0; }
};

/// Single-channel floating raster (Laplacian magnitudes and similar).
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  static FloatImage make(int width, int height, float fill = 0.0f);

  std::size_t index(int x, int y) const {
    assert(x >= 0 && x < width && y >= 0 && y < height);
    return static_cast<std::size_t>(y) * width + x;
  }
  float at(int x, int y) const { return values[index(x, y)]; }
  float& at(int x, int y) { return values[index(x, y)]; }
  bool empty() const { return width == 0 || height == 0; }
};

/// Per-pixel boolean mask, stored as 0/1 bytes.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> flags;

  static BinaryMask make(int width, int height, bool fill = false);

  std::size_t index(int x, int y) const {
    assert(x >= 0 && x < width && y >= 0 && y < height);
    return static_cast<std::size_t>(y) * width + x;
  }
  bool at(int x, int y) const { return flags[index(x, y)] != 0; }
  void set(int x, int y, bool value) { flags[index(x, y)] = value ? 1 : 0; }

  std::size_t count_set() const;
  bool same_shape(const BinaryMask& other) const {
    return width == other.width && height == other.height;
  }
};

/// Round half away from zero, the rounding rule used throughout the pipeline.
long round_half_away(double value);

}  // namespace pnikit
