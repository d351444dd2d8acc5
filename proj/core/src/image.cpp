#include "pnikit/image.hpp"

#include <cmath>
#include <cstdlib>

#include "pnikit/error.hpp"

namespace pnikit {

RasterImage RasterImage::make(int width, int height, int channels,
                              std::uint8_t fill) {
  if (width < 0 || height < 0 || (channels != 1 && channels != 3)) {
    fail(ErrorCode::invalid_argument, "RasterImage: bad shape");
  }
  RasterImage img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.assign(
      static_cast<std::size_t>(width) * height * channels, fill);
  return img;
}

FloatImage FloatImage::make(int width, int height, float fill) {
  if (width < 0 || height < 0) {
    fail(ErrorCode::invalid_argument, "FloatImage: bad shape");
  }
  FloatImage img;
  img.width = width;
  img.height = height;
  img.values.assign(static_cast<std::size_t>(width) * height, fill);
  return img;
}

BinaryMask BinaryMask::make(int width, int height, bool fill) {
  if (width < 0 || height < 0) {
    fail(ErrorCode::invalid_argument, "BinaryMask: bad shape");
  }
  BinaryMask mask;
  mask.width = width;
  mask.height = height;
  mask.flags.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
  return mask;
}

std::size_t BinaryMask::count_set() const {
  std::size_t n = 0;
  for (const std::uint8_t f : flags) n += (f != 0);
  return n;
}

long round_half_away(double value) {
  // lround rounds halfway cases away from zero.
  return std::lround(value);
}

}  // namespace pnikit
