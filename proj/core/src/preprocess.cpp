#include "pnikit/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "pnikit/error.hpp"
#include "pnikit/image_io.hpp"

namespace pnikit {

std::size_t LabelMask::count_value(std::uint8_t v) const {
  return static_cast<std::size_t>(
      std::count(values.begin(), values.end(), v));
}

RasterImage to_grayscale(const RasterImage& rgb) {
  if (rgb.channels != 3) {
    fail(ErrorCode::invalid_argument, "to_grayscale: input must be RGB");
  }
  RasterImage gray = RasterImage::make(rgb.width, rgb.height, 1);
  const std::uint8_t* src = rgb.pixels.data();
  std::uint8_t* dst = gray.pixels.data();
  const std::size_t n = static_cast<std::size_t>(rgb.width) * rgb.height;
  for (std::size_t i = 0; i < n; ++i) {
    const double luma =
        0.2989 * src[0] + 0.5870 * src[1] + 0.1140 * src[2];
    dst[i] = static_cast<std::uint8_t>(
        std::clamp<long>(round_half_away(luma), 0, 255));
    src += 3;
  }
  return gray;
}

FloatImage laplacian_response(const RasterImage& gray) {
  if (gray.channels != 1) {
    fail(ErrorCode::invalid_argument, "laplacian_response: input must be gray");
  }
  if (gray.empty()) {
    fail(ErrorCode::invalid_argument, "laplacian_response: empty image");
  }
  const int w = gray.width;
  const int h = gray.height;
  FloatImage out = FloatImage::make(w, h);
  for (int y = 0; y < h; ++y) {
    const int yu = std::max(y - 1, 0);
    const int yd = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0);
      const int xr = std::min(x + 1, w - 1);
      const int lap = gray.at(xl, y) + gray.at(xr, y) + gray.at(x, yu) +
                      gray.at(x, yd) - 4 * gray.at(x, y);
      out.at(x, y) = static_cast<float>(std::abs(lap));
    }
  }
  return out;
}

int otsu_threshold_bin(std::span<const std::uint64_t, 256> histogram) {
  std::uint64_t total = 0;
  std::uint64_t total_sum = 0;
  for (int b = 0; b < 256; ++b) {
    total += histogram[b];
    total_sum += histogram[b] * static_cast<std::uint64_t>(b);
  }
  if (total == 0) {
    fail(ErrorCode::invalid_argument, "otsu: empty histogram");
  }

  double best = -1.0;
  int best_t = -1;
  std::uint64_t w0 = 0;
  std::uint64_t s0 = 0;
  for (int t = 0; t < 255; ++t) {
    w0 += histogram[t];
    s0 += histogram[t] * static_cast<std::uint64_t>(t);
    const std::uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = static_cast<double>(s0) / static_cast<double>(w0);
    const double mu1 = static_cast<double>(total_sum - s0) /
                       static_cast<double>(w1);
    const double diff = mu0 - mu1;
    const double between = static_cast<double>(w0) *
                           static_cast<double>(w1) * diff * diff;
    if (between > best) {  // strict: ties keep the smallest t
      best = between;
      best_t = t;
    }
  }
  if (best_t < 0) {
    // All mass in one bin: no valid split, foreground stays empty.
    for (int b = 0; b < 256; ++b) {
      if (histogram[b] > 0) return b;
    }
  }
  return best_t;
}

OtsuResult otsu_threshold(const FloatImage& values) {
  if (values.empty()) {
    fail(ErrorCode::invalid_argument, "otsu: empty input");
  }
  const auto [min_it, max_it] =
      std::minmax_element(values.values.begin(), values.values.end());
  const float lo = *min_it;
  const float hi = *max_it;

  OtsuResult result;
  result.foreground = BinaryMask::make(values.width, values.height, false);
  if (lo == hi) {
    result.bin = 0;
    result.threshold = lo;  // degenerate: everything one value, empty mask
    return result;
  }

  const double scale = 256.0 / (static_cast<double>(hi) - lo);
  auto bin_of = [&](float v) {
    const int b = static_cast<int>((static_cast<double>(v) - lo) * scale);
    return std::min(b, 255);
  };

  std::array<std::uint64_t, 256> hist{};
  for (const float v : values.values) {
    ++hist[bin_of(v)];
  }
  result.bin = otsu_threshold_bin(hist);
  result.threshold = static_cast<float>(
      lo + (static_cast<double>(result.bin) + 1.0) / scale);
  for (std::size_t i = 0; i < values.values.size(); ++i) {
    result.foreground.flags[i] = bin_of(values.values[i]) > result.bin;
  }
  return result;
}

TissueMask tissue_mask_from_image(const RasterImage& level0,
                                  const std::string& slide_id) {
  const RasterImage thumb = downsample(level0, kTissueMaskDownsample);
  const RasterImage gray =
      thumb.channels == 3 ? to_grayscale(thumb) : thumb;
  const FloatImage magnitude = laplacian_response(gray);
  TissueMask tissue;
  tissue.slide_id = slide_id;
  tissue.mask = otsu_threshold(magnitude).foreground;
  return tissue;
}

TissueMask tissue_mask(const Slide& slide) {
  return tissue_mask_from_image(slide.level_image(0), slide.meta().slide_id);
}

namespace {

/// Fills polygon interiors with `value` using even-odd scanline filling.
/// A pixel belongs to the interior when its center (x+0.5, y+0.5) does; with
/// sorted span edges [a,b) a center exactly on `a` counts as inside, on `b`
/// as outside, matching the crossing-count rule used by the test oracle.
void fill_polygon(const Polygon& poly, int width, int height,
                  std::uint8_t value, std::vector<std::uint8_t>& mask) {
  double min_y = poly.points[0][1];
  double max_y = min_y;
  for (const auto& pt : poly.points) {
    min_y = std::min(min_y, pt[1]);
    max_y = std::max(max_y, pt[1]);
  }
  const int row_begin = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int row_end =
      std::min(height, static_cast<int>(std::ceil(max_y + 0.5)));

  std::vector<double> crossings;
  const std::size_t n = poly.points.size();
  for (int row = row_begin; row < row_end; ++row) {
    const double py = row + 0.5;
    crossings.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = poly.points[i];
      const auto& b = poly.points[(i + 1) % n];
      if ((a[1] > py) != (b[1] > py)) {
        crossings.push_back(a[0] +
                            (py - a[1]) * (b[0] - a[0]) / (b[1] - a[1]));
      }
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t i = 0; i + 1 < crossings.size(); i += 2) {
      // centers px with crossings[i] <= px < crossings[i+1]
      int x_first =
          static_cast<int>(std::ceil(crossings[i] - 0.5));
      int x_last =
          static_cast<int>(std::ceil(crossings[i + 1] - 0.5)) - 1;
      x_first = std::max(x_first, 0);
      x_last = std::min(x_last, width - 1);
      if (x_first > x_last) continue;
      std::memset(mask.data() + static_cast<std::size_t>(row) * width + x_first,
                  value, static_cast<std::size_t>(x_last - x_first + 1));
    }
  }
}

}  // namespace

LabelMask rasterize_labels(int width, int height,
                           const AnnotationSet& annotations,
                           const TissueMask& tissue) {
  annotations.validate();
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::invalid_argument, "rasterize_labels: bad dims");
  }
  const int f = tissue.downsample_factor;
  const int exp_w = (width + f - 1) / f;
  const int exp_h = (height + f - 1) / f;
  if (tissue.mask.width != exp_w || tissue.mask.height != exp_h) {
    fail(ErrorCode::inconsistent_input,
         "rasterize_labels: tissue mask dims do not match slide dims");
  }
  for (const Polygon& poly : annotations.polygons) {
    for (const auto& pt : poly.points) {
      if (pt[0] < 0 || pt[0] > width || pt[1] < 0 || pt[1] > height) {
        fail(ErrorCode::out_of_bounds,
             "rasterize_labels: polygon outside level-0 bounds");
      }
    }
  }

  LabelMask label;
  label.slide_id = annotations.slide_id;
  label.width = width;
  label.height = height;
  label.values.assign(static_cast<std::size_t>(width) * height, 0);

  // Tissue layer by nearest-neighbor expansion of the x16 mask.
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* trow =
        tissue.mask.flags.data() +
        static_cast<std::size_t>(y / f) * tissue.mask.width;
    std::uint8_t* lrow = label.values.data() + label.index(0, y);
    for (int x = 0; x < width; ++x) {
      lrow[x] = trow[x / f];
    }
  }

  // Annotations override tissue: an annotated PNI pixel is 2 regardless of
  // what the coarse mask thought. Overlapping polygons union trivially.
  for (const Polygon& poly : annotations.polygons) {
    fill_polygon(poly, width, height, 2, label.values);
  }
  return label;
}

SectionSplit split_sections(const SlideMeta& meta,
                            const AnnotationSet& annotations) {
  const int w = meta.levels.at(0).width;
  const int h = meta.levels.at(0).height;
  const bool split_x = w >= h;  // longer axis; ties split along x
  const int dim = split_x ? w : h;
  const int mid = dim / 2;

  SectionSplit whole;
  whole.region = {0, 0, 0, w, h};
  whole.needs_manual_review = true;
  if (annotations.polygons.empty()) {
    return whole;
  }

  bool all_first = true;
  bool all_second = true;
  for (const Polygon& poly : annotations.polygons) {
    for (const auto& pt : poly.points) {
      const double v = split_x ? pt[0] : pt[1];
      if (!(v < mid)) all_first = false;
      if (v < mid) all_second = false;
    }
  }

  SectionSplit out;
  if (all_first) {
    out.region = split_x ? Region{0, 0, 0, mid, h} : Region{0, 0, 0, w, mid};
  } else if (all_second) {
    out.region = split_x ? Region{0, mid, 0, w - mid, h}
                         : Region{0, 0, mid, w, h - mid};
  } else {
    return whole;  // annotations straddle the midline
  }
  return out;
}

void write_label_mask_png(const std::filesystem::path& path,
                          const LabelMask& mask) {
  RasterImage img;
  img.width = mask.width;
  img.height = mask.height;
  img.channels = 1;
  img.pixels = mask.values;
  write_png(path, img);
}

LabelMask read_label_mask_png(const std::filesystem::path& path,
                              const std::string& slide_id) {
  RasterImage img = read_png(path);
  if (img.channels != 1) {
    fail(ErrorCode::invalid_format, "label mask must be grayscale: " +
                                        path.string());
  }
  for (const std::uint8_t v : img.pixels) {
    if (v > 2) {
      fail(ErrorCode::invalid_format,
           "label mask values must be 0/1/2: " + path.string());
    }
  }
  LabelMask mask;
  mask.slide_id = slide_id;
  mask.width = img.width;
  mask.height = img.height;
  mask.values = std::move(img.pixels);
  return mask;
}

void write_tissue_mask_png(const std::filesystem::path& path,
                           const TissueMask& mask) {
  RasterImage img = RasterImage::make(mask.mask.width, mask.mask.height, 1);
  for (std::size_t i = 0; i < mask.mask.flags.size(); ++i) {
    img.pixels[i] = mask.mask.flags[i] ? 255 : 0;
  }
  write_png(path, img);
}

TissueMask read_tissue_mask_png(const std::filesystem::path& path,
                                const std::string& slide_id) {
  RasterImage img = read_png(path);
  if (img.channels != 1) {
    fail(ErrorCode::invalid_format,
         "tissue mask must be grayscale: " + path.string());
  }
  TissueMask mask;
  mask.slide_id = slide_id;
  mask.mask = BinaryMask::make(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    if (img.pixels[i] != 0 && img.pixels[i] != 255) {
      fail(ErrorCode::invalid_format,
           "tissue mask values must be 0/255: " + path.string());
    }
    mask.mask.flags[i] = img.pixels[i] ? 1 : 0;
  }
  return mask;
}

}  // namespace pnikit
