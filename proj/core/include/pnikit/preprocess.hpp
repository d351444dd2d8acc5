#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "pnikit/annotations.hpp"
#include "pnikit/image.hpp"
#include "pnikit/slide.hpp"

namespace pnikit {

/// Default tissue-mask resolution relative to level 0.
inline constexpr int kTissueMaskDownsample = 16;

/// Binary tissue map at 1/16 of level-0 resolution.
struct TissueMask {
  std::string slide_id;
  int downsample_factor = kTissueMaskDownsample;
  BinaryMask mask;
};

/// Per-pixel class map at level 0: 0 background, 1 non-PNI tissue, 2 PNI.
struct LabelMask {
  std::string slide_id;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
  std::uint8_t at(int x, int y) const { return values[index(x, y)]; }
  std::size_t count_value(std::uint8_t v) const;
};

/// NTSC luma: round(0.2989 R + 0.5870 G + 0.1140 B), clamped to [0,255].
RasterImage to_grayscale(const RasterImage& rgb);

/// Absolute response of the 4-neighbor Laplacian [[0,1,0],[1,-4,1],[0,1,0]]
/// with replicate border handling.
FloatImage laplacian_response(const RasterImage& gray);

/// Otsu threshold over a 256-bin histogram. Classes split as {0..t} vs
/// {t+1..255}; bins strictly above the returned t are foreground. Ties take
/// the smallest t; a single-occupied-bin histogram returns that bin (empty
/// foreground).
int otsu_threshold_bin(std::span<const std::uint64_t, 256> histogram);

struct OtsuResult {
  int bin = 0;         // threshold in the 256-bin quantized domain
  float threshold = 0; // lower edge of the first foreground bin, value domain
  BinaryMask foreground;
};

/// Quantizes the values to 256 bins over their [min,max] range, runs Otsu and
/// returns the foreground mask (value bins strictly above the threshold).
/// All-identical input yields threshold = that value and an empty mask.
OtsuResult otsu_threshold(const FloatImage& values);

/// Tissue segmentation: downsample x16 -> grayscale -> |Laplacian| -> Otsu.
TissueMask tissue_mask(const Slide& slide);
TissueMask tissue_mask_from_image(const RasterImage& level0,
                                  const std::string& slide_id);

/// Rasterizes annotations over the tissue map into a level-0 label mask.
/// A pixel is 2 when its center lies inside any PNI polygon (even-odd rule),
/// else 1 when the x16 tissue cell under it is set, else 0. Annotated pixels
/// override the tissue map. Polygons outside [0,width]x[0,height] are an
/// error.
LabelMask rasterize_labels(int width, int height,
                           const AnnotationSet& annotations,
                           const TissueMask& tissue);

struct SectionSplit {
  Region region;                   // retained level-0 region
  bool needs_manual_review = false;
};

/// Splits level 0 into two halves along the longer axis (ties split along x).
/// If every polygon lies entirely within one half, that half is retained;
/// otherwise (including the no-annotation case) the whole extent is returned
/// with the review flag set.
SectionSplit split_sections(const SlideMeta& meta,
                            const AnnotationSet& annotations);

// Mask PNG codecs: LabelMask stores raw values 0/1/2, TissueMask 0/255.
void write_label_mask_png(const std::filesystem::path& path,
                          const LabelMask& mask);
LabelMask read_label_mask_png(const std::filesystem::path& path,
                              const std::string& slide_id);
void write_tissue_mask_png(const std::filesystem::path& path,
                           const TissueMask& mask);
TissueMask read_tissue_mask_png(const std::filesystem::path& path,
                                const std::string& slide_id);

}  // namespace pnikit
