#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pnikit/preprocess.hpp"
#include "pnikit/tiler.hpp"

namespace pnikit {

/// Pixel-wise predictions for one patch placement, values in [0,1].
struct PixelPredictionPatch {
  std::string patch_id;
  std::string model_id;
  int x = 0;  // level-0 top-left
  int y = 0;
  int patch_px = 0;
  std::vector<float> probabilities;  // patch_px * patch_px

  void validate() const;
};

/// Slide-sized probability field reconstructed from overlapping patches.
struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<float> prob;  // 0 where nothing contributed

  float at(int x, int y) const {
    return prob[static_cast<std::size_t>(y) * width + x];
  }
};

/// (sum, count) accumulation: each pixel's probability is the mean over every
/// overlapping patch of every model. The pair form merges associatively, so
/// tile workers can accumulate independently and combine.
class HeatmapAccumulator {
 public:
  HeatmapAccumulator(int width, int height);

  void add(const PixelPredictionPatch& patch);
  void merge(const HeatmapAccumulator& other);
  Heatmap finalize() const;

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint32_t contribution_count(int x, int y) const {
    return count_[static_cast<std::size_t>(y) * width_ + x];
  }

 private:
  int width_;
  int height_;
  std::vector<double> sum_;
  std::vector<std::uint32_t> count_;
};

/// Convenience single pass over all patches of all models. Workers split by
/// row band when PNIKIT_WORKERS asks for more than one; the result is
/// identical at any worker count.
Heatmap stitch(std::span<const PixelPredictionPatch> patches, int width,
               int height);

/// round(p * 255), half away from zero. Errors on values outside [0,1].
RasterImage quantize(const Heatmap& heatmap);

/// Positive where value >= threshold (or > with ge=false); the default 75
/// deliberately sits below mid-scale to favor sensitivity over specificity.
inline constexpr int kDefaultBinarizeThreshold = 75;
BinaryMask binarize(const RasterImage& quantized,
                    int threshold = kDefaultBinarizeThreshold, bool ge = true);

/// Comparison overlay: intersection blue, prediction-only yellow,
/// annotation-only red, over the (optional) grayscale base.
RasterImage render_overlay(const BinaryMask& predicted,
                           const BinaryMask& truth,
                           const RasterImage* base = nullptr);

enum class PixelOracleMode { truth, inverted };

/// Test-oracle segmentation model: per-pixel probability equals the PNI truth
/// of the label mask (or its complement). Patches follow the segmentation
/// grid with the usual tissue-fraction filter.
std::vector<PixelPredictionPatch> oracle_pixel_patches(
    const LabelMask& labels, const TissueMask& tissue,
    const PatchGridSpec& spec, PixelOracleMode mode,
    const std::string& model_id);

/// External prediction-patch manifest:
/// CSV patch_id,model_id,x,y,image_path with 8-bit grayscale PNG grids
/// (probability = value / 255).
struct PredPatchRef {
  std::string patch_id;
  std::string model_id;
  int x = 0;
  int y = 0;
  std::string image_path;
};

void write_pred_manifest(const std::filesystem::path& path,
                         std::span<const PredPatchRef> refs);
std::vector<PredPatchRef> read_pred_manifest(
    const std::filesystem::path& path);
PixelPredictionPatch load_pred_patch(const PredPatchRef& ref,
                                     const std::filesystem::path& base_dir);

}  // namespace pnikit
