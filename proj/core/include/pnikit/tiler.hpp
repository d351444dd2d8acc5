#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pnikit/preprocess.hpp"
#include "pnikit/slide.hpp"

namespace pnikit {

enum class PatchTask { classification, segmentation };

/// Patch grid geometry. Defaults follow the 598/299 classification layout;
/// segmentation_defaults() gives 512/256. Both are 50% overlap.
struct PatchGridSpec {
  int patch_px = 598;
  int stride_px = 299;
  int level = 0;
  double min_tissue_fraction = 0.5;
  bool include_edge_tiles = true;  // append a final dim-patch_px tile
  PatchTask task = PatchTask::classification;

  static PatchGridSpec classification_defaults() { return {}; }
  static PatchGridSpec segmentation_defaults() {
    PatchGridSpec spec;
    spec.patch_px = 512;
    spec.stride_px = 256;
    spec.task = PatchTask::segmentation;
    return spec;
  }

  void validate() const;

  /// Physical patch side the task is calibrated for (microns).
  double expected_patch_microns() const {
    return task == PatchTask::classification ? 300.0 : 250.0;
  }
};

enum class PatchLabel { negative, positive };

inline const char* to_string(PatchLabel label) {
  return label == PatchLabel::positive ? "pos" : "neg";
}

struct PatchRecord {
  std::string patch_id;
  std::string slide_id;
  std::string subject_id;
  int x = 0;  // top-left, level coordinates
  int y = 0;
  int level = 0;
  PatchLabel label = PatchLabel::negative;
  double tissue_fraction = 0.0;
  std::string image_path;  // empty when pixels were not exported
};

/// 1-D grid offsets: 0, stride, 2*stride, ... while offset+patch <= dim, plus
/// the final dim-patch offset when edge tiles are enabled and it is not
/// already present. Empty when dim < patch.
std::vector<int> grid_offsets(int dim, const PatchGridSpec& spec);

std::vector<std::pair<int, int>> generate_grid(int width, int height,
                                               const PatchGridSpec& spec);

/// Fraction of the level-0 window covered by tissue, using nearest-neighbor
/// mapping onto the x16 mask. Windows outside the mask extent are an error.
double tissue_fraction(const TissueMask& tissue, long x0, long y0, long w,
                       long h);

struct ExtractOptions {
  bool export_images = true;
  std::filesystem::path out_dir;  // required when exporting
  int jpeg_quality = 80;
  // Path prefix recorded in image_path (e.g. relative to a manifest).
  std::string image_path_prefix;
};

struct ExtractResult {
  std::vector<PatchRecord> records;
  double patch_microns = 0.0;
  bool physical_size_warning = false;
};

/// Grid + tissue filter + labels, without touching pixel data. The label is
/// positive iff the level-0 window contains at least one PNI pixel.
ExtractResult extract_patch_records(const SlideMeta& meta,
                                    const LabelMask& labels,
                                    const TissueMask& tissue,
                                    const PatchGridSpec& spec);

/// Same, plus JPEG export of the patch pixels (quality 80 by default). Only
/// exported files are lossy; every in-pipeline computation uses the lossless
/// level images.
ExtractResult extract_patches(const Slide& slide, const LabelMask& labels,
                              const TissueMask& tissue,
                              const PatchGridSpec& spec,
                              const ExtractOptions& options);

enum class AugmentOp { identity, hflip, rot90, rot180, rot270 };

/// Exact pixel permutation; rotations require square input.
RasterImage augment(const RasterImage& patch, AugmentOp op);

/// One training epoch's patch ordering: every positive once, negatives
/// sampled to ratio x positives (without replacement while the pool lasts,
/// then with replacement), shuffled. Same seed, same manifest.
struct SamplingManifest {
  int ratio_neg_per_pos = 2;
  std::uint64_t seed = 0;
  std::vector<std::string> patch_ids;
};

SamplingManifest build_sampling_manifest(std::span<const PatchRecord> records,
                                         int ratio, std::uint64_t seed);

// File formats -------------------------------------------------------------

/// CSV: patch_id,slide_id,subject_id,x,y,level,label,tissue_fraction,image_path
void write_patch_manifest(const std::filesystem::path& path,
                          std::span<const PatchRecord> records);
std::vector<PatchRecord> read_patch_manifest(const std::filesystem::path& path);

/// First line is a JSON header {"ratio":..,"seed":..,..}; then one patch id
/// per line.
void write_sampling_manifest(const std::filesystem::path& path,
                             const SamplingManifest& manifest);
SamplingManifest read_sampling_manifest(const std::filesystem::path& path);

}  // namespace pnikit
