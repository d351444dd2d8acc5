#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pnikit/image.hpp"

namespace pnikit {

struct LevelInfo {
  int width = 0;
  int height = 0;
  double downsample = 1.0;
};

/// Slide directory metadata (meta.json). Level 0 is the highest resolution;
/// mpp_* are microns per pixel at level 0.
struct SlideMeta {
  std::string slide_id;
  std::string subject_id;
  double mpp_x = 0.0;
  double mpp_y = 0.0;
  std::string scanner_tag;
  std::vector<LevelInfo> levels;

  /// Throws on violated invariants: level 0 downsample must be 1, factors
  /// strictly increasing, level dims consistent with factors within +-1 px,
  /// mpp positive.
  void validate() const;
};

/// Rectangle in the pixel grid of one resolution level.
struct Region {
  int level = 0;
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

/// Open pyramid slide: meta.json plus level_<k>.png per level. Handles are
/// immutable after open; concurrent read_region calls on one slide are safe.
class Slide {
 public:
  static Slide open(const std::filesystem::path& dir);

  const SlideMeta& meta() const { return meta_; }
  const std::filesystem::path& dir() const { return dir_; }

  /// Exact stored pixels of the region; repeated calls are byte-identical.
  RasterImage read_region(const Region& region) const;

  /// Whole level image (lazily loaded and cached).
  const RasterImage& level_image(int level) const;

 private:
  struct LevelSlot {
    std::once_flag once;
    RasterImage image;
  };

  std::filesystem::path dir_;
  SlideMeta meta_;
  mutable std::vector<std::unique_ptr<LevelSlot>> cache_;
};

/// Block-mean (area) downsample by an integer factor >= 1. Output dims are
/// ceil(dim/factor); partial edge blocks average over the pixels present.
/// Block means round half away from zero.
RasterImage downsample(const RasterImage& image, int factor);

/// Serializes meta.json with the exact documented key set.
void write_slide_meta(const std::filesystem::path& path, const SlideMeta& meta);
SlideMeta read_slide_meta(const std::filesystem::path& path);

}  // namespace pnikit
