#include "pnikit/stitcher.hpp"

#include <algorithm>
#include <fstream>

#include "internal/parallel.hpp"
#include "internal/text.hpp"
#include "pnikit/error.hpp"
#include "pnikit/image_io.hpp"

namespace pnikit {

void PixelPredictionPatch::validate() const {
  if (patch_px <= 0 ||
      probabilities.size() !=
          static_cast<std::size_t>(patch_px) * patch_px) {
    fail(ErrorCode::invalid_argument,
         "prediction patch: grid size does not match patch_px");
  }
  for (const float p : probabilities) {
    if (!(p >= 0.0f && p <= 1.0f)) {
      fail(ErrorCode::invalid_argument,
           "prediction patch: probability outside [0,1] in " + patch_id);
    }
  }
}

HeatmapAccumulator::HeatmapAccumulator(int width, int height)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    fail(ErrorCode::invalid_argument, "heatmap: bad dims");
  }
  sum_.assign(static_cast<std::size_t>(width) * height, 0.0);
  count_.assign(static_cast<std::size_t>(width) * height, 0);
}

void HeatmapAccumulator::add(const PixelPredictionPatch& patch) {
  patch.validate();
  if (patch.x < 0 || patch.y < 0 || patch.x + patch.patch_px > width_ ||
      patch.y + patch.patch_px > height_) {
    fail(ErrorCode::out_of_bounds,
         "heatmap: patch placement outside slide: " + patch.patch_id);
  }
  for (int py = 0; py < patch.patch_px; ++py) {
    const std::size_t dst =
        static_cast<std::size_t>(patch.y + py) * width_ + patch.x;
    const std::size_t src = static_cast<std::size_t>(py) * patch.patch_px;
    for (int px = 0; px < patch.patch_px; ++px) {
      sum_[dst + px] += patch.probabilities[src + px];
      ++count_[dst + px];
    }
  }
}

void HeatmapAccumulator::merge(const HeatmapAccumulator& other) {
  if (other.width_ != width_ || other.height_ != height_) {
    fail(ErrorCode::invalid_argument, "heatmap merge: dim mismatch");
  }
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    sum_[i] += other.sum_[i];
    count_[i] += other.count_[i];
  }
}

Heatmap HeatmapAccumulator::finalize() const {
  Heatmap map;
  map.width = width_;
  map.height = height_;
  map.prob.assign(sum_.size(), 0.0f);
  for (std::size_t i = 0; i < sum_.size(); ++i) {
    if (count_[i] > 0) {
      map.prob[i] = static_cast<float>(sum_[i] / count_[i]);
    }
  }
  return map;
}

Heatmap stitch(std::span<const PixelPredictionPatch> patches, int width,
               int height) {
  for (const PixelPredictionPatch& p : patches) {
    p.validate();
    if (p.x < 0 || p.y < 0 || p.x + p.patch_px > width ||
        p.y + p.patch_px > height) {
      fail(ErrorCode::out_of_bounds,
           "stitch: patch placement outside slide: " + p.patch_id);
    }
  }

  HeatmapAccumulator acc(width, height);
  const int workers = internal::worker_count();
  if (workers <= 1) {
    for (const PixelPredictionPatch& p : patches) acc.add(p);
    return acc.finalize();
  }

  // Row bands: each worker owns a horizontal band and walks every patch in
  // global order, accumulating only the band's rows. A pixel's contribution
  // sequence is therefore the same at any worker count.
  std::vector<double> sums(static_cast<std::size_t>(width) * height, 0.0);
  std::vector<std::uint32_t> counts(static_cast<std::size_t>(width) * height,
                                    0);
  internal::parallel_chunks(height, workers, [&](int row0, int row1) {
    for (const PixelPredictionPatch& p : patches) {
      const int y0 = std::max(p.y, row0);
      const int y1 = std::min(p.y + p.patch_px, row1);
      for (int y = y0; y < y1; ++y) {
        const std::size_t dst = static_cast<std::size_t>(y) * width + p.x;
        const std::size_t src =
            static_cast<std::size_t>(y - p.y) * p.patch_px;
        for (int px = 0; px < p.patch_px; ++px) {
          sums[dst + px] += p.probabilities[src + px];
          ++counts[dst + px];
        }
      }
    }
  });

  Heatmap map;
  map.width = width;
  map.height = height;
  map.prob.assign(sums.size(), 0.0f);
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (counts[i] > 0) map.prob[i] = static_cast<float>(sums[i] / counts[i]);
  }
  return map;
}

RasterImage quantize(const Heatmap& heatmap) {
  RasterImage out = RasterImage::make(heatmap.width, heatmap.height, 1);
  for (std::size_t i = 0; i < heatmap.prob.size(); ++i) {
    const float p = heatmap.prob[i];
    if (!(p >= 0.0f && p <= 1.0f)) {
      fail(ErrorCode::invalid_argument,
           "quantize: probability outside [0,1]");
    }
    out.pixels[i] = static_cast<std::uint8_t>(
        std::clamp<long>(round_half_away(static_cast<double>(p) * 255.0), 0,
                         255));
  }
  return out;
}

BinaryMask binarize(const RasterImage& quantized, int threshold, bool ge) {
  if (quantized.channels != 1) {
    fail(ErrorCode::invalid_argument, "binarize: input must be grayscale");
  }
  BinaryMask mask = BinaryMask::make(quantized.width, quantized.height);
  for (std::size_t i = 0; i < quantized.pixels.size(); ++i) {
    const int v = quantized.pixels[i];
    mask.flags[i] = (ge ? v >= threshold : v > threshold) ? 1 : 0;
  }
  return mask;
}

RasterImage render_overlay(const BinaryMask& predicted,
                           const BinaryMask& truth,
                           const RasterImage* base) {
  if (!predicted.same_shape(truth)) {
    fail(ErrorCode::invalid_argument, "overlay: mask dim mismatch");
  }
  RasterImage out = RasterImage::make(predicted.width, predicted.height, 3);
  for (int y = 0; y < predicted.height; ++y) {
    for (int x = 0; x < predicted.width; ++x) {
      std::uint8_t r = 255, g = 255, b = 255;
      if (base != nullptr) {
        const std::uint8_t v = base->channels == 1
                                   ? base->at(x, y)
                                   : base->at(x, y, 1);  // green as luma-ish
        r = g = b = v;
      }
      const bool p = predicted.at(x, y);
      const bool t = truth.at(x, y);
      if (p && t) {  // intersection
        r = 0; g = 64; b = 255;
      } else if (p) {  // predicted only
        r = 255; g = 220; b = 0;
      } else if (t) {  // annotated only
        r = 220; g = 0; b = 0;
      }
      out.at(x, y, 0) = r;
      out.at(x, y, 1) = g;
      out.at(x, y, 2) = b;
    }
  }
  return out;
}

std::vector<PixelPredictionPatch> oracle_pixel_patches(
    const LabelMask& labels, const TissueMask& tissue,
    const PatchGridSpec& spec, PixelOracleMode mode,
    const std::string& model_id) {
  spec.validate();
  if (spec.level != 0) {
    fail(ErrorCode::invalid_argument,
         "pixel oracle operates on level-0 label masks");
  }
  std::vector<PixelPredictionPatch> patches;
  for (const auto& [gx, gy] :
       generate_grid(labels.width, labels.height, spec)) {
    const double fraction =
        tissue_fraction(tissue, gx, gy, spec.patch_px, spec.patch_px);
    if (fraction < spec.min_tissue_fraction) continue;

    PixelPredictionPatch patch;
    patch.patch_id = labels.slide_id + "_L0_x" + std::to_string(gx) + "_y" +
                     std::to_string(gy);
    patch.model_id = model_id;
    patch.x = gx;
    patch.y = gy;
    patch.patch_px = spec.patch_px;
    patch.probabilities.resize(
        static_cast<std::size_t>(spec.patch_px) * spec.patch_px);
    std::size_t i = 0;
    for (int py = 0; py < spec.patch_px; ++py) {
      const std::uint8_t* row = labels.values.data() +
                                labels.index(gx, gy + py);
      for (int px = 0; px < spec.patch_px; ++px, ++i) {
        const bool pni = row[px] == 2;
        const bool hot = mode == PixelOracleMode::truth ? pni : !pni;
        patch.probabilities[i] = hot ? 1.0f : 0.0f;
      }
    }
    patches.push_back(std::move(patch));
  }
  return patches;
}

void write_pred_manifest(const std::filesystem::path& path,
                         std::span<const PredPatchRef> refs) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "patch_id,model_id,x,y,image_path\n";
  for (const PredPatchRef& r : refs) {
    out << r.patch_id << ',' << r.model_id << ',' << r.x << ',' << r.y << ','
        << r.image_path << '\n';
  }
}

std::vector<PredPatchRef> read_pred_manifest(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      internal::strip_cr(line) != "patch_id,model_id,x,y,image_path") {
    fail(ErrorCode::invalid_format,
         "bad prediction manifest header: " + path.string());
  }
  std::vector<PredPatchRef> refs;
  while (std::getline(in, line)) {
    const auto sv = internal::strip_cr(line);
    if (sv.empty()) continue;
    const auto fields = internal::split_csv_line(sv);
    if (fields.size() != 5) {
      fail(ErrorCode::invalid_format,
           "bad prediction manifest row: " + std::string(sv));
    }
    refs.push_back({std::string(fields[0]), std::string(fields[1]),
                    static_cast<int>(internal::parse_long(fields[2], "x")),
                    static_cast<int>(internal::parse_long(fields[3], "y")),
                    std::string(fields[4])});
  }
  return refs;
}

PixelPredictionPatch load_pred_patch(const PredPatchRef& ref,
                                     const std::filesystem::path& base_dir) {
  const RasterImage img = read_png(base_dir / ref.image_path);
  if (img.channels != 1 || img.width != img.height) {
    fail(ErrorCode::invalid_format,
         "prediction patch image must be square grayscale: " + ref.image_path);
  }
  PixelPredictionPatch patch;
  patch.patch_id = ref.patch_id;
  patch.model_id = ref.model_id;
  patch.x = ref.x;
  patch.y = ref.y;
  patch.patch_px = img.width;
  patch.probabilities.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    patch.probabilities[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  }
  return patch;
}

}  // namespace pnikit
