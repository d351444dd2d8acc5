#include "pnikit/tiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "internal/text.hpp"
#include "pnikit/error.hpp"
#include "pnikit/image_io.hpp"
#include "pnikit/rng.hpp"

namespace pnikit {

void PatchGridSpec::validate() const {
  if (patch_px <= 0 || stride_px <= 0 || stride_px > patch_px) {
    fail(ErrorCode::invalid_argument,
         "grid spec: need 0 < stride_px <= patch_px");
  }
  if (min_tissue_fraction < 0.0 || min_tissue_fraction > 1.0) {
    fail(ErrorCode::invalid_argument,
         "grid spec: min_tissue_fraction outside [0,1]");
  }
  if (level < 0) {
    fail(ErrorCode::invalid_argument, "grid spec: negative level");
  }
}

std::vector<int> grid_offsets(int dim, const PatchGridSpec& spec) {
  spec.validate();
  std::vector<int> offsets;
  if (dim < spec.patch_px) {
    return offsets;
  }
  for (int off = 0; off + spec.patch_px <= dim; off += spec.stride_px) {
    offsets.push_back(off);
  }
  const int edge = dim - spec.patch_px;
  if (spec.include_edge_tiles && (offsets.empty() || offsets.back() != edge)) {
    offsets.push_back(edge);
  }
  return offsets;
}

std::vector<std::pair<int, int>> generate_grid(int width, int height,
                                               const PatchGridSpec& spec) {
  const std::vector<int> xs = grid_offsets(width, spec);
  const std::vector<int> ys = grid_offsets(height, spec);
  std::vector<std::pair<int, int>> grid;
  grid.reserve(xs.size() * ys.size());
  for (const int y : ys) {
    for (const int x : xs) {
      grid.emplace_back(x, y);
    }
  }
  return grid;
}

double tissue_fraction(const TissueMask& tissue, long x0, long y0, long w,
                       long h) {
  if (w <= 0 || h <= 0) {
    fail(ErrorCode::invalid_argument, "tissue_fraction: empty window");
  }
  const int f = tissue.downsample_factor;
  const long mask_w_px = static_cast<long>(tissue.mask.width) * f;
  const long mask_h_px = static_cast<long>(tissue.mask.height) * f;
  if (x0 < 0 || y0 < 0 || x0 + w > mask_w_px || y0 + h > mask_h_px) {
    fail(ErrorCode::out_of_bounds, "tissue_fraction: window outside mask");
  }

  // Each mask cell contributes (level-0 rows it covers) x (columns it
  // covers) within the window; equivalent to per-pixel nearest-neighbor.
  std::uint64_t covered = 0;
  for (long my = y0 / f; my * f < y0 + h; ++my) {
    const long row_overlap =
        std::min<long>((my + 1) * f, y0 + h) - std::max<long>(my * f, y0);
    const std::uint8_t* row =
        tissue.mask.flags.data() +
        static_cast<std::size_t>(my) * tissue.mask.width;
    for (long mx = x0 / f; mx * f < x0 + w; ++mx) {
      if (!row[mx]) continue;
      const long col_overlap =
          std::min<long>((mx + 1) * f, x0 + w) - std::max<long>(mx * f, x0);
      covered += static_cast<std::uint64_t>(row_overlap) *
                 static_cast<std::uint64_t>(col_overlap);
    }
  }
  return static_cast<double>(covered) /
         (static_cast<double>(w) * static_cast<double>(h));
}

namespace {

bool window_has_pni(const LabelMask& labels, long x0, long y0, long w,
                    long h) {
  for (long y = y0; y < y0 + h; ++y) {
    const std::uint8_t* row = labels.values.data() + labels.index(0, static_cast<int>(y));
    if (std::memchr(row + x0, 2, static_cast<std::size_t>(w)) != nullptr) {
      return true;
    }
  }
  return false;
}

std::string make_patch_id(const std::string& slide_id, int x, int y,
                          int level) {
  return slide_id + "_L" + std::to_string(level) + "_x" + std::to_string(x) +
         "_y" + std::to_string(y);
}

int integer_factor(double downsample) {
  const double rounded = std::round(downsample);
  if (std::abs(downsample - rounded) > 1e-9 || rounded < 1.0) {
    fail(ErrorCode::invalid_argument,
         "patch extraction needs an integer level downsample");
  }
  return static_cast<int>(rounded);
}

}  // namespace

ExtractResult extract_patch_records(const SlideMeta& meta,
                                    const LabelMask& labels,
                                    const TissueMask& tissue,
                                    const PatchGridSpec& spec) {
  spec.validate();
  if (spec.level >= static_cast<int>(meta.levels.size())) {
    fail(ErrorCode::invalid_argument, "grid spec level not in slide");
  }
  if (labels.width != meta.levels[0].width ||
      labels.height != meta.levels[0].height) {
    fail(ErrorCode::inconsistent_input,
         "label mask dims do not match slide level 0");
  }
  if (labels.slide_id != meta.slide_id || tissue.slide_id != meta.slide_id) {
    fail(ErrorCode::inconsistent_input, "mask/slide id mismatch");
  }

  const LevelInfo& lv = meta.levels[spec.level];
  const int factor = integer_factor(lv.downsample);

  ExtractResult result;
  result.patch_microns =
      static_cast<double>(spec.patch_px) * factor * meta.mpp_x;
  const double expected = spec.expected_patch_microns();
  result.physical_size_warning =
      std::abs(result.patch_microns - expected) / expected > 0.15;

  for (const auto& [gx, gy] : generate_grid(lv.width, lv.height, spec)) {
    const long x0 = static_cast<long>(gx) * factor;
    const long y0 = static_cast<long>(gy) * factor;
    const long side = static_cast<long>(spec.patch_px) * factor;
    const double fraction = tissue_fraction(tissue, x0, y0, side, side);
    if (fraction < spec.min_tissue_fraction) continue;

    PatchRecord record;
    record.patch_id = make_patch_id(meta.slide_id, gx, gy, spec.level);
    record.slide_id = meta.slide_id;
    record.subject_id = meta.subject_id;
    record.x = gx;
    record.y = gy;
    record.level = spec.level;
    record.label = window_has_pni(labels, x0, y0, side, side)
                       ? PatchLabel::positive
                       : PatchLabel::negative;
    record.tissue_fraction = fraction;
    result.records.push_back(std::move(record));
  }
  return result;
}

ExtractResult extract_patches(const Slide& slide, const LabelMask& labels,
                              const TissueMask& tissue,
                              const PatchGridSpec& spec,
                              const ExtractOptions& options) {
  ExtractResult result =
      extract_patch_records(slide.meta(), labels, tissue, spec);
  if (!options.export_images) {
    return result;
  }
  if (options.out_dir.empty()) {
    fail(ErrorCode::invalid_argument, "extract: export requires out_dir");
  }
  std::filesystem::create_directories(options.out_dir);
  for (PatchRecord& record : result.records) {
    const RasterImage pixels = slide.read_region(
        {record.level, record.x, record.y, spec.patch_px, spec.patch_px});
    const std::string filename = record.patch_id + ".jpg";
    write_jpeg(options.out_dir / filename, pixels, options.jpeg_quality);
    record.image_path = options.image_path_prefix.empty()
                            ? filename
                            : options.image_path_prefix + "/" + filename;
  }
  return result;
}

RasterImage augment(const RasterImage& patch, AugmentOp op) {
  if (op == AugmentOp::identity) {
    return patch;
  }
  if (op != AugmentOp::hflip && patch.width != patch.height) {
    fail(ErrorCode::invalid_argument, "augment: rotations need square input");
  }
  const int w = patch.width;
  const int h = patch.height;
  const int c = patch.channels;
  RasterImage out = RasterImage::make(w, h, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int sx = x;
      int sy = y;
      switch (op) {
        case AugmentOp::hflip:
          sx = w - 1 - x;
          break;
        case AugmentOp::rot90:  // clockwise
          sx = y;
          sy = h - 1 - x;
          break;
        case AugmentOp::rot180:
          sx = w - 1 - x;
          sy = h - 1 - y;
          break;
        case AugmentOp::rot270:
          sx = w - 1 - y;
          sy = x;
          break;
        case AugmentOp::identity:
          break;
      }
      for (int ch = 0; ch < c; ++ch) {
        out.at(x, y, ch) = patch.at(sx, sy, ch);
      }
    }
  }
  return out;
}

SamplingManifest build_sampling_manifest(std::span<const PatchRecord> records,
                                         int ratio, std::uint64_t seed) {
  if (ratio < 1) {
    fail(ErrorCode::invalid_argument, "sampling manifest: ratio must be >= 1");
  }
  std::vector<const PatchRecord*> positives;
  std::vector<const PatchRecord*> negatives;
  for (const PatchRecord& r : records) {
    (r.label == PatchLabel::positive ? positives : negatives).push_back(&r);
  }
  if (positives.empty()) {
    fail(ErrorCode::degenerate_input,
         "sampling manifest: no positive patches");
  }

  SamplingManifest manifest;
  manifest.ratio_neg_per_pos = ratio;
  manifest.seed = seed;
  for (const PatchRecord* r : positives) {
    manifest.patch_ids.push_back(r->patch_id);
  }

  const std::size_t need = positives.size() * static_cast<std::size_t>(ratio);
  rng::SplitMix64 pick(rng::derive_seed(seed, "manifest/negatives"));
  if (!negatives.empty()) {
    const std::size_t distinct = std::min(need, negatives.size());
    for (const std::size_t i :
         rng::sample_without_replacement(negatives.size(), distinct, pick)) {
      manifest.patch_ids.push_back(negatives[i]->patch_id);
    }
    for (std::size_t k = distinct; k < need; ++k) {
      manifest.patch_ids.push_back(
          negatives[pick.next_below(negatives.size())]->patch_id);
    }
  }

  rng::SplitMix64 order(rng::derive_seed(seed, "manifest/shuffle"));
  rng::shuffle(manifest.patch_ids, order);
  return manifest;
}

void write_patch_manifest(const std::filesystem::path& path,
                          std::span<const PatchRecord> records) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "patch_id,slide_id,subject_id,x,y,level,label,tissue_fraction,"
         "image_path\n";
  for (const PatchRecord& r : records) {
    out << r.patch_id << ',' << r.slide_id << ',' << r.subject_id << ','
        << r.x << ',' << r.y << ',' << r.level << ',' << to_string(r.label)
        << ',' << internal::format_double(r.tissue_fraction) << ','
        << r.image_path << '\n';
  }
}

std::vector<PatchRecord> read_patch_manifest(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      internal::strip_cr(line) !=
          "patch_id,slide_id,subject_id,x,y,level,label,tissue_fraction,"
          "image_path") {
    fail(ErrorCode::invalid_format,
         "bad patch manifest header: " + path.string());
  }
  std::vector<PatchRecord> records;
  while (std::getline(in, line)) {
    const auto sv = internal::strip_cr(line);
    if (sv.empty()) continue;
    const auto fields = internal::split_csv_line(sv);
    if (fields.size() != 9) {
      fail(ErrorCode::invalid_format,
           "bad patch manifest row: " + std::string(sv));
    }
    PatchRecord r;
    r.patch_id = std::string(fields[0]);
    r.slide_id = std::string(fields[1]);
    r.subject_id = std::string(fields[2]);
    r.x = static_cast<int>(internal::parse_long(fields[3], "x"));
    r.y = static_cast<int>(internal::parse_long(fields[4], "y"));
    r.level = static_cast<int>(internal::parse_long(fields[5], "level"));
    if (fields[6] == "pos") {
      r.label = PatchLabel::positive;
    } else if (fields[6] == "neg") {
      r.label = PatchLabel::negative;
    } else {
      fail(ErrorCode::invalid_format,
           "bad patch label: " + std::string(fields[6]));
    }
    r.tissue_fraction = internal::parse_double(fields[7], "tissue_fraction");
    r.image_path = std::string(fields[8]);
    records.push_back(std::move(r));
  }
  return records;
}

void write_sampling_manifest(const std::filesystem::path& path,
                             const SamplingManifest& manifest) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  const nlohmann::ordered_json header = {
      {"ratio", manifest.ratio_neg_per_pos},
      {"seed", manifest.seed},
      {"entries", manifest.patch_ids.size()},
  };
  out << header.dump() << '\n';
  for (const std::string& id : manifest.patch_ids) {
    out << id << '\n';
  }
}

SamplingManifest read_sampling_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    fail(ErrorCode::invalid_format, "empty sampling manifest: " + path.string());
  }
  SamplingManifest manifest;
  try {
    const auto header = nlohmann::json::parse(internal::strip_cr(line));
    manifest.ratio_neg_per_pos = header.at("ratio").get<int>();
    manifest.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format,
         "bad sampling manifest header in " + path.string() + ": " + e.what());
  }
  while (std::getline(in, line)) {
    const auto sv = internal::strip_cr(line);
    if (!sv.empty()) manifest.patch_ids.emplace_back(sv);
  }
  return manifest;
}

}  // namespace pnikit
