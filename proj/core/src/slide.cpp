#include "pnikit/slide.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pnikit/error.hpp"
#include "pnikit/image_io.hpp"

namespace pnikit {

namespace {

std::filesystem::path level_file(const std::filesystem::path& dir, int level) {
  return dir / ("level_" + std::to_string(level) + ".png");
}

}  // namespace

void SlideMeta::validate() const {
  if (slide_id.empty()) {
    fail(ErrorCode::invalid_format, "slide meta: empty slide_id");
  }
  if (!(mpp_x > 0.0) || !(mpp_y > 0.0)) {
    fail(ErrorCode::invalid_format, "slide meta: mpp must be positive");
  }
  if (levels.empty()) {
    fail(ErrorCode::invalid_format, "slide meta: no levels");
  }
  if (levels[0].downsample != 1.0) {
    fail(ErrorCode::invalid_format, "slide meta: level 0 downsample must be 1");
  }
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const LevelInfo& lv = levels[k];
    if (lv.width <= 0 || lv.height <= 0) {
      fail(ErrorCode::invalid_format, "slide meta: non-positive level dims");
    }
    if (k > 0 && !(lv.downsample > levels[k - 1].downsample)) {
      fail(ErrorCode::invalid_format,
           "slide meta: downsample factors must be strictly increasing");
    }
    // Dims must match level 0 divided by the factor within +-1 px rounding.
    const double exp_w = levels[0].width / lv.downsample;
    const double exp_h = levels[0].height / lv.downsample;
    if (std::abs(lv.width - exp_w) > 1.0 || std::abs(lv.height - exp_h) > 1.0) {
      fail(ErrorCode::invalid_format,
           "slide meta: level " + std::to_string(k) +
               " dims inconsistent with downsample factor");
    }
  }
}

Slide Slide::open(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) {
    fail(ErrorCode::not_found, "missing slide metadata: " + meta_path.string());
  }
  Slide slide;
  slide.dir_ = dir;
  slide.meta_ = read_slide_meta(meta_path);
  slide.meta_.validate();
  for (std::size_t k = 0; k < slide.meta_.levels.size(); ++k) {
    const auto lf = level_file(dir, static_cast<int>(k));
    if (!std::filesystem::exists(lf)) {
      fail(ErrorCode::not_found, "missing level image: " + lf.string());
    }
    slide.cache_.push_back(std::make_unique<LevelSlot>());
  }
  return slide;
}

const RasterImage& Slide::level_image(int level) const {
  if (level < 0 || level >= static_cast<int>(meta_.levels.size())) {
    fail(ErrorCode::out_of_bounds, "no such level: " + std::to_string(level));
  }
  LevelSlot& slot = *cache_[level];
  std::call_once(slot.once, [&] {
    RasterImage img = read_png(level_file(dir_, level));
    const LevelInfo& lv = meta_.levels[level];
    if (img.width != lv.width || img.height != lv.height) {
      fail(ErrorCode::inconsistent_input,
           "level image dims do not match metadata: " +
               level_file(dir_, level).string());
    }
    slot.image = std::move(img);
  });
  return slot.image;
}

RasterImage Slide::read_region(const Region& region) const {
  if (region.level < 0 ||
      region.level >= static_cast<int>(meta_.levels.size())) {
    fail(ErrorCode::out_of_bounds,
         "read_region: no such level " + std::to_string(region.level));
  }
  const LevelInfo& lv = meta_.levels[region.level];
  if (region.x < 0 || region.y < 0 || region.w <= 0 || region.h <= 0 ||
      region.x + region.w > lv.width || region.y + region.h > lv.height) {
    fail(ErrorCode::out_of_bounds, "read_region: region outside level bounds");
  }
  const RasterImage& src = level_image(region.level);
  RasterImage out = RasterImage::make(region.w, region.h, src.channels);
  const std::size_t row_bytes =
      static_cast<std::size_t>(region.w) * src.channels;
  for (int y = 0; y < region.h; ++y) {
    const std::uint8_t* from =
        src.pixels.data() + src.index(region.x, region.y + y, 0);
    std::copy(from, from + row_bytes,
              out.pixels.data() + static_cast<std::size_t>(y) * row_bytes);
  }
  return out;
}

RasterImage downsample(const RasterImage& image, int factor) {
  if (factor < 1) {
    fail(ErrorCode::invalid_argument, "downsample: factor must be >= 1");
  }
  if (factor == 1) {
    return image;
  }
  const int out_w = (image.width + factor - 1) / factor;
  const int out_h = (image.height + factor - 1) / factor;
  RasterImage out = RasterImage::make(out_w, out_h, image.channels);

  std::vector<double> sums(static_cast<std::size_t>(image.channels));
  for (int oy = 0; oy < out_h; ++oy) {
    const int y0 = oy * factor;
    const int y1 = std::min(y0 + factor, image.height);
    for (int ox = 0; ox < out_w; ++ox) {
      const int x0 = ox * factor;
      const int x1 = std::min(x0 + factor, image.width);
      std::fill(sums.begin(), sums.end(), 0.0);
      for (int y = y0; y < y1; ++y) {
        const std::uint8_t* p = image.pixels.data() + image.index(x0, y, 0);
        for (int x = x0; x < x1; ++x) {
          for (int c = 0; c < image.channels; ++c) {
            sums[c] += *p++;
          }
        }
      }
      const double count = static_cast<double>(y1 - y0) * (x1 - x0);
      for (int c = 0; c < image.channels; ++c) {
        out.at(ox, oy, c) =
            static_cast<std::uint8_t>(round_half_away(sums[c] / count));
      }
    }
  }
  return out;
}

void write_slide_meta(const std::filesystem::path& path,
                      const SlideMeta& meta) {
  nlohmann::ordered_json levels = nlohmann::ordered_json::array();
  for (const LevelInfo& lv : meta.levels) {
    levels.push_back({{"width", lv.width},
                      {"height", lv.height},
                      {"downsample", lv.downsample}});
  }
  const nlohmann::ordered_json doc = {
      {"slide_id", meta.slide_id},   {"subject_id", meta.subject_id},
      {"mpp_x", meta.mpp_x},         {"mpp_y", meta.mpp_y},
      {"scanner_tag", meta.scanner_tag}, {"levels", levels},
  };
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

SlideMeta read_slide_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format,
         "bad JSON in " + path.string() + ": " + e.what());
  }

  static const char* required[] = {"slide_id", "subject_id", "mpp_x",
                                   "mpp_y",    "scanner_tag", "levels"};
  for (const char* key : required) {
    if (!doc.contains(key)) {
      fail(ErrorCode::invalid_format,
           "slide meta missing key '" + std::string(key) + "'");
    }
  }
  if (doc.size() != std::size(required)) {
    fail(ErrorCode::invalid_format,
         "slide meta has unexpected keys: " + path.string());
  }

  SlideMeta meta;
  try {
    meta.slide_id = doc["slide_id"].get<std::string>();
    meta.subject_id = doc["subject_id"].get<std::string>();
    meta.mpp_x = doc["mpp_x"].get<double>();
    meta.mpp_y = doc["mpp_y"].get<double>();
    meta.scanner_tag = doc["scanner_tag"].get<std::string>();
    for (const auto& lv : doc["levels"]) {
      if (!lv.contains("width") || !lv.contains("height") ||
          !lv.contains("downsample") || lv.size() != 3) {
        fail(ErrorCode::invalid_format, "slide meta: bad level entry");
      }
      meta.levels.push_back({lv["width"].get<int>(), lv["height"].get<int>(),
                             lv["downsample"].get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format,
         "bad slide meta value types in " + path.string() + ": " + e.what());
  }
  return meta;
}

}  // namespace pnikit
