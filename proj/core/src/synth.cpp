#include "pnikit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "internal/text.hpp"
#include "pnikit/error.hpp"
#include "pnikit/image_io.hpp"
#include "pnikit/rng.hpp"

namespace pnikit {

namespace {

constexpr int kCell = kTissueMaskDownsample;  // 16
constexpr int kFocusVertices = 16;

std::string subject_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subject_%03d", index);
  return buf;
}

std::string slide_name(const std::string& subject, int index) {
  return subject + "_slide" + std::to_string(index);
}

}  // namespace

void CohortSpec::validate() const {
  if (n_subjects < 1) {
    fail(ErrorCode::invalid_argument, "cohort spec: need n_subjects >= 1");
  }
  if (subject_pni_prevalence < 0.0 || subject_pni_prevalence > 1.0) {
    fail(ErrorCode::invalid_argument, "cohort spec: prevalence outside [0,1]");
  }
  if (slides_per_subject_min < 1 ||
      slides_per_subject_max < slides_per_subject_min) {
    fail(ErrorCode::invalid_argument, "cohort spec: bad slides-per-subject");
  }
  if (foci_per_positive_slide_min < 1 ||
      foci_per_positive_slide_max < foci_per_positive_slide_min) {
    fail(ErrorCode::invalid_argument, "cohort spec: bad foci range");
  }
  if (focus_radius_px_min < 4 ||
      focus_radius_px_max < focus_radius_px_min) {
    fail(ErrorCode::invalid_argument, "cohort spec: bad focus radius range");
  }
  // 2x the classification patch side, so the default grids always fit.
  if (slide_width < 1196 || slide_height < 1196) {
    fail(ErrorCode::invalid_argument,
         "cohort spec: slide dims must be >= 1196");
  }
  if (!(mpp > 0.0)) {
    fail(ErrorCode::invalid_argument, "cohort spec: mpp must be positive");
  }
  if (focus_margin_px < 0) {
    fail(ErrorCode::invalid_argument, "cohort spec: negative focus margin");
  }
}

int CohortTruth::positive_subject_count() const {
  int count = 0;
  std::string last;
  for (const CohortSlide& s : slides) {
    if (s.pni_positive && s.subject_id != last) {
      ++count;
      last = s.subject_id;
    }
  }
  return count;
}

CohortTruth generate_cohort_truth(const CohortSpec& spec) {
  spec.validate();
  CohortTruth truth;
  for (int si = 0; si < spec.n_subjects; ++si) {
    const std::string subject = subject_name(si);
    rng::SplitMix64 gen(rng::derive_seed(spec.seed, "subject/" + subject));
    const bool positive = gen.next_unit() < spec.subject_pni_prevalence;
    const int span =
        spec.slides_per_subject_max - spec.slides_per_subject_min + 1;
    const int n_slides =
        spec.slides_per_subject_min +
        static_cast<int>(gen.next_below(static_cast<std::uint64_t>(span)));
    for (int k = 0; k < n_slides; ++k) {
      truth.slides.push_back({subject, slide_name(subject, k), positive});
    }
  }
  return truth;
}

namespace {

/// Low-frequency value noise over the x16 cell grid, bilinear between lattice
/// points, thresholded into blobs.
BinaryMask noise_blobs(int cells_w, int cells_h, rng::SplitMix64& gen) {
  constexpr int kLattice = 32;  // cells between lattice points
  const int lw = cells_w / kLattice + 2;
  const int lh = cells_h / kLattice + 2;
  std::vector<double> lattice(static_cast<std::size_t>(lw) * lh);
  for (double& v : lattice) v = gen.next_unit();

  BinaryMask mask = BinaryMask::make(cells_w, cells_h);
  for (int y = 0; y < cells_h; ++y) {
    const double fy = static_cast<double>(y) / kLattice;
    const int y0 = static_cast<int>(fy);
    const double ty = fy - y0;
    for (int x = 0; x < cells_w; ++x) {
      const double fx = static_cast<double>(x) / kLattice;
      const int x0 = static_cast<int>(fx);
      const double tx = fx - x0;
      const double v00 = lattice[static_cast<std::size_t>(y0) * lw + x0];
      const double v01 = lattice[static_cast<std::size_t>(y0) * lw + x0 + 1];
      const double v10 = lattice[static_cast<std::size_t>(y0 + 1) * lw + x0];
      const double v11 =
          lattice[static_cast<std::size_t>(y0 + 1) * lw + x0 + 1];
      const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                       ty * ((1 - tx) * v10 + tx * v11);
      mask.flags[mask.index(x, y)] = v > 0.62 ? 1 : 0;
    }
  }
  return mask;
}

struct CapsuleBand {
  int x0_px, x1_px;  // [x0, x1)
  int y0_px, y1_px;
};

CapsuleBand capsule_band(int width, int height) {
  const int cells_w = (width + kCell - 1) / kCell;
  const int cells_h = (height + kCell - 1) / kCell;
  const int col0 = std::max(1, cells_w / 20);
  const int col1 = cells_w - col0;
  const int half_h = std::max(2, static_cast<int>(0.33 * cells_h));
  const int row0 = std::max(0, cells_h / 2 - half_h);
  const int row1 = std::min(cells_h, cells_h / 2 + half_h);
  return {col0 * kCell, col1 * kCell, row0 * kCell, row1 * kCell};
}

}  // namespace

SlideScene synth_slide_scene(const CohortSpec& spec,
                             const std::string& slide_id, bool positive) {
  spec.validate();
  rng::SplitMix64 gen(rng::derive_seed(spec.seed, "scene/" + slide_id));

  SlideScene scene;
  scene.slide_id = slide_id;
  scene.width = spec.slide_width;
  scene.height = spec.slide_height;

  const int cells_w = (scene.width + kCell - 1) / kCell;
  const int cells_h = (scene.height + kCell - 1) / kCell;

  scene.tissue16.slide_id = slide_id;
  scene.tissue16.mask = noise_blobs(cells_w, cells_h, gen);
  const CapsuleBand band = capsule_band(scene.width, scene.height);
  for (int y = band.y0_px / kCell; y < band.y1_px / kCell; ++y) {
    for (int x = band.x0_px / kCell; x < band.x1_px / kCell; ++x) {
      scene.tissue16.mask.set(x, y, true);
    }
  }

  scene.annotations.slide_id = slide_id;
  if (!positive) {
    return scene;
  }

  const int n_foci =
      spec.foci_per_positive_slide_min +
      static_cast<int>(gen.next_below(static_cast<std::uint64_t>(
          spec.foci_per_positive_slide_max -
          spec.foci_per_positive_slide_min + 1)));
  for (int f = 0; f < n_foci; ++f) {
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const int radius =
          spec.focus_radius_px_min +
          static_cast<int>(gen.next_below(static_cast<std::uint64_t>(
              spec.focus_radius_px_max - spec.focus_radius_px_min + 1)));
      const int clearance = radius + spec.focus_margin_px;
      const int x_lo = band.x0_px + clearance;
      const int x_hi = band.x1_px - clearance;
      const int y_lo = band.y0_px + clearance;
      const int y_hi = band.y1_px - clearance;
      if (x_lo >= x_hi || y_lo >= y_hi) {
        continue;  // this radius cannot fit; retry (possibly smaller)
      }
      const int cx = x_lo + static_cast<int>(gen.next_below(
                                static_cast<std::uint64_t>(x_hi - x_lo)));
      const int cy = y_lo + static_cast<int>(gen.next_below(
                                static_cast<std::uint64_t>(y_hi - y_lo)));
      Polygon poly;
      for (int v = 0; v < kFocusVertices; ++v) {
        const double angle =
            2.0 * std::numbers::pi * v / kFocusVertices;
        poly.points.push_back(
            {static_cast<double>(cx + round_half_away(radius * std::cos(angle))),
             static_cast<double>(cy + round_half_away(radius * std::sin(angle)))});
      }
      scene.annotations.polygons.push_back(std::move(poly));
      placed = true;
    }
    if (!placed) {
      fail(ErrorCode::invalid_argument,
           "synth: focus cannot fit inside generated tissue (slide " +
               slide_id + ")");
    }
  }
  return scene;
}

RasterImage render_slide_level0(const CohortSpec& spec,
                                const SlideScene& scene) {
  rng::SplitMix64 gen(
      rng::derive_seed(spec.seed, "render/" + scene.slide_id));
  RasterImage img =
      RasterImage::make(scene.width, scene.height, 3, 255);

  // Solid per-cell tint: block-aligned noise survives the x16 downsample at
  // full amplitude, which is what the Laplacian/Otsu stage keys on.
  constexpr int kBase[3] = {208, 186, 214};
  const BinaryMask& cells = scene.tissue16.mask;
  for (int cy = 0; cy < cells.height; ++cy) {
    for (int cx = 0; cx < cells.width; ++cx) {
      if (!cells.at(cx, cy)) continue;
      const int offset = static_cast<int>(gen.next_below(91)) - 45;
      std::uint8_t color[3];
      for (int c = 0; c < 3; ++c) {
        color[c] = static_cast<std::uint8_t>(
            std::clamp(kBase[c] + offset, 0, 255));
      }
      const int x0 = cx * kCell;
      const int y0 = cy * kCell;
      const int x1 = std::min(x0 + kCell, scene.width);
      const int y1 = std::min(y0 + kCell, scene.height);
      for (int y = y0; y < y1; ++y) {
        std::uint8_t* p = img.pixels.data() + img.index(x0, y, 0);
        for (int x = x0; x < x1; ++x) {
          *p++ = color[0];
          *p++ = color[1];
          *p++ = color[2];
        }
      }
    }
  }

  // Annular focus marks. Purely visual; truth comes from the polygons.
  for (const Polygon& poly : scene.annotations.polygons) {
    double cx = 0.0, cy = 0.0, r = 0.0;
    for (const auto& pt : poly.points) {
      cx += pt[0];
      cy += pt[1];
    }
    cx /= static_cast<double>(poly.points.size());
    cy /= static_cast<double>(poly.points.size());
    for (const auto& pt : poly.points) {
      r = std::max(r, std::hypot(pt[0] - cx, pt[1] - cy));
    }
    const double r_out = 0.95 * r;
    const double r_in = 0.55 * r;
    const int y_lo = std::max(0, static_cast<int>(cy - r));
    const int y_hi = std::min(scene.height - 1, static_cast<int>(cy + r));
    const int x_lo = std::max(0, static_cast<int>(cx - r));
    const int x_hi = std::min(scene.width - 1, static_cast<int>(cx + r));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double d2 = (x + 0.5 - cx) * (x + 0.5 - cx) +
                          (y + 0.5 - cy) * (y + 0.5 - cy);
        if (d2 >= r_in * r_in && d2 <= r_out * r_out) {
          img.at(x, y, 0) = 96;
          img.at(x, y, 1) = 64;
          img.at(x, y, 2) = 120;
        }
      }
    }
  }
  return img;
}

GeneratedCohort generate_cohort(const CohortSpec& spec,
                                const std::filesystem::path& out_dir) {
  spec.validate();
  GeneratedCohort cohort;
  cohort.truth = generate_cohort_truth(spec);
  cohort.root = out_dir;

  const auto slides_dir = out_dir / "slides";
  const auto annotations_dir = out_dir / "annotations";
  const auto truth_dir = out_dir / "truth";
  std::filesystem::create_directories(slides_dir);
  std::filesystem::create_directories(annotations_dir);
  std::filesystem::create_directories(truth_dir);

  for (const CohortSlide& cs : cohort.truth.slides) {
    const SlideScene scene =
        synth_slide_scene(spec, cs.slide_id, cs.pni_positive);
    const RasterImage level0 = render_slide_level0(spec, scene);
    const RasterImage level1 = downsample(level0, kCell);

    GeneratedSlide gs;
    gs.slide_id = cs.slide_id;
    gs.slide_dir = slides_dir / cs.slide_id;
    std::filesystem::create_directories(gs.slide_dir);

    SlideMeta meta;
    meta.slide_id = cs.slide_id;
    meta.subject_id = cs.subject_id;
    meta.mpp_x = spec.mpp;
    meta.mpp_y = spec.mpp;
    meta.scanner_tag = "synthetic";
    meta.levels.push_back({scene.width, scene.height, 1.0});
    meta.levels.push_back({level1.width, level1.height,
                           static_cast<double>(kCell)});
    meta.validate();
    write_slide_meta(gs.slide_dir / "meta.json", meta);
    write_png(gs.slide_dir / "level_0.png", level0);
    write_png(gs.slide_dir / "level_1.png", level1);

    gs.annotations_path = annotations_dir / (cs.slide_id + ".json");
    write_annotations(gs.annotations_path, scene.annotations);

    const LabelMask truth_label = rasterize_labels(
        scene.width, scene.height, scene.annotations, scene.tissue16);
    gs.truth_label_path = truth_dir / (cs.slide_id + "_label.png");
    write_label_mask_png(gs.truth_label_path, truth_label);
    gs.truth_tissue_path = truth_dir / (cs.slide_id + "_tissue.png");
    write_tissue_mask_png(gs.truth_tissue_path, scene.tissue16);

    cohort.slides.push_back(std::move(gs));
  }

  cohort.cohort_csv = out_dir / "cohort.csv";
  write_cohort_csv(cohort.cohort_csv, cohort.truth);
  return cohort;
}

void write_cohort_csv(const std::filesystem::path& path,
                      const CohortTruth& truth) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "subject_id,slide_id,pni_truth\n";
  for (const CohortSlide& s : truth.slides) {
    out << s.subject_id << ',' << s.slide_id << ','
        << (s.pni_positive ? 1 : 0) << '\n';
  }
}

CohortTruth read_cohort_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      internal::strip_cr(line) != "subject_id,slide_id,pni_truth") {
    fail(ErrorCode::invalid_format, "bad cohort CSV header: " + path.string());
  }
  CohortTruth truth;
  while (std::getline(in, line)) {
    const auto sv = internal::strip_cr(line);
    if (sv.empty()) continue;
    const auto fields = internal::split_csv_line(sv);
    if (fields.size() != 3) {
      fail(ErrorCode::invalid_format, "bad cohort CSV row: " + std::string(sv));
    }
    const long flag = internal::parse_long(fields[2], "pni_truth");
    if (flag != 0 && flag != 1) {
      fail(ErrorCode::invalid_format,
           "pni_truth must be 0 or 1: " + std::string(sv));
    }
    truth.slides.push_back(
        {std::string(fields[0]), std::string(fields[1]), flag == 1});
  }
  return truth;
}

}  // namespace pnikit
