#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pnikit/annotations.hpp"
#include "pnikit/preprocess.hpp"
#include "pnikit/slide.hpp"

namespace pnikit {

/// Deterministic synthetic cohort. Visual realism is a non-goal; the point is
/// exact geometric consistency (truth masks match annotations by
/// construction) with controllable prevalence, so every downstream check can
/// key off ground truth.
struct CohortSpec {
  std::uint64_t seed = 0;
  int n_subjects = 20;
  int slides_per_subject_min = 1;
  int slides_per_subject_max = 2;
  double subject_pni_prevalence = 0.186;
  int foci_per_positive_slide_min = 1;
  int foci_per_positive_slide_max = 3;
  int focus_radius_px_min = 40;
  int focus_radius_px_max = 80;
  int slide_width = 2048;
  int slide_height = 2048;
  double mpp = 0.5032;
  /// Tissue clearance kept around each focus. Using the segmentation patch
  /// side (512) guarantees every window that touches a PNI pixel passes the
  /// half-tissue filter.
  int focus_margin_px = 512;

  void validate() const;
};

struct CohortSlide {
  std::string subject_id;
  std::string slide_id;
  bool pni_positive = false;
};

struct CohortTruth {
  std::vector<CohortSlide> slides;

  int positive_subject_count() const;
};

/// Subject/slide truth assignment only, no pixels. Slides of a positive
/// subject are all positive.
CohortTruth generate_cohort_truth(const CohortSpec& spec);

/// Slide geometry without rendered pixels: the ideal x16 tissue cell map (a
/// guaranteed central band plus thresholded low-frequency noise lobes) and
/// the focus annotation polygons placed with the configured margin.
struct SlideScene {
  std::string slide_id;
  int width = 0;
  int height = 0;
  TissueMask tissue16;
  AnnotationSet annotations;
};

SlideScene synth_slide_scene(const CohortSpec& spec,
                             const std::string& slide_id, bool positive);

/// Level-0 rendering of a scene: white background, solid per-cell noise tint
/// over tissue, a dark annular structure per focus.
RasterImage render_slide_level0(const CohortSpec& spec,
                                const SlideScene& scene);

struct GeneratedSlide {
  std::string slide_id;
  std::filesystem::path slide_dir;
  std::filesystem::path annotations_path;
  std::filesystem::path truth_label_path;
  std::filesystem::path truth_tissue_path;
};

struct GeneratedCohort {
  CohortTruth truth;
  std::filesystem::path root;
  std::filesystem::path cohort_csv;
  std::vector<GeneratedSlide> slides;
};

/// Writes the full cohort: slide directories (meta.json + level PNGs),
/// annotation JSONs, truth label/tissue masks and cohort.csv. Same seed,
/// byte-identical outputs.
GeneratedCohort generate_cohort(const CohortSpec& spec,
                                const std::filesystem::path& out_dir);

/// CSV: subject_id,slide_id,pni_truth (0/1)
void write_cohort_csv(const std::filesystem::path& path,
                      const CohortTruth& truth);
CohortTruth read_cohort_csv(const std::filesystem::path& path);

}  // namespace pnikit
