#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pnikit/metrics.hpp"
#include "pnikit/scoring.hpp"
#include "pnikit/stitcher.hpp"
#include "pnikit/synth.hpp"
#include "pnikit/tiler.hpp"

namespace pnikit {

/// Resolved configuration for a pipeline run. Every default is the published
/// operating value of the system this pipeline reproduces. All stage
/// randomness is derived from the single root seed by name, so stages can be
/// re-run individually and reproduce the `pipeline` outputs byte for byte.
struct PipelineConfig {
  std::filesystem::path work_dir;
  std::uint64_t seed = 0;

  CohortSpec cohort;
  PatchGridSpec classification_grid = PatchGridSpec::classification_defaults();
  PatchGridSpec segmentation_grid = PatchGridSpec::segmentation_defaults();

  int ensemble_size = 10;
  double oracle_mu_pos = 0.9;
  double oracle_mu_neg = 0.1;
  double oracle_sigma = 0.0;
  PixelOracleMode pixel_oracle_mode = PixelOracleMode::truth;

  int classification_sampling_ratio = 2;
  int segmentation_sampling_ratio = 4;

  int binarize_threshold = kDefaultBinarizeThreshold;
  bool binarize_ge = true;

  std::vector<double> operating_points = {0.99, 0.95, 0.90, 0.85};
  bool operating_ge = true;
  int bootstrap_n = 1000;

  bool export_patch_images = true;
  int jpeg_quality = 80;

  void validate() const;

  /// Full resolved config as JSON (the report's config echo).
  std::string to_json() const;
  /// Parses a (possibly partial) config JSON over the defaults. work_dir is
  /// not part of the file format.
  static PipelineConfig from_json_file(const std::filesystem::path& path);
  static PipelineConfig from_json(const std::string& text);
};

/// Well-known locations inside a pipeline work directory.
struct WorkLayout {
  explicit WorkLayout(std::filesystem::path work_dir);

  std::filesystem::path root;
  std::filesystem::path cohort_dir;
  std::filesystem::path cohort_csv;
  std::filesystem::path masks_dir;
  std::filesystem::path patches_classification_dir;
  std::filesystem::path patches_segmentation_dir;
  std::filesystem::path sampling_dir;
  std::filesystem::path scores_dir;
  std::filesystem::path heatmaps_dir;
  std::filesystem::path report_json;
  std::filesystem::path roc_slides_csv;
  std::filesystem::path roc_subjects_csv;
  std::filesystem::path config_echo;

  std::filesystem::path slide_dir(const std::string& slide_id) const;
  std::filesystem::path annotations_json(const std::string& slide_id) const;
  std::filesystem::path truth_label_png(const std::string& slide_id) const;
  std::filesystem::path truth_tissue_png(const std::string& slide_id) const;
  std::filesystem::path tissue_mask_png(const std::string& slide_id) const;
  std::filesystem::path label_mask_png(const std::string& slide_id) const;
  std::filesystem::path classification_manifest() const;
  std::filesystem::path segmentation_manifest() const;
  std::filesystem::path sampling_manifest(PatchTask task) const;
  std::filesystem::path model_scores_csv(int model_index) const;
  std::filesystem::path ensemble_csv() const;
  std::filesystem::path entities_csv() const;
  std::filesystem::path heatmap_png(const std::string& slide_id) const;
  std::filesystem::path pred_mask_png(const std::string& slide_id) const;
  std::filesystem::path overlay_png(const std::string& slide_id) const;
};

// Stages. Each reads only previously declared artifacts, writes only its own
// outputs, and removes partial outputs when it throws.
void stage_synth(const PipelineConfig& config);
void stage_tissue_masks(const PipelineConfig& config);
void stage_rasterize(const PipelineConfig& config);
void stage_extract(const PipelineConfig& config);
void stage_sample(const PipelineConfig& config);
void stage_score(const PipelineConfig& config);
void stage_ensemble(const PipelineConfig& config);
void stage_aggregate(const PipelineConfig& config);
void stage_stitch(const PipelineConfig& config);
MetricsReport stage_evaluate(const PipelineConfig& config);

/// All stages in order; returns the final report.
MetricsReport run_pipeline(const PipelineConfig& config);

}  // namespace pnikit
