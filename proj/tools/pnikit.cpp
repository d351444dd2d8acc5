// Command line front end: one subcommand per pipeline stage plus `pipeline`
// to chain them. A JSON config file provides the base configuration; flags
// override individual fields. Failures print a machine-readable error record
// on stderr and exit nonzero.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pnikit/error.hpp"
#include "pnikit/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string work_dir;
  pnikit::PipelineConfig config;
};

void add_common_options(CLI::App* cmd, CliOptions& opts) {
  cmd->add_option("--config", opts.config_path,
                  "JSON config file (flags override its fields)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--work-dir", opts.work_dir, "Pipeline working directory")
      ->required();
  auto& c = opts.config;
  cmd->add_option("--seed", c.seed, "Root seed for all derived randomness");
  cmd->add_option("--subjects", c.cohort.n_subjects, "Cohort subject count");
  cmd->add_option("--prevalence", c.cohort.subject_pni_prevalence,
                  "Subject-level PNI prevalence");
  cmd->add_option("--slides-per-subject",
                  [&c](const std::vector<std::string>& vals) {
                    c.cohort.slides_per_subject_min = std::stoi(vals.at(0));
                    c.cohort.slides_per_subject_max = std::stoi(vals.at(1));
                    return true;
                  },
                  "Min and max slides per subject")
      ->expected(2);
  cmd->add_option("--foci-per-slide",
                  [&c](const std::vector<std::string>& vals) {
                    c.cohort.foci_per_positive_slide_min =
                        std::stoi(vals.at(0));
                    c.cohort.foci_per_positive_slide_max =
                        std::stoi(vals.at(1));
                    return true;
                  },
                  "Min and max PNI foci per positive slide")
      ->expected(2);
  cmd->add_option("--focus-radius",
                  [&c](const std::vector<std::string>& vals) {
                    c.cohort.focus_radius_px_min = std::stoi(vals.at(0));
                    c.cohort.focus_radius_px_max = std::stoi(vals.at(1));
                    return true;
                  },
                  "Min and max focus radius (px)")
      ->expected(2);
  cmd->add_option("--slide-width", c.cohort.slide_width, "Slide width (px)");
  cmd->add_option("--slide-height", c.cohort.slide_height,
                  "Slide height (px)");
  cmd->add_option("--mpp", c.cohort.mpp, "Microns per pixel at level 0");
  cmd->add_option("--focus-margin", c.cohort.focus_margin_px,
                  "Tissue clearance around each focus (px)");
  cmd->add_option("--ensemble-size", c.ensemble_size, "Ensemble member count");
  cmd->add_option("--oracle-mu-pos", c.oracle_mu_pos,
                  "Oracle mean score, positive patches");
  cmd->add_option("--oracle-mu-neg", c.oracle_mu_neg,
                  "Oracle mean score, negative patches");
  cmd->add_option("--oracle-sigma", c.oracle_sigma,
                  "Oracle Gaussian noise sigma");
  cmd->add_option_function<std::string>(
         "--pixel-oracle-mode",
         [&c](const std::string& mode) {
           if (mode == "truth") {
             c.pixel_oracle_mode = pnikit::PixelOracleMode::truth;
           } else if (mode == "inverted") {
             c.pixel_oracle_mode = pnikit::PixelOracleMode::inverted;
           } else {
             throw CLI::ValidationError(
                 "--pixel-oracle-mode must be truth|inverted");
           }
         },
         "Per-pixel oracle mode (truth|inverted)")
      ->check(CLI::IsMember({"truth", "inverted"}));
  cmd->add_option("--classification-sampling-ratio",
                  c.classification_sampling_ratio,
                  "Negatives per positive, classification manifest");
  cmd->add_option("--segmentation-sampling-ratio",
                  c.segmentation_sampling_ratio,
                  "Negatives per positive, segmentation manifest");
  cmd->add_option("--binarize-threshold", c.binarize_threshold,
                  "Heatmap positivity threshold (8-bit)");
  cmd->add_flag("--binarize-ge,!--binarize-gt", c.binarize_ge,
                "Compare heatmap values with >= (default) or >");
  cmd->add_option("--operating-points", c.operating_points,
                  "Operating point thresholds, descending");
  cmd->add_flag("--operating-ge,!--operating-gt", c.operating_ge,
                "Call positives with score >= threshold (default) or >");
  cmd->add_option("--bootstrap-n", c.bootstrap_n, "Bootstrap resamples");
  cmd->add_flag("--export-patch-images,!--no-export-patch-images",
                c.export_patch_images, "Write patch JPEGs during extract");
  cmd->add_option("--jpeg-quality", c.jpeg_quality, "Patch export quality");
  cmd->add_option("--cls-patch-px", c.classification_grid.patch_px,
                  "Classification patch side (px)");
  cmd->add_option("--cls-stride-px", c.classification_grid.stride_px,
                  "Classification stride (px)");
  cmd->add_option("--seg-patch-px", c.segmentation_grid.patch_px,
                  "Segmentation patch side (px)");
  cmd->add_option("--seg-stride-px", c.segmentation_grid.stride_px,
                  "Segmentation stride (px)");
  cmd->add_option("--min-tissue-fraction",
                  [&c](const std::vector<std::string>& vals) {
                    const double v = std::stod(vals.at(0));
                    c.classification_grid.min_tissue_fraction = v;
                    c.segmentation_grid.min_tissue_fraction = v;
                    return true;
                  },
                  "Minimum tissue fraction for both grids");
  cmd->add_flag("--edge-tiles,!--no-edge-tiles",
                [&c](std::int64_t count) {
                  const bool on = count > 0;
                  c.classification_grid.include_edge_tiles = on;
                  c.segmentation_grid.include_edge_tiles = on;
                },
                "Append edge-aligned tiles (default on)");
}

void print_error_record(const std::string& command, const char* code,
                        const std::string& message) {
  const nlohmann::ordered_json record = {
      {"error",
       {{"command", command}, {"code", code}, {"message", message}}}};
  std::cerr << record.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic perineural-invasion detection pipeline "
               "(tiling, ensemble aggregation, stitching, diagnostics)"};
  app.require_subcommand(1);

  // Pass 1: pick up --config so file values become the defaults that flags
  // then override.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      config_path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      config_path = arg.substr(9);
    }
  }

  CliOptions opts;
  try {
    if (!config_path.empty()) {
      opts.config = pnikit::PipelineConfig::from_json_file(config_path);
    }
  } catch (const pnikit::Error& e) {
    print_error_record("config", pnikit::to_string(e.code()), e.what());
    return 1;
  }

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"synth", "Generate the synthetic cohort"},
      {"tissue-mask", "Segment tissue for every cohort slide"},
      {"rasterize", "Rasterize annotations into label masks"},
      {"extract", "Tile slides into labeled patches"},
      {"sample", "Build class-balanced sampling manifests"},
      {"score", "Score patches with the oracle ensemble members"},
      {"ensemble", "Soft-vote member scores into ensemble scores"},
      {"aggregate", "Roll patch scores up to slides and subjects"},
      {"stitch", "Stitch pixel predictions into heatmaps and masks"},
      {"evaluate", "Compute the diagnostic metrics report"},
      {"pipeline", "Run every stage in order"},
  };
  for (const auto& [name, description] : stages) {
    add_common_options(app.add_subcommand(name, description), opts);
  }

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  opts.config.work_dir = opts.work_dir;

  try {
    using pnikit::MetricsReport;
    if (command == "synth") {
      pnikit::stage_synth(opts.config);
    } else if (command == "tissue-mask") {
      pnikit::stage_tissue_masks(opts.config);
    } else if (command == "rasterize") {
      pnikit::stage_rasterize(opts.config);
    } else if (command == "extract") {
      pnikit::stage_extract(opts.config);
    } else if (command == "sample") {
      pnikit::stage_sample(opts.config);
    } else if (command == "score") {
      pnikit::stage_score(opts.config);
    } else if (command == "ensemble") {
      pnikit::stage_ensemble(opts.config);
    } else if (command == "aggregate") {
      pnikit::stage_aggregate(opts.config);
    } else if (command == "stitch") {
      pnikit::stage_stitch(opts.config);
    } else if (command == "evaluate") {
      const MetricsReport report = pnikit::stage_evaluate(opts.config);
      if (report.slides) {
        std::printf("slides: auc=%.6f [%.6f, %.6f] n=%ld+/%ld-\n",
                    report.slides->roc.auc, report.slides->auc_ci.lo,
                    report.slides->auc_ci.hi, report.slides->n_positive,
                    report.slides->n_negative);
      }
      if (report.subjects) {
        std::printf("subjects: auc=%.6f [%.6f, %.6f] n=%ld+/%ld-\n",
                    report.subjects->roc.auc, report.subjects->auc_ci.lo,
                    report.subjects->auc_ci.hi, report.subjects->n_positive,
                    report.subjects->n_negative);
      }
      if (report.segmentation) {
        std::printf("segmentation: mean_iou=%.6f [%.6f, %.6f] cores=%zu\n",
                    report.segmentation->mean, report.segmentation->mean_ci.lo,
                    report.segmentation->mean_ci.hi,
                    report.segmentation->per_core.size());
      }
    } else if (command == "pipeline") {
      pnikit::run_pipeline(opts.config);
      std::printf("report: %s\n",
                  pnikit::WorkLayout(opts.config.work_dir)
                      .report_json.string()
                      .c_str());
    }
  } catch (const pnikit::Error& e) {
    print_error_record(command, pnikit::to_string(e.code()), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error_record(command, "internal", e.what());
    return 1;
  }
  return 0;
}
