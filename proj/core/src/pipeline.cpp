#include "pnikit/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "pnikit/aggregate.hpp"
#include "pnikit/error.hpp"
#include "pnikit/image_io.hpp"
#include "pnikit/preprocess.hpp"
#include "pnikit/rng.hpp"

namespace pnikit {

namespace {

/// Removes declared outputs unless the stage committed.
class StageOutputs {
 public:
  ~StageOutputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& path : paths_) {
      std::filesystem::remove_all(path, ec);
    }
  }
  void track(const std::filesystem::path& path) { paths_.push_back(path); }
  void commit() { committed_ = true; }

 private:
  std::vector<std::filesystem::path> paths_;
  bool committed_ = false;
};

std::string oracle_model_id(int index) {
  return "model_" + std::to_string(index);
}

CohortSpec resolved_cohort_spec(const PipelineConfig& config) {
  CohortSpec spec = config.cohort;
  spec.seed = rng::derive_seed(config.seed, "synth");
  return spec;
}

OracleScorerConfig resolved_oracle(const PipelineConfig& config,
                                   int model_index) {
  OracleScorerConfig oracle;
  oracle.mu_pos = config.oracle_mu_pos;
  oracle.mu_neg = config.oracle_mu_neg;
  oracle.sigma = config.oracle_sigma;
  oracle.seed = rng::derive_seed(config.seed, "oracle");
  oracle.model_id = oracle_model_id(model_index);
  return oracle;
}

}  // namespace

void PipelineConfig::validate() const {
  cohort.validate();
  classification_grid.validate();
  segmentation_grid.validate();
  if (ensemble_size < 1) {
    fail(ErrorCode::invalid_argument, "config: ensemble_size must be >= 1");
  }
  if (!(0.0 <= oracle_mu_neg && oracle_mu_neg <= oracle_mu_pos &&
        oracle_mu_pos <= 1.0) ||
      oracle_sigma < 0.0) {
    fail(ErrorCode::invalid_argument, "config: bad oracle parameters");
  }
  if (classification_sampling_ratio < 1 || segmentation_sampling_ratio < 1) {
    fail(ErrorCode::invalid_argument, "config: sampling ratios must be >= 1");
  }
  if (binarize_threshold < 0 || binarize_threshold > 255) {
    fail(ErrorCode::invalid_argument,
         "config: binarize threshold outside [0,255]");
  }
  if (operating_points.empty()) {
    fail(ErrorCode::invalid_argument, "config: no operating points");
  }
  for (std::size_t i = 1; i < operating_points.size(); ++i) {
    if (!(operating_points[i] < operating_points[i - 1])) {
      fail(ErrorCode::invalid_argument,
           "config: operating points must be strictly descending");
    }
  }
  if (bootstrap_n < 1) {
    fail(ErrorCode::invalid_argument, "config: bootstrap_n must be >= 1");
  }
  if (jpeg_quality < 1 || jpeg_quality > 100) {
    fail(ErrorCode::invalid_argument, "config: jpeg_quality outside [1,100]");
  }
}

namespace {

nlohmann::ordered_json grid_json(const PatchGridSpec& grid) {
  return {{"patch_px", grid.patch_px},
          {"stride_px", grid.stride_px},
          {"level", grid.level},
          {"min_tissue_fraction", grid.min_tissue_fraction},
          {"include_edge_tiles", grid.include_edge_tiles}};
}

void grid_from_json(const nlohmann::json& doc, PatchGridSpec& grid) {
  if (doc.contains("patch_px")) grid.patch_px = doc["patch_px"].get<int>();
  if (doc.contains("stride_px")) grid.stride_px = doc["stride_px"].get<int>();
  if (doc.contains("level")) grid.level = doc["level"].get<int>();
  if (doc.contains("min_tissue_fraction")) {
    grid.min_tissue_fraction = doc["min_tissue_fraction"].get<double>();
  }
  if (doc.contains("include_edge_tiles")) {
    grid.include_edge_tiles = doc["include_edge_tiles"].get<bool>();
  }
}

}  // namespace

std::string PipelineConfig::to_json() const {
  const nlohmann::ordered_json doc = {
      {"seed", seed},
      {"cohort",
       {{"n_subjects", cohort.n_subjects},
        {"slides_per_subject",
         {cohort.slides_per_subject_min, cohort.slides_per_subject_max}},
        {"subject_pni_prevalence", cohort.subject_pni_prevalence},
        {"foci_per_positive_slide",
         {cohort.foci_per_positive_slide_min,
          cohort.foci_per_positive_slide_max}},
        {"focus_radius_px",
         {cohort.focus_radius_px_min, cohort.focus_radius_px_max}},
        {"slide_width", cohort.slide_width},
        {"slide_height", cohort.slide_height},
        {"mpp", cohort.mpp},
        {"focus_margin_px", cohort.focus_margin_px}}},
      {"classification_grid", grid_json(classification_grid)},
      {"segmentation_grid", grid_json(segmentation_grid)},
      {"ensemble_size", ensemble_size},
      {"oracle",
       {{"mu_pos", oracle_mu_pos},
        {"mu_neg", oracle_mu_neg},
        {"sigma", oracle_sigma},
        {"pixel_mode",
         pixel_oracle_mode == PixelOracleMode::truth ? "truth" : "inverted"}}},
      {"sampling_ratios",
       {{"classification", classification_sampling_ratio},
        {"segmentation", segmentation_sampling_ratio}}},
      {"binarize",
       {{"threshold", binarize_threshold}, {"ge", binarize_ge}}},
      {"operating_points", operating_points},
      {"operating_ge", operating_ge},
      {"bootstrap_n", bootstrap_n},
      {"export_patch_images", export_patch_images},
      {"jpeg_quality", jpeg_quality},
  };
  return doc.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format, std::string("bad config JSON: ") + e.what());
  }

  PipelineConfig config;
  try {
    if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("cohort")) {
      const auto& c = doc["cohort"];
      auto& spec = config.cohort;
      if (c.contains("n_subjects")) spec.n_subjects = c["n_subjects"].get<int>();
      if (c.contains("slides_per_subject")) {
        spec.slides_per_subject_min = c["slides_per_subject"][0].get<int>();
        spec.slides_per_subject_max = c["slides_per_subject"][1].get<int>();
      }
      if (c.contains("subject_pni_prevalence")) {
        spec.subject_pni_prevalence =
            c["subject_pni_prevalence"].get<double>();
      }
      if (c.contains("foci_per_positive_slide")) {
        spec.foci_per_positive_slide_min =
            c["foci_per_positive_slide"][0].get<int>();
        spec.foci_per_positive_slide_max =
            c["foci_per_positive_slide"][1].get<int>();
      }
      if (c.contains("focus_radius_px")) {
        spec.focus_radius_px_min = c["focus_radius_px"][0].get<int>();
        spec.focus_radius_px_max = c["focus_radius_px"][1].get<int>();
      }
      if (c.contains("slide_width")) {
        spec.slide_width = c["slide_width"].get<int>();
      }
      if (c.contains("slide_height")) {
        spec.slide_height = c["slide_height"].get<int>();
      }
      if (c.contains("mpp")) spec.mpp = c["mpp"].get<double>();
      if (c.contains("focus_margin_px")) {
        spec.focus_margin_px = c["focus_margin_px"].get<int>();
      }
    }
    if (doc.contains("classification_grid")) {
      grid_from_json(doc["classification_grid"], config.classification_grid);
    }
    if (doc.contains("segmentation_grid")) {
      grid_from_json(doc["segmentation_grid"], config.segmentation_grid);
    }
    if (doc.contains("ensemble_size")) {
      config.ensemble_size = doc["ensemble_size"].get<int>();
    }
    if (doc.contains("oracle")) {
      const auto& o = doc["oracle"];
      if (o.contains("mu_pos")) config.oracle_mu_pos = o["mu_pos"].get<double>();
      if (o.contains("mu_neg")) config.oracle_mu_neg = o["mu_neg"].get<double>();
      if (o.contains("sigma")) config.oracle_sigma = o["sigma"].get<double>();
      if (o.contains("pixel_mode")) {
        const std::string mode = o["pixel_mode"].get<std::string>();
        if (mode == "truth") {
          config.pixel_oracle_mode = PixelOracleMode::truth;
        } else if (mode == "inverted") {
          config.pixel_oracle_mode = PixelOracleMode::inverted;
        } else {
          fail(ErrorCode::invalid_format,
               "config: pixel_mode must be truth|inverted");
        }
      }
    }
    if (doc.contains("sampling_ratios")) {
      const auto& s = doc["sampling_ratios"];
      if (s.contains("classification")) {
        config.classification_sampling_ratio =
            s["classification"].get<int>();
      }
      if (s.contains("segmentation")) {
        config.segmentation_sampling_ratio = s["segmentation"].get<int>();
      }
    }
    if (doc.contains("binarize")) {
      const auto& b = doc["binarize"];
      if (b.contains("threshold")) {
        config.binarize_threshold = b["threshold"].get<int>();
      }
      if (b.contains("ge")) config.binarize_ge = b["ge"].get<bool>();
    }
    if (doc.contains("operating_points")) {
      config.operating_points =
          doc["operating_points"].get<std::vector<double>>();
    }
    if (doc.contains("operating_ge")) {
      config.operating_ge = doc["operating_ge"].get<bool>();
    }
    if (doc.contains("bootstrap_n")) {
      config.bootstrap_n = doc["bootstrap_n"].get<int>();
    }
    if (doc.contains("export_patch_images")) {
      config.export_patch_images = doc["export_patch_images"].get<bool>();
    }
    if (doc.contains("jpeg_quality")) {
      config.jpeg_quality = doc["jpeg_quality"].get<int>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format,
         std::string("bad config value: ") + e.what());
  }
  return config;
}

PipelineConfig PipelineConfig::from_json_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

WorkLayout::WorkLayout(std::filesystem::path work_dir)
    : root(std::move(work_dir)),
      cohort_dir(root / "cohort"),
      cohort_csv(cohort_dir / "cohort.csv"),
      masks_dir(root / "masks"),
      patches_classification_dir(root / "patches" / "classification"),
      patches_segmentation_dir(root / "patches" / "segmentation"),
      sampling_dir(root / "sampling"),
      scores_dir(root / "scores"),
      heatmaps_dir(root / "heatmaps"),
      report_json(root / "report.json"),
      roc_slides_csv(root / "roc_slides.csv"),
      roc_subjects_csv(root / "roc_subjects.csv"),
      config_echo(root / "config.json") {}

std::filesystem::path WorkLayout::slide_dir(const std::string& slide_id) const {
  return cohort_dir / "slides" / slide_id;
}
std::filesystem::path WorkLayout::annotations_json(
    const std::string& slide_id) const {
  return cohort_dir / "annotations" / (slide_id + ".json");
}
std::filesystem::path WorkLayout::truth_label_png(
    const std::string& slide_id) const {
  return cohort_dir / "truth" / (slide_id + "_label.png");
}
std::filesystem::path WorkLayout::truth_tissue_png(
    const std::string& slide_id) const {
  return cohort_dir / "truth" / (slide_id + "_tissue.png");
}
std::filesystem::path WorkLayout::tissue_mask_png(
    const std::string& slide_id) const {
  return masks_dir / (slide_id + "_tissue.png");
}
std::filesystem::path WorkLayout::label_mask_png(
    const std::string& slide_id) const {
  return masks_dir / (slide_id + "_label.png");
}
std::filesystem::path WorkLayout::classification_manifest() const {
  return patches_classification_dir / "manifest.csv";
}
std::filesystem::path WorkLayout::segmentation_manifest() const {
  return patches_segmentation_dir / "manifest.csv";
}
std::filesystem::path WorkLayout::sampling_manifest(PatchTask task) const {
  return sampling_dir / (task == PatchTask::classification
                             ? "classification.txt"
                             : "segmentation.txt");
}
std::filesystem::path WorkLayout::model_scores_csv(int model_index) const {
  return scores_dir / (oracle_model_id(model_index) + ".csv");
}
std::filesystem::path WorkLayout::ensemble_csv() const {
  return scores_dir / "ensemble.csv";
}
std::filesystem::path WorkLayout::entities_csv() const {
  return scores_dir / "entities.csv";
}
std::filesystem::path WorkLayout::heatmap_png(
    const std::string& slide_id) const {
  return heatmaps_dir / (slide_id + "_heatmap.png");
}
std::filesystem::path WorkLayout::pred_mask_png(
    const std::string& slide_id) const {
  return heatmaps_dir / (slide_id + "_pred.png");
}
std::filesystem::path WorkLayout::overlay_png(
    const std::string& slide_id) const {
  return heatmaps_dir / (slide_id + "_overlay.png");
}

void stage_synth(const PipelineConfig& config) {
  config.validate();
  const WorkLayout layout(config.work_dir);
  std::filesystem::create_directories(layout.root);
  StageOutputs outputs;
  outputs.track(layout.cohort_dir);
  generate_cohort(resolved_cohort_spec(config), layout.cohort_dir);
  outputs.commit();
}

void stage_tissue_masks(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  const CohortTruth truth = read_cohort_csv(layout.cohort_csv);
  std::filesystem::create_directories(layout.masks_dir);
  StageOutputs outputs;
  for (const CohortSlide& cs : truth.slides) {
    const Slide slide = Slide::open(layout.slide_dir(cs.slide_id));
    const TissueMask mask = tissue_mask(slide);
    const auto path = layout.tissue_mask_png(cs.slide_id);
    outputs.track(path);
    write_tissue_mask_png(path, mask);
  }
  outputs.commit();
}

void stage_rasterize(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  const CohortTruth truth = read_cohort_csv(layout.cohort_csv);
  StageOutputs outputs;
  for (const CohortSlide& cs : truth.slides) {
    const SlideMeta meta =
        read_slide_meta(layout.slide_dir(cs.slide_id) / "meta.json");
    const AnnotationSet annotations =
        read_annotations(layout.annotations_json(cs.slide_id));
    const TissueMask tissue =
        read_tissue_mask_png(layout.tissue_mask_png(cs.slide_id), cs.slide_id);
    const LabelMask labels = rasterize_labels(
        meta.levels[0].width, meta.levels[0].height, annotations, tissue);
    const auto path = layout.label_mask_png(cs.slide_id);
    outputs.track(path);
    write_label_mask_png(path, labels);
  }
  outputs.commit();
}

void stage_extract(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  const CohortTruth truth = read_cohort_csv(layout.cohort_csv);
  std::filesystem::create_directories(layout.patches_classification_dir);
  std::filesystem::create_directories(layout.patches_segmentation_dir);
  StageOutputs outputs;

  std::vector<PatchRecord> classification;
  std::vector<PatchRecord> segmentation;
  for (const CohortSlide& cs : truth.slides) {
    const Slide slide = Slide::open(layout.slide_dir(cs.slide_id));
    const TissueMask tissue =
        read_tissue_mask_png(layout.tissue_mask_png(cs.slide_id), cs.slide_id);
    const LabelMask labels =
        read_label_mask_png(layout.label_mask_png(cs.slide_id), cs.slide_id);

    ExtractOptions options;
    options.export_images = config.export_patch_images;
    options.out_dir = layout.patches_classification_dir / cs.slide_id;
    options.jpeg_quality = config.jpeg_quality;
    options.image_path_prefix = cs.slide_id;
    if (config.export_patch_images) outputs.track(options.out_dir);
    ExtractResult result = extract_patches(
        slide, labels, tissue, config.classification_grid, options);
    classification.insert(classification.end(),
                          std::make_move_iterator(result.records.begin()),
                          std::make_move_iterator(result.records.end()));

    // Segmentation patches come from PNI-positive slides only.
    if (cs.pni_positive) {
      ExtractOptions seg_options;
      seg_options.export_images = config.export_patch_images;
      seg_options.out_dir = layout.patches_segmentation_dir / cs.slide_id;
      seg_options.jpeg_quality = config.jpeg_quality;
      seg_options.image_path_prefix = cs.slide_id;
      if (config.export_patch_images) outputs.track(seg_options.out_dir);
      ExtractResult seg = extract_patches(
          slide, labels, tissue, config.segmentation_grid, seg_options);
      segmentation.insert(segmentation.end(),
                          std::make_move_iterator(seg.records.begin()),
                          std::make_move_iterator(seg.records.end()));
    }
  }
  outputs.track(layout.classification_manifest());
  write_patch_manifest(layout.classification_manifest(), classification);
  outputs.track(layout.segmentation_manifest());
  write_patch_manifest(layout.segmentation_manifest(), segmentation);
  outputs.commit();
}

void stage_sample(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  std::filesystem::create_directories(layout.sampling_dir);
  StageOutputs outputs;

  const auto build = [&](PatchTask task, const std::filesystem::path& manifest,
                         int ratio, const char* name) {
    const std::vector<PatchRecord> records = read_patch_manifest(manifest);
    const bool any_positive =
        std::any_of(records.begin(), records.end(), [](const PatchRecord& r) {
          return r.label == PatchLabel::positive;
        });
    if (!any_positive) {
      return;  // nothing to balance against; skip the manifest
    }
    const SamplingManifest sampling = build_sampling_manifest(
        records, ratio, rng::derive_seed(config.seed, name));
    const auto path = layout.sampling_manifest(task);
    outputs.track(path);
    write_sampling_manifest(path, sampling);
  };
  build(PatchTask::classification, layout.classification_manifest(),
        config.classification_sampling_ratio, "sample/classification");
  build(PatchTask::segmentation, layout.segmentation_manifest(),
        config.segmentation_sampling_ratio, "sample/segmentation");
  outputs.commit();
}

void stage_score(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  const std::vector<PatchRecord> records =
      read_patch_manifest(layout.classification_manifest());
  std::filesystem::create_directories(layout.scores_dir);
  StageOutputs outputs;
  for (int m = 0; m < config.ensemble_size; ++m) {
    const ScoreTable table = oracle_score(records, resolved_oracle(config, m));
    const auto path = layout.model_scores_csv(m);
    outputs.track(path);
    write_score_csv(path, table);
  }
  outputs.commit();
}

void stage_ensemble(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  std::vector<ScoreTable> tables;
  tables.reserve(config.ensemble_size);
  for (int m = 0; m < config.ensemble_size; ++m) {
    tables.push_back(read_score_csv(layout.model_scores_csv(m)));
  }
  StageOutputs outputs;
  outputs.track(layout.ensemble_csv());
  write_score_csv(layout.ensemble_csv(), soft_vote(tables));
  outputs.commit();
}

void stage_aggregate(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  const CohortTruth truth = read_cohort_csv(layout.cohort_csv);
  const std::vector<PatchRecord> records =
      read_patch_manifest(layout.classification_manifest());
  const ScoreTable ensemble = read_score_csv(layout.ensemble_csv());

  std::vector<EntityScore> entities;
  std::map<std::string, std::vector<EntityScore>> by_subject;
  for (const CohortSlide& cs : truth.slides) {
    EntityScore slide = slide_score(ensemble, records, cs.slide_id);
    by_subject[cs.subject_id].push_back(slide);
    entities.push_back(std::move(slide));
  }
  for (const auto& [subject_id, slides] : by_subject) {
    entities.push_back(subject_score(slides, subject_id));
  }

  StageOutputs outputs;
  outputs.track(layout.entities_csv());
  write_entity_scores(layout.entities_csv(), entities);
  outputs.commit();
}

void stage_stitch(const PipelineConfig& config) {
  const WorkLayout layout(config.work_dir);
  const CohortTruth truth = read_cohort_csv(layout.cohort_csv);
  std::filesystem::create_directories(layout.heatmaps_dir);
  StageOutputs outputs;

  for (const CohortSlide& cs : truth.slides) {
    if (!cs.pni_positive) continue;
    const TissueMask tissue =
        read_tissue_mask_png(layout.tissue_mask_png(cs.slide_id), cs.slide_id);
    const LabelMask labels =
        read_label_mask_png(layout.label_mask_png(cs.slide_id), cs.slide_id);

    HeatmapAccumulator acc(labels.width, labels.height);
    for (int m = 0; m < config.ensemble_size; ++m) {
      for (const PixelPredictionPatch& patch : oracle_pixel_patches(
               labels, tissue, config.segmentation_grid,
               config.pixel_oracle_mode, oracle_model_id(m))) {
        acc.add(patch);
      }
    }
    const Heatmap heatmap = acc.finalize();
    const RasterImage quantized = quantize(heatmap);
    const BinaryMask predicted =
        binarize(quantized, config.binarize_threshold, config.binarize_ge);

    // Truth for the overlay is the pathologist-side mask (value 2).
    const LabelMask truth_label = read_label_mask_png(
        layout.truth_label_png(cs.slide_id), cs.slide_id);
    BinaryMask truth_pni =
        BinaryMask::make(truth_label.width, truth_label.height);
    for (std::size_t i = 0; i < truth_label.values.size(); ++i) {
      truth_pni.flags[i] = truth_label.values[i] == 2;
    }

    RasterImage pred_png = RasterImage::make(predicted.width,
                                             predicted.height, 1);
    for (std::size_t i = 0; i < predicted.flags.size(); ++i) {
      pred_png.pixels[i] = predicted.flags[i] ? 255 : 0;
    }

    outputs.track(layout.heatmap_png(cs.slide_id));
    write_png(layout.heatmap_png(cs.slide_id), quantized);
    outputs.track(layout.pred_mask_png(cs.slide_id));
    write_png(layout.pred_mask_png(cs.slide_id), pred_png);

    const Slide slide = Slide::open(layout.slide_dir(cs.slide_id));
    const RasterImage base = to_grayscale(slide.level_image(0));
    outputs.track(layout.overlay_png(cs.slide_id));
    write_png(layout.overlay_png(cs.slide_id),
              render_overlay(predicted, truth_pni, &base));
  }
  outputs.commit();
}

namespace {

ClassificationReport classification_report(
    const std::vector<LabeledScore>& scores,
    const std::vector<std::string>& zero_evidence,
    const PipelineConfig& config, std::uint64_t bootstrap_seed) {
  ClassificationReport report;
  for (const LabeledScore& s : scores) {
    (s.positive ? report.n_positive : report.n_negative)++;
  }
  report.roc = roc_auc(scores);
  report.auc_ci = bootstrap_ci(
      scores.size(),
      [&](std::span<const std::size_t> idx) {
        return auc_of_subset(scores, idx);
      },
      {config.bootstrap_n, bootstrap_seed});
  // Percentile intervals are widened, when needed, to contain the point
  // estimate.
  report.auc_ci.lo = std::min(report.auc_ci.lo, report.roc.auc);
  report.auc_ci.hi = std::max(report.auc_ci.hi, report.roc.auc);
  for (const double threshold : config.operating_points) {
    report.operating_points.push_back(
        operating_point(scores, threshold, config.operating_ge));
  }
  report.zero_evidence_entities = zero_evidence;
  return report;
}

}  // namespace

MetricsReport stage_evaluate(const PipelineConfig& config) {
  config.validate();
  const WorkLayout layout(config.work_dir);
  const CohortTruth truth = read_cohort_csv(layout.cohort_csv);
  const std::vector<EntityScore> entities =
      read_entity_scores(layout.entities_csv());

  std::map<std::string, bool> slide_truth;
  std::map<std::string, bool> subject_truth;
  for (const CohortSlide& cs : truth.slides) {
    slide_truth[cs.slide_id] = cs.pni_positive;
    subject_truth[cs.subject_id] =
        subject_truth[cs.subject_id] || cs.pni_positive;
  }

  std::vector<LabeledScore> slide_scores;
  std::vector<LabeledScore> subject_scores;
  std::vector<std::string> zero_evidence;
  for (const EntityScore& e : entities) {
    if (e.level == EntityLevel::slide) {
      const auto it = slide_truth.find(e.entity_id);
      if (it == slide_truth.end()) {
        fail(ErrorCode::inconsistent_input,
             "entity not in cohort: " + e.entity_id);
      }
      slide_scores.push_back({e.entity_id, e.score, it->second});
      if (e.argmax_child_id.empty()) zero_evidence.push_back(e.entity_id);
    } else if (e.level == EntityLevel::subject) {
      const auto it = subject_truth.find(e.entity_id);
      if (it == subject_truth.end()) {
        fail(ErrorCode::inconsistent_input,
             "entity not in cohort: " + e.entity_id);
      }
      subject_scores.push_back({e.entity_id, e.score, it->second});
    }
  }

  MetricsReport report;
  report.config_echo_json = config.to_json();
  report.bootstrap = {config.bootstrap_n,
                      rng::derive_seed(config.seed, "bootstrap")};

  const auto single_class = [](const std::vector<LabeledScore>& scores) {
    bool pos = false;
    bool neg = false;
    for (const LabeledScore& s : scores) (s.positive ? pos : neg) = true;
    return !(pos && neg);
  };

  if (!slide_scores.empty() && !single_class(slide_scores)) {
    report.slides = classification_report(
        slide_scores, zero_evidence, config,
        rng::derive_seed(config.seed, "bootstrap/slides"));
    write_roc_csv(layout.roc_slides_csv, report.slides->roc);
  }
  if (!subject_scores.empty() && !single_class(subject_scores)) {
    report.subjects = classification_report(
        subject_scores, {}, config,
        rng::derive_seed(config.seed, "bootstrap/subjects"));
    write_roc_csv(layout.roc_subjects_csv, report.subjects->roc);
  }

  // Segmentation: IoU per PNI-positive core with an available prediction.
  SegmentationReport seg;
  for (const CohortSlide& cs : truth.slides) {
    if (!cs.pni_positive) continue;
    const auto pred_path = layout.pred_mask_png(cs.slide_id);
    if (!std::filesystem::exists(pred_path)) continue;
    const TissueMask pred_as_mask =
        read_tissue_mask_png(pred_path, cs.slide_id);
    const LabelMask truth_label =
        read_label_mask_png(layout.truth_label_png(cs.slide_id), cs.slide_id);
    BinaryMask truth_pni =
        BinaryMask::make(truth_label.width, truth_label.height);
    for (std::size_t i = 0; i < truth_label.values.size(); ++i) {
      truth_pni.flags[i] = truth_label.values[i] == 2;
    }
    seg.per_core.push_back(
        {cs.slide_id, core_iou(pred_as_mask.mask, truth_pni)});
  }
  if (!seg.per_core.empty()) {
    std::vector<double> ious;
    ious.reserve(seg.per_core.size());
    for (const CoreIouEntry& e : seg.per_core) ious.push_back(e.iou);
    seg.mean = mean_iou(ious);
    if (ious.size() >= 2) {
      seg.mean_ci = bootstrap_ci(
          ious.size(),
          [&](std::span<const std::size_t> idx) -> std::optional<double> {
            double sum = 0.0;
            for (const std::size_t i : idx) sum += ious[i];
            return sum / static_cast<double>(idx.size());
          },
          {config.bootstrap_n, rng::derive_seed(config.seed, "bootstrap/iou")});
      seg.mean_ci.lo = std::min(seg.mean_ci.lo, seg.mean);
      seg.mean_ci.hi = std::max(seg.mean_ci.hi, seg.mean);
    } else {
      seg.mean_ci = {seg.mean, seg.mean, 0, 0};
    }
    report.segmentation = std::move(seg);
  }

  StageOutputs outputs;
  outputs.track(layout.report_json);
  std::ofstream out(layout.report_json);
  if (!out) {
    fail(ErrorCode::io_error, "cannot write " + layout.report_json.string());
  }
  out << metrics_report_json(report);
  out.close();
  outputs.commit();
  return report;
}

MetricsReport run_pipeline(const PipelineConfig& config) {
  config.validate();
  const WorkLayout layout(config.work_dir);
  std::filesystem::create_directories(layout.root);
  {
    std::ofstream echo(layout.config_echo);
    if (!echo) {
      fail(ErrorCode::io_error,
           "cannot write " + layout.config_echo.string());
    }
    echo << config.to_json();
  }
  stage_synth(config);
  stage_tissue_masks(config);
  stage_rasterize(config);
  stage_extract(config);
  stage_sample(config);
  stage_score(config);
  stage_ensemble(config);
  stage_aggregate(config);
  stage_stitch(config);
  return stage_evaluate(config);
}

}  // namespace pnikit
