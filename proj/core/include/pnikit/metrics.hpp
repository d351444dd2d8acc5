#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnikit/image.hpp"

namespace pnikit {

struct LabeledScore {
  std::string entity_id;
  double score = 0.0;
  bool positive = false;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC over unique thresholds (descending; the implicit (0,0) anchor is not
/// stored). auc is the trapezoid under the curve, which by construction
/// equals P(score_pos > score_neg) + P(tie)/2 over all pos x neg pairs.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Needs at least one positive and one negative.
RocCurve roc_auc(std::span<const LabeledScore> scores);

/// Confusion-matrix row at a threshold. Rates with empty denominators are
/// reported as nullopt (serialized as null), never as 0.
struct OperatingPointRow {
  double threshold = 0.0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> sensitivity, specificity, ppv, npv, accuracy;
};

/// Positive call is score >= threshold (or > with ge=false).
OperatingPointRow operating_point(std::span<const LabeledScore> scores,
                                  double threshold, bool ge = true);
OperatingPointRow operating_point_from_counts(double threshold, long tp,
                                              long fp, long fn, long tn);

/// Pooled-object IoU of one core: |pred AND truth| / |pred OR truth|. All
/// positive pixels count as a single object; no per-focus matching. The truth
/// mask must contain at least one positive pixel (PNI-positive cores only).
double core_iou(const BinaryMask& predicted, const BinaryMask& truth);

double mean_iou(std::span<const double> per_core_ious);

struct BootstrapConfig {
  int n = 1000;
  std::uint64_t seed = 0;
};

struct BootstrapInterval {
  double lo = 0.0;
  double hi = 0.0;
  int n_defined = 0;   // replicates whose statistic was defined
  long redraws = 0;    // single-class (or otherwise undefined) resamples redrawn
};

/// Percentile bootstrap (2.5/97.5) over cases resampled with replacement.
/// The statistic receives resampled case indices and may return nullopt
/// (e.g. a single-class resample), in which case the replicate is redrawn
/// with a fresh derived seed, up to 10 attempts per replicate (10n total).
/// More than 90% undefined replicates is an error. Replicate seeds derive
/// from (seed, replicate, attempt), so results do not depend on scheduling.
BootstrapInterval bootstrap_ci(
    std::size_t n_cases,
    const std::function<std::optional<double>(std::span<const std::size_t>)>&
        statistic,
    const BootstrapConfig& config);

/// AUC over the selected subset; nullopt when the subset is single-class.
std::optional<double> auc_of_subset(std::span<const LabeledScore> scores,
                                    std::span<const std::size_t> indices);

/// Linear-interpolation quantile (the "type 7" rule); values need not be
/// sorted.
double quantile(std::vector<double> values, double q);

// Report ---------------------------------------------------------------------

struct ClassificationReport {
  long n_positive = 0;
  long n_negative = 0;
  RocCurve roc;
  BootstrapInterval auc_ci;
  std::vector<OperatingPointRow> operating_points;
  std::vector<std::string> zero_evidence_entities;  // scored 0 with a flag
};

struct CoreIouEntry {
  std::string slide_id;
  double iou = 0.0;
};

struct SegmentationReport {
  std::vector<CoreIouEntry> per_core;
  double mean = 0.0;
  BootstrapInterval mean_ci;
};

struct MetricsReport {
  std::string config_echo_json;  // resolved pipeline config, embedded verbatim
  BootstrapConfig bootstrap;
  std::optional<ClassificationReport> slides;
  std::optional<ClassificationReport> subjects;
  std::optional<SegmentationReport> segmentation;
};

/// Deterministic JSON rendering (stable key order, shortest float forms).
std::string metrics_report_json(const MetricsReport& report);

/// CSV: threshold,fpr,tpr
void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve);

}  // namespace pnikit
