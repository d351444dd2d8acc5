#include "pnikit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "internal/text.hpp"
#include "pnikit/error.hpp"
#include "pnikit/rng.hpp"

namespace pnikit {

namespace {

void require_both_classes(long n_pos, long n_neg, const char* who) {
  if (n_pos == 0 || n_neg == 0) {
    fail(ErrorCode::degenerate_input,
         std::string(who) + ": need at least one positive and one negative");
  }
}

}  // namespace

RocCurve roc_auc(std::span<const LabeledScore> scores) {
  long n_pos = 0;
  long n_neg = 0;
  std::vector<const LabeledScore*> sorted;
  sorted.reserve(scores.size());
  for (const LabeledScore& s : scores) {
    sorted.push_back(&s);
    (s.positive ? n_pos : n_neg)++;
  }
  require_both_classes(n_pos, n_neg, "roc_auc");

  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledScore* a, const LabeledScore* b) {
              return a->score > b->score;
            });

  RocCurve curve;
  long tp = 0;
  long fp = 0;
  long prev_tp = 0;
  long prev_fp = 0;
  // Twice the area in pair units; integers keep the trapezoid sum exact and
  // identical to brute-force pair counting.
  std::int64_t area2 = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double threshold = sorted[i]->score;
    while (i < sorted.size() && sorted[i]->score == threshold) {
      (sorted[i]->positive ? tp : fp)++;
      ++i;
    }
    area2 += static_cast<std::int64_t>(fp - prev_fp) * (tp + prev_tp);
    curve.points.push_back({threshold,
                            static_cast<double>(fp) / n_neg,
                            static_cast<double>(tp) / n_pos});
    prev_tp = tp;
    prev_fp = fp;
  }
  curve.auc = static_cast<double>(area2) /
              (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return curve;
}

OperatingPointRow operating_point(std::span<const LabeledScore> scores,
                                  double threshold, bool ge) {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  for (const LabeledScore& s : scores) {
    const bool call =
        ge ? s.score >= threshold : s.score > threshold;
    if (s.positive) {
      (call ? tp : fn)++;
    } else {
      (call ? fp : tn)++;
    }
  }
  require_both_classes(tp + fn, fp + tn, "operating_point");
  return operating_point_from_counts(threshold, tp, fp, fn, tn);
}

OperatingPointRow operating_point_from_counts(double threshold, long tp,
                                              long fp, long fn, long tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0 || tp + fp + fn + tn == 0) {
    fail(ErrorCode::invalid_argument, "operating point: bad counts");
  }
  OperatingPointRow row;
  row.threshold = threshold;
  row.tp = tp;
  row.fp = fp;
  row.fn = fn;
  row.tn = tn;
  auto rate = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;  // undefined, never 0
    return static_cast<double>(num) / static_cast<double>(den);
  };
  row.sensitivity = rate(tp, tp + fn);
  row.specificity = rate(tn, tn + fp);
  row.ppv = rate(tp, tp + fp);
  row.npv = rate(tn, tn + fn);
  row.accuracy = rate(tp + tn, tp + fp + fn + tn);
  return row;
}

double core_iou(const BinaryMask& predicted, const BinaryMask& truth) {
  if (!predicted.same_shape(truth)) {
    fail(ErrorCode::invalid_argument, "core_iou: mask dim mismatch");
  }
  std::uint64_t inter = 0;
  std::uint64_t uni = 0;
  for (std::size_t i = 0; i < truth.flags.size(); ++i) {
    const bool p = predicted.flags[i] != 0;
    const bool t = truth.flags[i] != 0;
    inter += (p && t);
    uni += (p || t);
  }
  if (truth.count_set() == 0) {
    fail(ErrorCode::degenerate_input,
         "core_iou: truth mask has no positive pixels");
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_iou(std::span<const double> per_core_ious) {
  if (per_core_ious.empty()) {
    fail(ErrorCode::degenerate_input, "mean_iou: no cores");
  }
  double sum = 0.0;
  for (const double v : per_core_ious) sum += v;
  return sum / static_cast<double>(per_core_ious.size());
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    fail(ErrorCode::invalid_argument, "quantile: empty input");
  }
  if (q < 0.0 || q > 1.0) {
    fail(ErrorCode::invalid_argument, "quantile: q outside [0,1]");
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) {
    return values.back();
  }
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

BootstrapInterval bootstrap_ci(
    std::size_t n_cases,
    const std::function<std::optional<double>(std::span<const std::size_t>)>&
        statistic,
    const BootstrapConfig& config) {
  if (n_cases < 2) {
    fail(ErrorCode::invalid_argument, "bootstrap: need at least 2 cases");
  }
  if (config.n < 1) {
    fail(ErrorCode::invalid_argument, "bootstrap: n must be >= 1");
  }

  constexpr int kMaxAttemptsPerReplicate = 10;
  BootstrapInterval interval;
  std::vector<double> replicates;
  replicates.reserve(config.n);
  std::vector<std::size_t> indices(n_cases);

  for (int r = 0; r < config.n; ++r) {
    std::optional<double> value;
    for (int attempt = 0; attempt < kMaxAttemptsPerReplicate; ++attempt) {
      rng::SplitMix64 gen(rng::derive_seed(
          config.seed, "bootstrap",
          static_cast<std::uint64_t>(r) * kMaxAttemptsPerReplicate + attempt));
      for (std::size_t i = 0; i < n_cases; ++i) {
        indices[i] = static_cast<std::size_t>(gen.next_below(n_cases));
      }
      value = statistic(indices);
      if (value.has_value()) {
        if (attempt > 0) interval.redraws += attempt;
        break;
      }
    }
    if (value.has_value()) {
      replicates.push_back(*value);
    } else {
      interval.redraws += kMaxAttemptsPerReplicate;
    }
  }

  interval.n_defined = static_cast<int>(replicates.size());
  if (replicates.size() * 10 < static_cast<std::size_t>(config.n)) {
    fail(ErrorCode::degenerate_input,
         "bootstrap: statistic undefined on more than 90% of resamples");
  }
  interval.lo = quantile(replicates, 0.025);
  interval.hi = quantile(replicates, 0.975);
  return interval;
}

std::optional<double> auc_of_subset(std::span<const LabeledScore> scores,
                                    std::span<const std::size_t> indices) {
  std::vector<LabeledScore> subset;
  subset.reserve(indices.size());
  bool any_pos = false;
  bool any_neg = false;
  for (const std::size_t i : indices) {
    subset.push_back(scores[i]);
    (scores[i].positive ? any_pos : any_neg) = true;
  }
  if (!any_pos || !any_neg) {
    return std::nullopt;
  }
  return roc_auc(subset).auc;
}

namespace {

nlohmann::ordered_json rate_json(const std::optional<double>& rate) {
  if (!rate.has_value()) return nullptr;
  return *rate;
}

nlohmann::ordered_json interval_json(const BootstrapInterval& ci) {
  return {{"lo", ci.lo},
          {"hi", ci.hi},
          {"n_defined", ci.n_defined},
          {"redraws", ci.redraws}};
}

nlohmann::ordered_json classification_json(const ClassificationReport& rep) {
  nlohmann::ordered_json roc = nlohmann::ordered_json::array();
  for (const RocPoint& p : rep.roc.points) {
    roc.push_back({{"threshold", p.threshold}, {"fpr", p.fpr}, {"tpr", p.tpr}});
  }
  nlohmann::ordered_json ops = nlohmann::ordered_json::array();
  for (const OperatingPointRow& row : rep.operating_points) {
    ops.push_back({{"threshold", row.threshold},
                   {"tp", row.tp},
                   {"fp", row.fp},
                   {"fn", row.fn},
                   {"tn", row.tn},
                   {"sensitivity", rate_json(row.sensitivity)},
                   {"specificity", rate_json(row.specificity)},
                   {"ppv", rate_json(row.ppv)},
                   {"npv", rate_json(row.npv)},
                   {"accuracy", rate_json(row.accuracy)}});
  }
  return {{"n_positive", rep.n_positive},
          {"n_negative", rep.n_negative},
          {"auc", rep.roc.auc},
          {"auc_ci", interval_json(rep.auc_ci)},
          {"operating_points", ops},
          {"zero_evidence_entities", rep.zero_evidence_entities},
          {"roc", roc}};
}

}  // namespace

std::string metrics_report_json(const MetricsReport& report) {
  nlohmann::ordered_json doc;
  if (report.config_echo_json.empty()) {
    doc["config"] = nullptr;
  } else {
    try {
      doc["config"] = nlohmann::ordered_json::parse(report.config_echo_json);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::invalid_argument,
           std::string("metrics report: config echo is not JSON: ") +
               e.what());
    }
  }
  doc["bootstrap"] = {{"n", report.bootstrap.n},
                      {"seed", report.bootstrap.seed}};
  doc["slides"] = report.slides
                      ? classification_json(*report.slides)
                      : nlohmann::ordered_json(nullptr);
  doc["subjects"] = report.subjects
                        ? classification_json(*report.subjects)
                        : nlohmann::ordered_json(nullptr);
  if (report.segmentation) {
    nlohmann::ordered_json cores = nlohmann::ordered_json::array();
    for (const CoreIouEntry& entry : report.segmentation->per_core) {
      cores.push_back({{"slide_id", entry.slide_id}, {"iou", entry.iou}});
    }
    doc["segmentation"] = {
        {"n_cores", report.segmentation->per_core.size()},
        {"mean_iou", report.segmentation->mean},
        {"mean_iou_ci", interval_json(report.segmentation->mean_ci)},
        {"per_core", cores}};
  } else {
    doc["segmentation"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "threshold,fpr,tpr\n";
  for (const RocPoint& p : curve.points) {
    out << internal::format_double(p.threshold) << ','
        << internal::format_double(p.fpr) << ','
        << internal::format_double(p.tpr) << '\n';
  }
}

}  // namespace pnikit
