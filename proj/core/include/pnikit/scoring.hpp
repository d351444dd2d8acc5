#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pnikit/tiler.hpp"

namespace pnikit {

struct ScoreRow {
  std::string patch_id;
  std::string model_id;
  double probability = 0.0;
};

/// Patch-level probabilities, unique per (patch_id, model_id), probabilities
/// in [0,1]. Immutable in spirit: build it, then read it.
class ScoreTable {
 public:
  void add(ScoreRow row);

  const std::vector<ScoreRow>& rows() const { return rows_; }
  bool contains(const std::string& patch_id,
                const std::string& model_id) const;
  double probability(const std::string& patch_id,
                     const std::string& model_id) const;

  /// Sorted unique patch ids.
  std::vector<std::string> patch_ids() const;
  /// Sorted unique model ids.
  std::vector<std::string> model_ids() const;

  /// All probabilities recorded for one patch, ordered by model id.
  std::vector<double> probabilities_for(const std::string& patch_id) const;

 private:
  std::vector<ScoreRow> rows_;
  // patch -> (model -> probability); model-id order fixed by the map.
  std::unordered_map<std::string, std::map<std::string, double>> index_;
};

/// Ground-truth-conditioned scorer standing in for the external networks:
/// probability = clamp(mu_label + N(0, sigma), 0, 1). Noise is derived from
/// (seed, model_id, patch_id), so tables are identical however the records
/// are ordered or parallelized.
struct OracleScorerConfig {
  double mu_pos = 0.9;
  double mu_neg = 0.1;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string model_id = "oracle-0";

  void validate() const;
};

ScoreTable oracle_score(std::span<const PatchRecord> records,
                        const OracleScorerConfig& config);

/// Soft voting: the ensemble probability of a patch is the arithmetic mean of
/// all member probabilities. Every input table must cover the identical patch
/// set. Contributions are summed in model-id order, so the result does not
/// depend on table order.
ScoreTable soft_vote(std::span<const ScoreTable> tables,
                     const std::string& ensemble_model_id = "ensemble");

/// CSV with header patch_id,model_id,probability. This is the sole contract
/// external models have to satisfy.
ScoreTable read_score_csv(const std::filesystem::path& path);
void write_score_csv(const std::filesystem::path& path,
                     const ScoreTable& table);

}  // namespace pnikit
