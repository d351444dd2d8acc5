#include "pnikit/scoring.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "internal/text.hpp"
#include "pnikit/error.hpp"
#include "pnikit/rng.hpp"

namespace pnikit {

void ScoreTable::add(ScoreRow row) {
  if (row.probability < 0.0 || row.probability > 1.0 ||
      !(row.probability == row.probability)) {
    fail(ErrorCode::invalid_argument,
         "score table: probability outside [0,1] for patch " + row.patch_id);
  }
  const auto [_, inserted] =
      index_[row.patch_id].emplace(row.model_id, row.probability);
  if (!inserted) {
    fail(ErrorCode::invalid_argument,
         "score table: duplicate (patch, model): " + row.patch_id + ", " +
             row.model_id);
  }
  rows_.push_back(std::move(row));
}

bool ScoreTable::contains(const std::string& patch_id,
                          const std::string& model_id) const {
  const auto it = index_.find(patch_id);
  return it != index_.end() && it->second.count(model_id) > 0;
}

double ScoreTable::probability(const std::string& patch_id,
                               const std::string& model_id) const {
  const auto it = index_.find(patch_id);
  if (it != index_.end()) {
    const auto mit = it->second.find(model_id);
    if (mit != it->second.end()) return mit->second;
  }
  fail(ErrorCode::not_found,
       "score table: no entry for (" + patch_id + ", " + model_id + ")");
}

std::vector<std::string> ScoreTable::patch_ids() const {
  std::vector<std::string> ids;
  ids.reserve(index_.size());
  for (const auto& [patch_id, _] : index_) ids.push_back(patch_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> ScoreTable::model_ids() const {
  std::set<std::string> ids;
  for (const ScoreRow& r : rows_) ids.insert(r.model_id);
  return {ids.begin(), ids.end()};
}

std::vector<double> ScoreTable::probabilities_for(
    const std::string& patch_id) const {
  const auto it = index_.find(patch_id);
  if (it == index_.end()) return {};
  std::vector<double> probs;
  probs.reserve(it->second.size());
  for (const auto& [_, p] : it->second) probs.push_back(p);
  return probs;
}

void OracleScorerConfig::validate() const {
  if (!(0.0 <= mu_neg && mu_neg <= mu_pos && mu_pos <= 1.0)) {
    fail(ErrorCode::invalid_argument,
         "oracle config: need 0 <= mu_neg <= mu_pos <= 1");
  }
  if (sigma < 0.0) {
    fail(ErrorCode::invalid_argument, "oracle config: sigma must be >= 0");
  }
}

ScoreTable oracle_score(std::span<const PatchRecord> records,
                        const OracleScorerConfig& config) {
  config.validate();
  const std::uint64_t model_seed =
      rng::derive_seed(config.seed, "oracle/" + config.model_id);
  ScoreTable table;
  for (const PatchRecord& record : records) {
    const double mu =
        record.label == PatchLabel::positive ? config.mu_pos : config.mu_neg;
    double p = mu;
    if (config.sigma > 0.0) {
      rng::SplitMix64 gen(rng::derive_seed(model_seed, record.patch_id));
      p += config.sigma * gen.next_gaussian();
    }
    table.add({record.patch_id, config.model_id,
               std::clamp(p, 0.0, 1.0)});
  }
  return table;
}

ScoreTable soft_vote(std::span<const ScoreTable> tables,
                     const std::string& ensemble_model_id) {
  if (tables.empty()) {
    fail(ErrorCode::invalid_argument, "soft_vote: no input tables");
  }
  const std::vector<std::string> patches = tables.front().patch_ids();
  for (const ScoreTable& table : tables) {
    if (table.patch_ids() != patches) {
      fail(ErrorCode::inconsistent_input,
           "soft_vote: tables cover different patch sets");
    }
  }

  // (model_id -> probability) per patch; summing in model-id order makes the
  // result independent of table order.
  std::unordered_map<std::string, std::map<std::string, double>> votes;
  for (const ScoreTable& table : tables) {
    for (const ScoreRow& r : table.rows()) {
      const auto [it, inserted] =
          votes[r.patch_id].emplace(r.model_id, r.probability);
      if (!inserted) {
        fail(ErrorCode::inconsistent_input,
             "soft_vote: model " + r.model_id +
                 " appears in multiple tables for patch " + r.patch_id);
      }
    }
  }

  ScoreTable ensemble;
  for (const std::string& patch_id : patches) {
    const auto& by_model = votes.at(patch_id);
    double sum = 0.0;
    for (const auto& [_, p] : by_model) sum += p;
    ensemble.add({patch_id, ensemble_model_id,
                  sum / static_cast<double>(by_model.size())});
  }
  return ensemble;
}

ScoreTable read_score_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      internal::strip_cr(line) != "patch_id,model_id,probability") {
    fail(ErrorCode::invalid_format, "bad score CSV header: " + path.string());
  }
  ScoreTable table;
  while (std::getline(in, line)) {
    const auto sv = internal::strip_cr(line);
    if (sv.empty()) continue;
    const auto fields = internal::split_csv_line(sv);
    if (fields.size() != 3) {
      fail(ErrorCode::invalid_format, "bad score CSV row: " + std::string(sv));
    }
    table.add({std::string(fields[0]), std::string(fields[1]),
               internal::parse_double(fields[2], "probability")});
  }
  return table;
}

void write_score_csv(const std::filesystem::path& path,
                     const ScoreTable& table) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "patch_id,model_id,probability\n";
  for (const ScoreRow& r : table.rows()) {
    out << r.patch_id << ',' << r.model_id << ','
        << internal::format_double(r.probability) << '\n';
  }
}

}  // namespace pnikit
