#include "pnikit/aggregate.hpp"

#include <fstream>

#include "internal/text.hpp"
#include "pnikit/error.hpp"

namespace pnikit {

EntityScore slide_score(const ScoreTable& ensemble,
                        std::span<const PatchRecord> records,
                        const std::string& slide_id) {
  EntityScore result;
  result.entity_id = slide_id;
  result.level = EntityLevel::slide;

  const std::vector<std::string> models = ensemble.model_ids();
  if (models.size() != 1) {
    fail(ErrorCode::invalid_argument,
         "slide_score: expected a single-model (ensemble) table");
  }

  bool any = false;
  for (const PatchRecord& record : records) {
    if (record.slide_id != slide_id) continue;
    const double p = ensemble.probability(record.patch_id, models[0]);
    if (!any || p > result.score) {
      result.score = p;
      result.argmax_child_id = record.patch_id;
    }
    any = true;
  }
  if (!any) {
    result.score = 0.0;  // no evidence; flagged rather than silently dropped
    result.no_children = true;
  }
  return result;
}

EntityScore subject_score(std::span<const EntityScore> slide_scores,
                          const std::string& subject_id) {
  if (slide_scores.empty()) {
    fail(ErrorCode::invalid_argument,
         "subject_score: subject with zero slides: " + subject_id);
  }
  EntityScore result;
  result.entity_id = subject_id;
  result.level = EntityLevel::subject;
  bool first = true;
  for (const EntityScore& slide : slide_scores) {
    if (slide.level != EntityLevel::slide) {
      fail(ErrorCode::invalid_argument,
           "subject_score: inputs must be slide scores");
    }
    if (first || slide.score > result.score) {
      result.score = slide.score;
      result.argmax_child_id = slide.entity_id;
    }
    first = false;
  }
  return result;
}

void write_entity_scores(const std::filesystem::path& path,
                         std::span<const EntityScore> scores) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << "level,entity_id,score,argmax_child_id\n";
  for (const EntityScore& s : scores) {
    out << to_string(s.level) << ',' << s.entity_id << ','
        << internal::format_double(s.score) << ',' << s.argmax_child_id
        << '\n';
  }
}

std::vector<EntityScore> read_entity_scores(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      internal::strip_cr(line) != "level,entity_id,score,argmax_child_id") {
    fail(ErrorCode::invalid_format,
         "bad entity score header: " + path.string());
  }
  std::vector<EntityScore> scores;
  while (std::getline(in, line)) {
    const auto sv = internal::strip_cr(line);
    if (sv.empty()) continue;
    const auto fields = internal::split_csv_line(sv);
    if (fields.size() != 4) {
      fail(ErrorCode::invalid_format,
           "bad entity score row: " + std::string(sv));
    }
    EntityScore s;
    if (fields[0] == "patch") {
      s.level = EntityLevel::patch;
    } else if (fields[0] == "slide") {
      s.level = EntityLevel::slide;
    } else if (fields[0] == "subject") {
      s.level = EntityLevel::subject;
    } else {
      fail(ErrorCode::invalid_format,
           "bad entity level: " + std::string(fields[0]));
    }
    s.entity_id = std::string(fields[1]);
    s.score = internal::parse_double(fields[2], "score");
    s.argmax_child_id = std::string(fields[3]);
    scores.push_back(std::move(s));
  }
  return scores;
}

}  // namespace pnikit
