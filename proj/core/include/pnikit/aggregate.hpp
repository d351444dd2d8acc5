#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pnikit/scoring.hpp"

namespace pnikit {

enum class EntityLevel { patch, slide, subject };

inline const char* to_string(EntityLevel level) {
  switch (level) {
    case EntityLevel::patch: return "patch";
    case EntityLevel::slide: return "slide";
    case EntityLevel::subject: return "subject";
  }
  return "?";
}

/// Max-pooled score with the child that produced it, for explainability.
struct EntityScore {
  std::string entity_id;
  EntityLevel level = EntityLevel::slide;
  double score = 0.0;
  std::string argmax_child_id;
  bool no_children = false;  // zero qualifying patches; score forced to 0
};

/// Slide score = max over its patches' ensemble probabilities. A slide with
/// zero scored patches (no tissue survived the filters) scores 0.0 with the
/// no_children flag set. Every patch of the slide must be present in the
/// ensemble table.
EntityScore slide_score(const ScoreTable& ensemble,
                        std::span<const PatchRecord> records,
                        const std::string& slide_id);

/// Subject score = max over the subject's slide scores. Zero slides is an
/// error; slides are deduplicated upstream.
EntityScore subject_score(std::span<const EntityScore> slide_scores,
                          const std::string& subject_id);

/// CSV: level,entity_id,score,argmax_child_id
void write_entity_scores(const std::filesystem::path& path,
                         std::span<const EntityScore> scores);
std::vector<EntityScore> read_entity_scores(const std::filesystem::path& path);

}  // namespace pnikit
