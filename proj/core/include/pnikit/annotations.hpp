#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace pnikit {

/// Closed polygon in level-0 pixel coordinates. The last vertex connects back
/// to the first implicitly.
struct Polygon {
  std::vector<std::array<double, 2>> points;
};

/// Pixel-wise lesion annotations for one slide. Only class "PNI" exists in
/// this pipeline; the JSON format records the class per polygon.
struct AnnotationSet {
  std::string slide_id;
  std::vector<Polygon> polygons;

  /// Each polygon needs >= 3 vertices.
  void validate() const;
};

AnnotationSet read_annotations(const std::filesystem::path& path);
void write_annotations(const std::filesystem::path& path,
                       const AnnotationSet& annotations);

}  // namespace pnikit
