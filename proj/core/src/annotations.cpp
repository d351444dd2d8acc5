#include "pnikit/annotations.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "pnikit/error.hpp"

namespace pnikit {

void AnnotationSet::validate() const {
  if (slide_id.empty()) {
    fail(ErrorCode::invalid_format, "annotations: empty slide_id");
  }
  for (const Polygon& poly : polygons) {
    if (poly.points.size() < 3) {
      fail(ErrorCode::invalid_format,
           "annotations: polygon with fewer than 3 vertices");
    }
  }
}

AnnotationSet read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format,
         "bad JSON in " + path.string() + ": " + e.what());
  }

  AnnotationSet set;
  try {
    set.slide_id = doc.at("slide_id").get<std::string>();
    for (const auto& poly : doc.at("polygons")) {
      if (poly.at("class").get<std::string>() != "PNI") {
        fail(ErrorCode::invalid_format,
             "annotations: unsupported class in " + path.string());
      }
      Polygon polygon;
      for (const auto& pt : poly.at("points")) {
        polygon.points.push_back(
            {pt.at(0).get<double>(), pt.at(1).get<double>()});
      }
      set.polygons.push_back(std::move(polygon));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_format,
         "bad annotation schema in " + path.string() + ": " + e.what());
  }
  set.validate();
  return set;
}

void write_annotations(const std::filesystem::path& path,
                       const AnnotationSet& annotations) {
  annotations.validate();
  nlohmann::ordered_json polygons = nlohmann::ordered_json::array();
  for (const Polygon& poly : annotations.polygons) {
    nlohmann::ordered_json points = nlohmann::ordered_json::array();
    for (const auto& pt : poly.points) {
      points.push_back({pt[0], pt[1]});
    }
    polygons.push_back({{"class", "PNI"}, {"points", points}});
  }
  const nlohmann::ordered_json doc = {
      {"slide_id", annotations.slide_id},
      {"polygons", polygons},
  };
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

}  // namespace pnikit
