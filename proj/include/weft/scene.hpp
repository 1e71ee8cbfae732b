#pragma once

#include "weft/driver.hpp"

#include <string>

namespace weft {

struct Scene {
  std::string name;
  ClothMesh cloth;
  std::vector<std::uint8_t> pinned;
  std::vector<Obstacle> obstacles;
  SimConfig config;
};

/// Parses a JSON scene file. Mesh sources are either inline generators
/// ("grid", "sphere", "funnel", "box") or OBJ paths resolved relative to
/// the scene file. Throws SceneError with file/line context on bad input.
Scene load_scene(const std::string& path);

/// Same, from an in-memory JSON string (tests).
Scene parse_scene(const std::string& json_text, const std::string& base_dir = ".");

struct RunReport {
  std::vector<FrameReport> frames;
  double wall_seconds = 0.0;
  int devices = 1;

  void write_csv(std::ostream& os) const;
};

}  // namespace weft
