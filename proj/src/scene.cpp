#include "weft/scene.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace weft {

namespace {

using nlohmann::json;

Vec3 vec3_of(const json& j, const Vec3& fallback = Vec3::Zero()) {
  if (j.is_null()) return fallback;
  if (!j.is_array() || j.size() != 3) throw SceneError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

TriSoup soup_of(const json& j, const std::string& base_dir) {
  if (j.contains("obj")) {
    const std::filesystem::path p = std::filesystem::path(base_dir) / j["obj"].get<std::string>();
    return load_obj(p.string());
  }
  if (j.contains("sphere")) {
    const auto& s = j["sphere"];
    return make_uv_sphere(vec3_of(s.value("center", json())), s.value("radius", 0.1),
                          s.value("stacks", 12), s.value("slices", 18));
  }
  if (j.contains("funnel")) {
    const auto& f = j["funnel"];
    return make_funnel(vec3_of(f.value("top_center", json())), f.value("top_radius", 0.3),
                       f.value("bottom_radius", 0.08), f.value("height", 0.3), f.value("segments", 24));
  }
  if (j.contains("box")) {
    const auto& b = j["box"];
    return make_box(vec3_of(b.value("center", json())), vec3_of(b.value("half_extents", json())));
  }
  throw SceneError("mesh spec needs one of: obj, sphere, funnel, box");
}

}  // namespace

Scene parse_scene(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw SceneError(std::string("scene parse error: ") + e.what());
  }

  Scene scene;
  scene.name = j.value("name", "scene");
  scene.config.dt = j.value("dt", 1.0 / 150.0);
  scene.config.frames = j.value("frames", 100);
  scene.config.devices = j.value("devices", 1);
  scene.config.gravity = vec3_of(j.value("gravity", json()), Vec3(0, 0, -9.81));
  scene.config.wind = vec3_of(j.value("wind", json()), Vec3::Zero());
  scene.config.seed = j.value("seed", 0ull);
  const std::string precision = j.value("precision", "double");
  if (precision == "double") {
    scene.config.precision = Precision::Double;
  } else if (precision == "single") {
    scene.config.precision = Precision::Single;
  } else {
    throw SceneError("precision must be 'single' or 'double', got '" + precision + "'");
  }

  if (j.contains("material")) {
    const auto& m = j["material"];
    auto& mat = scene.config.material;
    mat.stretch_warp = m.value("stretch", mat.stretch_warp);
    mat.stretch_weft = m.value("stretch_weft", mat.stretch_warp);
    mat.shear = m.value("shear", mat.shear);
    mat.bend = m.value("bend", mat.bend);
    mat.density = m.value("density", mat.density);
    mat.damping = m.value("damping", mat.damping);
    mat.air_drag = m.value("air_drag", mat.air_drag);
  }

  if (j.contains("collision")) {
    const auto& c = j["collision"];
    scene.config.collision.thickness = c.value("thickness", scene.config.collision.thickness);
    scene.config.collision.cell_scale = c.value("cell_scale", scene.config.collision.cell_scale);
    scene.config.contact.stiffness_scale =
        c.value("contact_stiffness_scale", scene.config.contact.stiffness_scale);
    scene.config.contact.friction = c.value("friction", scene.config.contact.friction);
    scene.config.contact.clearance_fraction =
        c.value("clearance_fraction", scene.config.contact.clearance_fraction);
  }

  if (j.contains("solver")) {
    const auto& s = j["solver"];
    scene.config.solver.rel_tolerance = s.value("tolerance", scene.config.solver.rel_tolerance);
    scene.config.solver.max_iterations = s.value("max_iterations", scene.config.solver.max_iterations);
    const std::string pc = s.value("preconditioner", "block-jacobi");
    if (pc == "none") {
      scene.config.solver.preconditioner = Preconditioner::None;
    } else if (pc == "block-jacobi") {
      scene.config.solver.preconditioner = Preconditioner::BlockJacobi;
    } else {
      throw SceneError("unknown preconditioner '" + pc + "'");
    }
  }

  if (j.contains("zones")) {
    const auto& z = j["zones"];
    scene.config.zones.outer_cap = z.value("outer_cap", scene.config.zones.outer_cap);
    scene.config.zones.initial_penalty = z.value("initial_penalty", scene.config.zones.initial_penalty);
  }

  if (!j.contains("cloth")) throw SceneError("scene has no 'cloth' section");
  const auto& cj = j["cloth"];
  if (cj.contains("grid")) {
    const auto& g = cj["grid"];
    scene.cloth = make_grid_mesh(g.value("nx", 20), g.value("ny", 20), g.value("width", 0.5),
                                 g.value("height", 0.5), vec3_of(g.value("origin", json())),
                                 scene.config.material.density);
  } else if (cj.contains("obj")) {
    const std::filesystem::path p = std::filesystem::path(base_dir) / cj["obj"].get<std::string>();
    auto soup = load_obj(p.string());
    scene.cloth = ClothMesh::build(std::move(soup.vertices), std::move(soup.triangles),
                                   scene.config.material.density);
  } else {
    throw SceneError("cloth section needs 'grid' or 'obj'");
  }

  scene.pinned.assign(static_cast<std::size_t>(scene.cloth.vertex_count()), 0);
  if (cj.contains("pins")) {
    for (const auto& pin : cj["pins"]) {
      const int v = pin.get<int>();
      if (v < 0 || v >= scene.cloth.vertex_count()) throw SceneError("pin index out of range");
      scene.pinned[static_cast<std::size_t>(v)] = 1;
    }
  }
  if (cj.value("pin_top_edge", false)) {
    // Grid convention: the last row (highest y) is the top edge.
    const auto& g = cj["grid"];
    const int nx = g.value("nx", 20), ny = g.value("ny", 20);
    for (int i = 0; i < nx; ++i) scene.pinned[static_cast<std::size_t>((ny - 1) * nx + i)] = 1;
  }
  if (cj.value("pin_corners", false)) {
    const auto& g = cj["grid"];
    const int nx = g.value("nx", 20), ny = g.value("ny", 20);
    scene.pinned[static_cast<std::size_t>((ny - 1) * nx)] = 1;
    scene.pinned[static_cast<std::size_t>(ny * nx - 1)] = 1;
  }

  for (const auto& oj : j.value("obstacles", json::array())) {
    Obstacle obstacle;
    obstacle.shape = soup_of(oj, base_dir);
    for (const auto& kj : oj.value("keyframes", json::array())) {
      Obstacle::Keyframe k;
      k.time = kj.value("time", 0.0);
      k.translate = vec3_of(kj.value("translate", json()));
      k.axis = vec3_of(kj.value("rotate_axis", json()), Vec3(0, 0, 1));
      k.angle = kj.value("rotate_angle", 0.0);
      k.center = vec3_of(kj.value("rotate_center", json()));
      obstacle.keyframes.push_back(k);
    }
    scene.obstacles.push_back(std::move(obstacle));
  }
  return scene;
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open scene file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string dir = std::filesystem::path(path).parent_path().string();
  try {
    return parse_scene(buf.str(), dir.empty() ? "." : dir);
  } catch (const SceneError& e) {
    throw SceneError(path + ": " + e.what());
  }
}

void RunReport::write_csv(std::ostream& os) const {
  os << "frame,time,integrate_ms,broad_ms,narrow_ms,zones_ms,pcg_iterations,pcg_residual,"
        "proximities,contacts,impacts,zones,zone_outer,committed\n";
  os.precision(10);
  for (const auto& f : frames) {
    os << f.frame << ',' << f.time << ',' << f.integrate_ms << ',' << f.broad_ms << ',' << f.narrow_ms
       << ',' << f.zones_ms << ',' << f.pcg_iterations << ',' << f.pcg_residual << ',' << f.proximities
       << ',' << f.contacts << ',' << f.impacts << ',' << f.zone_count << ',' << f.zone_outer << ','
       << (f.committed ? 1 : 0) << '\n';
  }
}

}  // namespace weft
