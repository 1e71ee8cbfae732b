#include "weft/mesh.hpp"

#include "weft/elements.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace weft {

namespace {

constexpr double kAreaEpsilon = 1e-12;

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

// Mixed Voronoi vertex areas (Meyer et al.): cotangent weights on
// non-obtuse triangles, area/2 at the obtuse corner and area/4 elsewhere.
std::vector<double> voronoi_areas(const std::vector<Vec3>& x,
                                  const std::vector<std::array<int, 3>>& tris) {
  std::vector<double> area(x.size(), 0.0);
  for (const auto& t : tris) {
    const Vec3& a = x[static_cast<std::size_t>(t[0])];
    const Vec3& b = x[static_cast<std::size_t>(t[1])];
    const Vec3& c = x[static_cast<std::size_t>(t[2])];
    const double full = triangle_area(a, b, c);
    if (full < kAreaEpsilon) continue;

    auto corner_cos = [](const Vec3& tip, const Vec3& p, const Vec3& q) {
      const Vec3 u = p - tip;
      const Vec3 v = q - tip;
      return u.dot(v) / (u.norm() * v.norm());
    };
    const double ca = corner_cos(a, b, c);
    const double cb = corner_cos(b, c, a);
    const double cc = corner_cos(c, a, b);

    if (ca < 0.0 || cb < 0.0 || cc < 0.0) {
      for (int k = 0; k < 3; ++k) {
        const double cos_k = k == 0 ? ca : (k == 1 ? cb : cc);
        area[static_cast<std::size_t>(t[static_cast<std::size_t>(k)])] += cos_k < 0.0 ? full / 2.0 : full / 4.0;
      }
      continue;
    }

    auto cot = [](double cos_v) { return cos_v / std::sqrt(std::max(1e-16, 1.0 - cos_v * cos_v)); };
    const double la2 = (b - c).squaredNorm();  // edge opposite a
    const double lb2 = (c - a).squaredNorm();
    const double lc2 = (a - b).squaredNorm();
    area[static_cast<std::size_t>(t[0])] += (lb2 * cot(cb) + lc2 * cot(cc)) / 8.0;
    area[static_cast<std::size_t>(t[1])] += (lc2 * cot(cc) + la2 * cot(ca)) / 8.0;
    area[static_cast<std::size_t>(t[2])] += (la2 * cot(ca) + lb2 * cot(cb)) / 8.0;
  }
  return area;
}

ClothMesh::TriRest triangle_rest(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
  ClothMesh::TriRest rest;
  rest.area = triangle_area(r0, r1, r2);
  if (rest.area < kAreaEpsilon) {
    rest.degenerate = true;
    return rest;
  }
  // Material-space frame: u along the first edge, v perpendicular in-plane.
  const Vec3 e1 = r1 - r0;
  const Vec3 e2 = r2 - r0;
  const double u1 = e1.norm();
  const Vec3 u_hat = e1 / u1;
  const double u2 = e2.dot(u_hat);
  const double v2 = (e2 - u2 * u_hat).norm();

  // [w_u w_v] = [x1-x0, x2-x0] * D^{-1}, D = [[u1, u2], [0, v2]].
  const double det = u1 * v2;
  const double a = v2 / det, b = -u2 / det;
  const double c = 0.0, d = u1 / det;
  rest.pwu = {-a - c, a, c};
  rest.pwv = {-b - d, b, d};
  return rest;
}

void compute_rest_data(ClothMesh& mesh) {
  mesh.tri_rest.clear();
  mesh.degenerate_triangles = 0;
  for (const auto& t : mesh.triangles) {
    auto rest = triangle_rest(mesh.rest_positions[static_cast<std::size_t>(t[0])],
                              mesh.rest_positions[static_cast<std::size_t>(t[1])],
                              mesh.rest_positions[static_cast<std::size_t>(t[2])]);
    if (rest.degenerate) mesh.degenerate_triangles += 1;
    mesh.tri_rest.push_back(rest);
  }

  // Edge map: sorted vertex pair -> incident triangles + opposite vertices.
  std::map<std::array<int, 2>, std::vector<std::pair<int, int>>> edge_map;
  for (int ti = 0; ti < mesh.triangle_count(); ++ti) {
    const auto& t = mesh.triangles[static_cast<std::size_t>(ti)];
    for (int k = 0; k < 3; ++k) {
      int a = t[static_cast<std::size_t>(k)];
      int b = t[static_cast<std::size_t>((k + 1) % 3)];
      const int opp = t[static_cast<std::size_t>((k + 2) % 3)];
      if (a > b) std::swap(a, b);
      edge_map[{a, b}].emplace_back(ti, opp);
    }
  }

  mesh.edges.clear();
  mesh.hinges.clear();
  for (const auto& [edge, incident] : edge_map) {
    mesh.edges.push_back(edge);
    if (incident.size() != 2) continue;
    const auto& [t0, opp0] = incident[0];
    const auto& [t1, opp1] = incident[1];
    if (mesh.tri_rest[static_cast<std::size_t>(t0)].degenerate ||
        mesh.tri_rest[static_cast<std::size_t>(t1)].degenerate) {
      continue;
    }
    ClothMesh::Hinge h;
    h.verts = {edge[0], edge[1], opp0, opp1};
    h.rest_angle = dihedral_angle(mesh.rest_positions[static_cast<std::size_t>(edge[0])],
                                  mesh.rest_positions[static_cast<std::size_t>(edge[1])],
                                  mesh.rest_positions[static_cast<std::size_t>(opp0)],
                                  mesh.rest_positions[static_cast<std::size_t>(opp1)]);
    const double e2 = (mesh.rest_positions[static_cast<std::size_t>(edge[1])] -
                       mesh.rest_positions[static_cast<std::size_t>(edge[0])])
                          .squaredNorm();
    const double areas = mesh.tri_rest[static_cast<std::size_t>(t0)].area +
                         mesh.tri_rest[static_cast<std::size_t>(t1)].area;
    h.stiffness_scale = 3.0 * e2 / std::max(areas, kAreaEpsilon);
    mesh.hinges.push_back(h);
  }

  mesh.vertex_area = voronoi_areas(mesh.rest_positions, mesh.triangles);
}

}  // namespace

ClothMesh ClothMesh::build(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> tris,
                           double density) {
  if (density <= 0.0) throw SceneError("cloth density must be positive");
  ClothMesh mesh;
  mesh.rest_positions = std::move(vertices);
  mesh.triangles = std::move(tris);
  const int p = mesh.vertex_count();
  for (const auto& t : mesh.triangles) {
    for (int v : t) {
      if (v < 0 || v >= p) throw SceneError("triangle vertex index out of range");
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw SceneError("triangle with repeated vertex");
  }

  // Manifold check: an edge may border at most two triangles.
  std::map<std::array<int, 2>, int> edge_use;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      int a = t[static_cast<std::size_t>(k)];
      int b = t[static_cast<std::size_t>((k + 1) % 3)];
      if (a > b) std::swap(a, b);
      if (++edge_use[{a, b}] > 2) throw SceneError("non-manifold edge in cloth mesh");
    }
  }

  compute_rest_data(mesh);
  mesh.vertex_mass.resize(static_cast<std::size_t>(p));
  for (int v = 0; v < p; ++v) {
    mesh.vertex_mass[static_cast<std::size_t>(v)] = density * mesh.vertex_area[static_cast<std::size_t>(v)];
    if (mesh.vertex_mass[static_cast<std::size_t>(v)] <= 0.0) {
      throw SceneError("vertex " + std::to_string(v) + " has zero mass (isolated or degenerate)");
    }
  }
  return mesh;
}

ClothMesh ClothMesh::from_raw(std::vector<Vec3> vertices, std::vector<std::array<int, 3>> tris,
                              std::vector<double> masses) {
  ClothMesh mesh;
  mesh.rest_positions = std::move(vertices);
  mesh.triangles = std::move(tris);
  compute_rest_data(mesh);
  mesh.vertex_mass = std::move(masses);
  return mesh;
}

ClothMesh make_grid_mesh(int nx, int ny, double width, double height, const Vec3& origin,
                         double density) {
  if (nx < 2 || ny < 2) throw SceneError("grid mesh needs at least 2x2 vertices");
  std::vector<Vec3> verts;
  verts.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      verts.push_back(origin + Vec3(width * i / (nx - 1), height * j / (ny - 1), 0.0));
    }
  }
  std::vector<std::array<int, 3>> tris;
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      // Alternate the quad diagonal for a less biased bending pattern.
      if ((i + j) % 2 == 0) {
        tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      } else {
        tris.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
        tris.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      }
    }
  }
  return ClothMesh::build(std::move(verts), std::move(tris), density);
}

TriSoup make_uv_sphere(const Vec3& center, double radius, int stacks, int slices) {
  TriSoup s;
  s.vertices.push_back(center + Vec3(0, 0, radius));
  for (int i = 1; i < stacks; ++i) {
    const double phi = M_PI * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double theta = 2.0 * M_PI * j / slices;
      s.vertices.push_back(center + radius * Vec3(std::sin(phi) * std::cos(theta),
                                                  std::sin(phi) * std::sin(theta), std::cos(phi)));
    }
  }
  s.vertices.push_back(center + Vec3(0, 0, -radius));
  const int bottom = static_cast<int>(s.vertices.size()) - 1;
  auto ring = [slices](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) s.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i) {
    for (int j = 0; j < slices; ++j) {
      s.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      s.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  }
  for (int j = 0; j < slices; ++j) s.triangles.push_back({bottom, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return s;
}

TriSoup make_funnel(const Vec3& top_center, double top_radius, double bottom_radius, double height,
                    int segments) {
  // Cone plus a short vertical collar below the neck, so cloth exits along
  // a wall instead of wrapping a bare rim edge.
  TriSoup s;
  const double collar = 0.35 * height;
  auto add_ring = [&](double radius, double z) {
    for (int j = 0; j < segments; ++j) {
      const double theta = 2.0 * M_PI * j / segments;
      s.vertices.push_back(top_center + Vec3(radius * std::cos(theta), radius * std::sin(theta), z));
    }
  };
  add_ring(top_radius, 0.0);
  add_ring(bottom_radius, -height);
  add_ring(bottom_radius, -height - collar);
  auto ring = [segments](int r, int j) { return r * segments + (j % segments); };
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < segments; ++j) {
      s.triangles.push_back({ring(r, j), ring(r, j + 1), ring(r + 1, j)});
      s.triangles.push_back({ring(r, j + 1), ring(r + 1, j + 1), ring(r + 1, j)});
    }
  }
  return s;
}

TriSoup make_box(const Vec3& center, const Vec3& half) {
  TriSoup s;
  for (int i = 0; i < 8; ++i) {
    s.vertices.push_back(center + Vec3((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(),
                                       (i & 4) ? half.z() : -half.z()));
  }
  const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : faces) {
    s.triangles.push_back({f[0], f[1], f[2]});
    s.triangles.push_back({f[0], f[2], f[3]});
  }
  return s;
}

TriSoup load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SceneError("cannot open mesh file: " + path);
  TriSoup soup;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) {
        throw SceneError(path + ":" + std::to_string(line_no) + ": malformed vertex record");
      }
      soup.vertices.push_back({x, y, z});
    } else if (tag == "f") {
      std::vector<int> ids;
      std::string item;
      while (ls >> item) {
        // Accept "i", "i/t", "i/t/n" forms; only the vertex index is used.
        const int v = std::atoi(item.c_str());
        if (v == 0) throw SceneError(path + ":" + std::to_string(line_no) + ": malformed face record");
        ids.push_back(v > 0 ? v - 1 : static_cast<int>(soup.vertices.size()) + v);
      }
      if (ids.size() < 3) throw SceneError(path + ":" + std::to_string(line_no) + ": face with <3 vertices");
      for (std::size_t k = 1; k + 1 < ids.size(); ++k) {
        soup.triangles.push_back({ids[0], ids[k], ids[k + 1]});
      }
    }
  }
  for (const auto& t : soup.triangles) {
    for (int v : t) {
      if (v < 0 || v >= static_cast<int>(soup.vertices.size())) {
        throw SceneError(path + ": face index out of range");
      }
    }
  }
  return soup;
}

void save_obj(std::ostream& os, const std::vector<Vec3>& positions,
              const std::vector<std::array<int, 3>>& triangles) {
  char buf[128];
  for (const auto& p : positions) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    os << buf;
  }
  for (const auto& t : triangles) {
    os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

void save_obj(const std::string& path, const std::vector<Vec3>& positions,
              const std::vector<std::array<int, 3>>& triangles) {
  std::ofstream out(path);
  if (!out) throw SceneError("cannot write mesh file: " + path);
  save_obj(out, positions, triangles);
}

}  // namespace weft
