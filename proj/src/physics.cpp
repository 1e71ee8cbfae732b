#include "weft/physics.hpp"

namespace weft {

std::vector<AssemblyElement> build_elements(const ClothMesh& mesh, const MaterialParams& params,
                                            const Vec3& gravity, const Vec3& wind,
                                            ElementBuildReport* report) {
  std::vector<AssemblyElement> out;
  out.reserve(mesh.triangles.size() + mesh.hinges.size() + mesh.rest_positions.size());
  int skipped = 0;

  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& rest = mesh.tri_rest[static_cast<std::size_t>(t)];
    if (rest.degenerate) {
      ++skipped;
      continue;
    }
    AssemblyElement e;
    e.kind = ElementKind::Stretch;
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    e.stencil = {tri[0], tri[1], tri[2], -1};
    e.stencil_size = 3;
    e.damping = params.damping;
    StretchData s;
    s.pwu = rest.pwu;
    s.pwv = rest.pwv;
    s.area = rest.area;
    s.k_warp = params.stretch_warp;
    s.k_weft = params.stretch_weft;
    s.k_shear = params.shear;
    e.data = s;
    out.push_back(e);
  }

  for (const auto& h : mesh.hinges) {
    AssemblyElement e;
    e.kind = ElementKind::Bend;
    e.stencil = h.verts;
    e.stencil_size = 4;
    e.damping = params.damping;
    BendData b;
    b.rest_angle = h.rest_angle;
    b.stiffness = params.bend * h.stiffness_scale;
    e.data = b;
    out.push_back(e);
  }

  for (int v = 0; v < mesh.vertex_count(); ++v) {
    AssemblyElement e;
    e.kind = ElementKind::External;
    e.stencil = {v, -1, -1, -1};
    e.stencil_size = 1;
    ExternalData f;
    f.force = mesh.vertex_mass[static_cast<std::size_t>(v)] * gravity +
              mesh.vertex_area[static_cast<std::size_t>(v)] * wind;
    f.drag = params.air_drag * mesh.vertex_area[static_cast<std::size_t>(v)];
    e.data = f;
    out.push_back(e);
  }

  if (report != nullptr) report->skipped_degenerate = skipped;
  return out;
}

}  // namespace weft
