#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle/physics_oracle.hpp"
#include "weft/elements.hpp"
#include "weft/physics.hpp"

using namespace weft;

namespace {

AssemblyElement random_spring(oracle::Rng& rng, int a, int b) {
  AssemblyElement e;
  e.kind = ElementKind::Spring;
  e.stencil = {a, b, -1, -1};
  e.stencil_size = 2;
  e.data = SpringData{rng.uniform(0.2, 1.0), rng.uniform(10.0, 500.0)};
  return e;
}

AssemblyElement random_stretch(oracle::Rng& rng, std::vector<Vec3>& x) {
  // Rest triangle with decent area, current positions perturbed around it.
  Vec3 r0 = rng.vec3(-0.2, 0.2);
  Vec3 r1 = r0 + Vec3(rng.uniform(0.3, 0.8), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
  Vec3 r2 = r0 + Vec3(rng.uniform(-0.1, 0.1), rng.uniform(0.3, 0.8), rng.uniform(-0.1, 0.1));
  auto mesh = ClothMesh::from_raw({r0, r1, r2}, {{0, 1, 2}}, {1, 1, 1});

  AssemblyElement e;
  e.kind = ElementKind::Stretch;
  e.stencil = {0, 1, 2, -1};
  e.stencil_size = 3;
  StretchData s;
  s.pwu = mesh.tri_rest[0].pwu;
  s.pwv = mesh.tri_rest[0].pwv;
  s.area = mesh.tri_rest[0].area;
  s.k_warp = rng.uniform(50.0, 400.0);
  s.k_weft = rng.uniform(50.0, 400.0);
  s.k_shear = rng.uniform(10.0, 100.0);
  e.data = s;

  x = {r0 + rng.vec3(-0.08, 0.08), r1 + rng.vec3(-0.08, 0.08), r2 + rng.vec3(-0.08, 0.08)};
  return e;
}

AssemblyElement random_bend(oracle::Rng& rng, std::vector<Vec3>& x) {
  AssemblyElement e;
  e.kind = ElementKind::Bend;
  e.stencil = {0, 1, 2, 3};
  e.stencil_size = 4;
  e.data = BendData{rng.uniform(-0.5, 0.5), rng.uniform(1e-4, 1e-2)};
  x = {Vec3(0, 0, 0) + rng.vec3(-0.05, 0.05), Vec3(1, 0, 0) + rng.vec3(-0.05, 0.05),
       Vec3(0.5, 0.8, 0) + rng.vec3(-0.3, 0.3), Vec3(0.5, -0.8, 0) + rng.vec3(-0.3, 0.3)};
  return e;
}

AssemblyElement random_contact(oracle::Rng& rng, std::vector<Vec3>& x) {
  AssemblyElement e;
  e.kind = ElementKind::Contact;
  e.stencil = {0, 1, 2, 3};
  e.stencil_size = 4;
  ContactData c;
  c.normal = rng.vec3(-1, 1).normalized();
  const double w1 = rng.uniform(0.1, 0.8);
  const double w2 = rng.uniform(0.1, 1.0 - w1);
  c.w = {1.0, -w1, -w2, -(1.0 - w1 - w2)};
  c.activation = 0.01;
  c.stiffness = rng.uniform(100.0, 1000.0);
  c.friction = 0.0;
  // place the stencil so the element is active (gap < activation) with
  // margin, away from the activation kink where the force is not smooth.
  x = {rng.vec3(-0.2, 0.2), rng.vec3(-0.2, 0.2), rng.vec3(-0.2, 0.2), rng.vec3(-0.2, 0.2)};
  double gap = 0.0;
  for (int i = 0; i < 4; ++i) gap += c.w[static_cast<std::size_t>(i)] * c.normal.dot(x[static_cast<std::size_t>(i)]);
  c.bias = 0.004 - gap;  // resulting gap = 0.4 * activation
  e.data = c;
  return e;
}

}  // namespace

TEST_CASE("dihedral angle gradient matches finite differences of the angle") {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vec3> x = {rng.vec3(-0.1, 0.1), Vec3(1, 0, 0) + rng.vec3(-0.1, 0.1),
                           Vec3(0.5, 0.9, 0) + rng.vec3(-0.4, 0.4), Vec3(0.5, -0.9, 0) + rng.vec3(-0.4, 0.4)};
    const auto grad = dihedral_angle_gradient(x[0], x[1], x[2], x[3]);
    const double h = 1e-6;
    double max_err = 0.0;
    for (int j = 0; j < 12; ++j) {
      auto xp = x;
      auto xm = x;
      xp[static_cast<std::size_t>(j / 3)][j % 3] += h;
      xm[static_cast<std::size_t>(j / 3)][j % 3] -= h;
      const double fd = (dihedral_angle(xp[0], xp[1], xp[2], xp[3]) - dihedral_angle(xm[0], xm[1], xm[2], xm[3])) /
                        (2.0 * h);
      max_err = std::max(max_err, std::abs(fd - grad[static_cast<std::size_t>(j / 3)][j % 3]));
    }
    CAPTURE(trial);
    CHECK(max_err < 1e-6);
  }
}

TEST_CASE("flat hinge has zero angle, symmetric fold has the expected sign") {
  const Vec3 x0(0, 0, 0), x1(1, 0, 0), x2(0.5, 1, 0), x3(0.5, -1, 0);
  CHECK(dihedral_angle(x0, x1, x2, x3) == doctest::Approx(0.0));
  CHECK(dihedral_angle(x0, x1, x2 + Vec3(0, 0, 0.2), x3) < 0.0);
}

TEST_CASE("force Jacobians match central finite differences") {
  oracle::Rng rng(12);
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    std::vector<Vec3> x;
    AssemblyElement e;
    switch (trial % 4) {
      case 0:
        e = random_stretch(rng, x);
        break;
      case 1:
        e = random_bend(rng, x);
        break;
      case 2:
        e = random_contact(rng, x);
        break;
      default:
        e = random_spring(rng, 0, 1);
        x = {rng.vec3(-0.5, 0.5), rng.vec3(-0.5, 0.5)};
        break;
    }
    CAPTURE(trial);
    CHECK(oracle::jacobian_fd_error(e, x, 1e-6) < 1e-4);
    ++checked;
  }
  CHECK(checked == 150);
}

TEST_CASE("internal element Jacobian blocks satisfy block(a,b) = block(b,a)^T") {
  oracle::Rng rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<Vec3> x;
    AssemblyElement e;
    if (trial % 3 == 0) e = random_stretch(rng, x);
    else if (trial % 3 == 1) e = random_bend(rng, x);
    else {
      e = random_spring(rng, 0, 1);
      x = {rng.vec3(-0.5, 0.5), rng.vec3(-0.5, 0.5)};
    }
    for (JacobianMode mode : {JacobianMode::Exact, JacobianMode::SpdProjected}) {
      const auto jac = element_jacobian(e, x, mode);
      for (int a = 0; a < e.stencil_size; ++a) {
        for (int b = 0; b < e.stencil_size; ++b) {
          const Mat3 diff = jac.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] -
                            jac.block[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)].transpose();
          CHECK(diff.cwiseAbs().maxCoeff() < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("a triangle at rest produces no internal force") {
  auto mesh = make_grid_mesh(2, 2, 0.4, 0.4, Vec3(0, 0, 0), 0.2);
  const auto elements = build_elements(mesh, MaterialParams{}, Vec3::Zero(), Vec3::Zero());
  for (const auto& e : elements) {
    const auto f = element_force(e, mesh.rest_positions);
    for (int a = 0; a < e.stencil_size; ++a) {
      CHECK(f.f[static_cast<std::size_t>(a)].norm() < 1e-10);
    }
  }
}

TEST_CASE("rigid translation leaves internal forces unchanged") {
  oracle::Rng rng(14);
  auto mesh = oracle::random_cloth(rng, 5);
  std::vector<Vec3> x = mesh.rest_positions;
  for (auto& p : x) p += rng.vec3(-0.05, 0.05);  // deform
  const auto elements = build_elements(mesh, MaterialParams{}, Vec3::Zero(), Vec3::Zero());

  const Vec3 shift = rng.vec3(-5.0, 5.0);
  std::vector<Vec3> xs = x;
  for (auto& p : xs) p += shift;

  for (const auto& e : elements) {
    if (e.kind == ElementKind::External) continue;
    const auto f0 = element_force(e, x);
    const auto f1 = element_force(e, xs);
    for (int a = 0; a < e.stencil_size; ++a) {
      CHECK((f0.f[static_cast<std::size_t>(a)] - f1.f[static_cast<std::size_t>(a)]).norm() <= 1e-10);
    }
  }
}

TEST_CASE("spring extended by 10% pulls back with k * strain * rest_length") {
  AssemblyElement e;
  e.kind = ElementKind::Spring;
  e.stencil = {0, 1, -1, -1};
  e.stencil_size = 2;
  const double rest = 0.5, k = 120.0;
  e.data = SpringData{rest, k};
  std::vector<Vec3> x = {Vec3(0, 0, 0), Vec3(1.1 * rest, 0, 0)};
  const auto f = element_force(e, x);
  CHECK(f.f[0].x() == doctest::Approx(k * 0.1 * rest).epsilon(1e-12));
  CHECK(f.f[1].x() == doctest::Approx(-k * 0.1 * rest).epsilon(1e-12));
  CHECK(f.f[0].y() == 0.0);
  CHECK(f.f[0].z() == 0.0);
}

TEST_CASE("gravity element carries m*g and no Jacobian") {
  auto mesh = make_grid_mesh(3, 3, 0.3, 0.3, Vec3(0, 0, 0), 0.25);
  const Vec3 g(0, 0, -9.81);
  const auto elements = build_elements(mesh, MaterialParams{}, g, Vec3::Zero());
  int externals = 0;
  for (const auto& e : elements) {
    if (e.kind != ElementKind::External) continue;
    ++externals;
    const int v = e.stencil[0];
    const auto f = element_force(e, mesh.rest_positions);
    CHECK((f.f[0] - mesh.vertex_mass[static_cast<std::size_t>(v)] * g).norm() < 1e-14);
    const auto jac = element_jacobian(e, mesh.rest_positions, JacobianMode::Exact);
    CHECK(jac.block[0][0].cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(externals == mesh.vertex_count());
}

TEST_CASE("degenerate triangles are skipped with a warning count") {
  std::vector<Vec3> verts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 0)};
  // Second triangle is collinear (zero area).
  auto mesh = ClothMesh::from_raw(verts, {{0, 1, 3}, {0, 1, 2}}, {1, 1, 1, 1});
  ElementBuildReport report;
  const auto elements = build_elements(mesh, MaterialParams{}, Vec3::Zero(), Vec3::Zero(), &report);
  CHECK(report.skipped_degenerate == 1);
  int stretch_count = 0;
  for (const auto& e : elements) stretch_count += e.kind == ElementKind::Stretch;
  CHECK(stretch_count == 1);
}

TEST_CASE("mesh masses come from density times Voronoi area") {
  auto mesh = make_grid_mesh(4, 4, 0.6, 0.6, Vec3(0, 0, 0), 0.3);
  double total = 0.0;
  for (double m : mesh.vertex_mass) total += m;
  CHECK(total == doctest::Approx(0.3 * 0.6 * 0.6).epsilon(1e-9));
}
