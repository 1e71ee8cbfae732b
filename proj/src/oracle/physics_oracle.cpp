#include "oracle/physics_oracle.hpp"

namespace weft::oracle {

Eigen::MatrixXd fd_element_jacobian(const AssemblyElement& e, std::vector<Vec3> x, double h) {
  const int dim = 3 * e.stencil_size;
  Eigen::MatrixXd jac(dim, dim);
  for (int j = 0; j < dim; ++j) {
    const int vertex = e.stencil[static_cast<std::size_t>(j / 3)];
    const int comp = j % 3;
    const double step = h * std::max(1.0, std::abs(x[static_cast<std::size_t>(vertex)][comp]));
    const double saved = x[static_cast<std::size_t>(vertex)][comp];

    x[static_cast<std::size_t>(vertex)][comp] = saved + step;
    const auto fp = element_force(e, x);
    x[static_cast<std::size_t>(vertex)][comp] = saved - step;
    const auto fm = element_force(e, x);
    x[static_cast<std::size_t>(vertex)][comp] = saved;

    for (int i = 0; i < dim; ++i) {
      jac(i, j) = (fp.f[static_cast<std::size_t>(i / 3)][i % 3] - fm.f[static_cast<std::size_t>(i / 3)][i % 3]) /
                  (2.0 * step);
    }
  }
  return jac;
}

Eigen::MatrixXd analytic_element_jacobian(const AssemblyElement& e, std::span<const Vec3> x,
                                          JacobianMode mode) {
  const int dim = 3 * e.stencil_size;
  const auto jac = element_jacobian(e, x, mode);
  Eigen::MatrixXd dense(dim, dim);
  for (int a = 0; a < e.stencil_size; ++a) {
    for (int b = 0; b < e.stencil_size; ++b) {
      dense.block<3, 3>(3 * a, 3 * b) = jac.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
  }
  return dense;
}

double jacobian_fd_error(const AssemblyElement& e, const std::vector<Vec3>& x, double h) {
  const auto fd = fd_element_jacobian(e, x, h);
  const auto an = analytic_element_jacobian(e, x, JacobianMode::Exact);
  const double scale = std::max(an.cwiseAbs().maxCoeff(), 1e-8);
  return (fd - an).cwiseAbs().maxCoeff() / scale;
}

DenseSystem dense_assemble(const SystemInputs& in, int vertex_count) {
  const int dim = 3 * vertex_count;
  DenseSystem sys{Eigen::MatrixXd::Zero(dim, dim), Eigen::VectorXd::Zero(dim)};

  for (int v = 0; v < vertex_count; ++v) {
    const double m = in.pinned[static_cast<std::size_t>(v)] ? 1.0 : in.mass[static_cast<std::size_t>(v)];
    for (int c = 0; c < 3; ++c) sys.a(3 * v + c, 3 * v + c) += m;
  }

  for (const auto& e : in.elements) {
    const auto force = element_force(e, in.x_advanced);
    const auto jac = element_jacobian(e, in.x_current, in.mode);
    const auto friction = element_friction_force(e, in.velocity);
    const double scale = in.dt * in.dt + e.damping * in.dt;
    ElementJacobian vel_damping;
    element_velocity_damping(e, vel_damping);

    for (int a = 0; a < e.stencil_size; ++a) {
      const int ra = e.stencil[static_cast<std::size_t>(a)];
      if (in.pinned[static_cast<std::size_t>(ra)]) continue;
      Vec3 f = force.f[static_cast<std::size_t>(a)] + friction.f[static_cast<std::size_t>(a)];
      if (e.damping > 0.0) {
        for (int b = 0; b < e.stencil_size; ++b) {
          f += e.damping * (jac.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
                            in.velocity[static_cast<std::size_t>(e.stencil[static_cast<std::size_t>(b)])]);
        }
      }
      sys.b.segment<3>(3 * ra) += in.dt * f;

      for (int b = 0; b < e.stencil_size; ++b) {
        const int cb = e.stencil[static_cast<std::size_t>(b)];
        if (in.pinned[static_cast<std::size_t>(cb)]) continue;
        sys.a.block<3, 3>(3 * ra, 3 * cb) -=
            scale * jac.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        sys.a.block<3, 3>(3 * ra, 3 * cb) +=
            in.dt * vel_damping.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      }
    }
  }
  return sys;
}

ClothMesh random_cloth(Rng& rng, int max_side) {
  const int nx = rng.uniform_int(2, max_side);
  const int ny = rng.uniform_int(2, max_side);
  const double w = rng.uniform(0.2, 1.0);
  const double h = rng.uniform(0.2, 1.0);
  auto mesh = make_grid_mesh(nx, ny, w, h, Vec3(0, 0, 0), 0.2);
  // Jitter the rest shape so nothing is axis aligned, then rebuild rest data.
  const double jitter = 0.15 * std::min(w / nx, h / ny);
  std::vector<Vec3> verts = mesh.rest_positions;
  for (auto& v : verts) v += rng.vec3(-jitter, jitter);
  return ClothMesh::build(std::move(verts), std::move(mesh.triangles), 0.2);
}

}  // namespace weft::oracle
