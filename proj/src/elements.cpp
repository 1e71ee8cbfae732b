#include "weft/elements.hpp"

#include <cmath>

namespace weft {

namespace {

constexpr double kDegenerateNormal2 = 1e-24;

// Forward-mode dual scalar for exact differentiation of the dihedral
// gradient. Only the operations the gradient formula needs are defined.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual dsqrt(Dual a) {
  const double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
inline double value(double x) { return x; }
inline double value(Dual x) { return x.v; }
inline double dsqrt(double a) { return std::sqrt(a); }

template <class S>
using V3 = std::array<S, 3>;

template <class S>
V3<S> sub(const V3<S>& a, const V3<S>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
template <class S>
V3<S> add(const V3<S>& a, const V3<S>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
template <class S>
V3<S> scale(const V3<S>& a, S s) {
  return {a[0] * s, a[1] * s, a[2] * s};
}
template <class S>
S dot(const V3<S>& a, const V3<S>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
template <class S>
V3<S> cross(const V3<S>& a, const V3<S>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Gradient of the signed dihedral angle. Unnormalized face normals:
//   nA = (x1 - x0) x (x2 - x0),  nB = (x3 - x0) x (x1 - x0),
// so a flat hinge with wings on opposite sides has nA parallel to nB.
template <class S>
std::array<V3<S>, 4> dihedral_gradient_t(const std::array<V3<S>, 4>& x) {
  const V3<S> e = sub(x[1], x[0]);
  const V3<S> na = cross(e, sub(x[2], x[0]));
  const V3<S> nb = cross(sub(x[3], x[0]), e);
  const S na2 = dot(na, na);
  const S nb2 = dot(nb, nb);
  const S elen = dsqrt(dot(e, e));

  std::array<V3<S>, 4> g{};
  if (value(na2) < kDegenerateNormal2 || value(nb2) < kDegenerateNormal2 || value(elen) < 1e-12) {
    return g;  // degenerate hinge contributes nothing
  }

  g[2] = scale(na, -elen / na2);
  g[3] = scale(nb, -elen / nb2);
  const S ca0 = dot(sub(x[1], x[2]), e) / (elen * na2);
  const S cb0 = dot(sub(x[1], x[3]), e) / (elen * nb2);
  const S ca1 = dot(sub(x[2], x[0]), e) / (elen * na2);
  const S cb1 = dot(sub(x[3], x[0]), e) / (elen * nb2);
  g[0] = add(scale(na, ca0), scale(nb, cb0));
  g[1] = add(scale(na, ca1), scale(nb, cb1));
  return g;
}

std::array<V3<double>, 4> to_arrays(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return {V3<double>{a.x(), a.y(), a.z()}, V3<double>{b.x(), b.y(), b.z()},
          V3<double>{c.x(), c.y(), c.z()}, V3<double>{d.x(), d.y(), d.z()}};
}

struct StretchState {
  Vec3 wu, wv;
  double wu_len = 0.0, wv_len = 0.0;
  bool ok = false;
};

StretchState stretch_state(const StretchData& s, const Vec3& x0, const Vec3& x1, const Vec3& x2) {
  StretchState st;
  st.wu = s.pwu[0] * x0 + s.pwu[1] * x1 + s.pwu[2] * x2;
  st.wv = s.pwv[0] * x0 + s.pwv[1] * x1 + s.pwv[2] * x2;
  st.wu_len = st.wu.norm();
  st.wv_len = st.wv.norm();
  st.ok = st.wu_len > 1e-12 && st.wv_len > 1e-12;
  return st;
}

}  // namespace

double dihedral_angle(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3) {
  const Vec3 e = x1 - x0;
  const Vec3 na = e.cross(x2 - x0);
  const Vec3 nb = (x3 - x0).cross(e);
  const double elen = e.norm();
  if (na.squaredNorm() < kDegenerateNormal2 || nb.squaredNorm() < kDegenerateNormal2 || elen < 1e-12) {
    return 0.0;
  }
  const double s = na.cross(nb).dot(e) / elen;
  const double c = na.dot(nb);
  return std::atan2(s, c);
}

std::array<Vec3, 4> dihedral_angle_gradient(const Vec3& x0, const Vec3& x1, const Vec3& x2,
                                            const Vec3& x3) {
  const auto g = dihedral_gradient_t<double>(to_arrays(x0, x1, x2, x3));
  std::array<Vec3, 4> out;
  for (int i = 0; i < 4; ++i) out[static_cast<std::size_t>(i)] = Vec3(g[static_cast<std::size_t>(i)][0], g[static_cast<std::size_t>(i)][1], g[static_cast<std::size_t>(i)][2]);
  return out;
}

namespace {

// Exact Hessian of the dihedral angle: one dual sweep per coordinate of the
// closed-form gradient, then symmetrized to cancel roundoff asymmetry.
void dihedral_hessian(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3,
                      std::array<std::array<Mat3, 4>, 4>& h) {
  const auto base = to_arrays(x0, x1, x2, x3);
  double hess[12][12];
  for (int j = 0; j < 12; ++j) {
    std::array<V3<Dual>, 4> xd;
    for (int v = 0; v < 4; ++v) {
      for (int c = 0; c < 3; ++c) {
        xd[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)] = {
            base[static_cast<std::size_t>(v)][static_cast<std::size_t>(c)], (3 * v + c == j) ? 1.0 : 0.0};
      }
    }
    const auto gd = dihedral_gradient_t<Dual>(xd);
    for (int i = 0; i < 12; ++i) {
      hess[i][j] = gd[static_cast<std::size_t>(i / 3)][static_cast<std::size_t>(i % 3)].d;
    }
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      Mat3 m;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          m(r, c) = 0.5 * (hess[3 * a + r][3 * b + c] + hess[3 * b + c][3 * a + r]);
        }
      }
      h[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = m;
    }
  }
}

void stretch_force(const StretchData& s, std::span<const Vec3> x, const std::array<int, 4>& idx,
                   std::array<Vec3, 4>& f) {
  const Vec3& x0 = x[static_cast<std::size_t>(idx[0])];
  const Vec3& x1 = x[static_cast<std::size_t>(idx[1])];
  const Vec3& x2 = x[static_cast<std::size_t>(idx[2])];
  const auto st = stretch_state(s, x0, x1, x2);
  if (!st.ok) return;
  const Vec3 wu_hat = st.wu / st.wu_len;
  const Vec3 wv_hat = st.wv / st.wv_len;
  const double a = s.area;

  const double cu = a * (st.wu_len - 1.0);
  const double cv = a * (st.wv_len - 1.0);
  const double cs = a * st.wu.dot(st.wv);
  for (int i = 0; i < 3; ++i) {
    const Vec3 gu = a * s.pwu[static_cast<std::size_t>(i)] * wu_hat;
    const Vec3 gv = a * s.pwv[static_cast<std::size_t>(i)] * wv_hat;
    const Vec3 gs = a * (s.pwu[static_cast<std::size_t>(i)] * st.wv + s.pwv[static_cast<std::size_t>(i)] * st.wu);
    f[static_cast<std::size_t>(i)] += -(s.k_warp * cu) * gu - (s.k_weft * cv) * gv - (s.k_shear * cs) * gs;
  }
}

void stretch_jacobian(const StretchData& s, std::span<const Vec3> x, const std::array<int, 4>& idx,
                      JacobianMode mode, std::array<std::array<Mat3, 4>, 4>& jac) {
  const Vec3& x0 = x[static_cast<std::size_t>(idx[0])];
  const Vec3& x1 = x[static_cast<std::size_t>(idx[1])];
  const Vec3& x2 = x[static_cast<std::size_t>(idx[2])];
  const auto st = stretch_state(s, x0, x1, x2);
  if (!st.ok) return;
  const Vec3 wu_hat = st.wu / st.wu_len;
  const Vec3 wv_hat = st.wv / st.wv_len;
  const double a = s.area;

  const double cu = a * (st.wu_len - 1.0);
  const double cv = a * (st.wv_len - 1.0);
  const double cs = a * st.wu.dot(st.wv);
  const Mat3 proj_u = Mat3::Identity() - wu_hat * wu_hat.transpose();
  const Mat3 proj_v = Mat3::Identity() - wv_hat * wv_hat.transpose();

  // In the projected mode the curvature term of a compressed condition
  // (c < 0) and the whole shear curvature term are dropped; what remains is
  // negative semi-definite by construction.
  const bool keep_u2 = mode == JacobianMode::Exact || cu >= 0.0;
  const bool keep_v2 = mode == JacobianMode::Exact || cv >= 0.0;
  const bool keep_s2 = mode == JacobianMode::Exact;

  for (int i = 0; i < 3; ++i) {
    const double ui = s.pwu[static_cast<std::size_t>(i)];
    const double vi = s.pwv[static_cast<std::size_t>(i)];
    const Vec3 gu_i = a * ui * wu_hat;
    const Vec3 gv_i = a * vi * wv_hat;
    const Vec3 gs_i = a * (ui * st.wv + vi * st.wu);
    for (int j = 0; j < 3; ++j) {
      const double uj = s.pwu[static_cast<std::size_t>(j)];
      const double vj = s.pwv[static_cast<std::size_t>(j)];
      const Vec3 gu_j = a * uj * wu_hat;
      const Vec3 gv_j = a * vj * wv_hat;
      const Vec3 gs_j = a * (uj * st.wv + vj * st.wu);

      Mat3 m = Mat3::Zero();
      m -= s.k_warp * (gu_i * gu_j.transpose());
      m -= s.k_weft * (gv_i * gv_j.transpose());
      m -= s.k_shear * (gs_i * gs_j.transpose());
      if (keep_u2) m -= s.k_warp * cu * (a * ui * uj / st.wu_len) * proj_u;
      if (keep_v2) m -= s.k_weft * cv * (a * vi * vj / st.wv_len) * proj_v;
      if (keep_s2) m -= s.k_shear * cs * (a * (ui * vj + vi * uj)) * Mat3::Identity();
      jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += m;
    }
  }
}

void bend_force(const BendData& b, std::span<const Vec3> x, const std::array<int, 4>& idx,
                std::array<Vec3, 4>& f) {
  const Vec3& x0 = x[static_cast<std::size_t>(idx[0])];
  const Vec3& x1 = x[static_cast<std::size_t>(idx[1])];
  const Vec3& x2 = x[static_cast<std::size_t>(idx[2])];
  const Vec3& x3 = x[static_cast<std::size_t>(idx[3])];
  const double theta = dihedral_angle(x0, x1, x2, x3);
  const auto g = dihedral_angle_gradient(x0, x1, x2, x3);
  const double coeff = -b.stiffness * (theta - b.rest_angle);
  for (int i = 0; i < 4; ++i) f[static_cast<std::size_t>(i)] += coeff * g[static_cast<std::size_t>(i)];
}

void bend_jacobian(const BendData& b, std::span<const Vec3> x, const std::array<int, 4>& idx,
                   JacobianMode mode, std::array<std::array<Mat3, 4>, 4>& jac) {
  const Vec3& x0 = x[static_cast<std::size_t>(idx[0])];
  const Vec3& x1 = x[static_cast<std::size_t>(idx[1])];
  const Vec3& x2 = x[static_cast<std::size_t>(idx[2])];
  const Vec3& x3 = x[static_cast<std::size_t>(idx[3])];
  const auto g = dihedral_angle_gradient(x0, x1, x2, x3);

  std::array<std::array<Mat3, 4>, 4> hess{};
  double dtheta = 0.0;
  if (mode == JacobianMode::Exact) {
    dtheta = dihedral_angle(x0, x1, x2, x3) - b.rest_angle;
    dihedral_hessian(x0, x1, x2, x3, hess);
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      Mat3 m = -b.stiffness * (g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(j)].transpose());
      if (mode == JacobianMode::Exact) {
        m -= b.stiffness * dtheta * hess[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
      jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += m;
    }
  }
}

void spring_force(const SpringData& s, std::span<const Vec3> x, const std::array<int, 4>& idx,
                  std::array<Vec3, 4>& f) {
  const Vec3 d = x[static_cast<std::size_t>(idx[1])] - x[static_cast<std::size_t>(idx[0])];
  const double len = d.norm();
  if (len < 1e-12) return;
  const Vec3 dir = d / len;
  const Vec3 fa = s.stiffness * (len - s.rest_length) * dir;
  f[0] += fa;
  f[1] -= fa;
}

void spring_jacobian(const SpringData& s, std::span<const Vec3> x, const std::array<int, 4>& idx,
                     JacobianMode mode, std::array<std::array<Mat3, 4>, 4>& jac) {
  const Vec3 d = x[static_cast<std::size_t>(idx[1])] - x[static_cast<std::size_t>(idx[0])];
  const double len = d.norm();
  if (len < 1e-12) return;
  const Vec3 dir = d / len;
  double lateral = 1.0 - s.rest_length / len;
  if (mode == JacobianMode::SpdProjected) lateral = std::max(0.0, lateral);
  const Mat3 k = s.stiffness * (dir * dir.transpose() + lateral * (Mat3::Identity() - dir * dir.transpose()));
  jac[0][0] -= k;
  jac[1][1] -= k;
  jac[0][1] += k;
  jac[1][0] += k;
}

void contact_force(const ContactData& c, std::span<const Vec3> x, const std::array<int, 4>& idx,
                   int count, std::array<Vec3, 4>& f) {
  double gap = c.bias;
  for (int i = 0; i < count; ++i) gap += c.w[static_cast<std::size_t>(i)] * c.normal.dot(x[static_cast<std::size_t>(idx[i])]);
  if (gap >= c.activation) return;
  const double magnitude = c.stiffness * (c.activation - gap);
  for (int i = 0; i < count; ++i) f[static_cast<std::size_t>(i)] += magnitude * c.w[static_cast<std::size_t>(i)] * c.normal;
}

void contact_jacobian(const ContactData& c, std::span<const Vec3> x, const std::array<int, 4>& idx,
                      int count, std::array<std::array<Mat3, 4>, 4>& jac) {
  double gap = c.bias;
  for (int i = 0; i < count; ++i) gap += c.w[static_cast<std::size_t>(i)] * c.normal.dot(x[static_cast<std::size_t>(idx[i])]);
  if (gap >= c.activation) return;
  const Mat3 nn = c.normal * c.normal.transpose();
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -=
          c.stiffness * c.w[static_cast<std::size_t>(i)] * c.w[static_cast<std::size_t>(j)] * nn;
    }
  }
}

}  // namespace

ElementForces element_force(const AssemblyElement& e, std::span<const Vec3> x) {
  ElementForces out;
  switch (e.kind) {
    case ElementKind::Stretch:
      stretch_force(std::get<StretchData>(e.data), x, e.stencil, out.f);
      break;
    case ElementKind::Bend:
      bend_force(std::get<BendData>(e.data), x, e.stencil, out.f);
      break;
    case ElementKind::Spring:
      spring_force(std::get<SpringData>(e.data), x, e.stencil, out.f);
      break;
    case ElementKind::External:
      out.f[0] = std::get<ExternalData>(e.data).force;
      break;
    case ElementKind::Contact:
      contact_force(std::get<ContactData>(e.data), x, e.stencil, e.stencil_size, out.f);
      break;
  }
  return out;
}

ElementJacobian element_jacobian(const AssemblyElement& e, std::span<const Vec3> x, JacobianMode mode) {
  ElementJacobian out;
  switch (e.kind) {
    case ElementKind::Stretch:
      stretch_jacobian(std::get<StretchData>(e.data), x, e.stencil, mode, out.block);
      break;
    case ElementKind::Bend:
      bend_jacobian(std::get<BendData>(e.data), x, e.stencil, mode, out.block);
      break;
    case ElementKind::Spring:
      spring_jacobian(std::get<SpringData>(e.data), x, e.stencil, mode, out.block);
      break;
    case ElementKind::External:
      break;  // constant force
    case ElementKind::Contact:
      contact_jacobian(std::get<ContactData>(e.data), x, e.stencil, e.stencil_size, out.block);
      break;
  }
  return out;
}

ElementForces element_friction_force(const AssemblyElement& e, std::span<const Vec3> velocity) {
  ElementForces out;
  if (e.kind == ElementKind::External) {
    const auto& d = std::get<ExternalData>(e.data);
    if (d.drag > 0.0) out.f[0] = -d.drag * velocity[static_cast<std::size_t>(e.stencil[0])];
    return out;
  }
  if (e.kind != ElementKind::Contact) return out;
  const auto& c = std::get<ContactData>(e.data);
  if (c.tangential_damping <= 0.0) return out;

  Vec3 rel = c.rel_vel_bias;
  for (int i = 0; i < e.stencil_size; ++i) {
    rel += c.w[static_cast<std::size_t>(i)] * velocity[static_cast<std::size_t>(e.stencil[static_cast<std::size_t>(i)])];
  }
  const Vec3 tangential = rel - c.normal.dot(rel) * c.normal;
  const Vec3 fr = -c.tangential_damping * tangential;
  for (int i = 0; i < e.stencil_size; ++i) out.f[static_cast<std::size_t>(i)] = c.w[static_cast<std::size_t>(i)] * fr;
  return out;
}

bool element_has_velocity_damping(const AssemblyElement& e) {
  if (e.kind == ElementKind::External) return std::get<ExternalData>(e.data).drag > 0.0;
  return e.kind == ElementKind::Contact && std::get<ContactData>(e.data).tangential_damping > 0.0;
}

void element_velocity_damping(const AssemblyElement& e, ElementJacobian& out) {
  if (!element_has_velocity_damping(e)) return;
  if (e.kind == ElementKind::External) {
    out.block[0][0] += std::get<ExternalData>(e.data).drag * Mat3::Identity();
    return;
  }
  const auto& c = std::get<ContactData>(e.data);
  const Mat3 tangent_proj = Mat3::Identity() - c.normal * c.normal.transpose();
  for (int i = 0; i < e.stencil_size; ++i) {
    for (int j = 0; j < e.stencil_size; ++j) {
      out.block[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
          c.tangential_damping * c.w[static_cast<std::size_t>(i)] * c.w[static_cast<std::size_t>(j)] * tangent_proj;
    }
  }
}

}  // namespace weft
