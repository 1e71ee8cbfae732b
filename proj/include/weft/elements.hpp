#pragma once

#include "weft/common.hpp"

#include <array>
#include <span>
#include <variant>

namespace weft {

enum class ElementKind { Stretch, Bend, Spring, External, Contact };

enum class JacobianMode {
  Exact,         // true derivative of the force (finite-difference grade)
  SpdProjected,  // indefinite second-order terms clamped to keep A SPD
};

/// Constant-strain triangle stretch/shear. pwu/pwv map the three vertex
/// positions to the material-space deformation derivatives w_u and w_v.
struct StretchData {
  std::array<double, 3> pwu{};
  std::array<double, 3> pwv{};
  double area = 0.0;          // rest area (condition weight)
  double k_warp = 0.0;        // stiffness along u
  double k_weft = 0.0;        // stiffness along v
  double k_shear = 0.0;
};

/// Dihedral hinge: stencil order (edge0, edge1, wingA, wingB).
struct BendData {
  double rest_angle = 0.0;
  double stiffness = 0.0;  // already scaled by rest edge/area factors
};

struct SpringData {
  double rest_length = 0.0;
  double stiffness = 0.0;
};

struct ExternalData {
  Vec3 force = Vec3::Zero();
  double drag = 0.0;  // linear air drag coefficient, N*s/m (implicit)
};

/// Linearized contact: gap(x) = sum_a w[a] * dot(n, x_a) + bias. The
/// element pushes the pair apart while gap < activation. Friction is a
/// linear tangential damper sized at creation so its force magnitude at
/// the creation-time sliding speed equals mu * F_n; its damping matrix
/// enters the system implicitly (A += dt * D), which keeps near-massless
/// vertices stable.
struct ContactData {
  Vec3 normal = Vec3::Zero();
  std::array<double, 4> w{};
  double bias = 0.0;
  double activation = 0.0;  // thickness h
  double stiffness = 0.0;
  double friction = 0.0;             // Coulomb coefficient mu (bookkeeping)
  double tangential_damping = 0.0;   // c_t, N*s/m
  double frozen_normal_force = 0.0;  // k * (h - gap) at creation
  Vec3 rel_vel_bias = Vec3::Zero();  // obstacle-side contribution to the relative velocity
};

struct AssemblyElement {
  ElementKind kind = ElementKind::External;
  std::array<int, 4> stencil{-1, -1, -1, -1};
  int stencil_size = 0;
  double damping = 0.0;  // stiffness-proportional velocity damping
  std::variant<StretchData, BendData, SpringData, ExternalData, ContactData> data;
};

struct ElementForces {
  ElementForces() { f.fill(Vec3::Zero()); }
  std::array<Vec3, 4> f;
};

struct ElementJacobian {
  ElementJacobian() {
    for (auto& row : block) row.fill(Mat3::Zero());
  }
  std::array<std::array<Mat3, 4>, 4> block;
};

/// Elastic force of the element at the given positions (global index space).
ElementForces element_force(const AssemblyElement& e, std::span<const Vec3> x);

/// d force / d positions. In SpdProjected mode the indefinite second-order
/// terms are clamped; Exact mode matches central finite differences of
/// element_force.
ElementJacobian element_jacobian(const AssemblyElement& e, std::span<const Vec3> x, JacobianMode mode);

/// Friction force of a contact element: -c_t * tangential relative
/// velocity, distributed over the stencil. Zero for all other kinds.
ElementForces element_friction_force(const AssemblyElement& e, std::span<const Vec3> velocity);

/// Velocity-damping blocks D_ab (symmetric PSD); the system matrix gains
/// +dt * D. Non-zero only for contact elements with friction.
void element_velocity_damping(const AssemblyElement& e, ElementJacobian& out);
bool element_has_velocity_damping(const AssemblyElement& e);

/// Signed dihedral angle of the hinge (x0, x1 edge; x2/x3 wings); zero when
/// the two faces are coplanar with wings on opposite sides.
double dihedral_angle(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3);

/// Analytic gradient of the dihedral angle (exposed for tests).
std::array<Vec3, 4> dihedral_angle_gradient(const Vec3& x0, const Vec3& x1, const Vec3& x2,
                                            const Vec3& x3);

}  // namespace weft
