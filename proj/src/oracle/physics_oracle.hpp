#pragma once

#include "oracle/oracle.hpp"
#include "weft/assembly.hpp"
#include "weft/mesh.hpp"
#include "weft/physics.hpp"

namespace weft::oracle {

/// Central finite differences of element_force (12x12 at most, laid out by
/// stencil position). Step h is scaled per coordinate.
Eigen::MatrixXd fd_element_jacobian(const AssemblyElement& e, std::vector<Vec3> x, double h);

/// The analytic Jacobian in the same dense layout, for direct comparison.
Eigen::MatrixXd analytic_element_jacobian(const AssemblyElement& e, std::span<const Vec3> x,
                                          JacobianMode mode);

/// Largest relative mismatch between the two, normalized by the largest
/// analytic entry.
double jacobian_fd_error(const AssemblyElement& e, const std::vector<Vec3>& x, double h);

struct DenseSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

/// Brute-force dense assembly of the same system fill_matrix builds,
/// accumulated directly into a dense matrix with no distribution, index
/// tables, or compaction involved.
DenseSystem dense_assemble(const SystemInputs& in, int vertex_count);

/// Random jittered-grid cloth mesh for assembly equivalence runs.
ClothMesh random_cloth(Rng& rng, int max_side);

}  // namespace weft::oracle
