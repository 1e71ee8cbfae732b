#pragma once

#include "weft/elements.hpp"
#include "weft/sparse.hpp"

#include <algorithm>
#include <cstdint>

namespace weft {

/// Vertex -> owning device lookup for contiguous balanced partitions.
struct PartitionMap {
  int vertex_count = 0;
  int devices = 1;
  int base = 0;   // floor(p / n)
  int extra = 0;  // first `extra` devices own base+1 vertices

  static PartitionMap from(const std::vector<DevicePartition>& parts) {
    PartitionMap m;
    m.devices = static_cast<int>(parts.size());
    m.vertex_count = parts.empty() ? 0 : parts.back().end;
    m.base = m.vertex_count / m.devices;
    m.extra = m.vertex_count % m.devices;
    return m;
  }

  int owner(int vertex) const {
    const int split = extra * (base + 1);
    if (vertex < split) return vertex / (base + 1);
    return extra + (vertex - split) / std::max(1, base);
  }
};

/// Assembly elements grouped by the devices that own their stencil rows.
/// An element spanning k owners appears in k per-device lists; owned_mask
/// bit a is set when the device owns stencil vertex a.
struct DistributedElements {
  struct Instance {
    int element = 0;
    std::uint8_t owned_mask = 0;
  };
  std::vector<std::vector<Instance>> per_device;
  // Per device, per local block row: upper bound on column entries
  // contributed by elements (used by filling step 1).
  std::vector<std::vector<int>> row_bounds;
};

DistributedElements distribute_elements(std::span<const AssemblyElement> elements,
                                        const std::vector<DevicePartition>& partitions);

struct SystemInputs {
  std::span<const AssemblyElement> elements;
  std::span<const Vec3> x_current;   // Jacobian evaluation point
  std::span<const Vec3> x_advanced;  // force evaluation point (u_t + dt v_t)
  std::span<const Vec3> velocity;
  std::span<const double> mass;
  std::span<const std::uint8_t> pinned;
  double dt = 0.0;
  JacobianMode mode = JacobianMode::SpdProjected;
};

template <class Real>
struct AssembledSystem {
  PartitionedMatrix<Real> matrix;
  DistVector<Real> rhs;
};

/// Five-step BELL filling, one device at a time in parallel: (1) index
/// table allocation from the distribution counts, (2) index filling,
/// (3) per-row sort + dedup compaction, (4) value table allocation at the
/// per-sub-block maximum compacted row length, (5) value accumulation of
/// A = M - (dt^2 + damping*dt) J and rhs = dt * f(x_advanced) in ascending
/// element order. Pinned vertices keep identity rows/columns and zero rhs.
template <class Real>
AssembledSystem<Real> fill_matrix(Engine& engine, const DistributedElements& dist,
                                  const SystemInputs& in,
                                  const std::vector<DevicePartition>& partitions) {
  const int n = static_cast<int>(partitions.size());
  const int p = partitions.empty() ? 0 : partitions.back().end;
  const PartitionMap pmap = PartitionMap::from(partitions);
  if (in.dt <= 0.0) throw DimensionError("fill_matrix: dt must be positive");

  AssembledSystem<Real> out{
      PartitionedMatrix<Real>{n, p, padded_subvector_len(p, n), partitions, {}},
      DistVector<Real>(&engine, partitions)};
  out.matrix.blocks.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), BellMatrix<Real>());

  engine.parallel([&](int d) {
    const auto& part = partitions[static_cast<std::size_t>(d)];
    const int rows = part.size();
    const auto& instances = dist.per_device[static_cast<std::size_t>(d)];

    // (1) allocate the raw index buffer: element bound + 1 diagonal slot.
    std::vector<int> offsets(static_cast<std::size_t>(rows) + 1, 0);
    for (int r = 0; r < rows; ++r) {
      offsets[static_cast<std::size_t>(r) + 1] =
          offsets[static_cast<std::size_t>(r)] + dist.row_bounds[static_cast<std::size_t>(d)][static_cast<std::size_t>(r)] + 1;
    }
    std::vector<std::int32_t> raw_cols(static_cast<std::size_t>(offsets.back()));
    std::vector<int> cursor(offsets.begin(), offsets.end() - 1);

    auto push_col = [&](int row, std::int32_t col) {
      const int at = cursor[static_cast<std::size_t>(row)]++;
      if (at >= offsets[static_cast<std::size_t>(row) + 1]) {
        throw DimensionError("fill_matrix: row capacity overflow (internal bug)");
      }
      raw_cols[static_cast<std::size_t>(at)] = col;
    };

    // (2) index filling. Every row keeps its own diagonal (mass block).
    for (int r = 0; r < rows; ++r) push_col(r, part.begin + r);
    for (const auto& inst : instances) {
      const auto& e = in.elements[static_cast<std::size_t>(inst.element)];
      for (int a = 0; a < e.stencil_size; ++a) {
        if (!(inst.owned_mask & (1 << a))) continue;
        const int row_vertex = e.stencil[static_cast<std::size_t>(a)];
        if (in.pinned[static_cast<std::size_t>(row_vertex)]) continue;
        const int row = row_vertex - part.begin;
        for (int b = 0; b < e.stencil_size; ++b) {
          const int col_vertex = e.stencil[static_cast<std::size_t>(b)];
          if (in.pinned[static_cast<std::size_t>(col_vertex)]) continue;
          push_col(row, col_vertex);
        }
      }
    }

    // (3) compaction: sort each row, drop duplicates.
    std::vector<std::vector<std::int32_t>> row_cols(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
      auto first = raw_cols.begin() + offsets[static_cast<std::size_t>(r)];
      auto last = raw_cols.begin() + cursor[static_cast<std::size_t>(r)];
      std::sort(first, last);
      row_cols[static_cast<std::size_t>(r)].assign(first, std::unique(first, last));
    }

    // (4) per-sub-block widths = maximum compacted row length.
    for (int j = 0; j < n; ++j) {
      const auto& cpart = partitions[static_cast<std::size_t>(j)];
      int width = 0;
      for (int r = 0; r < rows; ++r) {
        int len = 0;
        for (std::int32_t c : row_cols[static_cast<std::size_t>(r)]) len += (c >= cpart.begin && c < cpart.end);
        width = std::max(width, len);
      }
      BellMatrix<Real> block(rows, width);
      for (int r = 0; r < rows; ++r) {
        int slot = 0;
        for (std::int32_t c : row_cols[static_cast<std::size_t>(r)]) {
          if (c >= cpart.begin && c < cpart.end) block.set_col(r, slot++, c - cpart.begin);
        }
      }
      out.matrix.block(d, j) = std::move(block);
    }

    // (5) value filling: mass diagonal first, then ascending element order.
    auto& diag = out.matrix.block(d, d);
    for (int r = 0; r < rows; ++r) {
      const int vertex = part.begin + r;
      const bool pin = in.pinned[static_cast<std::size_t>(vertex)] != 0;
      if (!pin && in.mass[static_cast<std::size_t>(vertex)] <= 0.0) {
        throw DimensionError("fill_matrix: vertex " + std::to_string(vertex) + " has non-positive mass");
      }
      const Real m = pin ? Real(1) : static_cast<Real>(in.mass[static_cast<std::size_t>(vertex)]);
      const int slot = diag.find_slot(r, r);
      for (int c = 0; c < 3; ++c) diag.add_value(r, slot, c, c, m);
    }

    auto rhs = out.rhs.local(d);
    ElementJacobian vel_damping;
    for (const auto& inst : instances) {
      const auto& e = in.elements[static_cast<std::size_t>(inst.element)];
      const auto force = element_force(e, in.x_advanced);
      const auto jac = element_jacobian(e, in.x_current, in.mode);
      const auto friction = element_friction_force(e, in.velocity);
      const double scale = in.dt * in.dt + e.damping * in.dt;
      const bool damped = element_has_velocity_damping(e);
      if (damped) {
        vel_damping = ElementJacobian();
        element_velocity_damping(e, vel_damping);
      }

      for (int a = 0; a < e.stencil_size; ++a) {
        if (!(inst.owned_mask & (1 << a))) continue;
        const int row_vertex = e.stencil[static_cast<std::size_t>(a)];
        if (in.pinned[static_cast<std::size_t>(row_vertex)]) continue;
        const int row = row_vertex - part.begin;

        Vec3 f = force.f[static_cast<std::size_t>(a)] + friction.f[static_cast<std::size_t>(a)];
        if (e.damping > 0.0) {
          for (int b = 0; b < e.stencil_size; ++b) {
            f += e.damping * (jac.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
                              in.velocity[static_cast<std::size_t>(e.stencil[static_cast<std::size_t>(b)])]);
          }
        }
        for (int c = 0; c < 3; ++c) {
          rhs[static_cast<std::size_t>(3 * row + c)] += static_cast<Real>(in.dt * f[c]);
        }

        for (int b = 0; b < e.stencil_size; ++b) {
          const int col_vertex = e.stencil[static_cast<std::size_t>(b)];
          if (in.pinned[static_cast<std::size_t>(col_vertex)]) continue;
          const int j = pmap.owner(col_vertex);
          auto& block = out.matrix.block(d, j);
          const int slot = block.find_slot(row, col_vertex - partitions[static_cast<std::size_t>(j)].begin);
          if (slot < 0) throw DimensionError("fill_matrix: missing index entry (internal bug)");
          Mat3 contribution = -scale * jac.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
          if (damped) {
            contribution += in.dt * vel_damping.block[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
          }
          for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
              block.add_value(row, slot, r, c, static_cast<Real>(contribution(r, c)));
            }
          }
        }
      }
    }
  });
  return out;
}

}  // namespace weft
