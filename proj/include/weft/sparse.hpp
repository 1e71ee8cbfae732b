#pragma once

#include "weft/bell.hpp"
#include "weft/exec.hpp"

#include <cstring>

namespace weft {

/// n x n grid of BELL sub-blocks. Sub-block (i, j) holds the rows owned by
/// device i restricted to the columns owned by device j; its column indices
/// are local to partition j. Row counts are the real (unpadded) partition
/// sizes; sub-vectors are padded to the common length 3 * ceil(p / n).
template <class Real>
struct PartitionedMatrix {
  int devices = 1;
  int vertex_count = 0;
  int padded_len = 0;  // scalars per sub-vector
  std::vector<DevicePartition> partitions;
  std::vector<BellMatrix<Real>> blocks;  // [i * devices + j]

  const BellMatrix<Real>& block(int i, int j) const {
    return blocks[static_cast<std::size_t>(i * devices + j)];
  }
  BellMatrix<Real>& block(int i, int j) { return blocks[static_cast<std::size_t>(i * devices + j)]; }
};

/// Splits a global matrix along rows and columns by the given partitions.
template <class Real>
PartitionedMatrix<Real> partition_matrix(const BellMatrix<Real>& global,
                                         const std::vector<DevicePartition>& partitions);

/// Reassembles the global matrix from its sub-blocks (debug/oracle use).
template <class Real>
BellMatrix<Real> gather_matrix(const PartitionedMatrix<Real>& p);

/// Reusable n x n arena of padded sub-vector payload slots.
template <class Real>
class SpmvWorkspace {
public:
  SpmvWorkspace() = default;
  SpmvWorkspace(int devices, int padded_len)
      : n_(devices), len_(padded_len),
        arena_(static_cast<std::size_t>(devices) * static_cast<std::size_t>(devices) *
               static_cast<std::size_t>(padded_len)) {}

  int padded_len() const { return len_; }

  std::span<Real> slot(int device, int vec) {
    return {arena_.data() + (static_cast<std::size_t>(device) * static_cast<std::size_t>(n_) +
                             static_cast<std::size_t>(vec)) *
                                static_cast<std::size_t>(len_),
            static_cast<std::size_t>(len_)};
  }
  std::span<const Real> slot(int device, int vec) const {
    return {arena_.data() + (static_cast<std::size_t>(device) * static_cast<std::size_t>(n_) +
                             static_cast<std::size_t>(vec)) *
                                static_cast<std::size_t>(len_),
            static_cast<std::size_t>(len_)};
  }

private:
  int n_ = 0;
  int len_ = 0;
  std::vector<Real> arena_;
};

/// Distributed y = A x. Device i computes the diagonal product from its own
/// sub-vector immediately, then accumulates A_ij x_j in queue order as each
/// sub-vector arrives; the accumulation order is therefore fixed and the
/// gathered result is reproducible bit for bit.
template <class Real>
void spmv_pipelined(Engine& engine, const PartitionedMatrix<Real>& a, const ValidatedSchedule& sched,
                    const DistVector<Real>& x, DistVector<Real>& y, SpmvWorkspace<Real>& ws) {
  const int n = a.devices;
  if (engine.devices() != n || sched.devices() != n) {
    throw DimensionError("spmv_pipelined: engine/schedule/matrix device counts differ");
  }
  if (ws.padded_len() != a.padded_len) throw DimensionError("spmv_pipelined: workspace payload length mismatch");

  engine.parallel([&](int d) {
    auto own = ws.slot(d, d);
    auto xs = x.local(d);
    if (xs.size() > own.size()) throw DimensionError("sub-vector longer than padded slot");
    std::copy(xs.begin(), xs.end(), own.begin());
    std::fill(own.begin() + static_cast<std::ptrdiff_t>(xs.size()), own.end(), Real(0));
  });

  engine.run_pipelined(
      sched,
      [&](int d) { a.block(d, d).multiply_into(ws.slot(d, d), y.local(d)); },
      [&](int d, int k) {
        const int vec = sched.queues()[static_cast<std::size_t>(d)].nodes[static_cast<std::size_t>(k)].vec;
        a.block(d, vec).multiply_accumulate(ws.slot(d, vec), y.local(d));
      },
      [&](int sender, int receiver, int vec) {
        auto src = ws.slot(sender, vec);
        auto dst = ws.slot(receiver, vec);
        std::memcpy(dst.data(), src.data(), src.size() * sizeof(Real));
      });
}

template <class Real>
PartitionedMatrix<Real> partition_matrix(const BellMatrix<Real>& global,
                                         const std::vector<DevicePartition>& partitions) {
  const int n = static_cast<int>(partitions.size());
  const int p = partitions.empty() ? 0 : partitions.back().end;
  if (global.block_rows() != p) throw DimensionError("partition_matrix: partitions do not cover the matrix");

  PartitionedMatrix<Real> out;
  out.devices = n;
  out.vertex_count = p;
  out.padded_len = padded_subvector_len(p, n);
  out.partitions = partitions;

  auto owner_of = [&](int vertex) {
    for (const auto& part : partitions) {
      if (part.owns(vertex)) return part.device_id;
    }
    throw DimensionError("column index outside all partitions");
  };

  std::vector<std::vector<BlockEntry<Real>>> entries(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int row = 0; row < global.block_rows(); ++row) {
    const int i = owner_of(row);
    for (int slot = 0; slot < global.ell_width(); ++slot) {
      const std::int32_t col = global.col_at(row, slot);
      if (col == BellMatrix<Real>::kNoBlock) break;
      const int j = owner_of(col);
      BlockEntry<Real> e;
      e.row = row - partitions[static_cast<std::size_t>(i)].begin;
      e.col = col - partitions[static_cast<std::size_t>(j)].begin;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) e.m[static_cast<std::size_t>(r * 3 + c)] = global.value_at(row, slot, r, c);
      }
      entries[static_cast<std::size_t>(i * n + j)].push_back(e);
    }
  }

  out.blocks.reserve(entries.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      auto& list = entries[static_cast<std::size_t>(i * n + j)];
      out.blocks.push_back(
          BellMatrix<Real>::from_entries(partitions[static_cast<std::size_t>(i)].size(), list));
    }
  }
  return out;
}

template <class Real>
BellMatrix<Real> gather_matrix(const PartitionedMatrix<Real>& p) {
  std::vector<BlockEntry<Real>> entries;
  for (int i = 0; i < p.devices; ++i) {
    for (int j = 0; j < p.devices; ++j) {
      const auto& block = p.block(i, j);
      for (int row = 0; row < block.block_rows(); ++row) {
        for (int slot = 0; slot < block.ell_width(); ++slot) {
          const std::int32_t col = block.col_at(row, slot);
          if (col == BellMatrix<Real>::kNoBlock) break;
          BlockEntry<Real> e;
          e.row = row + p.partitions[static_cast<std::size_t>(i)].begin;
          e.col = col + p.partitions[static_cast<std::size_t>(j)].begin;
          for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) e.m[static_cast<std::size_t>(r * 3 + c)] = block.value_at(row, slot, r, c);
          }
          entries.push_back(e);
        }
      }
    }
  }
  return BellMatrix<Real>::from_entries(p.vertex_count, entries);
}

}  // namespace weft
