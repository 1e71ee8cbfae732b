#pragma once

#include "oracle/oracle.hpp"
#include "weft/sparse.hpp"

namespace weft::oracle {

/// Order-matched serial reference for the pipelined SpMV: per device the
/// diagonal product first, then the queued sub-blocks in queue order, all
/// executed on one thread. Bitwise agreement with the distributed path is
/// the acceptance bar in double precision.
template <class Real>
std::vector<Real> spmv_partitioned_serial(const PartitionedMatrix<Real>& a, const ValidatedSchedule& sched,
                                          std::span<const Real> x_global) {
  const int n = a.devices;
  std::vector<Real> out;
  std::vector<Real> padded(static_cast<std::size_t>(a.padded_len), Real(0));
  std::vector<Real> y;
  for (int d = 0; d < n; ++d) {
    const auto& part = a.partitions[static_cast<std::size_t>(d)];
    y.assign(static_cast<std::size_t>(3 * part.size()), Real(0));

    auto load = [&](int vec) {
      const auto& vp = a.partitions[static_cast<std::size_t>(vec)];
      std::fill(padded.begin(), padded.end(), Real(0));
      for (int k = 0; k < 3 * vp.size(); ++k) {
        padded[static_cast<std::size_t>(k)] = x_global[static_cast<std::size_t>(3 * vp.begin + k)];
      }
    };

    load(d);
    a.block(d, d).multiply_into(padded, y);
    if (n > 1) {
      for (const auto& node : sched.queues()[static_cast<std::size_t>(d)].nodes) {
        load(node.vec);
        a.block(d, node.vec).multiply_accumulate(padded, y);
      }
    }
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

/// Dense expansion of a BELL matrix (small instances only).
template <class Real>
Eigen::MatrixXd bell_to_dense(const BellMatrix<Real>& a) {
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(a.rows(), a.rows());
  for (int row = 0; row < a.block_rows(); ++row) {
    for (int slot = 0; slot < a.ell_width(); ++slot) {
      const auto col = a.col_at(row, slot);
      if (col == BellMatrix<Real>::kNoBlock) break;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
          dense(3 * row + r, 3 * col + c) += static_cast<double>(a.value_at(row, slot, r, c));
        }
      }
    }
  }
  return dense;
}

/// Random sparse symmetric-pattern block system for SpMV equivalence runs.
BellMatrix<double> random_bell(Rng& rng, int block_rows, int extra_blocks_per_row);

}  // namespace weft::oracle
