#pragma once

#include "weft/common.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace weft {

/// One 3x3 block at (block row, block col), row-major component order.
template <class Real>
struct BlockEntry {
  int row = 0;
  int col = 0;
  std::array<Real, 9> m{};
};

/// Block-ELL sparse matrix with a fixed 3x3 block size. Per block row the
/// index table stores `ell_width` column slots (live columns ascending,
/// padding slots carry kNoBlock and zero values). Values are stored in
/// structure-of-arrays form: one plane per block component.
template <class Real>
class BellMatrix {
public:
  static constexpr std::int32_t kNoBlock = -1;

  BellMatrix() = default;
  BellMatrix(int block_rows, int ell_width);

  /// Builds from block entries; duplicate (row, col) entries are summed in
  /// their original order. Width is the maximum compacted row length.
  static BellMatrix from_entries(int block_rows, std::span<const BlockEntry<Real>> entries);

  static BellMatrix identity(int block_rows);

  int block_rows() const { return block_rows_; }
  int ell_width() const { return width_; }
  int rows() const { return 3 * block_rows_; }

  std::int32_t col_at(int row, int slot) const { return cols_[index(row, slot)]; }
  Real value_at(int row, int slot, int r, int c) const {
    return values_[plane(r * 3 + c) + index(row, slot)];
  }

  /// Returns the slot of block column `col` in `row`, or -1 if not live.
  int find_slot(int row, int col) const;

  /// In-place accumulation helpers used by the filling algorithm.
  void set_col(int row, int slot, std::int32_t col) { cols_[index(row, slot)] = col; }
  void add_value(int row, int slot, int r, int c, Real v) {
    values_[plane(r * 3 + c) + index(row, slot)] += v;
  }

  /// y = A x; per row the block products are summed in slot (column) order.
  void multiply_into(std::span<const Real> x, std::span<Real> y) const;
  /// y += A x with the same ordering.
  void multiply_accumulate(std::span<const Real> x, std::span<Real> y) const;

  std::size_t live_blocks() const;

  /// Debug dump, one line per live block: "row col m00 ... m22".
  void dump(std::ostream& os) const;

private:
  std::size_t index(int row, int slot) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(slot);
  }
  std::size_t plane(int comp) const {
    return static_cast<std::size_t>(comp) * static_cast<std::size_t>(block_rows_) *
           static_cast<std::size_t>(width_);
  }

  int block_rows_ = 0;
  int width_ = 0;
  std::vector<std::int32_t> cols_;
  std::vector<Real> values_;
};

/// y = A x for a single device (the serial reference SpMV).
template <class Real>
std::vector<Real> spmv_serial(const BellMatrix<Real>& a, std::span<const Real> x);

extern template class BellMatrix<double>;
extern template class BellMatrix<float>;
extern template std::vector<double> spmv_serial(const BellMatrix<double>&, std::span<const double>);
extern template std::vector<float> spmv_serial(const BellMatrix<float>&, std::span<const float>);

}  // namespace weft
