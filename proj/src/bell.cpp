#include "weft/bell.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

namespace weft {

template <class Real>
BellMatrix<Real>::BellMatrix(int block_rows, int ell_width)
    : block_rows_(block_rows), width_(ell_width) {
  const std::size_t n = static_cast<std::size_t>(block_rows) * static_cast<std::size_t>(ell_width);
  cols_.assign(n, kNoBlock);
  values_.assign(9 * n, Real(0));
}

template <class Real>
BellMatrix<Real> BellMatrix<Real>::from_entries(int block_rows, std::span<const BlockEntry<Real>> entries) {
  // Stable sort keeps duplicate contributions in original order, so the
  // summed result is deterministic.
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = entries[a];
    const auto& eb = entries[b];
    return ea.row != eb.row ? ea.row < eb.row : ea.col < eb.col;
  });

  std::vector<int> row_len(static_cast<std::size_t>(block_rows), 0);
  int last_row = -1, last_col = -1;
  for (std::size_t k : order) {
    const auto& e = entries[k];
    if (e.row < 0 || e.row >= block_rows) throw DimensionError("block row out of range");
    if (e.row != last_row || e.col != last_col) {
      row_len[static_cast<std::size_t>(e.row)] += 1;
      last_row = e.row;
      last_col = e.col;
    }
  }
  const int width = row_len.empty() ? 0 : *std::max_element(row_len.begin(), row_len.end());

  BellMatrix out(block_rows, width);
  std::vector<int> cursor(static_cast<std::size_t>(block_rows), -1);
  last_row = -1;
  last_col = -1;
  for (std::size_t k : order) {
    const auto& e = entries[k];
    if (e.row != last_row || e.col != last_col) {
      cursor[static_cast<std::size_t>(e.row)] += 1;
      out.set_col(e.row, cursor[static_cast<std::size_t>(e.row)], e.col);
      last_row = e.row;
      last_col = e.col;
    }
    const int slot = cursor[static_cast<std::size_t>(e.row)];
    for (int c = 0; c < 9; ++c) out.add_value(e.row, slot, c / 3, c % 3, e.m[static_cast<std::size_t>(c)]);
  }
  return out;
}

template <class Real>
BellMatrix<Real> BellMatrix<Real>::identity(int block_rows) {
  BellMatrix out(block_rows, 1);
  for (int r = 0; r < block_rows; ++r) {
    out.set_col(r, 0, r);
    for (int c = 0; c < 3; ++c) out.add_value(r, 0, c, c, Real(1));
  }
  return out;
}

template <class Real>
int BellMatrix<Real>::find_slot(int row, int col) const {
  for (int s = 0; s < width_; ++s) {
    const std::int32_t c = col_at(row, s);
    if (c == col) return s;
    if (c == kNoBlock) return -1;
  }
  return -1;
}

template <class Real>
std::size_t BellMatrix<Real>::live_blocks() const {
  std::size_t n = 0;
  for (std::int32_t c : cols_) n += (c != kNoBlock);
  return n;
}

template <class Real>
void BellMatrix<Real>::multiply_into(std::span<const Real> x, std::span<Real> y) const {
  if (static_cast<int>(y.size()) != rows()) throw DimensionError("output vector size mismatch");
  for (int row = 0; row < block_rows_; ++row) {
    Real acc0 = 0, acc1 = 0, acc2 = 0;
    for (int slot = 0; slot < width_; ++slot) {
      const std::int32_t col = cols_[index(row, slot)];
      if (col == kNoBlock) break;  // live columns are packed first
      const std::size_t base = static_cast<std::size_t>(3 * col);
      if (base + 2 >= x.size()) throw DimensionError("input vector too short for column index");
      const Real x0 = x[base], x1 = x[base + 1], x2 = x[base + 2];
      const std::size_t at = index(row, slot);
      acc0 += values_[plane(0) + at] * x0 + values_[plane(1) + at] * x1 + values_[plane(2) + at] * x2;
      acc1 += values_[plane(3) + at] * x0 + values_[plane(4) + at] * x1 + values_[plane(5) + at] * x2;
      acc2 += values_[plane(6) + at] * x0 + values_[plane(7) + at] * x1 + values_[plane(8) + at] * x2;
    }
    y[static_cast<std::size_t>(3 * row)] = acc0;
    y[static_cast<std::size_t>(3 * row + 1)] = acc1;
    y[static_cast<std::size_t>(3 * row + 2)] = acc2;
  }
}

template <class Real>
void BellMatrix<Real>::multiply_accumulate(std::span<const Real> x, std::span<Real> y) const {
  if (static_cast<int>(y.size()) != rows()) throw DimensionError("output vector size mismatch");
  for (int row = 0; row < block_rows_; ++row) {
    Real acc0 = 0, acc1 = 0, acc2 = 0;
    for (int slot = 0; slot < width_; ++slot) {
      const std::int32_t col = cols_[index(row, slot)];
      if (col == kNoBlock) break;
      const std::size_t base = static_cast<std::size_t>(3 * col);
      if (base + 2 >= x.size()) throw DimensionError("input vector too short for column index");
      const Real x0 = x[base], x1 = x[base + 1], x2 = x[base + 2];
      const std::size_t at = index(row, slot);
      acc0 += values_[plane(0) + at] * x0 + values_[plane(1) + at] * x1 + values_[plane(2) + at] * x2;
      acc1 += values_[plane(3) + at] * x0 + values_[plane(4) + at] * x1 + values_[plane(5) + at] * x2;
      acc2 += values_[plane(6) + at] * x0 + values_[plane(7) + at] * x1 + values_[plane(8) + at] * x2;
    }
    y[static_cast<std::size_t>(3 * row)] += acc0;
    y[static_cast<std::size_t>(3 * row + 1)] += acc1;
    y[static_cast<std::size_t>(3 * row + 2)] += acc2;
  }
}

template <class Real>
void BellMatrix<Real>::dump(std::ostream& os) const {
  os.precision(17);
  for (int row = 0; row < block_rows_; ++row) {
    for (int slot = 0; slot < width_; ++slot) {
      const std::int32_t col = col_at(row, slot);
      if (col == kNoBlock) break;
      os << row << ' ' << col;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) os << ' ' << value_at(row, slot, r, c);
      }
      os << '\n';
    }
  }
}

template <class Real>
std::vector<Real> spmv_serial(const BellMatrix<Real>& a, std::span<const Real> x) {
  if (static_cast<int>(x.size()) != a.rows()) throw DimensionError("spmv_serial: dim(x) != rows");
  std::vector<Real> y(static_cast<std::size_t>(a.rows()), Real(0));
  a.multiply_into(x, y);
  return y;
}

template class BellMatrix<double>;
template class BellMatrix<float>;
template std::vector<double> spmv_serial(const BellMatrix<double>&, std::span<const double>);
template std::vector<float> spmv_serial(const BellMatrix<float>&, std::span<const float>);

}  // namespace weft
