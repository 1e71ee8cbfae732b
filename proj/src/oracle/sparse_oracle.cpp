#include "oracle/sparse_oracle.hpp"

#include <set>

namespace weft::oracle {

BellMatrix<double> random_bell(Rng& rng, int block_rows, int extra_blocks_per_row) {
  std::vector<BlockEntry<double>> entries;
  std::set<std::pair<int, int>> seen;
  auto add = [&](int row, int col) {
    if (!seen.insert({row, col}).second) return;
    BlockEntry<double> e;
    e.row = row;
    e.col = col;
    for (auto& v : e.m) v = rng.uniform(-1.0, 1.0);
    entries.push_back(e);
  };
  for (int row = 0; row < block_rows; ++row) {
    add(row, row);
    for (int k = 0; k < extra_blocks_per_row; ++k) add(row, rng.uniform_int(0, block_rows - 1));
  }
  return BellMatrix<double>::from_entries(block_rows, entries);
}

}  // namespace weft::oracle
