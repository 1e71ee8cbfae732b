#include "weft/assembly.hpp"

namespace weft {

DistributedElements distribute_elements(std::span<const AssemblyElement> elements,
                                        const std::vector<DevicePartition>& partitions) {
  const int n = static_cast<int>(partitions.size());
  const PartitionMap pmap = PartitionMap::from(partitions);

  DistributedElements out;
  out.per_device.assign(static_cast<std::size_t>(n), {});
  out.row_bounds.assign(static_cast<std::size_t>(n), {});
  for (int d = 0; d < n; ++d) {
    out.row_bounds[static_cast<std::size_t>(d)].assign(static_cast<std::size_t>(partitions[static_cast<std::size_t>(d)].size()), 0);
  }

  for (int id = 0; id < static_cast<int>(elements.size()); ++id) {
    const auto& e = elements[static_cast<std::size_t>(id)];
    std::array<int, 4> owners{};
    for (int a = 0; a < e.stencil_size; ++a) {
      const int v = e.stencil[static_cast<std::size_t>(a)];
      if (v < 0 || v >= pmap.vertex_count) {
        throw DimensionError("element " + std::to_string(id) + ": stencil vertex " + std::to_string(v) +
                             " outside all partitions");
      }
      owners[static_cast<std::size_t>(a)] = pmap.owner(v);
    }
    // Collect the distinct owners in ascending order.
    std::array<int, 4> distinct{};
    int count = 0;
    for (int a = 0; a < e.stencil_size; ++a) {
      const int d = owners[static_cast<std::size_t>(a)];
      bool seen = false;
      for (int k = 0; k < count; ++k) seen = seen || distinct[static_cast<std::size_t>(k)] == d;
      if (!seen) distinct[static_cast<std::size_t>(count++)] = d;
    }
    std::sort(distinct.begin(), distinct.begin() + count);

    for (int k = 0; k < count; ++k) {
      const int d = distinct[static_cast<std::size_t>(k)];
      std::uint8_t mask = 0;
      for (int a = 0; a < e.stencil_size; ++a) {
        if (owners[static_cast<std::size_t>(a)] == d) mask |= static_cast<std::uint8_t>(1 << a);
      }
      out.per_device[static_cast<std::size_t>(d)].push_back({id, mask});
      for (int a = 0; a < e.stencil_size; ++a) {
        if (owners[static_cast<std::size_t>(a)] != d) continue;
        const int local = e.stencil[static_cast<std::size_t>(a)] - partitions[static_cast<std::size_t>(d)].begin;
        out.row_bounds[static_cast<std::size_t>(d)][static_cast<std::size_t>(local)] += e.stencil_size;
      }
    }
  }
  return out;
}

}  // namespace weft
