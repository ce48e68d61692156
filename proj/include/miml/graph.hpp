#pragma once

#include "miml/data.hpp"
#include "miml/matrix.hpp"

namespace miml {

// Per-instance neighbor slots, row j ordered by non-decreasing Euclidean
// distance from instance j. By default slot 0 is the instance itself and
// slots 1..k-1 are its k-1 nearest other instances, which keeps the tensor
// depth at k while still feeding each instance its own features. With
// exclude_self all k slots are other instances.
struct NeighborGraph {
  std::size_t num_instances = 0;
  std::size_t k = 0;
  std::vector<int> slots;        // num_instances * k
  std::vector<int> valid_counts; // per row; slots beyond this are padding

  int at(std::size_t j, std::size_t s) const { return slots[j * k + s]; }
  bool padded() const {
    for (std::size_t j = 0; j < num_instances; ++j)
      if (static_cast<std::size_t>(valid_counts[j]) < k) return true;
    return false;
  }
};

// Strict construction: throws when the bag has too few instances for k.
NeighborGraph knn_graph(const Matrix& instances, std::size_t k, bool exclude_self = false);
NeighborGraph knn_graph(const Bag& bag, std::size_t k, bool exclude_self = false);

// Batch-friendly construction: clamps effective k to what the bag offers and
// pads rows by repeating the last neighbor; valid_counts flags the padding.
NeighborGraph knn_graph_clamped(const Matrix& instances, std::size_t k, bool exclude_self = false);
NeighborGraph knn_graph_clamped(const Bag& bag, std::size_t k, bool exclude_self = false);

// T[s, j, :] = features of slot s of instance j; depth k, shape k x m x d.
Tensor3 neighborhood_tensor(const Matrix& instances, const NeighborGraph& graph);
Tensor3 neighborhood_tensor(const Bag& bag, const NeighborGraph& graph);

// m x (k*d) rows: instance j's slots concatenated, ready for a first layer
// whose k x 1 filter is a dot product over the flattened neighborhood.
Matrix flatten_neighborhoods(const Tensor3& t);

}  // namespace miml
