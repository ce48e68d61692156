#include "miml/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace miml {

namespace {

double sq_distance(const Matrix& x, std::size_t a, std::size_t b) {
  double s = 0.0;
  const double* ra = x.row(a);
  const double* rb = x.row(b);
  for (std::size_t t = 0; t < x.cols; ++t) {
    const double diff = ra[t] - rb[t];
    s += diff * diff;
  }
  return s;
}

NeighborGraph build(const Matrix& instances, std::size_t k, bool exclude_self, bool clamp) {
  const std::size_t m = instances.rows;
  if (k < 1) throw std::invalid_argument("knn_graph: k must be >= 1");
  // slots an instance can fill without repetition: m with self, m-1 without
  // (except m == 1, where the only fallback is the instance itself)
  const std::size_t fillable = exclude_self ? std::max<std::size_t>(m - 1, 1) : m;
  if (!clamp && k > fillable)
    throw std::invalid_argument("knn_graph: k=" + std::to_string(k) + " exceeds the " +
                                std::to_string(fillable) + " fillable slots of this bag");

  NeighborGraph g;
  g.num_instances = m;
  g.k = k;
  g.slots.assign(m * k, 0);
  g.valid_counts.assign(m, 0);

  std::vector<std::size_t> order(m);
  std::vector<double> dist(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t o = 0; o < m; ++o) dist[o] = sq_distance(instances, j, o);
    std::iota(order.begin(), order.end(), 0);
    // non-decreasing distance, ties toward the lower index
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

    std::size_t filled = 0;
    if (!exclude_self) {
      g.slots[j * k + filled++] = static_cast<int>(j);
    }
    for (std::size_t o = 0; o < m && filled < k; ++o) {
      if (order[o] == j) continue;  // self sorts first (distance 0) but is slot 0 already
      g.slots[j * k + filled++] = static_cast<int>(order[o]);
    }
    if (exclude_self && m == 1 && filled == 0) {
      // no other instance exists; fall back to self, flagged as padding below
      g.slots[j * k + filled++] = static_cast<int>(j);
      g.valid_counts[j] = 0;
    } else {
      g.valid_counts[j] = static_cast<int>(filled);
    }
    // pad by repeating the last real neighbor
    for (std::size_t s = filled; s < k; ++s) g.slots[j * k + s] = g.slots[j * k + s - 1];
  }
  return g;
}

}  // namespace

NeighborGraph knn_graph(const Matrix& instances, std::size_t k, bool exclude_self) {
  return build(instances, k, exclude_self, false);
}

NeighborGraph knn_graph(const Bag& bag, std::size_t k, bool exclude_self) {
  return build(bag.instances, k, exclude_self, false);
}

NeighborGraph knn_graph_clamped(const Matrix& instances, std::size_t k, bool exclude_self) {
  return build(instances, k, exclude_self, true);
}

NeighborGraph knn_graph_clamped(const Bag& bag, std::size_t k, bool exclude_self) {
  return build(bag.instances, k, exclude_self, true);
}

Tensor3 neighborhood_tensor(const Matrix& instances, const NeighborGraph& graph) {
  if (graph.num_instances != instances.rows)
    throw std::invalid_argument("neighborhood_tensor: graph built for a different bag");
  const std::size_t m = instances.rows;
  const std::size_t d = instances.cols;
  Tensor3 t(graph.k, m, d);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t s = 0; s < graph.k; ++s) {
      const double* src = instances.row(static_cast<std::size_t>(graph.at(j, s)));
      std::copy(src, src + d, t.row(s, j));
    }
  }
  return t;
}

Tensor3 neighborhood_tensor(const Bag& bag, const NeighborGraph& graph) {
  return neighborhood_tensor(bag.instances, graph);
}

Matrix flatten_neighborhoods(const Tensor3& t) {
  Matrix out(t.rows, t.depth * t.cols);
  for (std::size_t j = 0; j < t.rows; ++j)
    for (std::size_t s = 0; s < t.depth; ++s)
      std::copy(t.row(s, j), t.row(s, j) + t.cols, out.row(j) + s * t.cols);
  return out;
}

}  // namespace miml
