#pragma once

#include <bit>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lattice.hpp"

namespace plaquette {

/**
 * \brief Dual graph of the (d-1)-plaquettes of a box: one vertex per d-cube and one
 * exterior vertex; each plaquette is the edge between the two cubes it separates.
 */
class DualGraph {
 public:
  explicit DualGraph(const BoxComplex& K) : cubes_(enumerate_cells(K.box(), K.d())) {
    if (K.i() != K.d() - 1) throw std::invalid_argument("dual graph needs i = d - 1");
    const int d = K.d();
    const std::uint32_t full = (1u << d) - 1;
    ext_ = cubes_.size();
    ends_.resize(K.plaquette_count());
    normal_.resize(K.plaquette_count());
    adj_.resize(ext_ + 1);
    for (int n = 0; n < K.plaquette_count(); ++n) {
      const CellId& c = K.plaquettes()[n];
      int a = std::countr_zero(full & ~c.dirs);
      normal_[n] = a;
      CellId above = c;
      above.dirs = full;
      CellId below = above;
      below.anchor[a] -= 2;
      int u = cubes_.find(below), v = cubes_.find(above);
      if (u < 0) u = ext_;
      if (v < 0) v = ext_;
      ends_[n] = {u, v};
      adj_[u].push_back({n, v});
      adj_[v].push_back({n, u});
    }
  }

  int vertex_count() const { return ext_ + 1; }
  int exterior() const { return ext_; }
  int edge_count() const { return static_cast<int>(ends_.size()); }
  const CellIndex& cubes() const { return cubes_; }
  /** \brief (below, above) along the normal axis of the plaquette. */
  std::pair<int, int> ends(int plaq) const { return ends_[plaq]; }
  int normal_axis(int plaq) const { return normal_[plaq]; }
  const std::vector<std::pair<int, int>>& neighbors(int v) const { return adj_[v]; }

 private:
  CellIndex cubes_;
  int ext_ = 0;
  std::vector<std::pair<int, int>> ends_;
  std::vector<int> normal_;
  std::vector<std::vector<std::pair<int, int>>> adj_;
};

/** \brief Union-find with path halving. */
class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n), count_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[std::max(a, b)] = std::min(a, b);
    --count_;
    return true;
  }
  int components() const { return count_; }

 private:
  std::vector<int> parent_;
  int count_;
};

/** \brief Dual edge state: open exactly when the plaquette is absent from the effective complex. */
inline std::vector<std::uint8_t> dual_open_edges(const BoxComplex& K, const PercolationConfig& P) {
  std::vector<std::uint8_t> open(K.plaquette_count());
  for (int n = 0; n < K.plaquette_count(); ++n) open[n] = K.occupied(P, n) ? 0 : 1;
  return open;
}

inline int dual_components(const DualGraph& G, const std::vector<std::uint8_t>& open) {
  DisjointSets ds(G.vertex_count());
  for (int e = 0; e < G.edge_count(); ++e)
    if (open[e]) ds.unite(G.ends(e).first, G.ends(e).second);
  return ds.components();
}

}  // namespace plaquette
