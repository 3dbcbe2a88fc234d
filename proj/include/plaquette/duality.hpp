#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "algebra.hpp"
#include "dual_graph.hpp"
#include "lattice.hpp"
#include "prcm.hpp"

namespace plaquette {

/** \brief Dual bond configuration: bond n is open exactly when plaquette n is absent. */
struct DualBondConfig {
  std::shared_ptr<const DualGraph> graph;
  std::vector<std::uint8_t> open;

  int components() const { return dual_components(*graph, open); }
  int open_count() const { return static_cast<int>(std::count(open.begin(), open.end(), 1)); }
};

inline DualBondConfig dualize(const BoxComplex& K, const PercolationConfig& P) {
  K.validate(P);
  return DualBondConfig{std::make_shared<DualGraph>(K), dual_open_edges(K, P)};
}

inline PercolationConfig undualize(const BoxComplex& K, const DualBondConfig& Q) {
  PercolationConfig P = K.empty_config();
  for (int n : K.state_cells()) P.bits[n] = Q.open[n] ? 0 : 1;
  return P;
}

/**
 * \brief Unnormalized random-cluster weight of the dual bonds: p*^open (1-p*)^closed
 * over state bonds, times q to the number of components of the whole dual graph.
 */
inline long double dual_rcm_weight(const BoxComplex& K, const DualGraph& G, const std::vector<std::uint8_t>& open,
                                   double ps, double q) {
  int o = 0;
  for (int n : K.state_cells()) o += open[n];
  const int c = K.state_count() - o;
  return std::pow(static_cast<long double>(ps), o) * std::pow(static_cast<long double>(1.0 - ps), c) *
         std::pow(static_cast<long double>(q), dual_components(G, open));
}

/** \brief Largest |mu(P) - mu*(Q(P))| over all states, both measures computed exactly. */
inline double duality_discrepancy(const BoxComplex& K, const PrcmParams& params) {
  ExactMeasure m = enumerate_measure(K, params);
  DualGraph G(K);
  const double ps = p_star(params.p, params.q);
  std::vector<long double> w(m.masks.size());
  long double Z = 0;
  for (std::size_t n = 0; n < m.masks.size(); ++n) {
    w[n] = dual_rcm_weight(K, G, dual_open_edges(K, K.config_from_mask(m.masks[n])), ps, params.q);
    Z += w[n];
  }
  double worst = 0;
  for (std::size_t n = 0; n < w.size(); ++n)
    worst = std::max(worst, static_cast<double>(std::fabs(m.prob[n] - w[n] / Z)));
  return worst;
}

/** \brief Closed walk in the dual graph; edges[j] joins vertices[j] to vertices[j+1] (cyclically). */
struct DualLoop {
  std::vector<int> vertices;
  std::vector<int> edges;
};

/**
 * \brief Signed crossings of dual bonds with the plaquettes of a (d-1)-box r, whose
 * boundary is gamma. Decides V_gamma through the linking numbers of the cycles of the
 * open dual graph.
 */
class LinkingOracle {
 public:
  LinkingOracle(const BoxComplex& K, const Box& spanning) : G_(std::make_shared<DualGraph>(K)), r_(spanning) {
    if (spanning.dim() != K.d() || spanning.extended_count() != K.d() - 1)
      throw std::invalid_argument("spanning box must have exactly one degenerate axis");
    if (!K.box().contains(spanning)) throw std::invalid_argument("spanning box leaves the complex");
    int b = 0;
    while (!spanning.degenerate(b)) ++b;
    axis_ = b;
    sign_.assign(K.plaquette_count(), 0);
    for (int n = 0; n < K.plaquette_count(); ++n)
      if (G_->normal_axis(n) == b && cell_in_box(K.plaquettes()[n], spanning)) sign_[n] = 1;
    parent_edge_.assign(G_->vertex_count(), -1);
    phi_.assign(G_->vertex_count(), 0);
    seen_.assign(G_->vertex_count(), 0);
  }

  const DualGraph& graph() const { return *G_; }
  const Box& spanning() const { return r_; }
  int axis() const { return axis_; }

  // Signed crossing of bond e traversed from u.
  int step(int e, int u) const {
    if (!sign_[e]) return 0;
    return G_->ends(e).first == u ? sign_[e] : -sign_[e];
  }

  /** \brief True when every cycle of the open dual graph has linking number 0 mod q (q = 0: over Z). */
  bool v_gamma(const std::vector<std::uint8_t>& open, std::int64_t q) const {
    bool ok = true;
    forest(open, [&](long link, int, int) {
      if (q == 0 ? link != 0 : reduce_mod(link, q) != 0) ok = false;
      return ok;
    });
    return ok;
  }

  /** \brief Linking numbers of the fundamental cycles, one per non-tree open bond. */
  std::vector<long> fundamental_links(const std::vector<std::uint8_t>& open) const {
    std::vector<long> out;
    forest(open, [&](long link, int, int) {
      out.push_back(link);
      return true;
    });
    return out;
  }

  /** \brief Fundamental cycles as explicit loops together with their linking numbers. */
  std::pair<std::vector<DualLoop>, std::vector<long>> fundamental_loops(const std::vector<std::uint8_t>& open) const {
    std::vector<DualLoop> loops;
    std::vector<long> links;
    forest(open, [&](long link, int e, int u) {
      int w = other(e, u);
      // path u -> ... -> lca <- ... <- w, closed by e from w back to u
      std::vector<int> up_u, up_w;
      for (int x = u; x != -1; x = parent_edge_[x] < 0 ? -1 : other(parent_edge_[x], x)) up_u.push_back(x);
      for (int x = w; x != -1; x = parent_edge_[x] < 0 ? -1 : other(parent_edge_[x], x)) up_w.push_back(x);
      while (up_u.size() > 1 && up_w.size() > 1 && up_u[up_u.size() - 2] == up_w[up_w.size() - 2]) {
        up_u.pop_back();
        up_w.pop_back();
      }
      DualLoop L;
      for (int x : up_u) L.vertices.push_back(x);
      for (std::size_t k = up_w.size() - 1; k-- > 0;) L.vertices.push_back(up_w[k]);
      for (std::size_t k = 0; k + 1 < up_u.size(); ++k) L.edges.push_back(parent_edge_[up_u[k]]);
      for (std::size_t k = up_w.size() - 1; k-- > 0;) L.edges.push_back(parent_edge_[up_w[k]]);
      L.edges.push_back(e);
      // Traverse e from u to w, the direction in which link was measured.
      const std::size_t n = L.vertices.size();
      DualLoop R;
      for (std::size_t k = 0; k < n; ++k) {
        R.vertices.push_back(L.vertices[(n - k) % n]);
        R.edges.push_back(L.edges[n - 1 - k]);
      }
      loops.push_back(std::move(R));
      links.push_back(link);
      return true;
    });
    return {loops, links};
  }

  /** \brief Signed number of crossings of the loop through the spanning box. */
  long linking_number(const DualLoop& loop) const {
    const std::size_t n = loop.vertices.size();
    if (n == 0 || loop.edges.size() != n) throw std::invalid_argument("malformed dual loop");
    long s = 0;
    for (std::size_t k = 0; k < n; ++k) {
      int u = loop.vertices[k], w = loop.vertices[(k + 1) % n], e = loop.edges[k];
      auto [a, b] = G_->ends(e);
      if (!((a == u && b == w) || (a == w && b == u))) throw std::invalid_argument("dual loop edge does not join its vertices");
      s += step(e, u);
    }
    return s;
  }

 private:
  int other(int e, int u) const {
    auto [a, b] = G_->ends(e);
    return a == u ? b : a;
  }

  // Breadth-first spanning forest over open bonds; fn(link, e, u) for each non-tree bond seen from u.
  template <class Fn>
  void forest(const std::vector<std::uint8_t>& open, Fn&& fn) const {
    const int V = G_->vertex_count();
    std::fill(seen_.begin(), seen_.end(), 0);
    std::fill(parent_edge_.begin(), parent_edge_.end(), -1);
    std::vector<std::uint8_t> done(open.size(), 0);
    std::vector<int> queue;
    for (int root = 0; root < V; ++root) {
      if (seen_[root]) continue;
      seen_[root] = 1;
      phi_[root] = 0;
      queue.assign(1, root);
      for (std::size_t h = 0; h < queue.size(); ++h) {
        int u = queue[h];
        for (auto [e, w] : G_->neighbors(u)) {
          if (!open[e] || e == parent_edge_[u] || done[e]) continue;
          if (!seen_[w]) {
            seen_[w] = 1;
            parent_edge_[w] = e;
            phi_[w] = phi_[u] + step(e, u);
            queue.push_back(w);
          } else {
            done[e] = 1;
            if (!fn(phi_[u] + step(e, u) - phi_[w], e, u)) return;
          }
        }
      }
    }
  }

  std::shared_ptr<const DualGraph> G_;
  Box r_;
  int axis_ = 0;
  std::vector<int> sign_;
  mutable std::vector<int> parent_edge_;
  mutable std::vector<long> phi_;
  mutable std::vector<std::uint8_t> seen_;
};

/** \brief V_gamma for gamma = boundary of the (d-1)-box r, decided on the dual side. */
inline bool v_gamma_dual_test(const BoxComplex& K, const PercolationConfig& P, const Box& r, std::int64_t q) {
  K.validate(P);
  return LinkingOracle(K, r).v_gamma(dual_open_edges(K, P), q);
}

// ---------------------------------------------------------------------------
// Crossing events

namespace detail {
inline int cube_coord(const CellId& cube, int axis) { return cube.anchor[axis] / 2; }

inline void require_inside(const BoxComplex& K, const Box& y) {
  if (!K.box().contains(y)) throw std::invalid_argument("event region leaves the complex: " + y.str());
}
}  // namespace detail

/**
 * \brief R^box_axis(y): a hypersurface of plaquettes inside y separates the two faces of y
 * orthogonal to axis. Equivalently no dual path inside y joins the two end layers.
 */
inline bool crossing_event(const BoxComplex& K, const DualGraph& G, const PercolationConfig& P, const Box& y, int axis) {
  detail::require_inside(K, y);
  for (int j = 0; j < y.dim(); ++j)
    if (y.degenerate(j)) return false;
  const CellIndex& cubes = G.cubes();
  std::vector<std::uint8_t> inside(cubes.size(), 0), seen(cubes.size(), 0);
  std::vector<int> queue;
  for (int c = 0; c < cubes.size(); ++c) {
    const CellId& cube = cubes[c];
    bool in = true;
    for (int j = 0; j < y.dim() && in; ++j) {
      int x = detail::cube_coord(cube, j);
      in = x >= y.lows[j] && x < y.highs[j];
    }
    if (!in) continue;
    inside[c] = 1;
    if (detail::cube_coord(cube, axis) == y.lows[axis]) {
      seen[c] = 1;
      queue.push_back(c);
    }
  }
  for (std::size_t h = 0; h < queue.size(); ++h) {
    int u = queue[h];
    if (detail::cube_coord(cubes[u], axis) == y.highs[axis] - 1) return false;
    for (auto [e, w] : G.neighbors(u)) {
      if (w == G.exterior() || !inside[w] || seen[w] || K.occupied(P, e)) continue;
      seen[w] = 1;
      queue.push_back(w);
    }
  }
  return true;
}

inline bool crossing_event(const BoxComplex& K, const PercolationConfig& P, const Box& y, int axis) {
  return crossing_event(K, DualGraph(K), P, y, axis);
}

/**
 * \brief Whether the part of the box boundary above x_axis = h is joined to the part below
 * by a dual path through vacant plaquettes, entering and leaving through vacant boundary plaquettes.
 */
inline bool equator_crossing(const BoxComplex& K, const PercolationConfig& P, int axis, int h) {
  DualGraph G(K);
  const CellIndex& cubes = G.cubes();
  std::vector<std::uint8_t> seen(cubes.size(), 0), target(cubes.size(), 0);
  std::vector<int> queue;
  for (auto [e, c] : G.neighbors(G.exterior())) {
    if (K.occupied(P, e)) continue;
    int ctr = K.plaquettes()[e].center()[axis];
    if (ctr > 2 * h && !seen[c]) {
      seen[c] = 1;
      queue.push_back(c);
    }
    if (ctr < 2 * h) target[c] = 1;
  }
  for (std::size_t k = 0; k < queue.size(); ++k) {
    int u = queue[k];
    if (target[u]) return true;
    for (auto [e, w] : G.neighbors(u)) {
      if (w == G.exterior() || seen[w] || K.occupied(P, e)) continue;
      seen[w] = 1;
      queue.push_back(w);
    }
  }
  return false;
}

/**
 * \brief Xi(r, L) for a full-dimensional box r: every face of r is screened from the
 * boundary of r^L by a crossing of the slab of thickness L outside that face.
 */
inline bool xi_event(const BoxComplex& K, const PercolationConfig& P, const Box& r, int L) {
  DualGraph G(K);
  const Box outer = r.expanded(L);
  detail::require_inside(K, outer);
  for (int j = 0; j < r.dim(); ++j) {
    Box hi = outer, lo = outer;
    hi.lows[j] = r.highs[j];
    lo.highs[j] = r.lows[j];
    if (!crossing_event(K, G, P, hi, j) || !crossing_event(K, G, P, lo, j)) return false;
  }
  return true;
}

/** \brief The two degenerate axes of a (d-2)-box, ascending. */
inline std::pair<int, int> tube_axes(const Box& s) {
  std::vector<int> deg;
  for (int j = 0; j < s.dim(); ++j)
    if (s.degenerate(j)) deg.push_back(j);
  if (deg.size() != 2) throw std::invalid_argument("tube needs a box with exactly two degenerate axes");
  return {deg[0], deg[1]};
}

/** \brief t(s, L): s thickened by L in its two normal directions. */
inline Box tube(const Box& s, int L) {
  auto [a, b] = tube_axes(s);
  Box t = s;
  t.lows[a] -= L;
  t.highs[a] += L;
  t.lows[b] -= L;
  t.highs[b] += L;
  return t;
}

/** \brief D_t: crossings of the four slabs of the tube that surround s. L must be even. */
inline bool d_t_event(const BoxComplex& K, const PercolationConfig& P, const Box& s, int L) {
  if (L <= 0 || L % 2 != 0) throw std::invalid_argument("tube width must be positive and even");
  auto [a, b] = tube_axes(s);
  const Box t = tube(s, L);
  detail::require_inside(K, t);
  DualGraph G(K);
  const int ca = s.lows[a], cb = s.lows[b];
  Box y1 = t, y2 = t, y3 = t, y4 = t;
  y1.highs[a] = ca - L / 2;
  y2.lows[a] = ca + L / 2;
  y3.highs[b] = cb - L / 2;
  y4.lows[b] = cb + L / 2;
  return crossing_event(K, G, P, y1, a) && crossing_event(K, G, P, y2, a) && crossing_event(K, G, P, y3, b) &&
         crossing_event(K, G, P, y4, b);
}

/** \brief C_t: rho_s plus a chain on the boundary of t bounds in P inside t. */
inline bool c_t_event(const BoxComplex& K, const PercolationConfig& P, const Box& s, int L, std::int64_t q) {
  const Box t = tube(s, L);
  detail::require_inside(K, t);
  return relative_null_homology(K, P, rho_chain(s, q), t, q);
}

inline bool c_bar_event(const BoxComplex& K, const PercolationConfig& P, const Box& s, int L, std::int64_t q) {
  return d_t_event(K, P, s, L) && c_t_event(K, P, s, L, q);
}

/** \brief E_{u,L}: every plaquette of the closed box u^L is present. */
inline bool e_u_event(const BoxComplex& K, const PercolationConfig& P, const Box& u, int L) {
  const Box ul = u.expanded(L);
  detail::require_inside(K, ul);
  for (int n = 0; n < K.plaquette_count(); ++n)
    if (cell_in_box(K.plaquettes()[n], ul) && !K.occupied(P, n)) return false;
  return true;
}

/** \brief Faces of r of the given dimension, as degenerate boxes. */
inline std::vector<Box> box_faces(const Box& r, int dim) {
  std::vector<int> ext;
  for (int j = 0; j < r.dim(); ++j)
    if (!r.degenerate(j)) ext.push_back(j);
  const int pin = static_cast<int>(ext.size()) - dim;
  std::vector<Box> out;
  if (pin < 0) return out;
  const int E = static_cast<int>(ext.size());
  for (std::uint32_t m = 0; m < (1u << E); ++m) {
    if (std::popcount(m) != pin) continue;
    for (std::uint32_t side = 0; side < (1u << pin); ++side) {
      Box f = r;
      int k = 0;
      for (int t = 0; t < E; ++t) {
        if (!((m >> t) & 1u)) continue;
        int j = ext[t];
        int v = ((side >> k) & 1u) ? r.highs[j] : r.lows[j];
        f.lows[j] = f.highs[j] = v;
        ++k;
      }
      out.push_back(f);
    }
  }
  return out;
}

/**
 * \brief Left side of the perimeter-law implication for the (d-1)-box r: crossings of the
 * slabs above and below r, the tube events around every (d-2)-face, and full corners.
 */
inline bool implyv_lhs(const BoxComplex& K, const PercolationConfig& P, const Box& r, int L, std::int64_t q) {
  if (L <= 0 || L % 2 != 0) throw std::invalid_argument("L must be positive and even");
  int b = 0;
  while (b < r.dim() && !r.degenerate(b)) ++b;
  if (b == r.dim() || r.extended_count() != r.dim() - 1) throw std::invalid_argument("r must be a (d-1)-box");
  Box y6 = r.expanded(L), y7 = r.expanded(L);
  const int c = r.lows[b];
  y6.highs[b] = c - L / 2;
  y7.lows[b] = c + L / 2;
  DualGraph G(K);
  if (!crossing_event(K, G, P, y6, b) || !crossing_event(K, G, P, y7, b)) return false;
  for (const Box& u : box_faces(r, r.dim() - 3))
    if (!e_u_event(K, P, u, L)) return false;
  for (const Box& s : box_faces(r, r.dim() - 2))
    if (!c_bar_event(K, P, s, L, q)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Subcritical dual side: columns above r and the perimeter witness

/**
 * \brief F_h for the plaquette sigma of the (d-1)-box r: the column of cubes above sigma
 * from height h on is joined by vacant plaquettes to the layer of cubes just below the plane of r.
 */
inline bool f_h_event(const BoxComplex& K, const PercolationConfig& P, const Box& r, const CellId& sigma, int h) {
  int b = 0;
  while (!r.degenerate(b)) ++b;
  const int c = r.lows[b];
  DualGraph G(K);
  const CellIndex& cubes = G.cubes();
  std::vector<std::uint8_t> seen(cubes.size(), 0);
  std::vector<int> queue;
  for (int k = 0; k < cubes.size(); ++k)
    if (detail::cube_coord(cubes[k], b) == c - 1) {
      seen[k] = 1;
      queue.push_back(k);
    }
  auto in_column = [&](const CellId& cube) {
    for (int j = 0; j < cube.ambient(); ++j) {
      if (j == b) continue;
      if (cube.anchor[j] != sigma.anchor[j]) return false;
    }
    return detail::cube_coord(cube, b) >= c + h;
  };
  for (std::size_t k = 0; k < queue.size(); ++k) {
    int u = queue[k];
    if (in_column(cubes[u])) return true;
    for (auto [e, w] : G.neighbors(u)) {
      if (w == G.exterior() || seen[w] || K.occupied(P, e)) continue;
      seen[w] = 1;
      queue.push_back(w);
    }
  }
  return false;
}

/**
 * \brief A (d-1)-chain in P with boundary gamma = boundary(rho_r): rho_r pushed over the dual
 * clusters, in the half-space above r, of the cubes sitting on vacant plaquettes of r.
 * Empty when such a cluster escapes the complex or meets a vacant plaquette of the plane outside r.
 */
inline std::optional<Chain> perimeter_witness(const BoxComplex& K, const PercolationConfig& P, const Box& r) {
  if (r.extended_count() != r.dim() - 1) throw std::invalid_argument("r must be a (d-1)-box");
  int b = 0;
  while (!r.degenerate(b)) ++b;
  const int c = r.lows[b];
  DualGraph G(K);
  const CellIndex& cubes = G.cubes();
  std::vector<std::uint8_t> inU(cubes.size(), 0);
  std::vector<int> queue;
  for (int n = 0; n < K.plaquette_count(); ++n) {
    if (G.normal_axis(n) != b || !cell_in_box(K.plaquettes()[n], r) || K.occupied(P, n)) continue;
    int above = G.ends(n).second;
    if (above == G.exterior()) return std::nullopt;
    if (!inU[above]) {
      inU[above] = 1;
      queue.push_back(above);
    }
  }
  for (std::size_t k = 0; k < queue.size(); ++k) {
    int u = queue[k];
    for (auto [e, w] : G.neighbors(u)) {
      if (K.occupied(P, e)) continue;
      if (w == G.exterior()) return std::nullopt;
      if (detail::cube_coord(cubes[w], b) < c || inU[w]) continue;
      inU[w] = 1;
      queue.push_back(w);
    }
  }
  Chain w = rho_chain(r);
  if (!queue.empty()) {
    Chain up(K.d() - 1, 0);
    for (int u : queue) up += boundary_of_cell(cubes[u]);
    CellId bottom = cubes[queue.front()];
    bottom.dirs &= ~(1u << b);
    const std::int64_t s = -boundary_of_cell(cubes[queue.front()]).coeff(bottom);
    w += up.scaled(s);
  }
  for (const auto& kv : w.coeffs)
    if (!K.occupied(P, K.plaquettes().at(kv.first))) return std::nullopt;
  return w;
}

}  // namespace plaquette
