#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace plaquette {

constexpr int kMaxDim = 16;

/** \brief Axis-parallel box [lows, highs] in Z^d. Axes are 0-based. */
struct Box {
  std::vector<int> lows;
  std::vector<int> highs;

  Box() = default;
  Box(std::vector<int> lo, std::vector<int> hi) : lows(std::move(lo)), highs(std::move(hi)) {
    if (lows.size() != highs.size() || lows.empty() || lows.size() > kMaxDim)
      throw std::invalid_argument("box: bad dimension");
    for (std::size_t j = 0; j < lows.size(); ++j)
      if (lows[j] > highs[j]) throw std::invalid_argument("box: low exceeds high");
  }

  static Box from_extents(const std::vector<int>& m) {
    return Box(std::vector<int>(m.size(), 0), m);
  }

  int dim() const { return static_cast<int>(lows.size()); }
  int extent(int j) const { return highs[j] - lows[j]; }
  bool degenerate(int j) const { return lows[j] == highs[j]; }

  int extended_count() const {
    int c = 0;
    for (int j = 0; j < dim(); ++j) c += degenerate(j) ? 0 : 1;
    return c;
  }

  std::uint32_t extended_mask() const {
    std::uint32_t m = 0;
    for (int j = 0; j < dim(); ++j)
      if (!degenerate(j)) m |= 1u << j;
    return m;
  }

  Box expanded(int L) const {
    Box b = *this;
    for (int j = 0; j < dim(); ++j) {
      b.lows[j] -= L;
      b.highs[j] += L;
    }
    return b;
  }

  bool contains(const Box& o) const {
    for (int j = 0; j < dim(); ++j)
      if (o.lows[j] < lows[j] || o.highs[j] > highs[j]) return false;
    return true;
  }

  long long cube_count() const {
    long long n = 1;
    for (int j = 0; j < dim(); ++j) n *= extent(j);
    return n;
  }

  std::string str() const {
    std::ostringstream os;
    for (int j = 0; j < dim(); ++j) os << (j ? "x" : "") << '[' << lows[j] << ',' << highs[j] << ']';
    return os.str();
  }

  bool operator==(const Box&) const = default;
};

/**
 * \brief Cubical cell stored in doubled coordinates.
 *
 * anchor is twice the minimal corner. Primal cells have even anchors, cells of the
 * dual lattice (Z + 1/2)^d have odd anchors. Bit j of dirs marks axis j as extended.
 */
struct CellId {
  std::vector<int> anchor;
  std::uint32_t dirs = 0;

  int dim() const { return std::popcount(dirs); }
  int ambient() const { return static_cast<int>(anchor.size()); }
  bool extended(int j) const { return (dirs >> j) & 1u; }
  bool is_primal() const {
    return std::all_of(anchor.begin(), anchor.end(), [](int a) { return (a & 1) == 0; });
  }

  // Doubled center.
  std::vector<int> center() const {
    std::vector<int> c = anchor;
    for (int j = 0; j < ambient(); ++j)
      if (extended(j)) c[j] += 1;
    return c;
  }

  // Doubled coordinate range along axis j.
  int lo(int j) const { return anchor[j]; }
  int hi(int j) const { return anchor[j] + (extended(j) ? 2 : 0); }

  std::vector<int> axes() const {
    std::vector<int> a;
    for (int j = 0; j < ambient(); ++j)
      if (extended(j)) a.push_back(j);
    return a;
  }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (int j = 0; j < ambient(); ++j) {
      if (j) os << ',';
      if (extended(j))
        os << '[' << anchor[j] / 2.0 << ',' << anchor[j] / 2.0 + 1 << ']';
      else
        os << anchor[j] / 2.0;
    }
    os << ')';
    return os.str();
  }

  auto operator<=>(const CellId&) const = default;
};

struct CellIdHash {
  std::size_t operator()(const CellId& c) const noexcept {
    std::size_t h = 1469598103934665603ull ^ c.dirs;
    for (int a : c.anchor) h = (h ^ static_cast<std::size_t>(a + 0x9e37)) * 1099511628211ull;
    return h;
  }
};

inline CellId primal_cell(const std::vector<int>& corner, std::uint32_t dirs) {
  CellId c;
  c.anchor.resize(corner.size());
  for (std::size_t j = 0; j < corner.size(); ++j) c.anchor[j] = 2 * corner[j];
  c.dirs = dirs;
  return c;
}

/** \brief Closed cell of a nondegenerate or degenerate box as a single cell of its own dimension. */
inline CellId box_cell(const Box& b) {
  for (int j = 0; j < b.dim(); ++j)
    if (b.extent(j) > 1) throw std::invalid_argument("box_cell: box is not a single cell");
  return primal_cell(b.lows, b.extended_mask());
}

inline bool cell_in_box(const CellId& c, const Box& b) {
  for (int j = 0; j < c.ambient(); ++j)
    if (c.lo(j) < 2 * b.lows[j] || c.hi(j) > 2 * b.highs[j]) return false;
  return true;
}

// Cell inside the closed box and contained in its topological boundary.
inline bool cell_on_box_boundary(const CellId& c, const Box& b) {
  if (!cell_in_box(c, b)) return false;
  for (int j = 0; j < c.ambient(); ++j) {
    if (b.degenerate(j)) continue;
    if (!c.extended(j) && (c.anchor[j] == 2 * b.lows[j] || c.anchor[j] == 2 * b.highs[j])) return true;
  }
  // A box with degenerate axes is its own boundary only in the lower-dimensional sense.
  return false;
}

/**
 * \brief Dual cell: the cell of the other lattice meeting c in its center, with
 * complementary extended axes.
 */
inline CellId dualize_cell(const CellId& c) {
  CellId out;
  out.anchor.resize(c.ambient());
  std::vector<int> ctr = c.center();
  std::uint32_t full = c.ambient() == 32 ? ~0u : ((1u << c.ambient()) - 1);
  out.dirs = full & ~c.dirs;
  for (int j = 0; j < c.ambient(); ++j) out.anchor[j] = c.extended(j) ? ctr[j] : ctr[j] - 1;
  return out;
}

/**
 * \brief All k-cells of the closed box, sorted by (anchor, dirs).
 * With dual set, the k-cells of the dual lattice inside the shrunk box r^{-1/2}.
 */
inline std::vector<CellId> enumerate_cells(const Box& box, int k, bool dual = false) {
  const int d = box.dim();
  if (k < 0 || k > d) throw std::invalid_argument("enumerate_cells: bad cell dimension");
  std::vector<int> A(d), B(d);
  for (int j = 0; j < d; ++j) {
    A[j] = 2 * box.lows[j] + (dual ? 1 : 0);
    B[j] = 2 * box.highs[j] - (dual ? 1 : 0);
  }
  std::vector<CellId> out;
  for (std::uint32_t dirs = 0; dirs < (1u << d); ++dirs) {
    if (std::popcount(dirs) != k) continue;
    std::vector<int> lo(d), hi(d);
    bool empty = false;
    for (int j = 0; j < d; ++j) {
      lo[j] = A[j];
      hi[j] = ((dirs >> j) & 1u) ? B[j] - 2 : B[j];
      if (hi[j] < lo[j]) empty = true;
    }
    if (empty) continue;
    CellId c;
    c.dirs = dirs;
    c.anchor = lo;
    for (;;) {
      out.push_back(c);
      int j = d - 1;
      while (j >= 0) {
        c.anchor[j] += 2;
        if (c.anchor[j] <= hi[j]) break;
        c.anchor[j] = lo[j];
        --j;
      }
      if (j < 0) break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/** \brief Canonical indexing of a list of cells. */
class CellIndex {
 public:
  CellIndex() = default;
  explicit CellIndex(std::vector<CellId> cells) : cells_(std::move(cells)) {
    map_.reserve(cells_.size() * 2);
    for (std::size_t n = 0; n < cells_.size(); ++n) map_.emplace(cells_[n], static_cast<int>(n));
  }
  int size() const { return static_cast<int>(cells_.size()); }
  const CellId& operator[](int n) const { return cells_[n]; }
  const std::vector<CellId>& cells() const { return cells_; }
  int find(const CellId& c) const {
    auto it = map_.find(c);
    return it == map_.end() ? -1 : it->second;
  }
  int at(const CellId& c) const {
    int n = find(c);
    if (n < 0) throw std::out_of_range("cell not indexed: " + c.str());
    return n;
  }

 private:
  std::vector<CellId> cells_;
  std::unordered_map<CellId, int, CellIdHash> map_;
};

inline std::int64_t reduce_mod(std::int64_t v, std::int64_t q) {
  if (q == 0) return v;
  std::int64_t r = v % q;
  return r < 0 ? r + q : r;
}

/** \brief Finitely supported chain with coefficients in Z (q = 0) or Z_q. */
struct Chain {
  int dim = -1;
  std::int64_t q = 0;
  std::map<CellId, std::int64_t> coeffs;

  Chain() = default;
  Chain(int k, std::int64_t modulus) : dim(k), q(modulus) {
    if (modulus < 0) throw std::invalid_argument("chain: negative modulus");
  }

  void add(const CellId& c, std::int64_t v) {
    if (dim >= 0 && c.dim() != dim) throw std::invalid_argument("chain: cell dimension mismatch");
    if (dim < 0) dim = c.dim();
    std::int64_t nv = reduce_mod(coeffs[c] + v, q);
    if (nv == 0)
      coeffs.erase(c);
    else
      coeffs[c] = nv;
  }

  std::int64_t coeff(const CellId& c) const {
    auto it = coeffs.find(c);
    return it == coeffs.end() ? 0 : it->second;
  }

  bool empty() const { return coeffs.empty(); }
  int support_size() const { return static_cast<int>(coeffs.size()); }

  Chain& operator+=(const Chain& o) {
    for (const auto& [c, v] : o.coeffs) add(c, v);
    return *this;
  }
  Chain scaled(std::int64_t s) const {
    Chain out(dim, q);
    for (const auto& [c, v] : coeffs) out.add(c, s * v);
    return out;
  }
  Chain reduced(std::int64_t modulus) const {
    Chain out(dim, modulus);
    for (const auto& [c, v] : coeffs) out.add(c, v);
    return out;
  }
  bool operator==(const Chain& o) const { return coeffs == o.coeffs; }
};

/** \brief Boundary of a single cell; the l-th extended axis carries sign (-1)^(l-1). */
inline Chain boundary_of_cell(const CellId& c, std::int64_t q = 0) {
  if (c.dim() == 0) throw std::invalid_argument("boundary of a vertex: use augmentation");
  Chain out(c.dim() - 1, q);
  int l = 0;
  for (int j = 0; j < c.ambient(); ++j) {
    if (!c.extended(j)) continue;
    const std::int64_t s = (l % 2 == 0) ? 1 : -1;
    ++l;
    CellId lo = c;
    lo.dirs &= ~(1u << j);
    CellId hi = lo;
    hi.anchor[j] += 2;
    out.add(hi, s);
    out.add(lo, -s);
  }
  return out;
}

inline Chain boundary(const Chain& c) {
  if (c.dim == 0) throw std::invalid_argument("boundary of a 0-chain: use augmentation");
  Chain out(c.dim - 1, c.q);
  for (const auto& [cell, v] : c.coeffs) out += boundary_of_cell(cell, c.q).scaled(v);
  return out;
}

/** \brief Augmentation: sum of the coefficients of a 0-chain. */
inline std::int64_t augmentation(const Chain& c) {
  if (c.dim != 0 && !c.empty()) throw std::invalid_argument("augmentation needs a 0-chain");
  std::int64_t s = 0;
  for (const auto& kv : c.coeffs) s = reduce_mod(s + kv.second, c.q);
  return s;
}

/** \brief Sum of the top cells of the box with positive orientation. */
inline Chain rho_chain(const Box& r, std::int64_t q = 0) {
  const int k = r.extended_count();
  Chain out(k, q);
  const std::uint32_t m = r.extended_mask();
  for (const CellId& c : enumerate_cells(r, k))
    if (c.dirs == m) out.add(c, 1);
  return out;
}

/** \brief gamma = boundary of rho_r for a box with at least one extended axis. */
inline Chain loop_boundary_chain(const Box& r, std::int64_t q = 0) {
  if (r.extended_count() == 0) throw std::invalid_argument("loop boundary of a point");
  return boundary(rho_chain(r, q));
}

inline long long area(const Box& r) {
  long long a = 1;
  for (int j = 0; j < r.dim(); ++j)
    if (!r.degenerate(j)) a *= r.extent(j);
  return a;
}

inline long long perimeter(const Chain& gamma) { return gamma.support_size(); }

/** \brief Cochain on the k-cells of a box, indexed canonically. */
struct Cochain {
  int k = 0;
  std::int64_t q = 0;
  std::vector<std::int64_t> values;
};

inline Cochain coboundary(const CellIndex& kcells, const CellIndex& up, const Cochain& f) {
  Cochain out{f.k + 1, f.q, std::vector<std::int64_t>(up.size(), 0)};
  for (int n = 0; n < up.size(); ++n) {
    std::int64_t s = 0;
    for (const auto& [face, v] : boundary_of_cell(up[n]).coeffs) {
      int idx = kcells.find(face);
      if (idx >= 0) s += v * f.values[idx];
    }
    out.values[n] = reduce_mod(s, f.q);
  }
  return out;
}

inline Cochain coboundary(const Box& box, const Cochain& f) {
  CellIndex a(enumerate_cells(box, f.k)), b(enumerate_cells(box, f.k + 1));
  return coboundary(a, b, f);
}

inline std::int64_t pairing(const CellIndex& kcells, const Cochain& f, const Chain& c) {
  std::int64_t s = 0;
  for (const auto& [cell, v] : c.coeffs) s = reduce_mod(s + v * f.values[kcells.at(cell)], f.q);
  return s;
}

/** \brief Boundary conditions of a box complex. */
enum class Bc {
  Free,    ///< boundary plaquettes are never present
  Wired,   ///< boundary plaquettes are always present
  Closed,  ///< every plaquette of the closed box is a state variable
};

inline std::string to_string(Bc bc) {
  switch (bc) {
    case Bc::Free: return "free";
    case Bc::Wired: return "wired";
    default: return "closed";
  }
}

inline Bc parse_bc(const std::string& s) {
  if (s == "free") return Bc::Free;
  if (s == "wired") return Bc::Wired;
  if (s == "closed") return Bc::Closed;
  throw std::invalid_argument("unknown boundary condition: " + s);
}

/** \brief Set of plaquettes of a box; bit n refers to plaquette n of the box complex. */
struct PercolationConfig {
  Box box;
  int i = 0;
  Bc bc = Bc::Free;
  std::vector<std::uint8_t> bits;

  int count() const { return static_cast<int>(std::count(bits.begin(), bits.end(), 1)); }
  bool operator==(const PercolationConfig&) const = default;
};

/**
 * \brief The closed box with all cells up to dimension i indexed, and the i-cells
 * (plaquettes) split into state variables and boundary cells according to bc.
 */
class BoxComplex {
 public:
  BoxComplex(Box box, int i, Bc bc) : box_(std::move(box)), i_(i), bc_(bc) {
    const int d = box_.dim();
    if (i < 1 || i > d) throw std::invalid_argument("box complex: need 1 <= i <= d");
    for (int j = 0; j < d; ++j)
      if (box_.degenerate(j)) throw std::invalid_argument("box complex: box must be full dimensional");
    for (int k = 0; k <= i; ++k) cells_.emplace_back(enumerate_cells(box_, k));
    const CellIndex& P = cells_[i];
    const CellIndex& F = cells_[i - 1];
    on_boundary_.resize(P.size());
    plaq_faces_.resize(P.size());
    face_cofaces_.resize(F.size());
    state_pos_.assign(P.size(), -1);
    for (int n = 0; n < P.size(); ++n) {
      on_boundary_[n] = cell_on_box_boundary(P[n], box_) ? 1 : 0;
      for (const auto& [face, s] : boundary_of_cell(P[n]).coeffs) {
        int f = F.at(face);
        int sign = s == 1 ? 1 : -1;
        plaq_faces_[n].push_back({f, sign});
        face_cofaces_[f].push_back({n, sign});
      }
      if (bc_ == Bc::Closed || !on_boundary_[n]) {
        state_pos_[n] = static_cast<int>(state_.size());
        state_.push_back(n);
      }
    }
    face_on_boundary_.resize(F.size());
    for (int f = 0; f < F.size(); ++f) face_on_boundary_[f] = cell_on_box_boundary(F[f], box_) ? 1 : 0;
  }

  const Box& box() const { return box_; }
  int d() const { return box_.dim(); }
  int i() const { return i_; }
  Bc bc() const { return bc_; }

  const CellIndex& cells(int k) const { return cells_.at(k); }
  const CellIndex& plaquettes() const { return cells_[i_]; }
  const CellIndex& faces() const { return cells_[i_ - 1]; }
  int plaquette_count() const { return plaquettes().size(); }
  int face_count() const { return faces().size(); }

  bool on_boundary(int plaq) const { return on_boundary_[plaq] != 0; }
  bool face_on_boundary(int f) const { return face_on_boundary_[f] != 0; }
  const std::vector<int>& state_cells() const { return state_; }
  int state_count() const { return static_cast<int>(state_.size()); }
  int state_position(int plaq) const { return state_pos_[plaq]; }
  bool is_state(int plaq) const { return state_pos_[plaq] >= 0; }

  const std::vector<std::pair<int, int>>& plaquette_faces(int plaq) const { return plaq_faces_[plaq]; }
  const std::vector<std::pair<int, int>>& face_cofaces(int f) const { return face_cofaces_[f]; }

  PercolationConfig empty_config() const {
    return PercolationConfig{box_, i_, bc_, std::vector<std::uint8_t>(plaquette_count(), 0)};
  }

  PercolationConfig full_config() const {
    PercolationConfig p = empty_config();
    for (int n : state_) p.bits[n] = 1;
    return p;
  }

  // Bit s of mask sets state plaquette s.
  PercolationConfig config_from_mask(std::uint64_t mask) const {
    PercolationConfig p = empty_config();
    for (int s = 0; s < state_count(); ++s) p.bits[state_[s]] = (mask >> s) & 1u;
    return p;
  }

  std::uint64_t mask_of(const PercolationConfig& p) const {
    std::uint64_t m = 0;
    for (int s = 0; s < state_count() && s < 64; ++s)
      if (p.bits[state_[s]]) m |= std::uint64_t{1} << s;
    return m;
  }

  void validate(const PercolationConfig& p) const {
    if (!(p.box == box_) || p.i != i_ || p.bc != bc_ || static_cast<int>(p.bits.size()) != plaquette_count())
      throw std::invalid_argument("percolation config does not match the complex");
    for (int n = 0; n < plaquette_count(); ++n)
      if (p.bits[n] && !is_state(n)) throw std::invalid_argument("config occupies a non-state plaquette");
  }

  /** \brief Occupancy in the complex actually used: P, or P together with the boundary when wired. */
  bool occupied(const PercolationConfig& p, int plaq) const {
    if (!is_state(plaq)) return bc_ == Bc::Wired;
    return p.bits[plaq] != 0;
  }

  std::vector<int> effective_cells(const PercolationConfig& p) const {
    std::vector<int> out;
    for (int n = 0; n < plaquette_count(); ++n)
      if (occupied(p, n)) out.push_back(n);
    return out;
  }

  PercolationConfig config_from_cells(const std::vector<CellId>& cells) const {
    PercolationConfig p = empty_config();
    for (const CellId& c : cells) {
      int n = plaquettes().at(c);
      if (!is_state(n)) throw std::invalid_argument("cell is not a state plaquette");
      p.bits[n] = 1;
    }
    return p;
  }

 private:
  Box box_;
  int i_;
  Bc bc_;
  std::vector<CellIndex> cells_;
  std::vector<std::uint8_t> on_boundary_, face_on_boundary_;
  std::vector<std::vector<std::pair<int, int>>> plaq_faces_, face_cofaces_;
  std::vector<int> state_, state_pos_;
};

}  // namespace plaquette
