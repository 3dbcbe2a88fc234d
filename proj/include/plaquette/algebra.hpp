#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lattice.hpp"

namespace plaquette {

using BigInt = boost::multiprecision::cpp_int;

struct OverflowError : std::overflow_error {
  using std::overflow_error::overflow_error;
};

/** \brief Sparse integer matrix keyed by (row, column). */
struct SparseIntMatrix {
  int rows = 0;
  int cols = 0;
  std::map<std::pair<int, int>, std::int64_t> entries;

  SparseIntMatrix() = default;
  SparseIntMatrix(int r, int c) : rows(r), cols(c) {}

  void add(int r, int c, std::int64_t v) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) throw std::out_of_range("sparse matrix index");
    std::int64_t& e = entries[{r, c}];
    e += v;
    if (e == 0) entries.erase({r, c});
  }
  std::int64_t at(int r, int c) const {
    auto it = entries.find({r, c});
    return it == entries.end() ? 0 : it->second;
  }
  SparseIntMatrix transpose() const {
    SparseIntMatrix t(cols, rows);
    for (const auto& [rc, v] : entries) t.entries[{rc.second, rc.first}] = v;
    return t;
  }
};

template <class T>
struct DenseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> a;

  DenseMatrix() = default;
  DenseMatrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, T(0)) {}
  T& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  const T& operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
  static DenseMatrix identity(int n) {
    DenseMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }
};

namespace detail {

inline std::int64_t sub_mul(std::int64_t a, std::int64_t c, std::int64_t b) {
  std::int64_t p, r;
  if (__builtin_mul_overflow(c, b, &p) || __builtin_sub_overflow(a, p, &r)) throw OverflowError("snf overflow");
  return r;
}
inline std::int64_t add_mul(std::int64_t a, std::int64_t c, std::int64_t b) {
  std::int64_t p, r;
  if (__builtin_mul_overflow(c, b, &p) || __builtin_add_overflow(a, p, &r)) throw OverflowError("snf overflow");
  return r;
}
inline std::int64_t neg(std::int64_t a) {
  if (a == std::numeric_limits<std::int64_t>::min()) throw OverflowError("snf overflow");
  return -a;
}
inline std::int64_t div(std::int64_t a, std::int64_t b) {
  if (a == std::numeric_limits<std::int64_t>::min() && b == -1) throw OverflowError("snf overflow");
  return a / b;
}
inline BigInt sub_mul(const BigInt& a, const BigInt& c, const BigInt& b) { return a - c * b; }
inline BigInt add_mul(const BigInt& a, const BigInt& c, const BigInt& b) { return a + c * b; }
inline BigInt neg(const BigInt& a) { return -a; }
inline BigInt div(const BigInt& a, const BigInt& b) { return a / b; }
inline std::int64_t absval(std::int64_t a) { return a < 0 ? neg(a) : a; }
inline BigInt absval(const BigInt& a) { return a < 0 ? BigInt(-a) : a; }

}  // namespace detail

struct SnfOptions {
  bool left = false;           ///< track U with U A V = D
  bool right = false;          ///< track V
  bool left_inverse = false;   ///< track U^{-1}
  bool right_inverse = false;  ///< track V^{-1}
  bool divisibility = true;    ///< enforce d_1 | d_2 | ...
  bool force_wide = false;     ///< skip the 64-bit fast path
};

template <class T>
struct SmithData {
  std::vector<T> diag;
  DenseMatrix<T> U, V, Uinv, Vinv;
};

template <class T>
SmithData<T> snf_impl(DenseMatrix<T> A, const SnfOptions& opt) {
  using detail::absval;
  const int m = A.rows, n = A.cols;
  SmithData<T> out;
  if (opt.left) out.U = DenseMatrix<T>::identity(m);
  if (opt.left_inverse) out.Uinv = DenseMatrix<T>::identity(m);
  if (opt.right) out.V = DenseMatrix<T>::identity(n);
  if (opt.right_inverse) out.Vinv = DenseMatrix<T>::identity(n);

  // row_dst -= c * row_src
  auto row_sub = [&](int dst, int src, const T& c) {
    for (int j = 0; j < n; ++j)
      if (A(src, j) != 0) A(dst, j) = detail::sub_mul(A(dst, j), c, A(src, j));
    if (opt.left)
      for (int j = 0; j < m; ++j)
        if (out.U(src, j) != 0) out.U(dst, j) = detail::sub_mul(out.U(dst, j), c, out.U(src, j));
    if (opt.left_inverse)
      for (int i = 0; i < m; ++i)
        if (out.Uinv(i, dst) != 0) out.Uinv(i, src) = detail::add_mul(out.Uinv(i, src), c, out.Uinv(i, dst));
  };
  // col_dst -= c * col_src
  auto col_sub = [&](int dst, int src, const T& c) {
    for (int i = 0; i < m; ++i)
      if (A(i, src) != 0) A(i, dst) = detail::sub_mul(A(i, dst), c, A(i, src));
    if (opt.right)
      for (int i = 0; i < n; ++i)
        if (out.V(i, src) != 0) out.V(i, dst) = detail::sub_mul(out.V(i, dst), c, out.V(i, src));
    if (opt.right_inverse)
      for (int j = 0; j < n; ++j)
        if (out.Vinv(dst, j) != 0) out.Vinv(src, j) = detail::add_mul(out.Vinv(src, j), c, out.Vinv(dst, j));
  };
  auto swap_rows = [&](int a, int b) {
    if (a == b) return;
    for (int j = 0; j < n; ++j) std::swap(A(a, j), A(b, j));
    if (opt.left)
      for (int j = 0; j < m; ++j) std::swap(out.U(a, j), out.U(b, j));
    if (opt.left_inverse)
      for (int i = 0; i < m; ++i) std::swap(out.Uinv(i, a), out.Uinv(i, b));
  };
  auto swap_cols = [&](int a, int b) {
    if (a == b) return;
    for (int i = 0; i < m; ++i) std::swap(A(i, a), A(i, b));
    if (opt.right)
      for (int i = 0; i < n; ++i) std::swap(out.V(i, a), out.V(i, b));
    if (opt.right_inverse)
      for (int j = 0; j < n; ++j) std::swap(out.Vinv(a, j), out.Vinv(b, j));
  };
  auto negate_row = [&](int a) {
    for (int j = 0; j < n; ++j) A(a, j) = detail::neg(A(a, j));
    if (opt.left)
      for (int j = 0; j < m; ++j) out.U(a, j) = detail::neg(out.U(a, j));
    if (opt.left_inverse)
      for (int i = 0; i < m; ++i) out.Uinv(i, a) = detail::neg(out.Uinv(i, a));
  };

  std::vector<int> rc(m), cc(n);
  for (int t = 0; t < std::min(m, n); ++t) {
    // Pivot: smallest magnitude, then Markowitz cost, then position.
    std::fill(rc.begin() + t, rc.end(), 0);
    std::fill(cc.begin() + t, cc.end(), 0);
    bool any = false;
    for (int i = t; i < m; ++i)
      for (int j = t; j < n; ++j)
        if (A(i, j) != 0) {
          ++rc[i];
          ++cc[j];
          any = true;
        }
    if (!any) break;
    int bi = -1, bj = -1;
    T bv = 0;
    long long bcost = 0;
    for (int i = t; i < m; ++i)
      for (int j = t; j < n; ++j) {
        if (A(i, j) == 0) continue;
        T v = absval(A(i, j));
        long long cost = static_cast<long long>(rc[i] - 1) * (cc[j] - 1);
        if (bi < 0 || v < bv || (v == bv && cost < bcost)) {
          bi = i;
          bj = j;
          bv = v;
          bcost = cost;
        }
      }
    swap_rows(t, bi);
    swap_cols(t, bj);
    for (;;) {
      bool changed = false;
      for (int i = t + 1; i < m; ++i) {
        if (A(i, t) == 0) continue;
        T c = detail::div(A(i, t), A(t, t));
        row_sub(i, t, c);
        if (A(i, t) != 0) {
          swap_rows(t, i);
          changed = true;
        }
      }
      for (int j = t + 1; j < n; ++j) {
        if (A(t, j) == 0) continue;
        T c = detail::div(A(t, j), A(t, t));
        col_sub(j, t, c);
        if (A(t, j) != 0) {
          swap_cols(t, j);
          changed = true;
        }
      }
      if (changed) continue;
      if (opt.divisibility && absval(A(t, t)) != 1) {
        int bad = -1;
        for (int i = t + 1; i < m && bad < 0; ++i)
          for (int j = t + 1; j < n; ++j)
            if (A(i, j) % A(t, t) != 0) {
              bad = i;
              break;
            }
        if (bad >= 0) {
          row_sub(t, bad, T(-1));
          continue;
        }
      }
      break;
    }
    if (A(t, t) < 0) negate_row(t);
    out.diag.push_back(A(t, t));
  }
  return out;
}

/**
 * \brief Smith normal form U A V = D with optional transforms.
 *
 * Runs in 64-bit arithmetic with overflow checks and falls back to arbitrary precision.
 */
class SmithForm {
 public:
  int rows = 0;
  int cols = 0;

  int rank() const { return wide_ ? static_cast<int>(w_.diag.size()) : static_cast<int>(n_.diag.size()); }
  bool wide() const { return wide_; }

  BigInt diag(int j) const { return wide_ ? w_.diag[j] : BigInt(n_.diag[j]); }

  std::vector<BigInt> invariant_factors() const {
    std::vector<BigInt> f;
    for (int j = 0; j < rank(); ++j) f.push_back(diag(j));
    return f;
  }

  // gcd(d_j, q) for q > 0.
  std::int64_t diag_gcd(int j, std::int64_t q) const {
    if (wide_) return static_cast<std::int64_t>(boost::multiprecision::gcd(w_.diag[j], BigInt(q)));
    return std::gcd(n_.diag[j], q);
  }

  BigInt U(int i, int j) const { return wide_ ? w_.U(i, j) : BigInt(n_.U(i, j)); }
  BigInt V(int i, int j) const { return wide_ ? w_.V(i, j) : BigInt(n_.V(i, j)); }
  BigInt Uinv(int i, int j) const { return wide_ ? w_.Uinv(i, j) : BigInt(n_.Uinv(i, j)); }
  BigInt Vinv(int i, int j) const { return wide_ ? w_.Vinv(i, j) : BigInt(n_.Vinv(i, j)); }

  std::int64_t U_mod(int i, int j, std::int64_t q) const { return mod_entry(w_.U, n_.U, i, j, q); }
  std::int64_t V_mod(int i, int j, std::int64_t q) const { return mod_entry(w_.V, n_.V, i, j, q); }
  std::int64_t Uinv_mod(int i, int j, std::int64_t q) const { return mod_entry(w_.Uinv, n_.Uinv, i, j, q); }

  const SnfOptions& options() const { return opt_; }

  friend SmithForm smith_normal_form(const DenseMatrix<std::int64_t>& A, SnfOptions opt);

 private:
  std::int64_t mod_entry(const DenseMatrix<BigInt>& W, const DenseMatrix<std::int64_t>& N, int i, int j,
                         std::int64_t q) const {
    if (wide_) {
      BigInt r = W(i, j) % q;
      if (r < 0) r += q;
      return static_cast<std::int64_t>(r);
    }
    return reduce_mod(N(i, j), q);
  }

  bool wide_ = false;
  SnfOptions opt_;
  SmithData<std::int64_t> n_;
  SmithData<BigInt> w_;
};

inline SmithForm smith_normal_form(const DenseMatrix<std::int64_t>& A, SnfOptions opt = {}) {
  SmithForm s;
  s.rows = A.rows;
  s.cols = A.cols;
  s.opt_ = opt;
  if (!opt.force_wide) {
    try {
      s.n_ = snf_impl<std::int64_t>(A, opt);
      return s;
    } catch (const OverflowError&) {
    }
  }
  DenseMatrix<BigInt> W(A.rows, A.cols);
  for (std::size_t k = 0; k < A.a.size(); ++k) W.a[k] = A.a[k];
  s.w_ = snf_impl<BigInt>(std::move(W), opt);
  s.wide_ = true;
  return s;
}

inline DenseMatrix<std::int64_t> to_dense(const SparseIntMatrix& M) {
  DenseMatrix<std::int64_t> D(M.rows, M.cols);
  for (const auto& [rc, v] : M.entries) D(rc.first, rc.second) = v;
  return D;
}

inline SmithForm smith_normal_form(const SparseIntMatrix& M, SnfOptions opt = {}) {
  return smith_normal_form(to_dense(M), opt);
}

/** \brief Kernel of an integer matrix acting on Z_q^n, as a direct sum of cyclic groups. */
struct ZqKernel {
  std::int64_t q = 0;
  int n = 0;
  std::vector<std::vector<std::int64_t>> generators;
  std::vector<std::int64_t> orders;

  BigInt size() const {
    BigInt s = 1;
    for (auto o : orders) s *= o;
    return s;
  }

  std::vector<std::int64_t> element(const std::vector<std::int64_t>& y) const {
    std::vector<std::int64_t> x(n, 0);
    for (std::size_t g = 0; g < generators.size(); ++g) {
      if (y[g] == 0) continue;
      for (int k = 0; k < n; ++k)
        x[k] = static_cast<std::int64_t>((static_cast<__int128>(x[k]) + static_cast<__int128>(y[g]) * generators[g][k]) % q);
    }
    return x;
  }

  template <class Rng>
  std::vector<std::int64_t> sample(Rng& rng) const {
    std::vector<std::int64_t> y(generators.size());
    for (std::size_t g = 0; g < y.size(); ++g) y[g] = std::uniform_int_distribution<std::int64_t>(0, orders[g] - 1)(rng);
    return element(y);
  }

  // Calls fn on every element; caller bounds the size.
  template <class Fn>
  void for_each(Fn&& fn) const {
    std::vector<std::int64_t> y(generators.size(), 0);
    for (;;) {
      fn(element(y));
      std::size_t g = 0;
      while (g < y.size()) {
        if (++y[g] < orders[g]) break;
        y[g] = 0;
        ++g;
      }
      if (g == y.size()) break;
    }
  }
};

/** \brief Kernel over Z_q from a Smith form computed with right transform V. */
inline ZqKernel zq_kernel(const SmithForm& s, std::int64_t q) {
  if (q < 1) throw std::invalid_argument("zq_kernel: need q >= 1");
  if (!s.options().right) throw std::invalid_argument("zq_kernel: Smith form lacks V");
  ZqKernel k;
  k.q = q;
  k.n = s.cols;
  for (int j = 0; j < s.cols; ++j) {
    std::int64_t order = j < s.rank() ? s.diag_gcd(j, q) : q;
    if (order <= 1) continue;
    std::int64_t scale = q / order;
    std::vector<std::int64_t> g(s.cols);
    for (int i = 0; i < s.cols; ++i)
      g[i] = static_cast<std::int64_t>((static_cast<__int128>(s.V_mod(i, j, q)) * scale) % q);
    k.generators.push_back(std::move(g));
    k.orders.push_back(order);
  }
  return k;
}

inline ZqKernel zq_kernel(const SparseIntMatrix& A, std::int64_t q) {
  SnfOptions opt;
  opt.right = true;
  opt.divisibility = false;
  return zq_kernel(smith_normal_form(A, opt), q);
}

/** \brief |ker_q A| from the diagonal alone. */
inline BigInt kernel_order(const SmithForm& s, std::int64_t q) {
  BigInt r = 1;
  for (int j = 0; j < s.cols; ++j) r *= (j < s.rank() ? s.diag_gcd(j, q) : q);
  return r;
}

// ---------------------------------------------------------------------------
// Chain complexes of box complexes

/**
 * \brief Matrix of the k-th boundary map of the complex determined by (K, P).
 * For k = i the columns are the occupied plaquettes; k = 0 gives the augmentation row.
 * Returns the column cell indices through cols.
 */
inline SparseIntMatrix boundary_matrix(const BoxComplex& K, const PercolationConfig& P, int k,
                                       std::vector<int>* cols = nullptr) {
  if (k < 0 || k > K.i()) {
    if (cols) cols->clear();
    int r = k > K.i() ? K.plaquette_count() : 0;
    return SparseIntMatrix(r, 0);
  }
  std::vector<int> colcells;
  if (k == K.i())
    colcells = K.effective_cells(P);
  else {
    colcells.resize(K.cells(k).size());
    std::iota(colcells.begin(), colcells.end(), 0);
  }
  if (k == 0) {
    SparseIntMatrix M(1, static_cast<int>(colcells.size()));
    for (int c = 0; c < M.cols; ++c) M.add(0, c, 1);
    if (cols) *cols = colcells;
    return M;
  }
  const CellIndex& lower = K.cells(k - 1);
  SparseIntMatrix M(lower.size(), static_cast<int>(colcells.size()));
  for (int c = 0; c < M.cols; ++c) {
    if (k == K.i()) {
      for (auto [f, s] : K.plaquette_faces(colcells[c])) M.add(f, c, s);
    } else {
      for (const auto& [face, v] : boundary_of_cell(K.cells(k)[colcells[c]]).coeffs) M.add(lower.at(face), c, v);
    }
  }
  if (cols) *cols = colcells;
  return M;
}

/** \brief Reduced homology of the complex in degree k with coefficients Z (q = 0) or Z_q. */
struct HomologySummary {
  int k = 0;
  std::int64_t q = 0;
  int betti = 0;               ///< rank of the free part (q = 0)
  std::vector<BigInt> torsion;  ///< invariant factors above 1 (q = 0)
  BigInt order = 0;            ///< |H_k|; for q = 0 it is 0 when betti > 0
};

namespace detail {
inline SmithForm diag_only(const SparseIntMatrix& M) {
  SnfOptions opt;
  return smith_normal_form(M, opt);
}
}  // namespace detail

inline HomologySummary homology_summary(const BoxComplex& K, const PercolationConfig& P, int k, std::int64_t q) {
  if (q < 0) throw std::invalid_argument("homology: negative modulus");
  if (k < 0 || k > K.i()) throw std::invalid_argument("homology: degree out of range");
  SparseIntMatrix dk = boundary_matrix(K, P, k);
  SparseIntMatrix dk1 = boundary_matrix(K, P, k + 1);
  SmithForm a = detail::diag_only(dk), b = detail::diag_only(dk1);
  HomologySummary h;
  h.k = k;
  h.q = q;
  h.betti = dk.cols - a.rank() - b.rank();
  for (const BigInt& f : b.invariant_factors())
    if (f > 1) h.torsion.push_back(f);
  if (q == 0) {
    if (h.betti > 0)
      h.order = 0;
    else {
      h.order = 1;
      for (const BigInt& f : h.torsion) h.order *= f;
    }
  } else {
    BigInt o = boost::multiprecision::pow(BigInt(q), static_cast<unsigned>(h.betti));
    for (int j = 0; j < a.rank(); ++j) o *= a.diag_gcd(j, q);
    for (int j = 0; j < b.rank(); ++j) o *= b.diag_gcd(j, q);
    h.order = o;
  }
  return h;
}

/**
 * \brief |H^k| with Z_q coefficients computed as |Z^k| / |B^k| from the coboundary maps;
 * in degree 0 the coboundaries are the constants.
 */
inline BigInt cohomology_order(const BoxComplex& K, const PercolationConfig& P, int k, std::int64_t q) {
  if (q < 1) throw std::invalid_argument("cohomology_order: need q >= 1");
  SnfOptions opt;
  SmithForm up = smith_normal_form(boundary_matrix(K, P, k + 1).transpose(), opt);
  SmithForm down = smith_normal_form(boundary_matrix(K, P, k).transpose(), opt);
  BigInt z = kernel_order(up, q);
  // |im| = q^{domain} / |ker|
  BigInt domain = boost::multiprecision::pow(BigInt(q), static_cast<unsigned>(down.cols));
  BigInt b = domain / kernel_order(down, q);
  return z / b;
}

namespace detail {
inline std::int64_t inverse_mod(std::int64_t a, std::int64_t m) {
  if (m == 1) return 0;
  std::int64_t g = m, x = 0, x1 = 1, aa = reduce_mod(a, m);
  while (aa != 0) {
    std::int64_t t = g / aa;
    std::tie(g, aa) = std::make_pair(aa, g - t * aa);
    std::tie(x, x1) = std::make_pair(x1, x - t * x1);
  }
  if (g != 1) throw std::domain_error("not invertible");
  return reduce_mod(x, m);
}
}  // namespace detail

/**
 * \brief Solver for M x = b over Z or Z_q, where M is fixed. Keeps the Smith data.
 */
class BoundarySolver {
 public:
  explicit BoundarySolver(const SparseIntMatrix& M) : M_(M) {
    SnfOptions opt;
    opt.left = true;
    opt.right = true;
    opt.divisibility = false;
    snf_ = smith_normal_form(M, opt);
  }

  int rows() const { return M_.rows; }
  int cols() const { return M_.cols; }
  const SmithForm& smith() const { return snf_; }

  bool solvable(const std::vector<std::int64_t>& b, std::int64_t q) const { return solve(b, q).has_value(); }

  /** \brief A solution x (entries reduced mod q when q > 0), or nothing. */
  std::optional<std::vector<BigInt>> solve(const std::vector<std::int64_t>& b, std::int64_t q) const {
    if (static_cast<int>(b.size()) != M_.rows) throw std::invalid_argument("solver: rhs length");
    const int r = snf_.rank();
    std::vector<BigInt> y(M_.cols, 0);
    for (int j = 0; j < M_.rows; ++j) {
      BigInt c = 0;
      for (int t = 0; t < M_.rows; ++t)
        if (b[t] != 0) c += snf_.U(j, t) * b[t];
      if (q == 0) {
        if (j < r) {
          BigInt dj = snf_.diag(j);
          if (c % dj != 0) return std::nullopt;
          y[j] = c / dj;
        } else if (c != 0) {
          return std::nullopt;
        }
      } else {
        BigInt cm = c % q;
        if (cm < 0) cm += q;
        std::int64_t cj = static_cast<std::int64_t>(cm);
        if (j < r) {
          std::int64_t g = snf_.diag_gcd(j, q);
          if (cj % g != 0) return std::nullopt;
          BigInt dm = snf_.diag(j) % q;
          std::int64_t dj = static_cast<std::int64_t>(dm);
          std::int64_t mq = q / g;
          std::int64_t inv = detail::inverse_mod(dj / g, mq);
          y[j] = static_cast<std::int64_t>((static_cast<__int128>(cj / g) * inv) % (mq == 0 ? 1 : mq));
        } else if (cj != 0) {
          return std::nullopt;
        }
      }
    }
    std::vector<BigInt> x(M_.cols, 0);
    for (int i = 0; i < M_.cols; ++i) {
      BigInt s = 0;
      for (int j = 0; j < r && j < M_.cols; ++j)
        if (y[j] != 0) s += snf_.V(i, j) * y[j];
      if (q > 0) {
        s %= q;
        if (s < 0) s += q;
      }
      x[i] = s;
    }
    return x;
  }

 private:
  SparseIntMatrix M_;
  SmithForm snf_;
};

/**
 * \brief Whether M x = b has a solution over Z (q = 0) or Z_q. Unit pivots are
 * eliminated sparsely first; the remainder goes through the Smith form.
 */
inline bool sparse_solvable(const SparseIntMatrix& M, std::vector<std::int64_t> b, std::int64_t q) {
  if (static_cast<int>(b.size()) != M.rows) throw std::invalid_argument("solver: rhs length");
  constexpr std::int64_t kLimit = std::int64_t{1} << 40;
  const std::vector<std::int64_t> b0 = b;
  std::vector<std::map<int, std::int64_t>> row(M.rows);
  std::vector<std::set<int>> col(M.cols);
  for (const auto& [rc, v] : M.entries) {
    const std::int64_t x = reduce_mod(v, q);
    if (x == 0) continue;
    row[rc.first][rc.second] = x;
    col[rc.second].insert(rc.first);
  }
  for (auto& x : b) x = reduce_mod(x, q);
  auto is_unit = [&](std::int64_t v) { return q == 0 ? (v == 1 || v == -1) : std::gcd(v, q) == 1; };
  std::vector<std::uint8_t> col_alive(M.cols, 1);
  std::vector<int> order(M.cols);
  bool progress = true;
  bool overflow = false;
  while (progress && !overflow) {
    progress = false;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int c) { return col[a].size() < col[c].size(); });
    for (int c : order) {
      if (!col_alive[c] || col[c].empty()) continue;
      int pr = -1;
      std::size_t best = 0;
      for (int r : col[c]) {
        if (!is_unit(row[r].at(c))) continue;
        if (pr < 0 || row[r].size() < best) {
          pr = r;
          best = row[r].size();
        }
      }
      if (pr < 0) continue;
      const std::int64_t inv = q == 0 ? row[pr].at(c) : detail::inverse_mod(row[pr].at(c), q);
      const std::vector<int> targets(col[c].begin(), col[c].end());
      for (int r : targets) {
        if (r == pr) continue;
        const std::int64_t f = q == 0 ? row[r].at(c) * inv : reduce_mod(static_cast<std::int64_t>(
                                                                             static_cast<__int128>(row[r].at(c)) * inv % q),
                                                                         q);
        for (const auto& [j, v] : row[pr]) {
          __int128 nv = static_cast<__int128>(row[r].count(j) ? row[r].at(j) : 0) - static_cast<__int128>(f) * v;
          if (q > 0) nv %= q;
          if (nv > kLimit || nv < -kLimit) overflow = true;
          const std::int64_t w = q > 0 ? reduce_mod(static_cast<std::int64_t>(nv), q) : static_cast<std::int64_t>(nv);
          if (w == 0) {
            row[r].erase(j);
            col[j].erase(r);
          } else {
            row[r][j] = w;
            col[j].insert(r);
          }
        }
        __int128 nb = static_cast<__int128>(b[r]) - static_cast<__int128>(f) * b[pr];
        if (q > 0) nb %= q;
        if (nb > kLimit || nb < -kLimit) overflow = true;
        b[r] = q > 0 ? reduce_mod(static_cast<std::int64_t>(nb), q) : static_cast<std::int64_t>(nb);
      }
      // Row pr fixes x_c; drop it with the column.
      for (const auto& [j, v] : row[pr]) col[j].erase(pr);
      row[pr].clear();
      col_alive[c] = 0;
      b[pr] = 0;
      progress = true;
      if (overflow) break;
    }
  }
  if (overflow) return BoundarySolver(M).solvable(b0, q);
  std::vector<int> rows_left;
  for (int r = 0; r < M.rows; ++r) {
    if (!row[r].empty())
      rows_left.push_back(r);
    else if (b[r] != 0)
      return false;
  }
  if (rows_left.empty()) return true;
  std::vector<int> cmap(M.cols, -1);
  int nc = 0;
  for (int c = 0; c < M.cols; ++c)
    if (col_alive[c] && !col[c].empty()) cmap[c] = nc++;
  SparseIntMatrix R(static_cast<int>(rows_left.size()), nc);
  std::vector<std::int64_t> rb(rows_left.size());
  for (std::size_t k = 0; k < rows_left.size(); ++k) {
    for (const auto& [j, v] : row[rows_left[k]]) R.add(static_cast<int>(k), cmap[j], v);
    rb[k] = b[rows_left[k]];
  }
  return BoundarySolver(R).solvable(rb, q);
}

inline std::vector<std::int64_t> chain_vector(const CellIndex& cells, const Chain& c) {
  std::vector<std::int64_t> v(cells.size(), 0);
  for (const auto& [cell, x] : c.coeffs) {
    int n = cells.find(cell);
    if (n < 0) throw std::invalid_argument("chain not supported on the complex: " + cell.str());
    v[n] = x;
  }
  return v;
}

inline void require_cycle(const Chain& gamma, std::int64_t q) {
  if (gamma.dim < 1) return;
  Chain b = boundary(gamma.reduced(q));
  if (!b.empty()) throw std::invalid_argument("gamma is not a cycle");
}

/**
 * \brief Whether gamma bounds in the complex (K, P) with coefficients Z (q = 0) or Z_q.
 * gamma is an (i-1)-cycle on the faces of the box.
 */
inline bool null_homology_test(const BoxComplex& K, const PercolationConfig& P, const Chain& gamma, std::int64_t q) {
  if (gamma.dim != K.i() - 1) throw std::invalid_argument("gamma has the wrong dimension");
  require_cycle(gamma, q);
  return sparse_solvable(boundary_matrix(K, P, K.i()), chain_vector(K.faces(), gamma), q);
}

/** \brief An i-chain tau in P with boundary gamma, when one exists. */
inline std::optional<Chain> null_homology_witness(const BoxComplex& K, const PercolationConfig& P, const Chain& gamma,
                                                  std::int64_t q) {
  require_cycle(gamma, q);
  std::vector<int> cols;
  BoundarySolver s(boundary_matrix(K, P, K.i(), &cols));
  auto x = s.solve(chain_vector(K.faces(), gamma), q);
  if (!x) return std::nullopt;
  Chain tau(K.i(), q);
  for (std::size_t c = 0; c < cols.size(); ++c)
    if ((*x)[c] != 0) tau.add(K.plaquettes()[cols[c]], static_cast<std::int64_t>((*x)[c]));
  return tau;
}

/**
 * \brief Whether gamma + alpha bounds in P restricted to the closed box t for some
 * alpha supported on the boundary of t.
 */
inline bool relative_null_homology(const BoxComplex& K, const PercolationConfig& P, const Chain& gamma, const Box& t,
                                   std::int64_t q) {
  const CellIndex& F = K.faces();
  std::vector<int> rowmap(F.size(), -1);
  int nr = 0;
  for (int f = 0; f < F.size(); ++f)
    if (cell_in_box(F[f], t) && !cell_on_box_boundary(F[f], t)) rowmap[f] = nr++;
  std::vector<int> cols;
  for (int n : K.effective_cells(P))
    if (cell_in_box(K.plaquettes()[n], t)) cols.push_back(n);
  SparseIntMatrix M(nr, static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (auto [f, s] : K.plaquette_faces(cols[c]))
      if (rowmap[f] >= 0) M.add(rowmap[f], static_cast<int>(c), s);
  std::vector<std::int64_t> b(nr, 0);
  for (const auto& [cell, v] : gamma.coeffs) {
    if (!cell_in_box(cell, t)) throw std::invalid_argument("gamma leaves the box t");
    int f = F.at(cell);
    if (rowmap[f] >= 0) b[rowmap[f]] = v;
  }
  if (nr == 0) return true;
  return sparse_solvable(M, b, q);
}

/** \brief Kernel of the coboundary restricted to P: the (i-1)-cocycles of the complex. */
inline ZqKernel cocycle_kernel(const BoxComplex& K, const PercolationConfig& P, std::int64_t q) {
  return zq_kernel(boundary_matrix(K, P, K.i()).transpose(), q);
}

/** \brief Uniform random (i-1)-cocycle of P with Z_q values on the faces of the box. */
template <class Rng>
Cochain uniform_cocycle(const BoxComplex& K, const PercolationConfig& P, std::int64_t q, Rng& rng) {
  ZqKernel ker = cocycle_kernel(K, P, q);
  return Cochain{K.i() - 1, q, ker.sample(rng)};
}

/**
 * \brief Exact E[exp(2 pi i f(gamma)/q)] for f uniform over the cocycles of P;
 * equals 1 when gamma bounds mod q and 0 otherwise.
 */
inline double cocycle_character_mean(const ZqKernel& ker, const std::vector<std::int64_t>& gamma) {
  // Each cyclic factor contributes 1 if its generator pairs trivially with gamma, 0 otherwise.
  for (const auto& g : ker.generators) {
    __int128 s = 0;
    for (int k = 0; k < ker.n; ++k) s += static_cast<__int128>(g[k]) * gamma[k];
    if (s % ker.q != 0) return 0.0;
  }
  return 1.0;
}

}  // namespace plaquette
