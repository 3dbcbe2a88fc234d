#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "algebra.hpp"
#include "duality.hpp"
#include "lattice.hpp"
#include "prcm.hpp"

namespace plaquette {

/**
 * \brief Z_q lattice gauge theory with spins on k-cells and energy on (k+1)-cells.
 * The box complex K has i = k + 1. Boundary conditions come from K (free, wired, closed);
 * eta, when set, fixes the spins on the boundary k-cells instead.
 */
struct PlgtParams {
  double beta = 1.0;
  std::int64_t q = 2;
  std::optional<std::vector<std::int64_t>> eta;  ///< values on all k-cells; only boundary ones are used
};

inline std::int64_t plaquette_value(const BoxComplex& K, const std::vector<std::int64_t>& f, int plaq, std::int64_t q) {
  std::int64_t s = 0;
  for (auto [face, sign] : K.plaquette_faces(plaq)) s += sign * f[face];
  return reduce_mod(s, q);
}

/** \brief H(f) = -#{state plaquettes sigma : df(sigma) = 0}. */
inline long hamiltonian(const BoxComplex& K, const Cochain& f) {
  long h = 0;
  for (int n : K.state_cells())
    if (plaquette_value(K, f.values, n, f.q) == 0) --h;
  return h;
}

/** \brief Spin configurations allowed by the boundary condition. */
inline bool admissible(const BoxComplex& K, const PlgtParams& params, const std::vector<std::int64_t>& f) {
  if (params.eta) {
    for (int e = 0; e < K.face_count(); ++e)
      if (K.face_on_boundary(e) && reduce_mod(f[e] - (*params.eta)[e], params.q) != 0) return false;
    return true;
  }
  if (K.bc() == Bc::Wired)
    for (int n = 0; n < K.plaquette_count(); ++n)
      if (!K.is_state(n) && plaquette_value(K, f, n, params.q) != 0) return false;
  return true;
}

/**
 * \brief The Gibbs measure written over representatives of the gauge orbits f + dh.
 * prob[n] is the total mass of the orbit of reps[n]; each orbit has orbit_size elements.
 */
struct GibbsDistribution {
  std::vector<std::vector<std::int64_t>> reps;
  std::vector<long double> prob;
  BigInt orbit_size = 1;
  long double log_partition = 0;

  template <class Fn>
  auto expectation(Fn&& fn) const {
    using R = decltype(fn(reps[0]));
    R s{};
    for (std::size_t n = 0; n < reps.size(); ++n) s += static_cast<R>(static_cast<double>(prob[n])) * fn(reps[n]);
    return s;
  }
};

constexpr double kMaxGibbsStates = 4e6;

namespace detail {

// Representatives of C^k / B^k (wired: of the admissible subgroup), via a Smith form of the coboundary d_{k-1}.
inline std::pair<std::vector<std::vector<std::int64_t>>, BigInt> gauge_representatives(const BoxComplex& K,
                                                                                     std::int64_t q) {
  const int k = K.i() - 1;
  const int nk = K.face_count();
  std::vector<std::vector<std::int64_t>> reps;
  SparseIntMatrix D(nk, k == 0 ? 0 : K.cells(k - 1).size());
  if (k > 0)
    for (int e = 0; e < nk; ++e)
      for (const auto& [face, v] : boundary_of_cell(K.faces()[e]).coeffs) D.add(e, K.cells(k - 1).at(face), v);
  SnfOptions opt;
  opt.left_inverse = true;
  opt.divisibility = false;
  SmithForm s = smith_normal_form(D, opt);
  const int r = s.rank();
  for (int j = 0; j < r; ++j)
    if (s.diag(j) != 1) throw std::runtime_error("coboundary has torsion; gauge reduction unavailable");
  // f = Uinv z with z_j = 0 for j < r.
  const int free_dims = nk - r;
  // Constraint matrix on z for the wired condition.
  std::vector<int> bnd;
  if (K.bc() == Bc::Wired)
    for (int n = 0; n < K.plaquette_count(); ++n)
      if (!K.is_state(n)) bnd.push_back(n);
  SparseIntMatrix C(static_cast<int>(bnd.size()), free_dims);
  std::vector<std::vector<std::int64_t>> basis(free_dims, std::vector<std::int64_t>(nk));
  for (int t = 0; t < free_dims; ++t)
    for (int e = 0; e < nk; ++e) basis[t][e] = s.Uinv_mod(e, r + t, q);
  for (std::size_t row = 0; row < bnd.size(); ++row)
    for (int t = 0; t < free_dims; ++t) {
      std::int64_t v = plaquette_value(K, basis[t], bnd[row], q);
      if (v) C.add(static_cast<int>(row), t, v);
    }
  ZqKernel ker = zq_kernel(C, q);
  if (static_cast<double>(ker.size()) > kMaxGibbsStates) throw std::invalid_argument("too many gauge orbits");
  ker.for_each([&](const std::vector<std::int64_t>& z) {
    std::vector<std::int64_t> f(nk, 0);
    for (int t = 0; t < free_dims; ++t)
      if (z[t])
        for (int e = 0; e < nk; ++e) f[e] = (f[e] + z[t] * basis[t][e]) % q;
    reps.push_back(std::move(f));
  });
  BigInt orbit = boost::multiprecision::pow(BigInt(q), static_cast<unsigned>(r));
  return {reps, orbit};
}

}  // namespace detail

/** \brief Exact Gibbs measure exp(-beta H) over the admissible spin configurations. */
inline GibbsDistribution gibbs_exact(const BoxComplex& K, const PlgtParams& params) {
  if (params.q < 1) throw std::invalid_argument("q must be positive");
  GibbsDistribution g;
  if (params.eta) {
    if (static_cast<int>(params.eta->size()) != K.face_count()) throw std::invalid_argument("eta has the wrong length");
    std::vector<int> interior;
    std::vector<std::int64_t> f(K.face_count(), 0);
    for (int e = 0; e < K.face_count(); ++e) {
      if (K.face_on_boundary(e))
        f[e] = reduce_mod((*params.eta)[e], params.q);
      else
        interior.push_back(e);
    }
    for (int n = 0; n < K.plaquette_count(); ++n)
      if (!K.is_state(n) && plaquette_value(K, f, n, params.q) != 0)
        throw std::invalid_argument("eta is not a cocycle on the boundary");
    if (std::pow(static_cast<double>(params.q), interior.size()) > kMaxGibbsStates)
      throw std::invalid_argument("too many interior spins for enumeration");
    for (;;) {
      g.reps.push_back(f);
      std::size_t t = 0;
      while (t < interior.size()) {
        if (++f[interior[t]] < params.q) break;
        f[interior[t]] = 0;
        ++t;
      }
      if (t == interior.size()) break;
    }
    g.orbit_size = 1;
  } else {
    auto [reps, orbit] = detail::gauge_representatives(K, params.q);
    g.reps = std::move(reps);
    g.orbit_size = orbit;
  }
  std::vector<long> sat(g.reps.size());
  long best = 0;
  for (std::size_t n = 0; n < g.reps.size(); ++n) {
    long s = 0;
    for (int p : K.state_cells()) s += plaquette_value(K, g.reps[n], p, params.q) == 0 ? 1 : 0;
    sat[n] = s;
    best = std::max(best, s);
  }
  long double Z = 0;
  g.prob.resize(g.reps.size());
  for (std::size_t n = 0; n < g.reps.size(); ++n) {
    g.prob[n] = std::exp(static_cast<long double>(params.beta) * (sat[n] - best));
    Z += g.prob[n];
  }
  for (auto& x : g.prob) x /= Z;
  g.log_partition = std::log(Z) + static_cast<long double>(params.beta) * best +
                    std::log(static_cast<long double>(g.orbit_size));
  return g;
}

/** \brief f(gamma) mod q. */
inline std::int64_t evaluate(const BoxComplex& K, const std::vector<std::int64_t>& f, const Chain& gamma, std::int64_t q) {
  std::int64_t s = 0;
  for (const auto& [cell, v] : gamma.coeffs) s = reduce_mod(s + v * f[K.faces().at(cell)], q);
  return s;
}

/** \brief W_gamma(f) = exp(2 pi i f(gamma) / q). */
inline std::complex<double> wilson_loop(const BoxComplex& K, const std::vector<std::int64_t>& f, const Chain& gamma,
                                        std::int64_t q) {
  const double a = 2.0 * M_PI * static_cast<double>(evaluate(K, f, gamma, q)) / static_cast<double>(q);
  return {std::cos(a), std::sin(a)};
}

/** \brief One heat-bath sweep over the spins; boundary spins stay fixed under eta. */
template <class Rng>
void heatbath_sweep(const BoxComplex& K, std::vector<std::int64_t>& f, const PlgtParams& params, Rng& rng) {
  const std::int64_t q = params.q;
  std::vector<double> w(q);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int e = 0; e < K.face_count(); ++e) {
    if (params.eta && K.face_on_boundary(e)) continue;
    const std::int64_t old = f[e];
    double total = 0;
    for (std::int64_t a = 0; a < q; ++a) {
      f[e] = a;
      int sat = 0;
      bool ok = true;
      for (auto [p, sign] : K.face_cofaces(e)) {
        bool zero = plaquette_value(K, f, p, q) == 0;
        if (K.is_state(p))
          sat += zero ? 1 : 0;
        else if (K.bc() == Bc::Wired && !zero)
          ok = false;
      }
      w[a] = ok ? std::exp(params.beta * sat) : 0.0;
      total += w[a];
    }
    if (total == 0) {
      f[e] = old;
      continue;
    }
    double x = u(rng) * total;
    std::int64_t pick = q - 1;
    for (std::int64_t a = 0; a < q; ++a) {
      if (x < w[a]) {
        pick = a;
        break;
      }
      x -= w[a];
    }
    f[e] = pick;
  }
}

/**
 * \brief Joint weight of the Edwards-Sokal coupling, prod over state plaquettes of
 * (1-p) 1{sigma not in P} + p 1{sigma in P, df(sigma) = 0}.
 */
inline long double coupling_weight(const BoxComplex& K, const std::vector<std::int64_t>& f, const PercolationConfig& P,
                                   double p, std::int64_t q) {
  long double w = 1;
  for (int n : K.state_cells()) {
    if (P.bits[n])
      w *= plaquette_value(K, f, n, q) == 0 ? p : 0.0;
    else
      w *= 1.0 - p;
  }
  return w;
}

/** \brief Exact marginals of the coupling: per gauge orbit and per state mask. */
struct CouplingMarginals {
  std::vector<long double> spin;   ///< indexed like gibbs_exact().reps
  std::vector<long double> bonds;  ///< indexed by state mask
};

inline CouplingMarginals coupling_exact(const BoxComplex& K, const PlgtParams& params) {
  const double p = p_from_beta(params.beta);
  const int N = K.state_count();
  if (N > kMaxEnumerationCells) throw std::invalid_argument("too many state plaquettes");
  PlgtParams zero = params;
  zero.beta = 0;
  GibbsDistribution uniform = gibbs_exact(K, zero);
  CouplingMarginals m;
  m.spin.assign(uniform.reps.size(), 0);
  m.bonds.assign(std::size_t{1} << N, 0);
  long double Z = 0;
  for (std::size_t r = 0; r < uniform.reps.size(); ++r) {
    // Product measure over plaquettes given f: sum over masks is factorized, enumerate directly.
    std::vector<std::uint8_t> ok(N);
    for (int s = 0; s < N; ++s) ok[s] = plaquette_value(K, uniform.reps[r], K.state_cells()[s], params.q) == 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << N); ++mask) {
      long double w = 1;
      for (int s = 0; s < N && w != 0; ++s) w *= ((mask >> s) & 1u) ? (ok[s] ? p : 0.0) : 1.0 - p;
      m.spin[r] += w;
      m.bonds[mask] += w;
      Z += w;
    }
  }
  for (auto& x : m.spin) x /= Z;
  for (auto& x : m.bonds) x /= Z;
  return m;
}

/** \brief The two sides of the comparison identity E_nu[W_gamma] = mu(V_gamma) at p = 1 - e^-beta. */
struct ComparisonResult {
  std::complex<double> wilson;
  double v_gamma = 0;
};

inline ComparisonResult comparison_identity_check(const BoxComplex& K, const PlgtParams& params, const Chain& gamma) {
  const PercolationConfig empty = K.empty_config();
  if (K.i() >= 2) {
    HomologySummary h = homology_summary(K, empty, K.i() - 2, params.q);
    if (h.order != 1) throw std::invalid_argument("comparison needs vanishing H_{i-2} of the lower skeleton");
  }
  require_cycle(gamma, params.q);
  GibbsDistribution g = gibbs_exact(K, params);
  ComparisonResult out;
  out.wilson = g.expectation([&](const std::vector<std::int64_t>& f) { return wilson_loop(K, f, gamma, params.q); });
  PrcmParams pp;
  pp.p = p_from_beta(params.beta);
  pp.q = static_cast<double>(params.q);
  pp.i = K.i();
  pp.d = K.d();
  pp.bc = K.bc();
  // With eta boundary conditions the percolation side is wired.
  const BoxComplex* Kp = &K;
  std::optional<BoxComplex> wired;
  if (params.eta && K.bc() != Bc::Wired) {
    wired.emplace(K.box(), K.i(), Bc::Wired);
    Kp = &*wired;
    pp.bc = Bc::Wired;
  }
  ExactMeasure m = enumerate_measure(*Kp, pp);
  long double v = 0;
  for (std::size_t n = 0; n < m.masks.size(); ++n)
    if (null_homology_test(*Kp, Kp->config_from_mask(m.masks[n]), gamma, params.q)) v += m.prob[n];
  out.v_gamma = static_cast<double>(v);
  return out;
}

/** \brief Exact E[W_gamma | P] in the coupling: 1 when gamma bounds in P mod q, else 0. */
inline double conditional_wilson(const BoxComplex& K, const PercolationConfig& P, const Chain& gamma, std::int64_t q) {
  ZqKernel ker = cocycle_kernel(K, P, q);
  return cocycle_character_mean(ker, chain_vector(K.faces(), gamma.reduced(q)));
}

// ---------------------------------------------------------------------------
// A configuration where gamma bounds mod q but not over Z

/** \brief Closed box, the spanning rectangle r of gamma, the percolation configuration and the tube core loop. */
struct AnomalyExample {
  int k = 0;
  Box box;
  Box r;
  Chain gamma;
  PercolationConfig config;
  std::vector<CellId> tube;  ///< cubes of the tube in loop order
};

/**
 * \brief A solid tube of cubes winding k times through the unit square r = [x0,x1]x[0,1]x{0}
 * and closing up outside it; P is every plaquette of the closed box except the cross-sections
 * between consecutive tube cubes. gamma = boundary of r is k times a generator, so it bounds
 * mod q exactly when q divides k.
 */
inline AnomalyExample anomaly_example(int k) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  const int xs = 1;
  const int xe = xs + 3 * k;
  // (y, z) of the cube min-corners around the cycle pierce -> outside -> back.
  const int cy[4] = {0, 0, -1, -1};
  const int cz[4] = {0, -1, -1, 0};
  std::vector<std::vector<int>> path;
  for (int t = 0; t < k; ++t) {
    const int x = xs + 3 * t;
    path.push_back({x, cy[0], cz[0]});
    path.push_back({x, cy[1], cz[1]});
    path.push_back({x + 1, cy[1], cz[1]});
    path.push_back({x + 1, cy[2], cz[2]});
    path.push_back({x + 2, cy[2], cz[2]});
    path.push_back({x + 2, cy[3], cz[3]});
    path.push_back({x + 3, cy[3], cz[3]});
  }
  // Back at (xe, -1, 0); return along y = -3.
  path.push_back({xe, -2, 0});
  path.push_back({xe, -3, 0});
  for (int x = xe - 1; x >= xs; --x) path.push_back({x, -3, 0});
  path.push_back({xs, -2, 0});
  path.push_back({xs, -1, 0});
  AnomalyExample ex;
  ex.k = k;
  ex.box = Box({xs - 1, -4, -2}, {xe + 1, 2, 2});
  ex.r = Box({xs, 0, 0}, {xs + 3 * (k - 1) + 1, 1, 0});
  BoxComplex K(ex.box, 2, Bc::Closed);
  ex.gamma = loop_boundary_chain(ex.r);
  PercolationConfig P = K.full_config();
  for (std::size_t n = 0; n < path.size(); ++n) {
    const auto& a = path[n];
    const auto& b = path[(n + 1) % path.size()];
    int axis = -1;
    for (int j = 0; j < 3; ++j)
      if (a[j] != b[j]) {
        if (axis >= 0 || std::abs(a[j] - b[j]) != 1) throw std::logic_error("tube path is not a lattice path");
        axis = j;
      }
    std::vector<int> corner = a;
    corner[axis] = std::max(a[axis], b[axis]);
    std::uint32_t dirs = 0b111u & ~(1u << axis);
    P.bits[K.plaquettes().at(primal_cell(corner, dirs))] = 0;
    ex.tube.push_back(primal_cell(a, 0b111u));
  }
  ex.config = P;
  return ex;
}

/** \brief The tube core as a dual loop of the anomaly complex. */
inline DualLoop anomaly_core_loop(const BoxComplex& K, const DualGraph& G, const AnomalyExample& ex) {
  DualLoop L;
  const std::size_t n = ex.tube.size();
  for (std::size_t t = 0; t < n; ++t) {
    const int u = G.cubes().at(ex.tube[t]);
    const int w = G.cubes().at(ex.tube[(t + 1) % n]);
    int edge = -1;
    for (auto [e, x] : G.neighbors(u))
      if (x == w) edge = e;
    if (edge < 0) throw std::logic_error("tube cubes are not adjacent");
    (void)K;
    L.vertices.push_back(u);
    L.edges.push_back(edge);
  }
  return L;
}

}  // namespace plaquette
