#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "duality.hpp"
#include "lattice.hpp"
#include "prcm.hpp"

namespace plaquette {

/** \brief Probability estimate with a confidence interval. */
struct Estimate {
  double p_hat = 0;
  double ci_lo = 0;
  double ci_hi = 0;
  long n = 0;
  long successes = -1;            ///< -1 for weighted estimators
  bool upper_bound_only = false;  ///< no success observed; only ci_hi is meaningful

  double neg_log() const { return p_hat > 0 ? -std::log(p_hat) : INFINITY; }
};

/** \brief Wilson score interval. */
inline Estimate wilson_interval(long k, long n, double z = 1.96) {
  if (n <= 0 || k < 0 || k > n) throw std::invalid_argument("wilson_interval: bad counts");
  Estimate e;
  e.n = n;
  e.successes = k;
  const double ph = static_cast<double>(k) / n, z2 = z * z;
  const double den = 1 + z2 / n;
  const double ctr = (ph + z2 / (2.0 * n)) / den;
  const double half = z * std::sqrt(ph * (1 - ph) / n + z2 / (4.0 * n * n)) / den;
  e.p_hat = ph;
  e.ci_lo = std::max(0.0, ctr - half);
  e.ci_hi = std::min(1.0, ctr + half);
  e.upper_bound_only = k == 0;
  if (e.upper_bound_only) e.ci_lo = 0;
  return e;
}

// Normal interval for a mean of i.i.d. weighted terms.
inline Estimate weighted_interval(double sum, double sumsq, long n, double z = 1.96) {
  Estimate e;
  e.n = n;
  const double mean = sum / n;
  const double var = std::max(0.0, sumsq / n - mean * mean) / std::max<long>(1, n - 1);
  e.p_hat = mean;
  e.ci_lo = std::max(0.0, mean - z * std::sqrt(var));
  e.ci_hi = mean + z * std::sqrt(var);
  e.upper_bound_only = mean == 0;
  return e;
}

/** \brief Modulus used for V_gamma at a given q: Z when q = 1. */
inline std::int64_t v_modulus(double q) {
  const auto qi = static_cast<std::int64_t>(std::llround(q));
  return (qi <= 1 || q != std::floor(q)) ? 0 : qi;
}

/** \brief Direct Monte Carlo estimate of mu(V_gamma) for gamma = boundary of the (d-1)-box r. */
inline Estimate estimate_v_gamma(const BoxComplex& K, const PrcmParams& params, const Box& r, long n,
                                 std::uint64_t seed, long burn_in = 0, std::int64_t modulus = -1) {
  if (n <= 0) throw std::invalid_argument("need at least one sample");
  if (K.i() != K.d() - 1) throw std::invalid_argument("estimate_v_gamma needs i = d - 1");
  const std::int64_t m = modulus < 0 ? v_modulus(params.q) : modulus;
  LinkingOracle oracle(K, r);
  DualHeatBath chain(K, params, seed);
  for (long s = 0; s < burn_in; ++s) chain.sweep();
  long hits = 0;
  for (long s = 0; s < n; ++s) {
    chain.sweep();
    hits += oracle.v_gamma(chain.open_edges(), m) ? 1 : 0;
  }
  return wilson_interval(hits, n);
}

namespace detail {
inline void bernoulli_fill(const BoxComplex& K, PercolationConfig& P, double p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n : K.state_cells()) P.bits[n] = u(rng) < p ? 1 : 0;
}
}  // namespace detail

/**
 * \brief Importance sampling for Bernoulli plaquettes (q = 1): the plaquettes of r are
 * drawn with probability p_tilt and reweighted. Suited to small mu(V_gamma).
 */
inline Estimate estimate_v_gamma_area_tilt(const BoxComplex& K, double p, const Box& r, long n, std::uint64_t seed,
                                           double p_tilt = 0.9) {
  LinkingOracle oracle(K, r);
  Rng rng(seed);
  std::vector<std::uint8_t> in_r(K.plaquette_count(), 0);
  for (int c : K.state_cells())
    if (cell_in_box(K.plaquettes()[c], r)) in_r[c] = 1;
  const double lw1 = std::log(p / p_tilt), lw0 = std::log((1 - p) / (1 - p_tilt));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PercolationConfig P = K.empty_config();
  double sum = 0, sumsq = 0;
  for (long s = 0; s < n; ++s) {
    double lw = 0;
    for (int c : K.state_cells()) {
      if (in_r[c]) {
        P.bits[c] = u(rng) < p_tilt ? 1 : 0;
        lw += P.bits[c] ? lw1 : lw0;
      } else {
        P.bits[c] = u(rng) < p ? 1 : 0;
      }
    }
    if (oracle.v_gamma(dual_open_edges(K, P), 0)) {
      const double w = std::exp(lw);
      sum += w;
      sumsq += w * w;
    }
  }
  return weighted_interval(sum, sumsq, n);
}

/**
 * \brief Importance sampling for Bernoulli plaquettes (q = 1) aimed at the rare failure of
 * V_gamma: a mixture of the plain measure and the measures conditioned on all plaquettes
 * around one cell of gamma being vacant.
 */
inline Estimate estimate_v_gamma_ring(const BoxComplex& K, double p, const Box& r, long n, std::uint64_t seed,
                                      double lambda0 = 0.5) {
  LinkingOracle oracle(K, r);
  const Chain gamma = loop_boundary_chain(r);
  std::vector<std::vector<int>> rings;
  std::vector<double> a;
  for (const auto& kv : gamma.coeffs) {
    const int f = K.faces().at(kv.first);
    std::vector<int> ring;
    bool possible = true;
    for (auto [c, s] : K.face_cofaces(f)) {
      if (K.is_state(c))
        ring.push_back(c);
      else if (K.bc() == Bc::Wired)
        possible = false;
    }
    if (!possible) continue;
    rings.push_back(ring);
    a.push_back(std::pow(1 - p, static_cast<double>(ring.size())));
  }
  const double R = static_cast<double>(rings.size());
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, std::max(0, static_cast<int>(rings.size()) - 1));
  PercolationConfig P = K.empty_config();
  double sum = 0, sumsq = 0;
  for (long s = 0; s < n; ++s) {
    detail::bernoulli_fill(K, P, p, rng);
    if (!rings.empty() && u(rng) >= lambda0)
      for (int c : rings[pick(rng)]) P.bits[c] = 0;
    if (oracle.v_gamma(dual_open_edges(K, P), 0)) continue;
    double lr = lambda0;
    for (std::size_t e = 0; e < rings.size(); ++e) {
      bool vacant = true;
      for (int c : rings[e]) vacant = vacant && !P.bits[c];
      if (vacant) lr += (1 - lambda0) / (R * a[e]);
    }
    const double w = 1.0 / lr;
    sum += w;
    sumsq += w * w;
  }
  Estimate fail = weighted_interval(sum, sumsq, n);
  Estimate e = fail;
  e.p_hat = 1 - fail.p_hat;
  e.ci_lo = std::max(0.0, 1 - fail.ci_hi);
  e.ci_hi = std::min(1.0, 1 - fail.ci_lo);
  e.upper_bound_only = false;
  return e;
}

// ---------------------------------------------------------------------------
// Decay laws

struct DecayPoint {
  std::string label;
  double area = 0;
  double per = 0;
  double p_hat = 0;
  double ci_lo = 0;
  double ci_hi = 0;
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double slope_stderr = 0;
  double normalized_residual = 0;
};

struct FitResult {
  std::string law;  ///< "area" or "perimeter"
  double decay_constant = 0;
  double stderr_ = 0;
  LinearFit area_fit;
  LinearFit per_fit;
  std::vector<double> per_area;  ///< -log p / Area for each point
  std::vector<double> per_per;   ///< -log p / Per for each point
};

inline LinearFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
  }
  LinearFit f;
  if (sxx == 0) throw std::invalid_argument("fit needs distinct sizes");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - f.intercept - f.slope * x[k];
    ssr += r * r;
  }
  f.slope_stderr = x.size() > 2 ? std::sqrt(ssr / (n - 2) / sxx) : 0;
  double scale = 0;
  for (double v : y) scale += std::fabs(v);
  scale /= n;
  f.normalized_residual = scale > 0 ? std::sqrt(ssr / n) / scale : 0;
  return f;
}

/** \brief Regresses -log p_hat on Area and on Per and keeps the law with the smaller normalized residual. */
inline FitResult fit_decay(const std::vector<DecayPoint>& pts) {
  std::vector<double> xa, xp, y;
  FitResult r;
  for (const DecayPoint& d : pts) {
    if (!(d.p_hat > 0)) continue;
    xa.push_back(d.area);
    xp.push_back(d.per);
    y.push_back(-std::log(d.p_hat));
    r.per_area.push_back(y.back() / d.area);
    r.per_per.push_back(y.back() / d.per);
  }
  if (y.size() < 3) throw std::invalid_argument("fit_decay needs at least three points with positive estimates");
  r.area_fit = least_squares(xa, y);
  r.per_fit = least_squares(xp, y);
  const bool area = r.area_fit.normalized_residual <= r.per_fit.normalized_residual;
  r.law = area ? "area" : "perimeter";
  r.decay_constant = area ? r.area_fit.slope : r.per_fit.slope;
  r.stderr_ = area ? r.area_fit.slope_stderr : r.per_fit.slope_stderr;
  return r;
}

// ---------------------------------------------------------------------------
// Surface tension of the dual random-cluster model

struct TensionEstimate {
  double tau_hat = 0;
  double tau_lo = 0;
  double tau_hi = 0;
  Estimate separation;  ///< no dual crossing between the upper and lower boundary halves
  Estimate crossing;
};

/**
 * \brief -log mu^w(no crossing) / (2N)^(d-1) for the dual model with edge parameter ps on the
 * cubes of [-N,N]^d. Sampled as the free plaquette model at p = p*(ps).
 */
inline TensionEstimate surface_tension_estimate(double ps, double q, int d, int N, long n, std::uint64_t seed,
                                                long burn_in = 100) {
  if (N < 1 || d < 2) throw std::invalid_argument("need N >= 1 and d >= 2");
  Box box(std::vector<int>(d, -N), std::vector<int>(d, N));
  BoxComplex K(box, d - 1, Bc::Free);
  PrcmParams params;
  params.p = p_star(ps, q);
  params.q = q;
  params.i = d - 1;
  params.d = d;
  params.bc = Bc::Free;
  params.coefficients = q == std::floor(q) ? Coefficients::Zq : Coefficients::Rational;
  DualHeatBath chain(K, params, seed);
  for (long s = 0; s < burn_in; ++s) chain.sweep();
  long cross = 0;
  for (long s = 0; s < n; ++s) {
    chain.sweep();
    cross += equator_crossing(K, chain.config(), d - 1, 0) ? 1 : 0;
  }
  TensionEstimate t;
  t.crossing = wilson_interval(cross, n);
  t.separation = wilson_interval(n - cross, n);
  const double area = std::pow(2.0 * N, d - 1);
  auto tau = [&](double x) { return x > 0 ? -std::log(x) / area : INFINITY; };
  t.tau_hat = tau(t.separation.p_hat);
  t.tau_lo = tau(t.separation.ci_hi);
  t.tau_hi = tau(t.separation.ci_lo);
  return t;
}

// ---------------------------------------------------------------------------
// Tube events

struct TubeRates {
  Estimate c_t;
  Estimate d_t;
  Estimate c_bar;
  double trend = 0;  ///< -log rate(C-bar) / |s|
};

inline TubeRates tube_event_rate(const PrcmParams& params, const Box& s, int L, long n, std::uint64_t seed,
                                 long burn_in = 50) {
  const Box box = tube(s, L).expanded(1);
  BoxComplex K(box, box.dim() - 1, params.bc);
  PrcmParams pp = params;
  pp.i = K.i();
  pp.d = K.d();
  DualHeatBath chain(K, pp, seed);
  for (long k = 0; k < burn_in; ++k) chain.sweep();
  const std::int64_t m = v_modulus(params.q);
  long c = 0, dd = 0, both = 0;
  for (long k = 0; k < n; ++k) {
    chain.sweep();
    const bool ct = c_t_event(K, chain.config(), s, L, m);
    const bool dt = d_t_event(K, chain.config(), s, L);
    c += ct;
    dd += dt;
    both += ct && dt;
  }
  TubeRates r;
  r.c_t = wilson_interval(c, n);
  r.d_t = wilson_interval(dd, n);
  r.c_bar = wilson_interval(both, n);
  r.trend = r.c_bar.p_hat > 0 ? -std::log(r.c_bar.p_hat) / static_cast<double>(area(s)) : INFINITY;
  return r;
}

// ---------------------------------------------------------------------------
// Suitable families of rectangles

/** \brief Rectangles r_l with M = 4l and m = ceil(log(M) sqrt(l)), so m / log M grows like sqrt(l). */
struct SuitableFamily {
  std::vector<Box> boxes;
  std::vector<int> m;
  std::vector<int> M;
  std::vector<double> g;
};

inline SuitableFamily make_suitable_family(int l_max, int d = 3) {
  if (l_max < 3) throw std::invalid_argument("suitable family needs l_max >= 3");
  if (d < 3) throw std::invalid_argument("suitable family needs d >= 3");
  SuitableFamily fam;
  for (int l = 1; l <= l_max; ++l) {
    const int M = 4 * l;
    const double g = std::sqrt(static_cast<double>(l));
    const int m = std::min(M, static_cast<int>(std::ceil(std::log(static_cast<double>(M)) * g)));
    std::vector<int> hi(d, m);
    hi[0] = M;
    hi[d - 1] = 0;
    fam.boxes.emplace_back(std::vector<int>(d, 0), hi);
    fam.m.push_back(m);
    fam.M.push_back(M);
    fam.g.push_back(g);
  }
  return fam;
}

inline double suitability_ratio(int m, int M) { return static_cast<double>(m) / std::log(static_cast<double>(M)); }

// ---------------------------------------------------------------------------
// Parameter sweeps

struct SweepSpec {
  std::vector<double> ps{0.5};
  std::vector<double> qs{1.0};
  std::vector<Bc> bcs{Bc::Free};
  std::vector<std::pair<int, int>> loops{{2, 2}};
  int d = 3;
  int margin = 2;
  long samples = 1000;
  long burn_in = 100;
  std::uint64_t seed = 1;
  std::string estimator = "direct";  ///< direct, importance
  std::string group = "default";
  int threads = 0;
};

struct SweepRow {
  double p = 0;
  double q = 0;
  Bc bc = Bc::Free;
  int d = 3;
  int m1 = 0;
  int m2 = 0;
  long long area = 0;
  long long per = 0;
  Estimate est;
  std::uint64_t seed = 0;
  std::string group;
  std::string method;
};

/** \brief The box around a d-1 dimensional loop rectangle with the given margin. */
inline std::pair<Box, Box> loop_geometry(int d, int m1, int m2, int margin) {
  std::vector<int> lo(d, 0), hi(d, m2);
  hi[0] = m1;
  hi[d - 1] = 0;
  Box r(lo, hi);
  return {r, r.expanded(margin)};
}

inline SweepRow run_sweep_point(const SweepSpec& spec, double p, double q, Bc bc, std::pair<int, int> loop,
                                std::uint64_t seed) {
  if (spec.margin < 1) throw std::invalid_argument("loop margin must be at least 1");
  if (spec.samples <= 0) throw std::invalid_argument("need at least one sample");
  auto [r, box] = loop_geometry(spec.d, loop.first, loop.second, spec.margin);
  BoxComplex K(box, spec.d - 1, bc);
  SweepRow row;
  row.p = p;
  row.q = q;
  row.bc = bc;
  row.d = spec.d;
  row.m1 = loop.first;
  row.m2 = loop.second;
  row.area = area(r);
  row.per = perimeter(loop_boundary_chain(r));
  row.seed = seed;
  row.group = spec.group;
  if (spec.estimator == "importance") {
    if (q != 1.0) throw std::invalid_argument("importance sampling needs q = 1");
    // Tilting the disc helps when V is rare; the ring mixture when failures are rare.
    if (p < 0.5) {
      row.est = estimate_v_gamma_area_tilt(K, p, r, spec.samples, seed);
      row.method = "area_tilt";
    } else {
      row.est = estimate_v_gamma_ring(K, p, r, spec.samples, seed);
      row.method = "ring_mixture";
    }
  } else if (spec.estimator == "direct") {
    PrcmParams params;
    params.p = p;
    params.q = q;
    params.i = spec.d - 1;
    params.d = spec.d;
    params.bc = bc;
    params.coefficients = q == std::floor(q) ? Coefficients::Zq : Coefficients::Rational;
    row.est = estimate_v_gamma(K, params, r, spec.samples, seed, q == 1.0 ? 0 : spec.burn_in);
    row.method = "direct";
  } else {
    throw std::invalid_argument("unknown estimator: " + spec.estimator);
  }
  return row;
}

/** \brief Runs every grid point; results are in grid order and do not depend on the thread count. */
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  struct Point {
    double p, q;
    Bc bc;
    std::pair<int, int> loop;
  };
  std::vector<Point> grid;
  for (double q : spec.qs)
    for (Bc bc : spec.bcs)
      for (double p : spec.ps)
        for (auto loop : spec.loops) grid.push_back({p, q, bc, loop});
  std::vector<SweepRow> rows(grid.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const std::size_t k = next++;
      if (k >= grid.size()) return;
      try {
        const Point& g = grid[k];
        const std::uint64_t seed = derive_seed(spec.seed, "sweep", k);
        rows[k] = run_sweep_point(spec, g.p, g.q, g.bc, g.loop, seed);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  unsigned threads = spec.threads > 0 ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, std::max<std::size_t>(1, grid.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return rows;
}

}  // namespace plaquette
