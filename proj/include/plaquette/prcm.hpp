#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "algebra.hpp"
#include "dual_graph.hpp"
#include "lattice.hpp"

namespace plaquette {

enum class Coefficients { Zq, Rational };

/** \brief Parameters of the plaquette random-cluster measure on a box. */
struct PrcmParams {
  double p = 0.5;
  double q = 2.0;
  int i = 2;
  int d = 3;
  Bc bc = Bc::Free;
  Coefficients coefficients = Coefficients::Zq;

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in [0,1]");
    if (!(q > 0.0)) throw std::invalid_argument("q must be positive");
    if (i < 1 || i > d) throw std::invalid_argument("need 1 <= i <= d");
    if (coefficients == Coefficients::Zq && (q != std::floor(q) || q < 1.0))
      throw std::invalid_argument("Z_q coefficients need a positive integer q");
  }
  std::int64_t q_int() const { return static_cast<std::int64_t>(std::llround(q)); }
};

/** \brief Dual edge parameter (1-p)q / ((1-p)q + p); an involution for fixed q. */
inline double p_star(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0) || !(q > 0.0)) throw std::invalid_argument("p_star: bad arguments");
  return (1.0 - p) * q / ((1.0 - p) * q + p);
}

inline double p_from_beta(double beta) { return 1.0 - std::exp(-beta); }

/** \brief Dual coupling log((e^beta + q - 1) / (e^beta - 1)); undefined at beta = 0. */
inline double beta_star(double beta, double q) {
  if (!(beta > 0.0)) throw std::domain_error("beta_star needs beta > 0");
  return std::log((std::exp(beta) + q - 1.0) / std::expm1(beta));
}

/** \brief The pieces of the weight of one configuration. */
struct WeightTerm {
  int size = 0;         ///< occupied state plaquettes
  int total = 0;        ///< state plaquettes
  int betti = 0;        ///< rational b_{i-1}
  BigInt h_order = 1;   ///< |H^{i-1}(P; Z_q)| in Z_q mode
  long double value = 0;
};

/**
 * \brief Evaluates p^|P| (1-p)^(N-|P|) |H^{i-1}(P)| for configurations of one complex.
 * The lower boundary map does not depend on P and is reduced once.
 */
class WeightEvaluator {
 public:
  WeightEvaluator(const BoxComplex& K, const PrcmParams& params) : K_(K), params_(params) {
    params_.validate();
    if (params_.i != K.i() || params_.d != K.d() || params_.bc != K.bc())
      throw std::invalid_argument("parameters do not match the complex");
    PercolationConfig empty = K.empty_config();
    SparseIntMatrix lower = boundary_matrix(K, empty, K.i() - 1);
    n_ = lower.cols;
    SmithForm s = smith_normal_form(lower);
    r_low_ = s.rank();
    if (params_.coefficients == Coefficients::Zq) {
      const std::int64_t q = params_.q_int();
      low_gcd_ = 1;
      for (int j = 0; j < s.rank(); ++j) low_gcd_ *= s.diag_gcd(j, q);
    }
  }

  WeightTerm term(const PercolationConfig& P) const {
    WeightTerm t;
    t.total = K_.state_count();
    for (int n : K_.state_cells()) t.size += P.bits[n];
    SmithForm s = smith_normal_form(boundary_matrix(K_, P, K_.i()));
    const int r = s.rank();
    t.betti = n_ - r_low_ - r;
    long double v = std::pow(static_cast<long double>(params_.p), t.size) *
                    std::pow(static_cast<long double>(1.0 - params_.p), t.total - t.size);
    if (params_.coefficients == Coefficients::Zq) {
      const std::int64_t q = params_.q_int();
      BigInt h = boost::multiprecision::pow(BigInt(q), static_cast<unsigned>(t.betti)) * low_gcd_;
      for (int j = 0; j < r; ++j) h *= s.diag_gcd(j, q);
      t.h_order = h;
      v *= static_cast<long double>(h);
    } else {
      v *= std::pow(static_cast<long double>(params_.q), t.betti);
    }
    t.value = v;
    return t;
  }

  long double weight(const PercolationConfig& P) const { return term(P).value; }
  const PrcmParams& params() const { return params_; }

 private:
  const BoxComplex& K_;
  PrcmParams params_;
  int n_ = 0;
  int r_low_ = 0;
  BigInt low_gcd_ = 1;
};

inline WeightTerm config_weight(const BoxComplex& K, const PercolationConfig& P, const PrcmParams& params) {
  K.validate(P);
  return WeightEvaluator(K, params).term(P);
}

/** \brief The exact measure over all state configurations, as masks over the state plaquettes. */
struct ExactMeasure {
  std::vector<std::uint64_t> masks;
  std::vector<long double> prob;
  long double partition = 0;

  long double probability(const std::function<bool(std::uint64_t)>& event) const {
    long double s = 0;
    for (std::size_t n = 0; n < masks.size(); ++n)
      if (event(masks[n])) s += prob[n];
    return s;
  }
};

constexpr int kMaxEnumerationCells = 24;

inline ExactMeasure enumerate_measure(const BoxComplex& K, const PrcmParams& params) {
  const int N = K.state_count();
  if (N > kMaxEnumerationCells) throw std::invalid_argument("enumerate_measure: too many state plaquettes");
  WeightEvaluator w(K, params);
  ExactMeasure m;
  const std::uint64_t total = std::uint64_t{1} << N;
  m.masks.resize(total);
  m.prob.resize(total);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    m.masks[mask] = mask;
    m.prob[mask] = w.weight(K.config_from_mask(mask));
    m.partition += m.prob[mask];
  }
  for (auto& x : m.prob) x /= m.partition;
  return m;
}

/** \brief Derives independent seeds from a master seed and a label. */
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& label, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : label) h = (h ^ c) * 1099511628211ull;
  std::uint64_t z = master ^ (h + 0x9e3779b97f4a7c15ull * (index + 1));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/** \brief Heat-bath probability that a dual bond is open given whether its ends are otherwise joined. */
inline double dual_bond_open_probability(double ps, double q, bool joined) {
  return joined ? ps : ps / (ps + (1.0 - ps) * q);
}

/**
 * \brief Heat-bath on the dual bonds for i = d - 1. A bond is open exactly when its
 * plaquette is vacant; bonds follow the random-cluster rule with parameter p*.
 */
class DualHeatBath {
 public:
  DualHeatBath(const BoxComplex& K, const PrcmParams& params, std::uint64_t seed)
      : K_(K), G_(K), params_(params), rng_(seed), P_(K.empty_config()) {
    params_.validate();
    if (K.i() != K.d() - 1) throw std::invalid_argument("dual heat-bath needs i = d - 1");
    ps_ = p_star(params_.p, params_.q);
    open_ = dual_open_edges(K_, P_);
    stamp_.assign(G_.vertex_count(), 0);
  }

  void set_config(const PercolationConfig& P) {
    K_.validate(P);
    P_ = P;
    open_ = dual_open_edges(K_, P_);
  }

  void sweep() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n : K_.state_cells()) {
      open_[n] = 0;
      auto [a, b] = G_.ends(n);
      const double prob = dual_bond_open_probability(ps_, params_.q, connected(a, b));
      open_[n] = u(rng_) < prob ? 1 : 0;
      P_.bits[n] = open_[n] ? 0 : 1;
    }
  }

  const PercolationConfig& config() const { return P_; }
  const std::vector<std::uint8_t>& open_edges() const { return open_; }
  const DualGraph& graph() const { return G_; }
  int components() const { return dual_components(G_, open_); }
  double dual_parameter() const { return ps_; }

 private:
  bool connected(int a, int b) {
    if (a == b) return true;
    ++epoch_;
    queue_.clear();
    queue_.push_back(a);
    stamp_[a] = epoch_;
    for (std::size_t h = 0; h < queue_.size(); ++h) {
      for (auto [e, w] : G_.neighbors(queue_[h])) {
        if (!open_[e] || stamp_[w] == epoch_) continue;
        if (w == b) return true;
        stamp_[w] = epoch_;
        queue_.push_back(w);
      }
    }
    return false;
  }

  const BoxComplex& K_;
  DualGraph G_;
  PrcmParams params_;
  Rng rng_;
  PercolationConfig P_;
  double ps_ = 0;
  std::vector<std::uint8_t> open_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::vector<int> queue_;
};

/**
 * \brief Edwards-Sokal alternation between an (i-1)-cochain f and P: plaquettes with
 * df = 0 are kept with probability p, then f is redrawn uniformly among the cocycles of P.
 */
class EdwardsSokal {
 public:
  EdwardsSokal(const BoxComplex& K, const PrcmParams& params, std::uint64_t seed)
      : K_(K), params_(params), rng_(seed), P_(K.empty_config()) {
    params_.validate();
    if (params_.coefficients != Coefficients::Zq) throw std::invalid_argument("Edwards-Sokal needs integer q");
    f_ = Cochain{K.i() - 1, params_.q_int(), std::vector<std::int64_t>(K.face_count(), 0)};
  }

  void p_step() {
    std::bernoulli_distribution keep(params_.p);
    const std::int64_t q = params_.q_int();
    for (int n : K_.state_cells()) {
      std::int64_t s = 0;
      for (auto [f, sign] : K_.plaquette_faces(n)) s += sign * f_.values[f];
      P_.bits[n] = (reduce_mod(s, q) == 0 && keep(rng_)) ? 1 : 0;
    }
  }

  void f_step() { f_ = uniform_cocycle(K_, P_, params_.q_int(), rng_); }

  void sweep() {
    p_step();
    f_step();
  }

  const PercolationConfig& config() const { return P_; }
  const Cochain& spins() const { return f_; }

 private:
  const BoxComplex& K_;
  PrcmParams params_;
  Rng rng_;
  PercolationConfig P_;
  Cochain f_;
};

/** \brief Single-plaquette heat-bath with the exact conditional weight; any i, small boxes. */
class DirectHeatBath {
 public:
  DirectHeatBath(const BoxComplex& K, const PrcmParams& params, std::uint64_t seed)
      : K_(K), w_(K, params), rng_(seed), P_(K.empty_config()) {}

  void sweep() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n : K_.state_cells()) {
      P_.bits[n] = 1;
      long double a = w_.weight(P_);
      P_.bits[n] = 0;
      long double b = w_.weight(P_);
      P_.bits[n] = u(rng_) < static_cast<double>(a / (a + b)) ? 1 : 0;
    }
  }

  const PercolationConfig& config() const { return P_; }

 private:
  const BoxComplex& K_;
  WeightEvaluator w_;
  Rng rng_;
  PercolationConfig P_;
};

enum class SamplerKind { DualHeatBath, EdwardsSokal, DirectHeatBath };

inline std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::DualHeatBath: return "dual";
    case SamplerKind::EdwardsSokal: return "es";
    default: return "direct";
  }
}

inline SamplerKind parse_sampler(const std::string& s) {
  if (s == "dual") return SamplerKind::DualHeatBath;
  if (s == "es") return SamplerKind::EdwardsSokal;
  if (s == "direct") return SamplerKind::DirectHeatBath;
  throw std::invalid_argument("unknown sampler: " + s);
}

struct TraceRow {
  long sweep = 0;
  int size = 0;
  int components = -1;
  int v_gamma = -1;
};

struct SampleRun {
  PercolationConfig final_config;
  std::vector<TraceRow> trace;
};

/**
 * \brief Runs a sampler for burn_in + sweeps sweeps and records one row per kept sweep.
 * observe, when given, fills v_gamma.
 */
inline SampleRun sample(const BoxComplex& K, const PrcmParams& params, SamplerKind kind, long sweeps, long burn_in,
                        std::uint64_t seed,
                        const std::function<int(const PercolationConfig&)>& observe = nullptr) {
  std::optional<DualGraph> G;
  if (K.i() == K.d() - 1) G.emplace(K);
  auto row = [&](long s, const PercolationConfig& P) {
    TraceRow r;
    r.sweep = s;
    for (int n : K.state_cells()) r.size += P.bits[n];
    if (G) r.components = dual_components(*G, dual_open_edges(K, P));
    if (observe) r.v_gamma = observe(P);
    return r;
  };
  SampleRun run;
  auto drive = [&](auto& sampler) {
    for (long s = 0; s < burn_in; ++s) sampler.sweep();
    for (long s = 0; s < sweeps; ++s) {
      sampler.sweep();
      run.trace.push_back(row(s, sampler.config()));
    }
    run.final_config = sampler.config();
  };
  if (kind == SamplerKind::DualHeatBath) {
    DualHeatBath s(K, params, seed);
    drive(s);
  } else if (kind == SamplerKind::EdwardsSokal) {
    EdwardsSokal s(K, params, seed);
    drive(s);
  } else {
    DirectHeatBath s(K, params, seed);
    drive(s);
  }
  return run;
}

/** \brief Integrated autocorrelation time with a self-consistent window (c = 6). */
inline double integrated_autocorrelation(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return 0.5;
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double c0 = 0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  c0 /= n;
  if (c0 == 0) return 0.5;
  double tau = 0.5;
  for (std::size_t t = 1; t < n / 2; ++t) {
    double c = 0;
    for (std::size_t k = 0; k + t < n; ++k) c += (x[k] - mean) * (x[k + t] - mean);
    c /= n;
    tau += c / c0;
    if (static_cast<double>(t) >= 6.0 * tau) break;
  }
  return tau;
}

}  // namespace plaquette
