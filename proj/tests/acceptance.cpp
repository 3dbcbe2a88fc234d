#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "plaquette/experiments.hpp"
#include "plaquette/io.hpp"
#include "plaquette/plgt.hpp"

using namespace plaquette;

namespace {

constexpr double kExactTol = 1e-12;
constexpr double kSigmas = 3.0;
constexpr long kChainSweeps = 100000;
constexpr long kTrendSamples = 100000;
constexpr int kTrendMargin = 4;
constexpr double kPerFlat = 0.15;
constexpr double kAreaDrop = 2.0;
constexpr double kAreaFlat = 0.25;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) {
      out_.pass = false;
      if (failures_++ < 5) out_.detail += " [" + what + "]";
    }
  }
  void note(const std::string& s) { out_.detail += " " + s; }
  Outcome result() const { return out_; }

 private:
  Outcome out_;
  int failures_ = 0;
};

PrcmParams prcm(double p, double q, int i, int d, Bc bc, Coefficients co = Coefficients::Zq) {
  PrcmParams pp;
  pp.p = p;
  pp.q = q;
  pp.i = i;
  pp.d = d;
  pp.bc = bc;
  pp.coefficients = co;
  return pp;
}

double flatness(const std::vector<double>& v) {
  double lo = v[0], hi = v[0];
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return hi / lo - 1;
}

// ---------------------------------------------------------------------------

Outcome coupling_marginals() {
  Checker c;
  BoxComplex K(Box::from_extents({1, 1, 1}), 2, Bc::Closed);
  double worst = 0;
  for (std::int64_t q : {2, 3, 4, 6})
    for (double p : {0.3, 0.7}) {
      PlgtParams params{-std::log(1 - p), q, std::nullopt};
      CouplingMarginals m = coupling_exact(K, params);
      GibbsDistribution G = gibbs_exact(K, params);
      ExactMeasure mu = enumerate_measure(K, prcm(p, static_cast<double>(q), 2, 3, Bc::Closed));
      c.require(m.spin.size() == G.prob.size() && m.bonds.size() == mu.prob.size(), "sizes");
      for (std::size_t k = 0; k < G.prob.size(); ++k) worst = std::max(worst, static_cast<double>(std::fabs(m.spin[k] - G.prob[k])));
      for (std::size_t k = 0; k < mu.prob.size(); ++k) worst = std::max(worst, static_cast<double>(std::fabs(m.bonds[k] - mu.prob[k])));
    }
  c.require(worst <= kExactTol, "max error " + fmt(worst));
  c.note("max_err=" + fmt(worst));
  return c.result();
}

Outcome wilson_identity() {
  Checker c;
  double worst = 0;
  struct Case {
    std::vector<int> extents;
    Bc bc;
    std::vector<std::int64_t> qs;
  };
  const std::vector<Case> cases{{{1, 1, 1}, Bc::Closed, {2, 3, 4, 6}}, {{1, 1, 1}, Bc::Free, {2, 3, 4, 6}},
                                {{1, 1, 1}, Bc::Wired, {2, 3, 4, 6}}, {{2, 1, 1}, Bc::Free, {2, 3}},
                                {{2, 1, 1}, Bc::Wired, {2, 3, 4, 6}}};
  int checked = 0;
  for (const Case& cs : cases) {
    BoxComplex K(Box::from_extents(cs.extents), 2, cs.bc);
    std::vector<Chain> loops{boundary_of_cell(primal_cell({0, 0, 0}, 0b011))};
    if (cs.extents[0] == 2) loops.push_back(loop_boundary_chain(Box({1, 0, 0}, {1, 1, 1})));
    for (std::int64_t q : cs.qs)
      for (double p : {0.3, 0.7})
        for (const Chain& g : loops) {
          ComparisonResult r = comparison_identity_check(K, PlgtParams{-std::log(1 - p), q, std::nullopt}, g);
          worst = std::max(worst, std::abs(r.wilson - std::complex<double>(r.v_gamma, 0)));
          ++checked;
        }
  }
  c.require(worst <= kExactTol, "max gap " + fmt(worst));
  c.note("cases=" + std::to_string(checked) + " max_gap=" + fmt(worst));
  return c.result();
}

Outcome anomaly() {
  Checker c;
  AnomalyExample ex = anomaly_example(2);
  BoxComplex K(ex.box, 2, Bc::Closed);
  const bool vz = null_homology_test(K, ex.config, ex.gamma, 0);
  const bool v2 = null_homology_test(K, ex.config, ex.gamma, 2);
  const bool v3 = null_homology_test(K, ex.config, ex.gamma, 3);
  c.require(!vz, "V(Z) should be false");
  c.require(v2, "V(2) should be true");
  c.require(!v3, "V(3) should be false");
  for (std::int64_t q : {2, 3}) {
    const double w = conditional_wilson(K, ex.config, ex.gamma, q);
    c.require(w == (null_homology_test(K, ex.config, ex.gamma, q) ? 1.0 : 0.0), "E[W|P] q=" + std::to_string(q));
    c.require(v_gamma_dual_test(K, ex.config, ex.r, q) == null_homology_test(K, ex.config, ex.gamma, q), "dual test");
  }
  c.note(std::string("V(Z)=") + (vz ? "true" : "false") + " V(2)=" + (v2 ? "true" : "false") + " V(3)=" + (v3 ? "true" : "false") +
         " E[W|P](2)=" + fmt(conditional_wilson(K, ex.config, ex.gamma, 2)) +
         " E[W|P](3)=" + fmt(conditional_wilson(K, ex.config, ex.gamma, 3)));
  return c.result();
}

Outcome codim_one() {
  Checker c;
  long mismatches = 0;
  double worst = 0;
  const std::vector<std::int64_t> qs{2, 3, 4, 6};
  for (Bc bc : {Bc::Free, Bc::Wired}) {
    BoxComplex K(Box::from_extents({2, 2, 2}), 2, bc);
    c.require(K.state_count() == 12, "expected 12 state plaquettes");
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << K.state_count()); ++mask) {
      const PercolationConfig P = K.config_from_mask(mask);
      const int b = homology_summary(K, P, 1, 0).betti;
      for (std::int64_t q : qs)
        if (cohomology_order(K, P, 1, q) != boost::multiprecision::pow(BigInt(q), static_cast<unsigned>(b))) ++mismatches;
    }
    for (std::int64_t q : qs)
      for (double p : {0.3, 0.7}) {
        ExactMeasure a = enumerate_measure(K, prcm(p, static_cast<double>(q), 2, 3, bc));
        ExactMeasure r = enumerate_measure(K, prcm(p, static_cast<double>(q), 2, 3, bc, Coefficients::Rational));
        for (std::size_t n = 0; n < a.prob.size(); ++n) worst = std::max(worst, static_cast<double>(std::fabs(a.prob[n] - r.prob[n])));
      }
  }
  c.require(mismatches == 0, std::to_string(mismatches) + " order mismatches");
  c.require(worst <= kExactTol, "measure gap " + fmt(worst));
  c.note("configs=2x4096 mismatches=" + std::to_string(mismatches) + " max_err=" + fmt(worst));
  return c.result();
}

Outcome duality() {
  Checker c;
  double worst = 0;
  int cases = 0;
  for (Bc bc : {Bc::Free, Bc::Wired})
    for (double q : {1.0, 2.0, 2.5, 3.0, 4.0, 6.0})
      for (double p : {0.3, 0.7}) {
        BoxComplex K(Box::from_extents({2, 2, 2}), 2, bc);
        const Coefficients co = q == std::floor(q) ? Coefficients::Zq : Coefficients::Rational;
        worst = std::max(worst, duality_discrepancy(K, prcm(p, q, 2, 3, bc, co)));
        ++cases;
      }
  c.require(worst <= kExactTol, "max error " + fmt(worst));
  c.note("cases=" + std::to_string(cases) + " max_err=" + fmt(worst));
  return c.result();
}

Outcome linking() {
  Checker c;
  std::mt19937_64 rng(derive_seed(2024, "acceptance-linking"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<Box> rects{Box({1, 1, 1}, {2, 2, 1}), Box({0, 1, 2}, {2, 3, 2}), Box({1, 0, 0}, {1, 3, 2})};
  long configs = 0, disagreements = 0, equator_checks = 0, equator_bad = 0;
  for (Bc bc : {Bc::Free, Bc::Wired, Bc::Closed}) {
    BoxComplex K(Box::from_extents({3, 3, 3}), 2, bc);
    std::vector<LinkingOracle> oracles;
    for (const Box& r : rects) oracles.emplace_back(K, r);
    const std::vector<Box> equators{Box({0, 0, 1}, {3, 3, 1}), Box({0, 0, 2}, {3, 3, 2})};
    for (int t = 0; t < 200; ++t) {
      const double density = u(rng);
      PercolationConfig P = K.empty_config();
      for (int n : K.state_cells()) P.bits[n] = u(rng) < density ? 1 : 0;
      const auto open = dual_open_edges(K, P);
      ++configs;
      for (std::size_t k = 0; k < rects.size(); ++k) {
        const Chain g = loop_boundary_chain(rects[k]);
        for (std::int64_t q : {0, 2, 3, 4, 6})
          if (oracles[k].v_gamma(open, q) != null_homology_test(K, P, g, q)) ++disagreements;
      }
      if (bc != Bc::Free) continue;
      for (int h = 1; h <= 2; ++h) {
        const Box& eq = equators[h - 1];
        const bool cross = equator_crossing(K, P, 2, h);
        for (std::int64_t q : {0, 2, 3, 4, 6}) {
          ++equator_checks;
          const bool v = v_gamma_dual_test(K, P, eq, q);
          if (v == cross || null_homology_test(K, P, loop_boundary_chain(eq), q) != v) ++equator_bad;
        }
      }
    }
  }
  c.require(configs >= 500, "too few configurations");
  c.require(disagreements == 0, std::to_string(disagreements) + " disagreements");
  c.require(equator_bad == 0, std::to_string(equator_bad) + " equator mismatches");
  c.note("configs=" + std::to_string(configs) + " disagreements=" + std::to_string(disagreements) +
         " equator_checks=" + std::to_string(equator_checks) + " equator_mismatches=" + std::to_string(equator_bad));
  return c.result();
}

struct ChainStats {
  double mean = 0;
  double se = 0;
};

ChainStats stats(const std::vector<double>& xs) {
  ChainStats s;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  double var = 0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  var /= n - 1;
  s.se = std::sqrt(var * 2 * integrated_autocorrelation(xs) / n);
  return s;
}

Outcome samplers() {
  Checker c;
  BoxComplex K(Box::from_extents({2, 2, 2}), 2, Bc::Free);
  const Box r({0, 0, 1}, {1, 1, 1});
  const Chain gamma = loop_boundary_chain(r);
  LinkingOracle oracle(K, r);
  double worst_z = 0;
  for (double q : {1.0, 2.0, 3.0, 4.0}) {
    const PrcmParams params = prcm(0.5, q, 2, 3, Bc::Free);
    const std::int64_t m = v_modulus(q);
    ExactMeasure mu = enumerate_measure(K, params);
    const double v_exact = static_cast<double>(
        mu.probability([&](std::uint64_t mask) { return null_homology_test(K, K.config_from_mask(mask), gamma, m); }));
    double size_exact = 0;
    for (std::size_t n = 0; n < mu.masks.size(); ++n) size_exact += static_cast<double>(mu.prob[n]) * __builtin_popcountll(mu.masks[n]);
    auto check = [&](const std::string& name, auto& chain) {
      for (int s = 0; s < 1000; ++s) chain.sweep();
      std::vector<double> v, size;
      v.reserve(kChainSweeps);
      size.reserve(kChainSweeps);
      for (long s = 0; s < kChainSweeps; ++s) {
        chain.sweep();
        const PercolationConfig& P = chain.config();
        v.push_back(oracle.v_gamma(dual_open_edges(K, P), m) ? 1.0 : 0.0);
        double k = 0;
        for (int n : K.state_cells()) k += P.bits[n];
        size.push_back(k);
      }
      const ChainStats sv = stats(v), ss = stats(size);
      const double zv = std::fabs(sv.mean - v_exact) / sv.se, zs = std::fabs(ss.mean - size_exact) / ss.se;
      worst_z = std::max({worst_z, zv, zs});
      const std::string tag = name + " q=" + fmt(q);
      c.require(zv <= kSigmas, tag + " V z=" + fmt(zv));
      c.require(zs <= kSigmas, tag + " |P| z=" + fmt(zs));
    };
    DualHeatBath dual(K, params, derive_seed(7, "acceptance-dual", static_cast<std::uint64_t>(q)));
    check("dual", dual);
    EdwardsSokal es(K, params, derive_seed(7, "acceptance-es", static_cast<std::uint64_t>(q)));
    check("es", es);
  }
  c.note("sweeps=" + std::to_string(kChainSweeps) + " worst_z=" + fmt(worst_z));
  return c.result();
}

Outcome fkg() {
  Checker c;
  struct Setting {
    Box box;
    int i;
    Bc bc;
  };
  const std::vector<Setting> settings{{Box::from_extents({2, 2, 2}), 2, Bc::Free},
                                      {Box::from_extents({2, 2, 2}), 2, Bc::Wired},
                                      {Box::from_extents({2, 1, 1}), 2, Bc::Closed},
                                      {Box::from_extents({2, 2}), 1, Bc::Closed}};
  double worst = 0;
  long pairs = 0;
  for (const Setting& st : settings) {
    BoxComplex K(st.box, st.i, st.bc);
    const int N = K.state_count();
    const auto& S = K.state_cells();
    const Chain g1 = boundary_of_cell(K.plaquettes()[S.front()]);
    const Chain g2 = boundary_of_cell(K.plaquettes()[S.back()]);
    const Chain g3 = boundary_of_cell(K.plaquettes()[S[N / 2]]);
    std::vector<std::function<bool(std::uint64_t)>> events{
        [](std::uint64_t m) { return (m & 1u) != 0; },
        [N](std::uint64_t m) { return ((m >> (N - 1)) & 1u) != 0; },
        [N](std::uint64_t m) { return __builtin_popcountll(m) >= N / 2; },
        [](std::uint64_t m) { return (m & 7u) == 7u; },
        [N](std::uint64_t m) { return (m & 1u) || ((m >> (N - 1)) & 1u); },
        [&K, g1](std::uint64_t m) { return null_homology_test(K, K.config_from_mask(m), g1, 0); },
        [&K, g2](std::uint64_t m) { return null_homology_test(K, K.config_from_mask(m), g2, 0); },
        [&K, g3](std::uint64_t m) { return null_homology_test(K, K.config_from_mask(m), g3, 0); },
    };
    std::vector<std::vector<std::uint8_t>> table(events.size(), std::vector<std::uint8_t>(std::size_t{1} << N));
    for (std::size_t e = 0; e < events.size(); ++e)
      for (std::uint64_t m = 0; m < (std::uint64_t{1} << N); ++m) table[e][m] = events[e](m);
    for (double q : {1.0, 1.5, 2.0, 4.0})
      for (double p : {0.3, 0.7}) {
        ExactMeasure mu = enumerate_measure(K, prcm(p, q, st.i, st.box.dim(), st.bc, Coefficients::Rational));
        for (std::size_t a = 0; a < events.size(); ++a)
          for (std::size_t b = a; b < events.size(); ++b) {
            long double pa = 0, pb = 0, pab = 0;
            for (std::size_t n = 0; n < mu.masks.size(); ++n) {
              const auto m = mu.masks[n];
              if (table[a][m]) pa += mu.prob[n];
              if (table[b][m]) pb += mu.prob[n];
              if (table[a][m] && table[b][m]) pab += mu.prob[n];
            }
            const double gap = static_cast<double>(pa * pb - pab);
            worst = std::max(worst, gap);
            c.require(gap <= kExactTol, "FKG pair " + std::to_string(a) + "," + std::to_string(b) + " q=" + fmt(q));
            ++pairs;
          }
      }
  }
  // Free below wired on V_gamma and on the catalogue events of the state plaquettes.
  long orderings = 0;
  double worst_order = 0;
  BoxComplex F(Box::from_extents({2, 2, 2}), 2, Bc::Free), W(Box::from_extents({2, 2, 2}), 2, Bc::Wired);
  const std::vector<Box> rects{Box({0, 0, 1}, {1, 1, 1}), Box({0, 0, 1}, {2, 1, 1}), Box({0, 0, 1}, {2, 2, 1})};
  for (double q : {1.0, 1.5, 2.0, 4.0})
    for (double p : {0.3, 0.5, 0.7}) {
      ExactMeasure mf = enumerate_measure(F, prcm(p, q, 2, 3, Bc::Free, Coefficients::Rational));
      ExactMeasure mw = enumerate_measure(W, prcm(p, q, 2, 3, Bc::Wired, Coefficients::Rational));
      for (const Box& r : rects) {
        const Chain g = loop_boundary_chain(r);
        const double vf = static_cast<double>(mf.probability([&](std::uint64_t m) { return null_homology_test(F, F.config_from_mask(m), g, 0); }));
        const double vw = static_cast<double>(mw.probability([&](std::uint64_t m) { return null_homology_test(W, W.config_from_mask(m), g, 0); }));
        worst_order = std::max(worst_order, vf - vw);
        c.require(vf <= vw + kExactTol, "free above wired on V q=" + fmt(q));
        ++orderings;
      }
      for (int k = 0; k <= F.state_count(); ++k) {
        auto at_least = [k](std::uint64_t m) { return __builtin_popcountll(m) >= k; };
        const double df = static_cast<double>(mf.probability(at_least) - mw.probability(at_least));
        worst_order = std::max(worst_order, df);
        c.require(df <= kExactTol, "free above wired on |P|");
        ++orderings;
      }
    }
  c.note("fkg_pairs=" + std::to_string(pairs) + " worst_fkg_gap=" + fmt(worst) + " orderings=" + std::to_string(orderings) +
         " worst_order_gap=" + fmt(worst_order));
  return c.result();
}

Outcome trends() {
  Checker c;
  SweepSpec spec;
  spec.estimator = "importance";
  spec.samples = kTrendSamples;
  spec.margin = kTrendMargin;
  spec.d = 3;
  std::ostringstream report;
  auto series = [&](double p, const std::vector<int>& sizes, std::vector<double>& per, std::vector<double>& ar) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      SweepRow row = run_sweep_point(spec, p, 1.0, Bc::Free, {sizes[k], sizes[k]}, derive_seed(31, "acceptance-trend", k + (p > 0.5 ? 100 : 0)));
      const double nl = row.est.neg_log();
      per.push_back(nl / static_cast<double>(row.per));
      ar.push_back(nl / static_cast<double>(row.area));
      report << " p=" << fmt(p) << ":" << sizes[k] << "x" << sizes[k] << ":" << row.method << ":p_hat=" << fmt(row.est.p_hat);
    }
  };
  std::vector<double> per_hi, area_hi, per_lo, area_lo;
  series(0.95, {4, 6, 8, 10}, per_hi, area_hi);
  series(0.30, {2, 3, 4}, per_lo, area_lo);
  const double flat_per = flatness(per_hi), drop = area_hi.front() / area_hi.back(), flat_area = flatness(area_lo);
  c.require(flat_per <= kPerFlat, "perimeter ratio spread " + fmt(flat_per));
  c.require(drop >= kAreaDrop, "area ratio drop " + fmt(drop));
  c.require(flat_area <= kAreaFlat, "area ratio spread " + fmt(flat_area));
  c.note("per_spread(p=0.95)=" + fmt(flat_per) + " area_drop(p=0.95)=" + fmt(drop) + " area_spread(p=0.30)=" + fmt(flat_area) + report.str());
  return c.result();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  Checker c;
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "plaquette_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  write_file((root / "sweep.ini").string(),
             "seed = 12345\nburn-in = 50\n[sweep]\nps = 0.4,0.6\nqs = 1,2,3\nbcs = free,wired\nloops = 1x1,2x1,2x2\n"
             "margin = 1\nsamples = 500\ngroup = determinism\n");
  const std::string base = std::string(PLAQUETTE_CLI_PATH) + " --config " + (root / "sweep.ini").string() + " sweep";
  const std::vector<std::pair<std::string, std::string>> runs{{"a", " --threads 1"}, {"b", " --threads 1"}, {"c", " --threads 4"}};
  for (const auto& [dir, extra] : runs) c.require(shell(base + extra + " --out " + (root / dir).string()) == 0, "run " + dir);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const std::string ref = read_file(entry.path().string());
    for (const char* other : {"b", "c"}) {
      const fs::path p = root / other / entry.path().filename();
      c.require(fs::exists(p) && read_file(p.string()) == ref, std::string("differs: ") + other + "/" + entry.path().filename().string());
    }
    ++files;
  }
  c.require(files >= 3, "expected sweep, plot and fit files");
  c.note("files=" + std::to_string(files) + " runs=3");
  fs::remove_all(root);
  return c.result();
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "coupling marginals", 10, coupling_marginals},
      {2, "Wilson loop / null-homology identity", 30, wilson_identity},
      {3, "anomaly example", 10, anomaly},
      {4, "codimension-one collapse", 120, codim_one},
      {5, "duality", 120, duality},
      {6, "linking criterion", 300, linking},
      {7, "sampler correctness", 600, samplers},
      {8, "FKG and boundary ordering", 120, fkg},
      {9, "area/perimeter trends", 3600, trends},
      {10, "sweep determinism", 600, determinism},
  };
  int failed = 0;
  for (const Criterion& cr : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string(" exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < cr.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << cr.id << " (" << cr.name << ") time=" << fmt(secs) << "s budget=" << cr.budget_s
              << "s" << (in_time ? "" : " [over budget]") << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
