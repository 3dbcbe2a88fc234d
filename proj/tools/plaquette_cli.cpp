#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "plaquette/experiments.hpp"
#include "plaquette/io.hpp"
#include "plaquette/plgt.hpp"

using namespace plaquette;

namespace {

struct Common {
  double p = 0.5;
  double q = 2;
  double beta = -1;
  int d = 3;
  int i = -1;
  std::vector<int> box{2, 2, 2};
  std::string bc = "free";
  std::uint64_t seed = 1;
  long sweeps = 1000;
  long burn_in = 100;
  std::string out;
  std::vector<int> rect;
};

struct VerifyFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Output {
 public:
  explicit Output(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }
  void emit(const std::string& name, const std::string& text) const {
    if (dir_.empty())
      std::cout << text;
    else
      write_file((std::filesystem::path(dir_) / name).string(), text);
  }
  bool to_files() const { return !dir_.empty(); }

 private:
  std::string dir_;
};

Box make_box(const Common& c) {
  if (static_cast<int>(c.box.size()) != c.d) throw std::invalid_argument("--box needs d extents");
  return Box::from_extents(c.box);
}

int plaquette_dim(const Common& c) { return c.i < 0 ? c.d - 1 : c.i; }

double effective_p(const Common& c) { return c.beta >= 0 ? p_from_beta(c.beta) : c.p; }

PrcmParams prcm_params(const Common& c) {
  PrcmParams pp;
  pp.p = effective_p(c);
  pp.q = c.q;
  pp.d = c.d;
  pp.i = plaquette_dim(c);
  pp.bc = parse_bc(c.bc);
  pp.coefficients = c.q == std::floor(c.q) ? Coefficients::Zq : Coefficients::Rational;
  pp.validate();
  return pp;
}

std::optional<Box> spanning_rect(const Common& c) {
  if (c.rect.empty()) return std::nullopt;
  if (static_cast<int>(c.rect.size()) != 2 * c.d) throw std::invalid_argument("--rect needs 2d coordinates");
  return Box(std::vector<int>(c.rect.begin(), c.rect.begin() + c.d), std::vector<int>(c.rect.begin() + c.d, c.rect.end()));
}

// A centred (d-1)-box with one degenerate axis, used when no rectangle is given.
Box default_rect(const Box& box) {
  const int d = box.dim();
  std::vector<int> lo(d), hi(d);
  for (int j = 0; j < d - 1; ++j) {
    const int pad = box.extent(j) >= 3 ? 1 : 0;
    lo[j] = box.lows[j] + pad;
    hi[j] = box.highs[j] - pad;
  }
  lo[d - 1] = hi[d - 1] = box.lows[d - 1] + box.extent(d - 1) / 2;
  return Box(lo, hi);
}

std::vector<std::pair<int, int>> parse_loops(const std::vector<std::string>& specs) {
  std::vector<std::pair<int, int>> loops;
  for (const std::string& s : specs) {
    const auto x = s.find('x');
    if (x == std::string::npos) throw std::invalid_argument("loop sizes look like 4x4: " + s);
    loops.emplace_back(std::stoi(s.substr(0, x)), std::stoi(s.substr(x + 1)));
  }
  return loops;
}

std::string verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

// ---------------------------------------------------------------------------

int run_enumerate(const Common& c) {
  const PrcmParams pp = prcm_params(c);
  BoxComplex K(make_box(c), pp.i, pp.bc);
  ExactMeasure mu = enumerate_measure(K, pp);
  nlohmann::json j;
  j["box"] = box_json(K.box());
  j["bc"] = to_string(K.bc());
  j["d"] = pp.d;
  j["i"] = pp.i;
  j["p"] = pp.p;
  j["q"] = pp.q;
  j["states"] = mu.masks.size();
  j["log_partition"] = static_cast<double>(std::log(mu.partition));
  double mean = 0;
  for (std::size_t n = 0; n < mu.masks.size(); ++n)
    mean += static_cast<double>(mu.prob[n]) * __builtin_popcountll(mu.masks[n]);
  j["mean_size"] = mean;
  if (pp.i == pp.d - 1) j["duality_discrepancy"] = duality_discrepancy(K, pp);
  if (auto r = spanning_rect(c)) {
    const Chain gamma = loop_boundary_chain(*r);
    const std::int64_t m = v_modulus(pp.q);
    j["rect"] = box_json(*r);
    j["v_gamma"] = static_cast<double>(
        mu.probability([&](std::uint64_t mask) { return null_homology_test(K, K.config_from_mask(mask), gamma, m); }));
  }
  Output(c.out).emit("enumerate.json", j.dump(2) + "\n");
  return 0;
}

int run_sample(const Common& c, const std::string& sampler) {
  const PrcmParams pp = prcm_params(c);
  BoxComplex K(make_box(c), pp.i, pp.bc);
  std::function<int(const PercolationConfig&)> observe;
  std::optional<LinkingOracle> oracle;
  if (auto r = spanning_rect(c)) {
    oracle.emplace(K, *r);
    const std::int64_t m = v_modulus(pp.q);
    observe = [&, m](const PercolationConfig& P) { return oracle->v_gamma(dual_open_edges(K, P), m) ? 1 : 0; };
  }
  SampleRun run = sample(K, pp, parse_sampler(sampler), c.sweeps, c.burn_in, c.seed, observe);
  std::ostringstream trace;
  for (const TraceRow& row : run.trace) trace << trace_line(row) << '\n';
  Output out(c.out);
  out.emit("trace.jsonl", trace.str());
  ConfigSnapshot snap{pp, run.final_config, c.seed, c.burn_in + c.sweeps};
  if (out.to_files()) out.emit("snapshot.json", write_snapshot(snap) + "\n");
  return 0;
}

struct Report {
  std::ostringstream text;
  bool ok = true;
  void line(const std::string& s, bool pass) {
    text << s << ' ' << verdict(pass) << '\n';
    ok = ok && pass;
  }
};

void verify_duality(const Common& c, Report& rep) {
  for (Bc bc : {Bc::Free, Bc::Wired})
    for (double p : {0.3, 0.7}) {
      Common cc = c;
      cc.p = p;
      cc.beta = -1;
      cc.i = c.d - 1;
      cc.bc = to_string(bc);
      const PrcmParams pp = prcm_params(cc);
      BoxComplex K(make_box(cc), pp.i, bc);
      const double err = duality_discrepancy(K, pp);
      rep.line("duality bc=" + to_string(bc) + " p=" + fmt(p) + " q=" + fmt(c.q) + " max_err=" + fmt(err), err <= 1e-12);
    }
}

void verify_homology(const Common& c, Report& rep) {
  const auto q = static_cast<std::int64_t>(std::llround(c.q));
  if (q < 2 || c.q != std::floor(c.q)) throw std::invalid_argument("homology suite needs integer q >= 2");
  for (Bc bc : {Bc::Free, Bc::Wired}) {
    BoxComplex K(make_box(c), c.d - 1, bc);
    long bad = 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << K.state_count()); ++mask) {
      const PercolationConfig P = K.config_from_mask(mask);
      const int b = homology_summary(K, P, c.d - 2, 0).betti;
      if (cohomology_order(K, P, c.d - 2, q) != boost::multiprecision::pow(BigInt(q), static_cast<unsigned>(b))) ++bad;
    }
    rep.line("homology bc=" + to_string(bc) + " q=" + std::to_string(q) + " mismatches=" + std::to_string(bad), bad == 0);
    Common cc = c;
    cc.i = c.d - 1;
    cc.bc = to_string(bc);
    PrcmParams zq = prcm_params(cc), qq = zq;
    qq.coefficients = Coefficients::Rational;
    ExactMeasure a = enumerate_measure(K, zq), b = enumerate_measure(K, qq);
    double err = 0;
    for (std::size_t n = 0; n < a.prob.size(); ++n) err = std::max(err, static_cast<double>(std::fabs(a.prob[n] - b.prob[n])));
    rep.line("codim1-measures bc=" + to_string(bc) + " max_err=" + fmt(err), err <= 1e-12);
  }
}

void verify_linking(const Common& c, Report& rep, long trials) {
  const Bc bc = parse_bc(c.bc);
  BoxComplex K(make_box(c), c.d - 1, bc);
  const Box r = spanning_rect(c).value_or(default_rect(K.box()));
  const Chain gamma = loop_boundary_chain(r);
  LinkingOracle oracle(K, r);
  Rng rng(derive_seed(c.seed, "verify-linking"));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long bad = 0;
  for (long t = 0; t < trials; ++t) {
    PercolationConfig P = K.empty_config();
    for (int n : K.state_cells()) P.bits[n] = u(rng) < c.p ? 1 : 0;
    const auto open = dual_open_edges(K, P);
    for (std::int64_t q : {0, 2, 3, 4, 6})
      if (oracle.v_gamma(open, q) != null_homology_test(K, P, gamma, q)) ++bad;
  }
  rep.line("linking bc=" + to_string(bc) + " trials=" + std::to_string(trials) + " disagreements=" + std::to_string(bad),
           bad == 0);
}

void verify_coupling(const Common& c, Report& rep) {
  const auto q = static_cast<std::int64_t>(std::llround(c.q));
  BoxComplex K(Box::from_extents({1, 1, 1}), 2, Bc::Closed);
  const double beta = c.beta >= 0 ? c.beta : -std::log(1 - c.p);
  PlgtParams params{beta, q, std::nullopt};
  CouplingMarginals m = coupling_exact(K, params);
  GibbsDistribution G = gibbs_exact(K, params);
  PrcmParams pp;
  pp.p = p_from_beta(beta);
  pp.q = static_cast<double>(q);
  pp.bc = Bc::Closed;
  ExactMeasure mu = enumerate_measure(K, pp);
  double err = 0;
  for (std::size_t k = 0; k < G.prob.size(); ++k) err = std::max(err, static_cast<double>(std::fabs(m.spin[k] - G.prob[k])));
  for (std::size_t k = 0; k < mu.prob.size(); ++k) err = std::max(err, static_cast<double>(std::fabs(m.bonds[k] - mu.prob[k])));
  rep.line("coupling q=" + std::to_string(q) + " max_err=" + fmt(err), err <= 1e-12);
  const Chain gamma = boundary_of_cell(primal_cell({0, 0, 0}, 0b011));
  ComparisonResult cmp = comparison_identity_check(K, params, gamma);
  const double gap = std::abs(cmp.wilson - std::complex<double>(cmp.v_gamma, 0));
  rep.line("comparison q=" + std::to_string(q) + " gap=" + fmt(gap), gap <= 1e-12);
}

int run_verify(const Common& c, const std::string& suite, long trials) {
  Report rep;
  const bool all = suite == "all";
  bool known = all;
  if (all || suite == "duality") verify_duality(c, rep), known = true;
  if (all || suite == "homology") verify_homology(c, rep), known = true;
  if (all || suite == "linking") verify_linking(c, rep, trials), known = true;
  if (all || suite == "coupling") verify_coupling(c, rep), known = true;
  if (!known) throw std::invalid_argument("unknown suite: " + suite);
  rep.text << "overall " << verdict(rep.ok) << '\n';
  Output(c.out).emit("verify.txt", rep.text.str());
  if (!rep.ok) throw VerifyFailure("verification failed");
  return 0;
}

struct SweepArgs {
  std::vector<double> ps{0.5};
  std::vector<double> qs{1.0};
  std::vector<std::string> bcs{"free"};
  std::vector<std::string> loops{"2x2"};
  int margin = 2;
  long samples = 1000;
  std::string estimator = "direct";
  std::string group = "default";
  int threads = 0;
};

int run_sweep_command(const Common& c, const SweepArgs& a, const std::string& config_text) {
  SweepSpec spec;
  spec.ps = a.ps;
  spec.qs = a.qs;
  spec.bcs.clear();
  for (const auto& b : a.bcs) spec.bcs.push_back(parse_bc(b));
  spec.loops = parse_loops(a.loops);
  spec.d = c.d;
  spec.margin = a.margin;
  spec.samples = a.samples;
  spec.burn_in = c.burn_in;
  spec.seed = c.seed;
  spec.estimator = a.estimator;
  spec.group = a.group;
  spec.threads = a.threads;
  const std::vector<SweepRow> rows = run_sweep(spec);
  Output out(c.out);
  out.emit("sweep.csv", sweep_csv(rows));
  if (!out.to_files()) return 0;
  out.emit("run.ini", config_text);
  nlohmann::json fits = nlohmann::json::object();
  for (const auto& [key, pts] : plot_tables(rows)) {
    out.emit("plot_" + key + ".csv", plot_csv(pts));
    try {
      fits[key] = fit_json(fit_decay(pts));
    } catch (const std::invalid_argument& e) {
      fits[key] = {{"error", e.what()}};
    }
  }
  out.emit("fits.json", fits.dump(2) + "\n");
  return 0;
}

int run_tension(const Common& c, const std::vector<double>& ps, int N, long samples) {
  std::ostringstream os;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    TensionEstimate t = surface_tension_estimate(ps[k], c.q, c.d, N, samples, derive_seed(c.seed, "tension", k), c.burn_in);
    nlohmann::json j;
    j["ps"] = ps[k];
    j["q"] = c.q;
    j["d"] = c.d;
    j["N"] = N;
    j["normalization"] = std::pow(2.0 * N, c.d - 1);
    j["crossing"] = t.crossing.p_hat;
    j["separation"] = t.separation.p_hat;
    j["separation_ci"] = {t.separation.ci_lo, t.separation.ci_hi};
    j["upper_bound_only"] = t.separation.upper_bound_only;
    j["tau_hat"] = std::isfinite(t.tau_hat) ? nlohmann::json(t.tau_hat) : nlohmann::json("inf");
    j["n"] = samples;
    os << j.dump() << '\n';
  }
  Output(c.out).emit("tension.jsonl", os.str());
  return 0;
}

int run_anomaly(const Common& c, int k, const std::vector<int>& qs) {
  AnomalyExample ex = anomaly_example(k);
  BoxComplex K(ex.box, 2, Bc::Closed);
  std::ostringstream os;
  os << "k=" << k << " box=" << ex.box.str() << " rect=" << ex.r.str() << " tube_cubes=" << ex.tube.size() << '\n';
  DualGraph G(K);
  LinkingOracle L(K, ex.r);
  os << "core_link=" << L.linking_number(anomaly_core_loop(K, G, ex)) << '\n';
  auto tf = [](bool b) { return b ? "true" : "false"; };
  os << "V_gamma(Z)=" << tf(null_homology_test(K, ex.config, ex.gamma, 0)) << '\n';
  for (int q : qs) {
    const bool v = null_homology_test(K, ex.config, ex.gamma, q);
    const bool dual = v_gamma_dual_test(K, ex.config, ex.r, q);
    os << "V_gamma(" << q << ")=" << tf(v) << " dual_test=" << tf(dual) << " E[W|P]=" << fmt(conditional_wilson(K, ex.config, ex.gamma, q))
       << '\n';
  }
  Output(c.out).emit("anomaly.txt", os.str());
  return 0;
}

std::string env_name(const std::string& flag) {
  std::string s = "PLAQ_";
  for (char ch : flag) s.push_back(ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  return s;
}

// PLAQ_<FLAG> variables become flags unless the flag is given explicitly, so they outrank the config file.
std::vector<std::string> with_env(int argc, char** argv, const std::vector<std::string>& flags) {
  std::vector<std::string> args(argv + 1, argv + argc);
  for (const std::string& f : flags) {
    const char* v = std::getenv(env_name(f).c_str());
    if (!v) continue;
    bool given = false;
    for (const std::string& a : args) given = given || a == "--" + f || a.rfind("--" + f + "=", 0) == 0;
    if (!given) args.push_back("--" + f + "=" + v);
  }
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plaquette random-cluster models, lattice gauge theory and Wilson loop experiments"};
  app.set_config("--config", "", "INI file with [section] per subcommand; flags override it");
  app.require_subcommand(1);
  Common c;
  std::vector<std::string> env_flags{"out"};
  auto common = [&](const std::string& name, auto& var, const std::string& help) {
    env_flags.push_back(name);
    return app.add_option("--" + name, var, help);
  };
  common("p", c.p, "plaquette probability")->check(CLI::Range(0.0, 1.0));
  common("q", c.q, "cluster weight / number of spin states")->check(CLI::PositiveNumber);
  common("beta", c.beta, "inverse temperature; overrides --p through p = 1 - exp(-beta)");
  common("d", c.d, "dimension")->check(CLI::Range(2, 6));
  common("i", c.i, "plaquette dimension (default d - 1)");
  common("box", c.box, "box extents a,b,c")->delimiter(',');
  common("bc", c.bc, "free, wired or closed")->check(CLI::IsMember({"free", "wired", "closed"}));
  common("seed", c.seed, "master seed");
  common("sweeps", c.sweeps, "kept sweeps")->check(CLI::NonNegativeNumber);
  common("burn-in", c.burn_in, "discarded sweeps")->check(CLI::NonNegativeNumber);
  common("rect", c.rect, "spanning rectangle lo...,hi... with one degenerate axis")->delimiter(',');
  app.add_option("--out", c.out, "output directory (stdout when absent)")->configurable(false);

  auto* enumerate = app.add_subcommand("enumerate", "exact measure and identities on a tiny box");
  auto* sample_cmd = app.add_subcommand("sample", "Monte Carlo trace");
  std::string sampler = "dual";
  sample_cmd->add_option("--sampler", sampler, "dual, es or direct")->check(CLI::IsMember({"dual", "es", "direct"}));
  auto* verify = app.add_subcommand("verify", "oracle-equivalence suites; exit 1 on failure");
  std::string suite = "all";
  long trials = 500;
  verify->add_option("--suite", suite, "duality, homology, linking, coupling or all");
  verify->add_option("--trials", trials, "random configurations for the linking suite");
  auto* sweep = app.add_subcommand("sweep", "V_gamma estimates over a parameter grid");
  SweepArgs sa;
  sweep->add_option("--ps", sa.ps, "plaquette probabilities")->delimiter(',');
  sweep->add_option("--qs", sa.qs, "cluster weights")->delimiter(',');
  sweep->add_option("--bcs", sa.bcs, "boundary conditions")->delimiter(',');
  sweep->add_option("--loops", sa.loops, "rectangle sizes such as 4x4,6x6")->delimiter(',');
  sweep->add_option("--margin", sa.margin, "box margin around each rectangle");
  sweep->add_option("--samples", sa.samples, "samples per grid point");
  sweep->add_option("--estimator", sa.estimator, "direct or importance")->check(CLI::IsMember({"direct", "importance"}));
  sweep->add_option("--group", sa.group, "label stored with every row");
  sweep->add_option("--threads", sa.threads, "worker threads (0 = hardware)")->configurable(false);
  auto* tension = app.add_subcommand("tension", "surface tension of the dual random-cluster model");
  std::vector<double> ps{0.5};
  int N = 2;
  long tension_samples = 1000;
  tension->add_option("--ps", ps, "dual edge parameters")->delimiter(',');
  tension->add_option("--N", N, "half width of the box");
  tension->add_option("--samples", tension_samples, "samples per parameter");
  auto* anomaly = app.add_subcommand("anomaly", "tube example where gamma bounds mod k but not over Z");
  int k = 2;
  std::vector<int> anomaly_qs;
  anomaly->add_option("--k", k, "winding number")->check(CLI::PositiveNumber);
  anomaly->add_option("--qs", anomaly_qs, "moduli to report")->delimiter(',');
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    std::vector<std::string> args = with_env(argc, argv, env_flags);
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*enumerate) return run_enumerate(c);
    if (*sample_cmd) return run_sample(c, sampler);
    if (*verify) return run_verify(c, suite, trials);
    if (*sweep) return run_sweep_command(c, sa, app.config_to_str(false, true));
    if (*tension) return run_tension(c, ps, N, tension_samples);
    if (*anomaly) {
      if (anomaly_qs.empty())
        anomaly_qs = app.count("--q") ? std::vector<int>{static_cast<int>(std::llround(c.q))} : std::vector<int>{2, 3};
      return run_anomaly(c, k, anomaly_qs);
    }
  } catch (const VerifyFailure& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
