#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <sys/wait.h>

#include "plaquette/io.hpp"

using namespace plaquette;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(PLAQUETTE_CLI_PATH) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("plaquette_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(HexBits, RoundTripAndLayout) {
  std::vector<std::uint8_t> bits{1, 0, 0, 0, 0, 1, 0, 1, 1};
  EXPECT_EQ(bits_to_hex(bits), "1a1");
  EXPECT_EQ(hex_to_bits("1a1", bits.size()), bits);
  EXPECT_EQ(hex_to_bits("1A1", bits.size()), bits);
  std::mt19937_64 rng(1);
  for (std::size_t n : {1u, 4u, 13u, 64u}) {
    std::vector<std::uint8_t> b(n);
    for (auto& x : b) x = rng() & 1;
    EXPECT_EQ(hex_to_bits(bits_to_hex(b), n), b);
  }
  EXPECT_THROW(hex_to_bits("1a", 9), std::invalid_argument);
  EXPECT_THROW(hex_to_bits("3", 1), std::invalid_argument);
  EXPECT_THROW(hex_to_bits("g", 4), std::invalid_argument);
}

TEST(Snapshot, ReloadGivesIdenticalQueries) {
  std::mt19937_64 rng(2);
  for (Bc bc : {Bc::Free, Bc::Wired}) {
    BoxComplex K(Box::from_extents({3, 3, 2}), 2, bc);
    ConfigSnapshot s;
    s.params.p = 0.4;
    s.params.q = 3;
    s.params.bc = bc;
    s.config = K.empty_config();
    for (int n : K.state_cells()) s.config.bits[n] = rng() & 1;
    s.seed = 77;
    s.sweep = 12;
    ConfigSnapshot t = read_snapshot(write_snapshot(s));
    EXPECT_EQ(t.config.bits, s.config.bits);
    EXPECT_EQ(t.config.box, s.config.box);
    EXPECT_EQ(t.seed, 77u);
    EXPECT_EQ(t.sweep, 12);
    EXPECT_EQ(t.params.bc, bc);
    BoxComplex K2(t.config.box, t.config.i, t.config.bc);
    const Box r({1, 1, 1}, {2, 2, 1});
    const Chain g = loop_boundary_chain(r);
    for (std::int64_t q : {0, 2, 3}) {
      EXPECT_EQ(null_homology_test(K2, t.config, g, q), null_homology_test(K, s.config, g, q));
      EXPECT_EQ(v_gamma_dual_test(K2, t.config, r, q), v_gamma_dual_test(K, s.config, r, q));
    }
    EXPECT_EQ(write_snapshot(t), write_snapshot(s));
  }
}

TEST(Trace, LineRoundTrip) {
  TraceRow r{5, 17, 3, 1};
  TraceRow s = parse_trace_line(trace_line(r));
  EXPECT_EQ(s.sweep, 5);
  EXPECT_EQ(s.size, 17);
  EXPECT_EQ(s.components, 3);
  EXPECT_EQ(s.v_gamma, 1);
  EXPECT_EQ(trace_line(r), R"({"components":3,"sweep":5,"v_gamma":1,"|P|":17})");
}

TEST(PlotData, GoldenSchema) {
  EXPECT_EQ(std::string(kSweepHeader), "p,q,d,bc,group,m1,m2,area,per,method,p_hat,ci_lo,ci_hi,n,seed");
  EXPECT_EQ(std::string(kPlotHeader), "label,area,per,p_hat,ci_lo,ci_hi,neg_log_p,over_area,over_per");
  EXPECT_EQ(plot_csv({}), std::string(kPlotHeader) + "\n");
  EXPECT_EQ(sweep_csv({}), std::string(kSweepHeader) + "\n");
  std::vector<DecayPoint> pts{{"2x2", 4, 8, 0.5, 0.4, 0.6}};
  EXPECT_EQ(plot_csv(pts), std::string(kPlotHeader) + "\n2x2,4,8,0.5,0.4,0.6,0.6931471806,0.1732867951,0.08664339757\n");
}

TEST(PlotData, RoundTripThroughFitReader) {
  std::vector<DecayPoint> pts;
  for (int m = 2; m <= 6; ++m) pts.push_back({std::to_string(m) + "x" + std::to_string(m), m * m * 1.0, 4.0 * m, std::exp(-0.3 * m * m), 0, 1});
  std::vector<DecayPoint> back = read_plot_csv(plot_csv(pts));
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t k = 0; k < pts.size(); ++k) {
    EXPECT_EQ(back[k].label, pts[k].label);
    EXPECT_EQ(back[k].area, pts[k].area);
    EXPECT_NEAR(back[k].p_hat, pts[k].p_hat, 1e-10 * pts[k].p_hat);
  }
  FitResult a = fit_decay(pts), b = fit_decay(back);
  EXPECT_EQ(a.law, b.law);
  EXPECT_NEAR(a.decay_constant, b.decay_constant, 1e-8);
  EXPECT_THROW(read_plot_csv("nope\n"), std::invalid_argument);
}

TEST(PlotData, OneTablePerGroup) {
  std::vector<SweepRow> rows(3);
  rows[0].q = 1;
  rows[1].q = 2;
  rows[2].q = 1;
  rows[2].bc = Bc::Wired;
  for (auto& r : rows) r.group = "g";
  auto tables = plot_tables(rows);
  EXPECT_EQ(tables.size(), 3u);
  EXPECT_TRUE(tables.count("q1_free_g"));
  EXPECT_TRUE(tables.count("q1_wired_g"));
  EXPECT_TRUE(tables.count("q2_free_g"));
}

TEST(Cli, VerifyDualitySuite) {
  CliResult r = cli("verify --suite duality --box 2,2,2 --q 3");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("overall PASS"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, VerifyOtherSuites) {
  EXPECT_EQ(cli("verify --suite linking --box 3,3,3 --trials 50").code, 0);
  EXPECT_EQ(cli("verify --suite coupling --q 4 --p 0.3").code, 0);
  EXPECT_EQ(cli("verify --suite homology --box 2,2,1 --q 2").code, 0);
}

TEST(Cli, Anomaly) {
  CliResult r = cli("anomaly --k 2 --q 2");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("V_gamma(Z)=false"), std::string::npos);
  EXPECT_NE(r.out.find("V_gamma(2)=true dual_test=true E[W|P]=1"), std::string::npos);
  r = cli("anomaly --k 2");
  EXPECT_NE(r.out.find("V_gamma(3)=false dual_test=false E[W|P]=0"), std::string::npos);
}

TEST(Cli, SampleAtFullOccupation) {
  CliResult r = cli("sample --p 1.0 --q 2 --box 2,2,2 --sweeps 5 --burn-in 0 --rect 0,0,1,1,1,1");
  ASSERT_EQ(r.code, 0);
  std::istringstream is(r.out);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    TraceRow t = parse_trace_line(line);
    EXPECT_EQ(t.size, 12);
    EXPECT_EQ(t.v_gamma, 1);
    ++rows;
  }
  EXPECT_EQ(rows, 5);
}

TEST(Cli, SampleWritesSnapshot) {
  fs::path dir = scratch("sample");
  ASSERT_EQ(cli("sample --sampler es --p 0.5 --q 3 --box 2,2,1 --sweeps 4 --seed 9 --out " + dir.string()).code, 0);
  ConfigSnapshot s = read_snapshot(read_file((dir / "snapshot.json").string()));
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(s.sweep, 104);
  EXPECT_EQ(s.params.q, 3.0);
  fs::remove_all(dir);
}

TEST(Cli, Enumerate) {
  CliResult r = cli("enumerate --box 1,1,1 --bc closed --q 2 --p 0.3");
  ASSERT_EQ(r.code, 0);
  nlohmann::json j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["states"], 64);
  EXPECT_LT(j["duality_discrepancy"].get<double>(), 1e-12);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("sample --bogus 1").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("verify --suite nope").code, 2);
  EXPECT_EQ(cli("sample --bc sideways").code, 2);
  EXPECT_EQ(cli("enumerate --box 2,2").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, SweepIsDeterministic) {
  fs::path a = scratch("sweep_a"), b = scratch("sweep_b");
  const std::string args = "sweep --ps 0.3,0.8 --qs 1,2 --loops 1x1,2x1,2x2 --margin 1 --samples 200 --seed 4 --burn-in 10";
  ASSERT_EQ(cli(args + " --threads 1 --out " + a.string()).code, 0);
  ASSERT_EQ(cli(args + " --threads 3 --out " + b.string()).code, 0);
  for (const auto& entry : fs::directory_iterator(a))
    EXPECT_EQ(read_file(entry.path().string()), read_file((b / entry.path().filename()).string())) << entry.path();
  EXPECT_TRUE(fs::exists(a / "plot_q1_free_default.csv"));
  EXPECT_TRUE(fs::exists(a / "fits.json"));
  // The persisted configuration reproduces the run.
  CliResult again = cli("--config " + (a / "run.ini").string() + " sweep");
  EXPECT_EQ(again.out, read_file((a / "sweep.csv").string()));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, EnvironmentOverridesConfigButNotFlags) {
  fs::path dir = scratch("env");
  write_file((dir / "c.ini").string(), "seed=3\n[sweep]\nsamples=50\nmargin=1\nloops=1x1\n");
  const std::string base = "--config " + (dir / "c.ini").string() + " sweep";
  const std::string s3 = cli(base).out;
  EXPECT_NE(s3.find(",50,"), std::string::npos);
  setenv("PLAQ_SEED", "8", 1);
  const std::string s8 = cli(base).out;
  const std::string flag = cli(base + " --seed 3").out;
  unsetenv("PLAQ_SEED");
  EXPECT_NE(s3, s8);
  EXPECT_EQ(s3, flag);
  fs::remove_all(dir);
}
