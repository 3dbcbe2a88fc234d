#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "experiments.hpp"
#include "lattice.hpp"
#include "prcm.hpp"

namespace plaquette {

/** \brief Bit 4k + b of the set is bit b of the k-th hex digit. */
inline std::string bits_to_hex(const std::vector<std::uint8_t>& bits) {
  static const char* digits = "0123456789abcdef";
  std::vector<int> nib((bits.size() + 3) / 4, 0);
  for (std::size_t n = 0; n < bits.size(); ++n)
    if (bits[n]) nib[n / 4] |= 1 << (n % 4);
  std::string s;
  for (int v : nib) s.push_back(digits[v]);
  return s;
}

inline std::vector<std::uint8_t> hex_to_bits(const std::string& hex, std::size_t n) {
  if (hex.size() != (n + 3) / 4) throw std::invalid_argument("hex bitset has the wrong length");
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t k = 0; k < hex.size(); ++k) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(hex[k])));
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else
      throw std::invalid_argument("bad hex digit");
    for (int b = 0; b < 4; ++b) {
      const std::size_t idx = 4 * k + b;
      if ((v >> b) & 1) {
        if (idx >= n) throw std::invalid_argument("hex bitset sets bits past the end");
        bits[idx] = 1;
      }
    }
  }
  return bits;
}

/** \brief A configuration with the parameters needed to reproduce it. */
struct ConfigSnapshot {
  PrcmParams params;
  PercolationConfig config;
  std::uint64_t seed = 0;
  long sweep = 0;
};

inline nlohmann::json box_json(const Box& b) { return {{"lows", b.lows}, {"highs", b.highs}}; }
inline Box box_from_json(const nlohmann::json& j) {
  return Box(j.at("lows").get<std::vector<int>>(), j.at("highs").get<std::vector<int>>());
}

inline std::string write_snapshot(const ConfigSnapshot& s) {
  nlohmann::json j;
  j["d"] = s.params.d;
  j["i"] = s.params.i;
  j["p"] = s.params.p;
  j["q"] = s.params.q;
  j["coefficients"] = s.params.coefficients == Coefficients::Zq ? "zq" : "rational";
  j["bc"] = to_string(s.config.bc);
  j["box"] = box_json(s.config.box);
  j["seed"] = s.seed;
  j["sweep"] = s.sweep;
  j["cells"] = s.config.bits.size();
  j["plaquettes"] = bits_to_hex(s.config.bits);
  return j.dump();
}

inline ConfigSnapshot read_snapshot(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ConfigSnapshot s;
  s.params.d = j.at("d");
  s.params.i = j.at("i");
  s.params.p = j.at("p");
  s.params.q = j.at("q");
  s.params.coefficients = j.at("coefficients") == "zq" ? Coefficients::Zq : Coefficients::Rational;
  s.params.bc = parse_bc(j.at("bc"));
  s.seed = j.at("seed");
  s.sweep = j.at("sweep");
  s.config.box = box_from_json(j.at("box"));
  s.config.i = s.params.i;
  s.config.bc = s.params.bc;
  s.config.bits = hex_to_bits(j.at("plaquettes"), j.at("cells").get<std::size_t>());
  return s;
}

inline std::string trace_line(const TraceRow& r) {
  nlohmann::json j;
  j["sweep"] = r.sweep;
  j["|P|"] = r.size;
  j["components"] = r.components;
  j["v_gamma"] = r.v_gamma;
  return j.dump();
}

inline TraceRow parse_trace_line(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  return TraceRow{j.at("sweep"), j.at("|P|"), j.at("components"), j.at("v_gamma")};
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

inline const char* kSweepHeader = "p,q,d,bc,group,m1,m2,area,per,method,p_hat,ci_lo,ci_hi,n,seed";

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << kSweepHeader << '\n';
  for (const SweepRow& r : rows)
    os << fmt(r.p) << ',' << fmt(r.q) << ',' << r.d << ',' << to_string(r.bc) << ',' << r.group << ',' << r.m1 << ','
       << r.m2 << ',' << r.area << ',' << r.per << ',' << r.method << ',' << fmt(r.est.p_hat) << ','
       << fmt(r.est.ci_lo) << ',' << fmt(r.est.ci_hi) << ',' << r.est.n << ',' << r.seed << '\n';
  return os.str();
}

inline const char* kPlotHeader = "label,area,per,p_hat,ci_lo,ci_hi,neg_log_p,over_area,over_per";

/** \brief One plot table (rows for a single q, bc and group). */
inline std::string plot_csv(const std::vector<DecayPoint>& pts) {
  std::ostringstream os;
  os << kPlotHeader << '\n';
  for (const DecayPoint& d : pts) {
    const double nl = d.p_hat > 0 ? -std::log(d.p_hat) : INFINITY;
    os << d.label << ',' << fmt(d.area) << ',' << fmt(d.per) << ',' << fmt(d.p_hat) << ',' << fmt(d.ci_lo) << ','
       << fmt(d.ci_hi) << ',' << fmt(nl) << ',' << fmt(nl / d.area) << ',' << fmt(nl / d.per) << '\n';
  }
  return os.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::vector<DecayPoint> read_plot_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kPlotHeader) throw std::invalid_argument("not a plot table");
  std::vector<DecayPoint> pts;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto f = split(line, ',');
    if (f.size() != 9) throw std::invalid_argument("plot row has the wrong number of fields");
    pts.push_back(DecayPoint{f[0], std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
  }
  return pts;
}

inline std::vector<DecayPoint> decay_points(const std::vector<SweepRow>& rows) {
  std::vector<DecayPoint> pts;
  for (const SweepRow& r : rows)
    pts.push_back(DecayPoint{std::to_string(r.m1) + "x" + std::to_string(r.m2), static_cast<double>(r.area),
                             static_cast<double>(r.per), r.est.p_hat, r.est.ci_lo, r.est.ci_hi});
  return pts;
}

/** \brief Plot tables keyed by "q<q>_<bc>_<group>", rows in sweep order. */
inline std::map<std::string, std::vector<DecayPoint>> plot_tables(const std::vector<SweepRow>& rows) {
  std::map<std::string, std::vector<SweepRow>> groups;
  for (const SweepRow& r : rows) groups["q" + fmt(r.q) + "_" + to_string(r.bc) + "_" + r.group].push_back(r);
  std::map<std::string, std::vector<DecayPoint>> out;
  for (const auto& [key, g] : groups) out[key] = decay_points(g);
  return out;
}

inline nlohmann::json fit_json(const FitResult& f) {
  nlohmann::json j;
  j["law"] = f.law;
  j["decay_constant"] = f.decay_constant;
  j["stderr"] = f.stderr_;
  j["area_slope"] = f.area_fit.slope;
  j["area_residual"] = f.area_fit.normalized_residual;
  j["per_slope"] = f.per_fit.slope;
  j["per_residual"] = f.per_fit.normalized_residual;
  j["per_area"] = f.per_area;
  j["per_per"] = f.per_per;
  return j;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace plaquette
