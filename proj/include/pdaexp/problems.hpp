#pragma once

// Semidiscrete benchmark problems.
//
//   dynbc   heat equation on the unit square with a dynamic boundary condition
//           on the bottom edge, Q1 elements; the trace coupling u|_Gamma = p is
//           the constraint.
//   nonsym  coupled 1D system with non-symmetric operator -[d_xx, d_xx; -id, d_xx]
//           and the coupling u(t, 1) - v(t, 1) = e^{2t} - 1, P1 elements.
//   toy     small random system with a manufactured exact solution.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pdaexp/error.hpp"
#include "pdaexp/fem.hpp"
#include "pdaexp/integrators.hpp"
#include "pdaexp/linalg.hpp"

namespace pdaexp {

struct Problem {
  std::string name;
  std::string config_key;  ///< canonical parameter string (reference cache key)
  std::shared_ptr<const ConstrainedSystem> system;
  Vector u0;
  double t0 = 0.0;
  double t_end = 1.0;
  Index mesh = 0;                             ///< N with h = 1/N (0 for toy)
  std::function<Vector(double)> exact;        ///< empty unless known
};

struct DynBcConfig {
  Index n = 32;
  double kappa = 0.02;
  double alpha = 1.0;
  double t_end = 0.7;
};

struct NonSymConfig {
  Index n = 32;
  Index k_trunc = 1000;
  double t_end = 1.0;
};

struct ToyConfig {
  Index n = 40;
  Index m = 3;
  std::uint64_t seed = 1;
  bool symmetric = true;
  double nonlinearity = 0.1;  ///< gamma in f = ... + gamma M (x*^3 - x^3)
  double stiffness = 10.0;    ///< largest eigenvalue of the symmetric part of A
  double t_end = 1.0;
};

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Nodal cube followed by consistent mass weighting.
inline Vector cube(const Vector& v) { return v.array().cube().matrix(); }

}  // namespace detail

/// Unknown layout: u at nodes (i, j), i = 1..N-1, j = 0..N-1 (index j (N-1) + i - 1),
/// then p at the bottom-edge nodes i = 1..N-1.
inline Problem build_dynbc(const DynBcConfig& cfg) {
  if (cfg.n < 4) throw Error(ErrorCode::InvalidConfig, "dynbc: N must be at least 4");
  if (!(cfg.kappa > 0.0) || !(cfg.alpha >= 0.0)) throw Error(ErrorCode::InvalidConfig, "dynbc: kappa > 0, alpha >= 0");
  const Index n = cfg.n;
  const Index nu = (n - 1) * n;
  const Index np = n - 1;
  const double h = 1.0 / static_cast<double>(n);
  auto index = [n](Index i, Index j) -> Index {
    if (i <= 0 || i >= n || j >= n) return -1;
    return j * (n - 1) + (i - 1);
  };
  const auto omega = fem::q1_square(n, nu, index);
  const SparseMatrix m_gamma = fem::p1_interior_mass(n);

  const SparseMatrix mass = block_diag(omega.mass, m_gamma);
  const SparseMatrix a = block_diag(SparseMatrix(cfg.kappa * omega.stiffness), SparseMatrix(cfg.alpha * m_gamma));
  std::vector<Triplet> bt;
  for (Index k = 0; k < np; ++k) {
    bt.emplace_back(k, index(k + 1, 0), 1.0);
    bt.emplace_back(k, nu + k, -1.0);
  }
  const SparseMatrix b = sparse_from_triplets(np, nu + np, bt);
  const SparseMatrix norm_k = block_diag(omega.stiffness, SparseMatrix(np, np));

  Vector sin2pix(np);
  for (Index k = 0; k < np; ++k) sin2pix(k) = std::sin(2.0 * std::numbers::pi * static_cast<double>(k + 1) * h);
  auto f = [nu, np, m_gamma, sin2pix](double t, const Vector& x) {
    const Vector p = x.tail(np);
    const Vector fg = (3.0 * std::cos(2.0 * std::numbers::pi * t) - sin2pix.array() - p.array().cube()).matrix();
    Vector out = Vector::Zero(nu + np);
    out.tail(np) = m_gamma * fg;
    return out;
  };
  auto zero_g = [np](double) { return Vector(Vector::Zero(np)); };

  Problem prob;
  prob.name = "dynbc";
  prob.config_key = "dynbc;N=" + std::to_string(n) + ";kappa=" + detail::fmt_double(cfg.kappa) +
                    ";alpha=" + detail::fmt_double(cfg.alpha);
  prob.system = std::make_shared<const ConstrainedSystem>(mass, a, b, f, zero_g, zero_g, norm_k);
  prob.t_end = cfg.t_end;
  prob.mesh = n;
  prob.u0 = Vector::Zero(nu + np);
  for (Index j = 0; j < n; ++j)
    for (Index i = 1; i < n; ++i) {
      const double x = static_cast<double>(i) * h, y = static_cast<double>(j) * h;
      prob.u0(index(i, j)) = std::sin(std::numbers::pi * x) * std::cos(2.5 * std::numbers::pi * y);
    }
  for (Index k = 0; k < np; ++k) prob.u0(nu + k) = prob.u0(index(k + 1, 0));
  return prob;
}

/// sum_{k <= K} sin(k pi x) / k^1.55 at the nodes x_i = i/N, i = 1..N.
inline Vector nonsym_initial(Index n, Index k_trunc) {
  Vector u(n);
  for (Index i = 1; i <= n; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(n);
    double s = 0.0;
    if (i < n)
      for (Index k = 1; k <= k_trunc; ++k)
        s += std::sin(static_cast<double>(k) * std::numbers::pi * x) / std::pow(static_cast<double>(k), 1.55);
    u(i - 1) = s;  // every term vanishes at x = 1
  }
  return u;
}

/// Unknown layout: u at x_i = i/N, i = 1..N, then v at the same nodes.
inline Problem build_nonsym(const NonSymConfig& cfg) {
  if (cfg.n < 4) throw Error(ErrorCode::InvalidConfig, "nonsym: N must be at least 4");
  if (cfg.k_trunc < 100) throw Error(ErrorCode::InvalidConfig, "nonsym: series truncation must be at least 100");
  const Index n = cfg.n;
  const auto p1 = fem::p1_left_dirichlet(n);
  const SparseMatrix& m1 = p1.mass;
  const SparseMatrix& k1 = p1.stiffness;

  std::vector<Triplet> at;
  append_block(at, k1, 0, 0);
  append_block(at, k1, 0, n);
  append_block(at, m1, n, 0);
  append_block(at, k1, n, n);
  const SparseMatrix a = sparse_from_triplets(2 * n, 2 * n, at);
  const SparseMatrix mass = block_diag(m1, m1);
  const SparseMatrix b = sparse_from_triplets(1, 2 * n, {Triplet(0, n - 1, 1.0), Triplet(0, 2 * n - 1, -1.0)});

  auto f = [n, m1](double, const Vector& x) {
    Vector out(2 * n);
    out.head(n) = -(m1 * detail::cube(x.head(n)));
    out.tail(n) = -(m1 * detail::cube(x.tail(n)));
    return out;
  };
  auto g = [](double t) { return Vector(Vector::Constant(1, std::expm1(2.0 * t))); };
  auto gdot = [](double t) { return Vector(Vector::Constant(1, 2.0 * std::exp(2.0 * t))); };

  Problem prob;
  prob.name = "nonsym";
  prob.config_key = "nonsym;N=" + std::to_string(n) + ";K=" + std::to_string(cfg.k_trunc);
  prob.system = std::make_shared<const ConstrainedSystem>(mass, a, b, f, g, gdot, block_diag(k1, k1));
  prob.t_end = cfg.t_end;
  prob.mesh = n;
  const Vector u0 = nonsym_initial(n, cfg.k_trunc);
  prob.u0.resize(2 * n);
  prob.u0 << u0, u0;
  return prob;
}

/// Random M (SPD), A (SPD plus an optional skew part), B (full rank) and the
/// manufactured solution x*(t) = a + t b + t^2 c + e^{-t} d with multiplier
/// lambda*(t) = l0 + t l1; f is defined by substitution.
inline Problem build_toy(const ToyConfig& cfg) {
  if (!(cfg.m >= 0 && cfg.m < cfg.n && cfg.n <= 200)) throw Error(ErrorCode::InvalidConfig, "toy: need 0 <= m < n <= 200");
  if (!(cfg.stiffness >= 1.0)) throw Error(ErrorCode::InvalidConfig, "toy: stiffness must be at least 1");
  const Index n = cfg.n, m = cfg.m;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto gaussian = [&](Index r, Index c) {
    DenseMatrix out(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) out(i, j) = normal(rng);
    return out;
  };
  auto orthogonal = [&] { return DenseMatrix(gaussian(n, n).householderQr().householderQ()); };

  const DenseMatrix q1 = orthogonal();
  Vector dm(n);
  for (Index i = 0; i < n; ++i) dm(i) = 0.5 + 1.5 * uniform(rng);
  const DenseMatrix md = q1 * dm.asDiagonal() * q1.transpose();

  const DenseMatrix q2 = orthogonal();
  Vector da(n);
  for (Index i = 0; i < n; ++i) da(i) = std::pow(cfg.stiffness, static_cast<double>(i) / static_cast<double>(n - 1));
  DenseMatrix ad = q2 * da.asDiagonal() * q2.transpose();
  if (!cfg.symmetric) {
    const DenseMatrix k = gaussian(n, n);
    ad += 0.5 * (k - k.transpose());
  }
  const DenseMatrix bd = gaussian(m, n);

  const SparseMatrix mass = symmetric_part(SparseMatrix(md.sparseView()));
  const SparseMatrix a = cfg.symmetric ? symmetric_part(SparseMatrix(ad.sparseView())) : SparseMatrix(ad.sparseView());
  const SparseMatrix b = bd.sparseView();

  const Vector ca = gaussian(n, 1), cb = gaussian(n, 1), cc = gaussian(n, 1), cd = gaussian(n, 1);
  const Vector l0 = gaussian(m, 1), l1 = gaussian(m, 1);
  auto xs = [=](double t) { return Vector(ca + t * cb + t * t * cc + std::exp(-t) * cd); };
  auto xs_dot = [=](double t) { return Vector(cb + 2.0 * t * cc - std::exp(-t) * cd); };
  const double gamma = cfg.nonlinearity;
  auto f = [=](double t, const Vector& x) {
    const Vector xt = xs(t);
    Vector out = mass * xs_dot(t) + a * xt;
    if (m > 0) out += b.transpose() * Vector(l0 + t * l1);
    if (gamma != 0.0) out += gamma * (mass * Vector(detail::cube(xt) - detail::cube(x)));
    return out;
  };
  auto g = [=](double t) { return Vector(b * xs(t)); };
  auto gdot = [=](double t) { return Vector(b * xs_dot(t)); };

  Problem prob;
  prob.name = "toy";
  prob.config_key = "toy;n=" + std::to_string(n) + ";m=" + std::to_string(m) + ";seed=" + std::to_string(cfg.seed) +
                    ";symmetric=" + (cfg.symmetric ? "1" : "0") + ";gamma=" + detail::fmt_double(gamma) +
                    ";stiffness=" + detail::fmt_double(cfg.stiffness);
  prob.system = std::make_shared<const ConstrainedSystem>(mass, a, b, f, g, gdot);
  prob.t_end = cfg.t_end;
  prob.u0 = xs(0.0);
  prob.exact = xs;
  return prob;
}

// ---------------------------------------------------------------------------
// Plain key=value configuration and the name registry.

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; blank lines and lines starting with '#' are ignored.
inline KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path);
  return parse_key_values(in);
}

inline double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw Error(ErrorCode::InvalidConfig, key + ": not a number: '" + text + "'");
  return v;
}

inline long long parse_integer(const std::string& key, const std::string& text) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error(ErrorCode::InvalidConfig, key + ": not an integer: '" + text + "'");
  return v;
}

/// Mesh width given as "1/N" or as a decimal whose reciprocal is an integer.
inline Index parse_mesh(const std::string& text) {
  if (text.rfind("1/", 0) == 0) {
    const long long n = parse_integer("h", text.substr(2));
    if (n < 1) throw Error(ErrorCode::InvalidConfig, "h: N must be positive");
    return static_cast<Index>(n);
  }
  const double h = parse_real("h", text);
  if (!(h > 0.0 && h <= 1.0)) throw Error(ErrorCode::InvalidConfig, "h must lie in (0, 1]");
  const double n = std::round(1.0 / h);
  if (std::abs(n * h - 1.0) > 1e-9) throw Error(ErrorCode::InvalidConfig, "h must be 1/N for an integer N");
  return static_cast<Index>(n);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "no") return false;
  throw Error(ErrorCode::InvalidConfig, key + ": expected a boolean");
}

struct ProblemInfo {
  std::string_view name;
  std::string_view summary;
  std::string_view parameters;
};

inline const std::vector<ProblemInfo>& problem_registry() {
  static const std::vector<ProblemInfo> reg = {
      {"dynbc", "heat equation with dynamic boundary condition on (0,1)^2, Q1, T = 0.7",
       "h (1/N, default 1/32), kappa (0.02), alpha (1), t_end"},
      {"nonsym", "non-symmetric coupled 1D system, u(1) - v(1) = e^{2t} - 1, P1, T = 1",
       "h (1/N, default 1/32), k_trunc (1000), t_end"},
      {"toy", "random index-2 system with manufactured solution, T = 1",
       "n (40), m (3), seed (1), symmetric (1), nonlinearity (0.1), stiffness (10), t_end"},
  };
  return reg;
}

/// Builds a registered problem from key=value parameters; unknown keys are rejected.
inline Problem make_problem(const std::string& name, const KeyValues& params = {}) {
  auto take = [&](std::initializer_list<std::string_view> allowed) {
    for (const auto& [k, v] : params) {
      bool ok = false;
      for (auto a : allowed) ok = ok || k == a;
      if (!ok) throw Error(ErrorCode::InvalidConfig, "problem " + name + ": unknown parameter '" + k + "'");
    }
  };
  auto get = [&](const char* key) -> const std::string* {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
  };
  if (name == "dynbc") {
    take({"h", "kappa", "alpha", "t_end"});
    DynBcConfig c;
    if (auto* v = get("h")) c.n = parse_mesh(*v);
    if (auto* v = get("kappa")) c.kappa = parse_real("kappa", *v);
    if (auto* v = get("alpha")) c.alpha = parse_real("alpha", *v);
    if (auto* v = get("t_end")) c.t_end = parse_real("t_end", *v);
    return build_dynbc(c);
  }
  if (name == "nonsym") {
    take({"h", "k_trunc", "t_end"});
    NonSymConfig c;
    if (auto* v = get("h")) c.n = parse_mesh(*v);
    if (auto* v = get("k_trunc")) c.k_trunc = static_cast<Index>(parse_integer("k_trunc", *v));
    if (auto* v = get("t_end")) c.t_end = parse_real("t_end", *v);
    return build_nonsym(c);
  }
  if (name == "toy") {
    take({"n", "m", "seed", "symmetric", "nonlinearity", "stiffness", "t_end"});
    ToyConfig c;
    if (auto* v = get("n")) c.n = static_cast<Index>(parse_integer("n", *v));
    if (auto* v = get("m")) c.m = static_cast<Index>(parse_integer("m", *v));
    if (auto* v = get("seed")) c.seed = static_cast<std::uint64_t>(parse_integer("seed", *v));
    if (auto* v = get("symmetric")) c.symmetric = parse_bool("symmetric", *v);
    if (auto* v = get("nonlinearity")) c.nonlinearity = parse_real("nonlinearity", *v);
    if (auto* v = get("stiffness")) c.stiffness = parse_real("stiffness", *v);
    if (auto* v = get("t_end")) c.t_end = parse_real("t_end", *v);
    return build_toy(c);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown problem '" + name + "'");
}

}  // namespace pdaexp
