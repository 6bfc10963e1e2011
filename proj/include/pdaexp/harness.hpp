#pragma once

// Convergence studies: error norms, order fits, reference solutions with an
// on-disk cache, and CSV emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pdaexp/error.hpp"
#include "pdaexp/integrators.hpp"
#include "pdaexp/problems.hpp"

namespace pdaexp {

enum class NormKind { Energy, H1, L2 };

inline std::string_view to_string(NormKind k) {
  switch (k) {
    case NormKind::Energy: return "energy";
    case NormKind::H1: return "h1";
    case NormKind::L2: return "l2";
  }
  return "unknown";
}

inline NormKind parse_norm(std::string_view name) {
  for (NormKind k : {NormKind::Energy, NormKind::H1, NormKind::L2})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::InvalidConfig, "unknown norm '" + std::string(name) + "'");
}

/// energy: e^T A_sym e; h1: e^T (K + M) e; l2: e^T M e (square roots thereof).
inline double error_norm(const ConstrainedSystem& sys, const Vector& e, NormKind kind) {
  detail::require_dims(e.size() == sys.size(), "error_norm: vector length");
  double q = 0.0;
  switch (kind) {
    case NormKind::Energy: q = e.dot(sys.A() * e); break;  // e^T A e = e^T A_sym e
    case NormKind::H1: q = e.dot(sys.norm_stiffness() * e) + e.dot(sys.M() * e); break;
    case NormKind::L2: q = e.dot(sys.M() * e); break;
  }
  const double scale = std::max(1.0, e.squaredNorm());
  if (q < -1e-12 * scale) throw Error(ErrorCode::NegativeEnergy, "error_norm: negative quadratic form " + std::to_string(q));
  return std::sqrt(std::max(0.0, q));
}

struct ConvergenceRow {
  double tau = 0.0;
  double error = 0.0;
  double local_order = std::numeric_limits<double>::quiet_NaN();  ///< NaN on the first row
};

struct ConvergenceTable {
  std::string problem;
  std::string scheme;
  std::string norm;
  Index mesh = 0;
  double t_end = 0.0;
  double tau_ref = 0.0;  ///< 0 when the exact solution was used
  std::vector<ConvergenceRow> rows;
  double fitted_order = std::numeric_limits<double>::quiet_NaN();
  double reference_norm = 0.0;
  double reference_difference = 0.0;  ///< ||x(tau_ref) - x(tau_ref / 2)|| in the table norm
  double max_constraint_residual = 0.0;
  Index repaired_steps = 0;  ///< steps whose constraint drift was repaired, reference included
  int f_evals = 0;
};

/// Fills local orders log(e_{i-1}/e_i) / log(tau_{i-1}/tau_i).
inline void compute_local_orders(std::vector<ConvergenceRow>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    rows[i].local_order = i == 0 ? std::numeric_limits<double>::quiet_NaN()
                                 : std::log(rows[i - 1].error / rows[i].error) / std::log(rows[i - 1].tau / rows[i].tau);
}

/// Least-squares slope of log(error) against log(tau), skipping rows with
/// error > cutoff (pre-asymptotic). NaN with fewer than two usable rows.
inline double fit_order(const std::vector<ConvergenceRow>& rows,
                        double cutoff = std::numeric_limits<double>::infinity()) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& r : rows) {
    if (!(r.error > 0.0) || !(r.tau > 0.0) || r.error > cutoff) continue;
    const double x = std::log(r.tau), y = std::log(r.error);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double den = n * sxx - sx * sx;
  return den == 0.0 ? std::numeric_limits<double>::quiet_NaN() : (n * sxy - sx * sy) / den;
}

// ---------------------------------------------------------------------------
// Reference solutions

struct ReferenceSolution {
  std::string key;
  double t_end = 0.0;
  double tau_ref = 0.0;
  Vector state;       ///< second-order scheme at tau_ref
  Vector state_half;  ///< second-order scheme at tau_ref / 2 (self-check)
  bool from_cache = false;
  double max_constraint_residual = 0.0;
  Index repaired_steps = 0;
};

struct ReferenceOptions {
  std::string cache_dir;       ///< empty disables the cache
  bool allow_build = true;     ///< false: a cache miss is MissingReference
  double flow_tol = 1e-13;
};

namespace detail {

inline std::string reference_key(const Problem& p, double t_end, double tau_ref, double flow_tol) {
  return p.config_key + ";T=" + fmt_double(t_end) + ";tau_ref=" + fmt_double(tau_ref) +
         ";scheme=second-order;flow_tol=" + fmt_double(flow_tol);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::filesystem::path reference_path(const std::string& dir, const std::string& key) {
  std::ostringstream name;
  name << "ref-" << std::hex << std::setw(16) << std::setfill('0') << fnv1a(key) << ".bin";
  return std::filesystem::path(dir) / name.str();
}

inline constexpr std::string_view kRefMagic = "PDAEXP-REF-2\n";

inline bool load_reference(const std::filesystem::path& path, const std::string& key, ReferenceSolution& ref) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string magic(kRefMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  std::string stored_key, stats;
  if (!in || magic != kRefMagic || !std::getline(in, stored_key) || stored_key != key) return false;
  if (!std::getline(in, stats)) return false;
  std::istringstream st(stats);
  if (!(st >> ref.max_constraint_residual >> ref.repaired_steps)) return false;
  try {
    auto states = read_state_dump(in);
    if (states.size() != 2) return false;
    ref.state = std::move(states[0]);
    ref.state_half = std::move(states[1]);
  } catch (const Error&) {
    return false;
  }
  return true;
}

inline void store_reference(const std::filesystem::path& path, const std::string& key, const ReferenceSolution& ref) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write reference cache " + tmp);
    out.write(kRefMagic.data(), static_cast<std::streamsize>(kRefMagic.size()));
    out << key << '\n' << std::setprecision(17) << ref.max_constraint_residual << ' ' << ref.repaired_steps << '\n';
    write_state_dump({ref.state, ref.state_half}, ref.state.size(), out);
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot finalize reference cache " + path.string());
}

}  // namespace detail

/// Second-order solutions at T with tau_ref and tau_ref / 2, served from the
/// cache when present.
inline ReferenceSolution build_reference(const Problem& p, double t_end, double tau_ref,
                                         const ReferenceOptions& opts = {}) {
  ReferenceSolution ref;
  ref.key = detail::reference_key(p, t_end, tau_ref, opts.flow_tol);
  ref.t_end = t_end;
  ref.tau_ref = tau_ref;
  uniform_steps(p.t0, t_end, tau_ref);
  std::filesystem::path path;
  if (!opts.cache_dir.empty()) {
    path = detail::reference_path(opts.cache_dir, ref.key);
    if (detail::load_reference(path, ref.key, ref) && ref.state.size() == p.system->size()) {
      ref.from_cache = true;
      return ref;
    }
  }
  if (!opts.allow_build) throw Error(ErrorCode::MissingReference, "no cached reference for " + ref.key);

  SchemeConfig cfg;
  cfg.scheme = Scheme::SecondOrder;
  cfg.flow_tol = opts.flow_tol;
  auto coarse = integrate(*p.system, cfg, p.u0, p.t0, t_end, tau_ref);
  auto fine = integrate(*p.system, cfg, p.u0, p.t0, t_end, tau_ref / 2.0);
  ref.state = std::move(coarse.final_state.u);
  ref.state_half = std::move(fine.final_state.u);
  ref.max_constraint_residual = std::max(coarse.max_residual, fine.max_residual);
  ref.repaired_steps = static_cast<Index>(coarse.warnings.size() + fine.warnings.size());
  if (!path.empty()) detail::store_reference(path, ref.key, ref);
  return ref;
}

// ---------------------------------------------------------------------------
// Convergence runs

struct ConvergenceOptions {
  NormKind norm = NormKind::Energy;
  double tau_ref = 0.0;         ///< 0: smallest tau / 16
  bool use_exact = true;        ///< compare against the exact solution when the problem has one
  bool parallel = true;         ///< integrate the tau ladder concurrently
  double self_check_fraction = 0.01;
  ReferenceOptions reference;
};

/// Integrates p with every tau and measures the error at T.
inline ConvergenceTable run_convergence(const Problem& p, const SchemeConfig& scheme, std::vector<double> taus,
                                        const ConvergenceOptions& opts = {}) {
  scheme.validate();
  if (taus.empty()) throw Error(ErrorCode::InvalidConfig, "run_convergence: empty tau list");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (!(taus[i] < taus[i - 1])) throw Error(ErrorCode::InvalidConfig, "run_convergence: taus must strictly decrease");
  const double t_end = p.t_end;
  for (double tau : taus) uniform_steps(p.t0, t_end, tau);

  ConvergenceTable table;
  table.problem = p.name;
  table.scheme = std::string(to_string(scheme.scheme));
  table.norm = std::string(to_string(opts.norm));
  table.mesh = p.mesh;
  table.t_end = t_end;

  Vector reference;
  const bool exact = opts.use_exact && static_cast<bool>(p.exact);
  std::optional<ReferenceSolution> ref;
  if (exact) {
    reference = p.exact(t_end);
  } else {
    const double tau_ref = opts.tau_ref > 0.0 ? opts.tau_ref : taus.back() / 16.0;
    if (tau_ref > taus.back() / 16.0 * (1.0 + 1e-12))
      throw Error(ErrorCode::InvalidConfig, "reference step must be at least 16 times smaller than the smallest tau");
    ref = build_reference(p, t_end, tau_ref, opts.reference);
    reference = ref->state;
    table.tau_ref = tau_ref;
    table.max_constraint_residual = ref->max_constraint_residual;
    table.repaired_steps = ref->repaired_steps;
  }
  table.reference_norm = error_norm(*p.system, reference, opts.norm);

  auto run = [&](double tau) { return integrate(*p.system, scheme, p.u0, p.t0, t_end, tau); };
  std::vector<Trajectory> runs;
  if (opts.parallel) {
    std::vector<std::future<Trajectory>> futures;
    for (double tau : taus) futures.push_back(std::async(std::launch::async, run, tau));
    for (auto& f : futures) runs.push_back(f.get());
  } else {
    for (double tau : taus) runs.push_back(run(tau));
  }

  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double err = error_norm(*p.system, runs[i].final_state.u - reference, opts.norm);
    if (!std::isfinite(err)) throw Error(ErrorCode::NonFinite, "run_convergence: non-finite error");
    table.rows.push_back({taus[i], err});
    table.max_constraint_residual = std::max(table.max_constraint_residual, runs[i].max_residual);
    table.f_evals += runs[i].f_evals;
    table.repaired_steps += static_cast<Index>(runs[i].warnings.size());
  }
  compute_local_orders(table.rows);
  table.fitted_order = fit_order(table.rows, 0.5 * table.reference_norm);

  if (ref) {
    table.reference_difference = error_norm(*p.system, ref->state - ref->state_half, opts.norm);
    double min_err = std::numeric_limits<double>::infinity();
    for (const auto& r : table.rows) min_err = std::min(min_err, r.error);
    if (table.reference_difference > opts.self_check_fraction * min_err)
      throw Error(ErrorCode::SelfCheckFailed,
                  "reference changes by " + detail::fmt_double(table.reference_difference) +
                      " under step halving, more than " + detail::fmt_double(opts.self_check_fraction) +
                      " of the smallest error " + detail::fmt_double(min_err));
  }
  return table;
}

/// Halving ladder tau0, tau0/2, ..., tau0/2^halvings.
inline std::vector<double> halving_ladder(double tau0, int halvings) {
  std::vector<double> taus;
  for (int k = 0; k <= halvings; ++k) taus.push_back(std::ldexp(tau0, -k));
  return taus;
}

// ---------------------------------------------------------------------------
// CSV

/// Metadata lines prefixed '#', then "tau,error,local_order" and one row per tau
/// (17 significant digits; local_order empty on the first row).
inline void emit_csv(const ConvergenceTable& t, std::ostream& os) {
  os << std::setprecision(17);
  os << "# problem=" << t.problem << '\n';
  os << "# scheme=" << t.scheme << '\n';
  os << "# norm=" << t.norm << '\n';
  os << "# h=" << (t.mesh > 0 ? "1/" + std::to_string(t.mesh) : std::string("none")) << '\n';
  os << "# t_end=" << t.t_end << '\n';
  os << "# tau_ref=" << t.tau_ref << '\n';
  os << "# fitted_order=" << t.fitted_order << '\n';
  os << "tau,error,local_order\n";
  for (const auto& r : t.rows) {
    os << r.tau << ',' << r.error << ',';
    if (!std::isnan(r.local_order)) os << r.local_order;
    os << '\n';
  }
}

inline void emit_csv(const ConvergenceTable& t, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  emit_csv(t, out);
  if (!out) throw Error(ErrorCode::Io, "write to " + path + " failed");
}

/// Parses the rows (and the metadata it knows) written by emit_csv.
inline ConvergenceTable read_convergence_csv(std::istream& is) {
  ConvergenceTable t;
  std::string line;
  bool header = false;
  auto field = [](const std::string& s) { return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s); };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      if (key == "problem") t.problem = value;
      else if (key == "scheme") t.scheme = value;
      else if (key == "norm") t.norm = value;
      else if (key == "h" && value.rfind("1/", 0) == 0) t.mesh = std::stol(value.substr(2));
      else if (key == "t_end") t.t_end = std::stod(value);
      else if (key == "tau_ref") t.tau_ref = std::stod(value);
      else if (key == "fitted_order") t.fitted_order = field(value == "nan" ? "" : value);
      continue;
    }
    if (!header) {
      if (line != "tau,error,local_order") throw Error(ErrorCode::Io, "unexpected CSV header: " + line);
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string a, b, c;
    std::getline(row, a, ',');
    std::getline(row, b, ',');
    std::getline(row, c);
    try {
      t.rows.push_back({std::stod(a), std::stod(b), field(c)});
    } catch (const std::exception&) {
      throw Error(ErrorCode::Io, "malformed CSV row: " + line);
    }
  }
  if (!header) throw Error(ErrorCode::Io, "missing CSV header");
  return t;
}

}  // namespace pdaexp
