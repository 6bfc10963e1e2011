#pragma once

// Exponential integrators for the semi-explicit index-2 system
//
//   M x' + A x + B^T lambda = f(t, x),   B x = g(t).
//
// f is a load vector (already mass weighted); B^- g is a coefficient vector.
// Wherever B^- g' is subtracted from a load it enters as M (B^- g').

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pdaexp/dae_flow.hpp"
#include "pdaexp/error.hpp"
#include "pdaexp/linalg.hpp"

namespace pdaexp {

using LoadFn = std::function<Vector(double, const Vector&)>;
using ConstraintFn = std::function<Vector(double)>;

/// Immutable problem data plus the two cached saddle factorizations
/// [A B^T; B 0] (stationary problems) and [M B^T; B 0] (flow and projection).
class ConstrainedSystem {
 public:
  /// `norm_stiffness` is the stiffness part K of the H^1-type norm e^T (K + M) e;
  /// it defaults to the symmetric part of A.
  ConstrainedSystem(SparseMatrix m, SparseMatrix a, SparseMatrix b, LoadFn f, ConstraintFn g, ConstraintFn gdot,
                    std::optional<SparseMatrix> norm_stiffness = std::nullopt)
      : f_(std::move(f)), g_(std::move(g)), gdot_(std::move(gdot)) {
    detail::require_dims(m.rows() == m.cols() && a.rows() == m.rows() && a.cols() == m.cols(),
                         "ConstrainedSystem: M and A must be square of equal size");
    detail::require_dims(b.cols() == m.cols() || b.rows() == 0, "ConstrainedSystem: B columns");
    if (b.rows() == 0) b = SparseMatrix(0, m.cols());
    if (!f_ || !g_ || !gdot_) throw Error(ErrorCode::InvalidConfig, "ConstrainedSystem: f, g and gdot are required");
    if (!is_spd(m)) throw Error(ErrorCode::NotSpd, "ConstrainedSystem: M is not symmetric positive definite");
    symmetric_a_ = is_symmetric(a);
    stiff_ = std::make_shared<const SaddleFactorization>(a, b);
    op_ = std::make_shared<const DaeOperator>(SaddleFactorization(m, b), a);
    norm_k_ = std::make_shared<const SparseMatrix>(norm_stiffness ? *norm_stiffness : symmetric_part(a));
    detail::require_dims(norm_k_->rows() == size() && norm_k_->cols() == size(), "ConstrainedSystem: norm stiffness");
  }

  Index size() const noexcept { return op_->size(); }
  Index constraint_size() const noexcept { return op_->constraint_size(); }
  bool symmetric_A() const noexcept { return symmetric_a_; }
  const SparseMatrix& M() const noexcept { return op_->mass(); }
  const SparseMatrix& A() const noexcept { return op_->stiffness(); }
  const SparseMatrix& B() const noexcept { return op_->constraint(); }
  const SparseMatrix& norm_stiffness() const noexcept { return *norm_k_; }
  const DaeOperator& flow_operator() const noexcept { return *op_; }
  const SaddleFactorization& stiffness_saddle() const noexcept { return *stiff_; }
  const SaddleFactorization& mass_saddle() const noexcept { return op_->mass_saddle(); }

  Vector f(double t, const Vector& x) const { return checked(f_(t, x), size(), "f"); }
  Vector g(double t) const { return checked(g_(t), constraint_size(), "g"); }
  Vector gdot(double t) const { return checked(gdot_(t), constraint_size(), "gdot"); }

 private:
  static Vector checked(Vector v, Index n, const char* what) {
    if (v.size() != n) throw Error(ErrorCode::DimensionMismatch, std::string(what) + " returned a vector of wrong length");
    if (!v.allFinite()) throw Error(ErrorCode::NonFinite, std::string(what) + " returned non-finite values");
    return v;
  }

  LoadFn f_;
  ConstraintFn g_;
  ConstraintFn gdot_;
  bool symmetric_a_ = false;
  std::shared_ptr<const SaddleFactorization> stiff_;
  std::shared_ptr<const DaeOperator> op_;
  std::shared_ptr<const SparseMatrix> norm_k_;
};

/// x = B^- rhs_g: A x + B^T nu = 0, B x = rhs_g.
inline Vector b_minus(const ConstrainedSystem& sys, const Vector& rhs_g) {
  detail::require_dims(rhs_g.size() == sys.constraint_size(), "b_minus: constraint vector length");
  if (rhs_g.size() == 0 || rhs_g.cwiseAbs().maxCoeff() == 0.0) return Vector::Zero(sys.size());
  return sys.stiffness_saddle().solve(Vector::Zero(sys.size()), rhs_g).x;
}

/// w with A w + B^T nu = rhs, B w = 0.
inline Vector w_solve(const ConstrainedSystem& sys, const Vector& rhs) {
  detail::require_dims(rhs.size() == sys.size(), "w_solve: rhs length");
  if (rhs.cwiseAbs().maxCoeff() == 0.0) return Vector::Zero(sys.size());
  return sys.stiffness_saddle().solve(rhs, Vector::Zero(sys.constraint_size())).x;
}

/// ||B x - g(t)|| / (1 + ||g(t)||).
inline double constraint_residual(const ConstrainedSystem& sys, double t, const Vector& x) {
  if (sys.constraint_size() == 0) return 0.0;
  const Vector g = sys.g(t);
  return (sys.B() * x - g).norm() / (1.0 + g.norm());
}

enum class Scheme { ExpEuler, SecondOrder, SecondOrderFamily, AltEuler };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::ExpEuler: return "exp-euler";
    case Scheme::SecondOrder: return "second-order";
    case Scheme::SecondOrderFamily: return "second-order-family";
    case Scheme::AltEuler: return "alt-euler";
  }
  return "unknown";
}

inline Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::ExpEuler, Scheme::SecondOrder, Scheme::SecondOrderFamily, Scheme::AltEuler})
    if (to_string(s) == name) return s;
  throw Error(ErrorCode::InvalidConfig, "unknown scheme '" + std::string(name) + "'");
}

struct SchemeConfig {
  Scheme scheme = Scheme::ExpEuler;
  double c2 = 1.0;                 ///< stage abscissa of the family, > 0
  double theta = 0.0;              ///< alt-euler constraint weight in [0, 1]
  double flow_tol = 1e-12;         ///< Krylov tolerance relative to the norm of the flowed vector
  double consistency_tol = 1e-9;   ///< accepted ||B u - g|| / (1 + ||g||)
  Index krylov_max = 60;

  void validate() const {
    if (!(c2 > 0.0) || !std::isfinite(c2)) throw Error(ErrorCode::InvalidConfig, "c2 must be positive");
    if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "theta must lie in [0, 1]");
    if (!(flow_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "flow tolerance must be positive");
    if (!(consistency_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "consistency tolerance must be positive");
    if (krylov_max < 1) throw Error(ErrorCode::InvalidConfig, "Krylov basis cap must be positive");
  }
};

struct StepDiagnostics {
  int f_evals = 0;
  Index flows = 0;
  Index flow_substeps = 0;
  Index max_basis = 0;
  double residual = 0.0;  ///< constraint residual after the step (after repair)
  bool repaired = false;  ///< consistency was restored by projection
};

struct StepState {
  double t = 0.0;
  Vector u;
  Vector bg;     ///< B^- g(t)
  Vector bgdot;  ///< B^- g'(t)
  StepDiagnostics last;
};

/// State at (t, u) with the lifting vectors cached; no consistency check.
inline StepState make_state(const ConstrainedSystem& sys, double t, Vector u) {
  detail::require_dims(u.size() == sys.size(), "make_state: vector length");
  StepState s;
  s.t = t;
  s.u = std::move(u);
  s.bg = b_minus(sys, sys.g(t));
  s.bgdot = b_minus(sys, sys.gdot(t));
  return s;
}

namespace detail {

// e^{X t} x for x in ker B up to round-off; x is projected first so that
// cancellation in its construction never trips the flow's consistency check.
inline Vector flow_kernel(const ConstrainedSystem& sys, const Vector& x, double t, const SchemeConfig& cfg,
                          StepDiagnostics& diag) {
  const Vector xk = kernel_project(sys.mass_saddle(), x);
  const double nrm = xk.norm();
  if (nrm == 0.0 || t == 0.0) return xk;
  FlowOptions opts;
  opts.tol = cfg.flow_tol * nrm;
  opts.r_max = cfg.krylov_max;
  auto res = flow(sys.flow_operator(), xk, t, opts);
  ++diag.flows;
  diag.flow_substeps += res.substeps;
  diag.max_basis = std::max(diag.max_basis, res.basis_size);
  return std::move(res.x_t);
}

inline void require_consistent(const ConstrainedSystem& sys, const StepState& s, const SchemeConfig& cfg) {
  const double r = constraint_residual(sys, s.t, s.u);
  if (r > cfg.consistency_tol)
    throw Error(ErrorCode::InconsistentState, "step: B u - g(t) = " + std::to_string(r) + " at t = " + std::to_string(s.t));
}

// Builds the state at t with u = bg + (kernel part); repairs by projection if needed.
inline StepState finish(const ConstrainedSystem& sys, double t, Vector u, Vector bg, Vector bgdot,
                        StepDiagnostics diag, const SchemeConfig& cfg, bool repair = true) {
  if (!u.allFinite()) throw Error(ErrorCode::NonFinite, "step produced non-finite values at t = " + std::to_string(t));
  StepState s{t, std::move(u), std::move(bg), std::move(bgdot), diag};
  s.last.residual = constraint_residual(sys, t, s.u);
  if (repair && s.last.residual > cfg.consistency_tol) {
    s.u = s.bg + kernel_project(sys.mass_saddle(), s.u - s.bg);
    s.last.residual = constraint_residual(sys, t, s.u);
    s.last.repaired = true;
  }
  return s;
}

}  // namespace detail

/// Exponential Euler: u_{n+1} = B^- g_{n+1} + e^{X tau}(u_n - B^- g_n - w_n) + w_n,
/// with A w_n + B^T nu = f(t_n, u_n) - M B^- g'_n, B w_n = 0.
inline StepState euler_step(const ConstrainedSystem& sys, const StepState& state, double tau,
                            const SchemeConfig& cfg = {}) {
  detail::require_consistent(sys, state, cfg);
  StepDiagnostics diag;
  const double t1 = state.t + tau;
  const Vector fn = sys.f(state.t, state.u);
  ++diag.f_evals;
  const Vector wn = w_solve(sys, fn - sys.M() * state.bgdot);
  const Vector z = detail::flow_kernel(sys, state.u - state.bg - wn, tau, cfg, diag);
  Vector bg1 = b_minus(sys, sys.g(t1));
  Vector u1 = bg1 + z + wn;
  return detail::finish(sys, t1, std::move(u1), std::move(bg1), b_minus(sys, sys.gdot(t1)), diag, cfg);
}

/// Second-order scheme: Euler predictor, then
///   A w' + B^T nu = f(t_{n+1}, u^Eul) - M B^- g'_{n+1} - f(t_n, u_n) + M B^- g'_n,
///   A w'' + B^T nu = M w' / tau,
///   u_{n+1} = u^Eul + e^{X tau} w'' - w'' + w'.
inline StepState second_order_step(const ConstrainedSystem& sys, const StepState& state, double tau,
                                   const SchemeConfig& cfg = {}) {
  detail::require_consistent(sys, state, cfg);
  StepDiagnostics diag;
  const double t1 = state.t + tau;
  const Vector fn = sys.f(state.t, state.u);
  const Vector m_bgdot_n = sys.M() * state.bgdot;
  const Vector wn = w_solve(sys, fn - m_bgdot_n);
  const Vector z = detail::flow_kernel(sys, state.u - state.bg - wn, tau, cfg, diag);
  Vector bg1 = b_minus(sys, sys.g(t1));
  Vector bgdot1 = b_minus(sys, sys.gdot(t1));
  const Vector u_eul = bg1 + z + wn;

  const Vector f1 = sys.f(t1, u_eul);
  diag.f_evals = 2;
  const Vector w1 = w_solve(sys, f1 - sys.M() * bgdot1 - fn + m_bgdot_n);
  const Vector w2 = w_solve(sys, sys.M() * w1 / tau);
  const Vector z2 = detail::flow_kernel(sys, w2, tau, cfg, diag);
  Vector u1 = u_eul + z2 - w2 + w1;
  return detail::finish(sys, t1, std::move(u1), std::move(bg1), std::move(bgdot1), diag, cfg);
}

/// One-parameter family with internal stage t_{n,2} = t_n + c2 tau:
///   u_{n,2} = e^{X c2 tau} z_n + w_n + B^- g_{n,2},  z_n = u_n - B^- g_n - w_n,
///   A w' + B^T nu = (f(t_{n,2}, u_{n,2}) - f_n - M B^- g'_{n,2} + M B^- g'_n) / c2,
///   A w'' + B^T nu = M w' / tau,
///   u_{n+1} = e^{X tau}(z_n + w'') + w_n + w' - w'' + B^- g_{n+1}.
inline StepState family_step(const ConstrainedSystem& sys, const StepState& state, double tau, double c2,
                             const SchemeConfig& cfg = {}) {
  if (!(c2 > 0.0)) throw Error(ErrorCode::InvalidConfig, "family_step: c2 must be positive");
  detail::require_consistent(sys, state, cfg);
  StepDiagnostics diag;
  const double t1 = state.t + tau;
  const double t2 = state.t + c2 * tau;
  const Vector fn = sys.f(state.t, state.u);
  const Vector m_bgdot_n = sys.M() * state.bgdot;
  const Vector wn = w_solve(sys, fn - m_bgdot_n);
  const Vector zn = kernel_project(sys.mass_saddle(), state.u - state.bg - wn);
  const Vector u2 = detail::flow_kernel(sys, zn, c2 * tau, cfg, diag) + wn + b_minus(sys, sys.g(t2));

  const Vector f2 = sys.f(t2, u2);
  diag.f_evals = 2;
  const Vector w1 = w_solve(sys, (f2 - fn - sys.M() * b_minus(sys, sys.gdot(t2)) + m_bgdot_n) / c2);
  const Vector w2 = w_solve(sys, sys.M() * w1 / tau);
  Vector bg1 = b_minus(sys, sys.g(t1));
  Vector u1 = detail::flow_kernel(sys, zn + w2, tau, cfg, diag) + wn + w1 - w2 + bg1;
  return detail::finish(sys, t1, std::move(u1), std::move(bg1), b_minus(sys, sys.gdot(t1)), diag, cfg);
}

/// Euler variant without g': A w + B^T nu = f(t_n, u_n), B w = theta g_n + (1 - theta) g_{n+1};
/// u_{n+1} = e^{X tau} P(u_n - w) + w with P the projection onto ker B.
/// For theta > 0 the result carries B u_{n+1} = theta g_n + (1 - theta) g_{n+1}
/// by design, so no repair is applied.
inline StepState alt_euler_step(const ConstrainedSystem& sys, const StepState& state, double tau, double theta,
                                const SchemeConfig& cfg = {}) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "alt_euler_step: theta must lie in [0, 1]");
  StepDiagnostics diag;
  const double t1 = state.t + tau;
  const Vector fn = sys.f(state.t, state.u);
  diag.f_evals = 1;
  const Vector gmix = theta * sys.g(state.t) + (1.0 - theta) * sys.g(t1);
  const Vector wbar = sys.stiffness_saddle().solve(fn, gmix).x;
  const Vector z = detail::flow_kernel(sys, state.u - wbar, tau, cfg, diag);
  Vector u1 = z + wbar;
  return detail::finish(sys, t1, std::move(u1), b_minus(sys, sys.g(t1)), b_minus(sys, sys.gdot(t1)), diag, cfg,
                        theta == 0.0);
}

inline StepState step(const ConstrainedSystem& sys, const StepState& state, double tau, const SchemeConfig& cfg) {
  switch (cfg.scheme) {
    case Scheme::ExpEuler: return euler_step(sys, state, tau, cfg);
    case Scheme::SecondOrder: return second_order_step(sys, state, tau, cfg);
    case Scheme::SecondOrderFamily: return family_step(sys, state, tau, cfg.c2, cfg);
    case Scheme::AltEuler: return alt_euler_step(sys, state, tau, cfg.theta, cfg);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown scheme");
}

struct StepRecord {
  Index step = 0;
  double t = 0.0;
  double constraint_residual = 0.0;
  double solution_norm = 0.0;  ///< sqrt(u^T M u)
};

struct IntegrateOptions {
  bool keep_states = false;  ///< store every state (needed for the binary dump)
};

struct Trajectory {
  std::vector<StepRecord> records;  ///< one per grid point, including t0
  std::vector<Vector> states;       ///< empty unless keep_states
  StepState final_state;
  Index steps = 0;
  int f_evals = 0;
  Index flows = 0;
  Index flow_substeps = 0;
  Index max_basis = 0;
  double max_residual = 0.0;
  std::vector<std::string> warnings;
};

/// Number of uniform steps of length tau covering [t0, T]; throws if tau does not divide T - t0.
inline Index uniform_steps(double t0, double t_end, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::InvalidConfig, "tau must be positive");
  if (!(t_end >= t0)) throw Error(ErrorCode::InvalidConfig, "final time precedes the initial time");
  const double q = (t_end - t0) / tau;
  const double n = std::round(q);
  if (std::abs(q - n) > 1e-9 * std::max(1.0, q))
    throw Error(ErrorCode::InvalidConfig, "tau does not divide the time interval");
  return static_cast<Index>(n);
}

/// Integrates on the uniform grid t_k = t0 + k tau.
inline Trajectory integrate(const ConstrainedSystem& sys, const SchemeConfig& cfg, const Vector& u0, double t0,
                            double t_end, double tau, const IntegrateOptions& opts = {}) {
  cfg.validate();
  detail::require_dims(u0.size() == sys.size(), "integrate: initial value length");
  const Index n_steps = uniform_steps(t0, t_end, tau);
  const double r0 = constraint_residual(sys, t0, u0);
  if (r0 > cfg.consistency_tol)
    throw Error(ErrorCode::InconsistentInitialData, "B u0 - g(t0) = " + std::to_string(r0));

  Trajectory traj;
  StepState s = make_state(sys, t0, u0);
  auto record = [&](Index k, const StepState& st, double resid) {
    traj.records.push_back({k, st.t, resid, std::sqrt(std::max(0.0, st.u.dot(sys.M() * st.u)))});
    if (opts.keep_states) traj.states.push_back(st.u);
  };
  record(0, s, r0);
  traj.max_residual = r0;
  for (Index k = 1; k <= n_steps; ++k) {
    const double t_next = (k == n_steps) ? t_end : t0 + static_cast<double>(k) * tau;
    StepState next = step(sys, s, t_next - s.t, cfg);
    next.t = t_next;
    const auto& d = next.last;
    traj.f_evals += d.f_evals;
    traj.flows += d.flows;
    traj.flow_substeps += d.flow_substeps;
    traj.max_basis = std::max(traj.max_basis, d.max_basis);
    traj.max_residual = std::max(traj.max_residual, d.residual);
    if (d.repaired)
      traj.warnings.push_back("step " + std::to_string(k) + ": constraint drift repaired by projection");
    record(k, next, d.residual);
    s = std::move(next);
  }
  traj.steps = n_steps;
  traj.final_state = std::move(s);
  return traj;
}

/// CSV with columns step,t,constraint_residual,solution_norm.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& os) {
  os << "step,t,constraint_residual,solution_norm\n" << std::setprecision(17);
  for (const auto& r : traj.records)
    os << r.step << ',' << r.t << ',' << r.constraint_residual << ',' << r.solution_norm << '\n';
}

/// Binary dump: uint64 n, uint64 state count, then the states as little-endian doubles.
inline void write_state_dump(const std::vector<Vector>& states, Index n, std::ostream& os) {
  static_assert(sizeof(double) == 8);
  auto put_u64 = [&](std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  };
  put_u64(static_cast<std::uint64_t>(n));
  put_u64(static_cast<std::uint64_t>(states.size()));
  for (const auto& s : states) {
    detail::require_dims(s.size() == n, "write_state_dump: state length");
    for (Index i = 0; i < n; ++i) {
      std::uint64_t bits;
      const double v = s(i);
      std::memcpy(&bits, &v, 8);
      put_u64(bits);
    }
  }
  if (!os) throw Error(ErrorCode::Io, "write_state_dump: write failed");
}

inline std::vector<Vector> read_state_dump(std::istream& is) {
  auto get_u64 = [&] {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw Error(ErrorCode::Io, "read_state_dump: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  };
  const auto n = static_cast<Index>(get_u64());
  const auto count = get_u64();
  std::vector<Vector> states;
  states.reserve(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    Vector s(n);
    for (Index i = 0; i < n; ++i) {
      const std::uint64_t bits = get_u64();
      double v;
      std::memcpy(&v, &bits, 8);
      s(i) = v;
    }
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace pdaexp
