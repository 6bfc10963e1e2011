#pragma once

// Krylov evaluation of x(t) = e^{Xt} x0 for the homogeneous index-2 DAE
//
//   M x' + A x + B^T lambda = 0,   B x = 0,
//
// where y = X x0 is only available through the saddle solve
//   M y + B^T mu = -A x0,   B y = 0.

#include <cmath>
#include <optional>

#include "pdaexp/error.hpp"
#include "pdaexp/expm.hpp"
#include "pdaexp/linalg.hpp"

namespace pdaexp {

/// The generator X of the constrained homogeneous flow.
class DaeOperator {
 public:
  DaeOperator(const SparseMatrix& m, const SparseMatrix& a, const SparseMatrix& b)
      : DaeOperator(SaddleFactorization(m, b), a) {}

  DaeOperator(SaddleFactorization mass_saddle, const SparseMatrix& a)
      : mass_(std::move(mass_saddle)), a_(std::make_shared<const SparseMatrix>(a)) {
    detail::require_dims(a.rows() == mass_.primal_size() && a.cols() == mass_.primal_size(),
                         "DaeOperator: A must match M");
  }

  Index size() const noexcept { return mass_.primal_size(); }
  Index constraint_size() const noexcept { return mass_.constraint_size(); }
  const SaddleFactorization& mass_saddle() const noexcept { return mass_; }
  const SparseMatrix& mass() const noexcept { return mass_.primal_operator(); }
  const SparseMatrix& stiffness() const noexcept { return *a_; }
  const SparseMatrix& constraint() const noexcept { return mass_.constraint(); }

  /// y = X x (no consistency check on x; see kernel_project).
  Vector apply(const Vector& x) const {
    detail::require_dims(x.size() == size(), "apply_X: vector length");
    return mass_.solve(-(*a_ * x), Vector::Zero(constraint_size())).x;
  }

  /// Multiplier mu of M y + B^T mu = -A x; approximates lambda(t) when x = x(t).
  Vector multiplier(const Vector& x) const {
    detail::require_dims(x.size() == size(), "multiplier: vector length");
    return mass_.solve(-(*a_ * x), Vector::Zero(constraint_size())).multiplier;
  }

 private:
  SaddleFactorization mass_;
  std::shared_ptr<const SparseMatrix> a_;
};

inline Vector apply_X(const DaeOperator& op, const Vector& x0) { return op.apply(x0); }

/// Relative constraint violation ||B x|| / (max|B| ||x||); zero for x = 0 or m = 0.
inline double constraint_drift(const SparseMatrix& b, const Vector& x) {
  if (b.rows() == 0) return 0.0;
  const double scale = max_abs_entry(b) * x.norm();
  return scale > 0.0 ? (b * x).norm() / scale : 0.0;
}

/// Arnoldi process (Euclidean inner product, classical Gram-Schmidt with one
/// re-orthogonalization pass) for the Krylov space K_r(X, x0).
class ArnoldiProcess {
 public:
  ArnoldiProcess(const DaeOperator& op, const Vector& x0, Index r_max)
      : op_(&op), r_max_(std::max<Index>(1, r_max)) {
    detail::require_dims(x0.size() == op.size(), "arnoldi: vector length");
    beta_ = x0.norm();
    if (!(beta_ > 0.0)) throw Error(ErrorCode::ZeroInitialVector, "arnoldi: ||x0|| must be positive");
    v_ = DenseMatrix::Zero(op.size(), r_max_ + 1);
    h_ = DenseMatrix::Zero(r_max_ + 1, r_max_);
    v_.col(0) = x0 / beta_;
  }

  /// Adds one basis vector; returns false once r_max or a breakdown is reached.
  bool extend() {
    if (exact_ || r_ >= r_max_) return false;
    const Index j = r_;
    Vector w = op_->apply(v_.col(j));
    auto basis = v_.leftCols(j + 1);
    Vector coeff = basis.transpose() * w;
    w.noalias() -= basis * coeff;
    const Vector refine = basis.transpose() * w;
    w.noalias() -= basis * refine;
    coeff += refine;
    h_.col(j).head(j + 1) = coeff;
    const double hn = w.norm();
    h_(j + 1, j) = hn;
    ++r_;
    const double hnorm = h_.topLeftCorner(r_ + 1, r_).norm();
    if (hn <= 1e-14 * hnorm) {
      exact_ = true;
      h_(j + 1, j) = 0.0;
    } else {
      v_.col(j + 1) = w / hn;
    }
    return true;
  }

  Index size() const noexcept { return r_; }
  Index max_size() const noexcept { return r_max_; }
  bool exact() const noexcept { return exact_; }
  double beta() const noexcept { return beta_; }
  /// h_{r+1,r}; zero after a happy breakdown.
  double h_next() const { return r_ > 0 ? h_(r_, r_ - 1) : 0.0; }
  auto basis() const { return v_.leftCols(r_); }
  auto hessenberg() const { return h_.topLeftCorner(r_, r_); }
  Vector next_vector() const { return exact_ ? Vector(Vector::Zero(v_.rows())) : Vector(v_.col(r_)); }

 private:
  const DaeOperator* op_;
  Index r_max_;
  Index r_ = 0;
  bool exact_ = false;
  double beta_ = 0.0;
  DenseMatrix v_;
  DenseMatrix h_;
};

struct ArnoldiResult {
  DenseMatrix basis;       ///< V, n-by-r, orthonormal columns
  DenseMatrix hessenberg;  ///< H, r-by-r upper Hessenberg
  double h_next = 0.0;
  Vector next_vector;      ///< v_{r+1} (zero when exact)
  bool exact = false;      ///< happy breakdown: K_r is X-invariant
};

inline ArnoldiResult arnoldi(const DaeOperator& op, const Vector& x0, Index r_max) {
  ArnoldiProcess proc(op, x0, r_max);
  while (proc.extend()) {
  }
  return {proc.basis(), proc.hessenberg(), proc.h_next(), proc.next_vector(), proc.exact()};
}

struct FlowOptions {
  double tol = 1e-10;              ///< bound on the accumulated error estimate
  Index r_max = 60;                ///< Krylov basis cap
  int max_halvings = 30;           ///< substep length never drops below t / 2^max_halvings
  Index check_interval = 4;        ///< basis sizes at which the estimate is evaluated
  double consistency_tol = 1e-8;   ///< accepted ||B x0|| relative to max|B| ||x0||
  bool project_result = true;      ///< remove drift-off by projecting onto ker B
  bool recover_multiplier = false; ///< also return mu for x(t)
};

struct KrylovFlowResult {
  Vector x_t;
  Index basis_size = 0;           ///< largest basis used by any substep
  double residual_estimate = 0.0; ///< sum of accepted substep estimates
  Index substeps = 0;
  Index operator_applications = 0;
  double drift_before_projection = 0.0;
  std::optional<Vector> multiplier;
};

/// x(t) = e^{Xt} x0 via ||x0|| V_r e^{t H_r} e_1 with the estimate
/// ||x0|| |h_{r+1,r} (e^{t H_r})_{r,1}|. When the basis cap is hit the
/// substep is halved (e^{Xt} = e^{Xt/2} e^{Xt/2}) until the estimate passes.
inline KrylovFlowResult flow(const DaeOperator& op, const Vector& x0, double t, const FlowOptions& opts = {}) {
  detail::require_dims(x0.size() == op.size(), "flow: vector length");
  if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorCode::InvalidConfig, "flow: t must be finite and >= 0");
  if (!x0.allFinite()) throw Error(ErrorCode::NonFinite, "flow: non-finite initial value");
  const double drift0 = constraint_drift(op.constraint(), x0);
  if (drift0 > opts.consistency_tol)
    throw Error(ErrorCode::InconsistentState, "flow: B x0 != 0 (relative " + std::to_string(drift0) + ")");

  KrylovFlowResult res;
  res.x_t = x0;
  if (t == 0.0 || x0.norm() == 0.0) {
    if (opts.recover_multiplier) res.multiplier = op.multiplier(res.x_t);
    return res;
  }

  Vector x = x0;
  double done = 0.0;
  int depth = 0;  // trial substep is t / 2^depth
  while (done < t) {
    const double remaining = t - done;
    double s = std::min(std::ldexp(t, -depth), remaining);
    const double beta = x.norm();
    if (beta == 0.0) break;

    ArnoldiProcess proc(op, x, std::min<Index>(opts.r_max, op.size()));
    DenseMatrix e;
    double est = 0.0;
    bool halved = false;
    auto estimate = [&] {
      e = expm(s * proc.hessenberg());
      est = proc.exact() ? 0.0 : beta * std::abs(proc.h_next() * e(proc.size() - 1, 0));
    };
    while (true) {
      proc.extend();
      ++res.operator_applications;
      const bool at_cap = proc.exact() || proc.size() >= proc.max_size();
      if (!at_cap && proc.size() % opts.check_interval != 0) continue;
      estimate();
      if (est <= opts.tol * s / t) break;
      if (!at_cap) continue;
      while (est > opts.tol * s / t) {
        ++depth;
        halved = true;
        if (depth > opts.max_halvings)
          throw Error(ErrorCode::NoConvergence, "flow: substep limit exceeded at t = " + std::to_string(t));
        s = std::min(std::ldexp(t, -depth), remaining);
        estimate();
      }
      break;
    }
    x = beta * (proc.basis() * e.col(0));
    if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "flow: non-finite Krylov iterate");
    res.basis_size = std::max(res.basis_size, proc.size());
    res.residual_estimate += est;
    ++res.substeps;
    done = (s == remaining) ? t : done + s;
    if (!halved && depth > 0) --depth;
  }

  res.drift_before_projection = constraint_drift(op.constraint(), x);
  if (opts.project_result && op.constraint_size() > 0) x = kernel_project(op.mass_saddle(), x);
  res.x_t = std::move(x);
  if (opts.recover_multiplier) res.multiplier = op.multiplier(res.x_t);
  return res;
}

}  // namespace pdaexp
