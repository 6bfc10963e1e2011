#pragma once

// Sparse/dense linear algebra shared by the whole library: CSR matrices,
// block assembly helpers and the cached factorization of saddle-point
// matrices [S B^T; B 0].

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pdaexp/error.hpp"

namespace pdaexp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
/// Compressed sparse row storage.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

/// Builds a finalized CSR matrix: duplicates summed, explicit zeros dropped.
inline SparseMatrix sparse_from_triplets(Index rows, Index cols, const std::vector<Triplet>& entries) {
  SparseMatrix a(rows, cols);
  a.setFromTriplets(entries.begin(), entries.end());
  a.prune(0.0);
  a.makeCompressed();
  return a;
}

inline SparseMatrix sparse_identity(Index n) {
  SparseMatrix id(n, n);
  id.setIdentity();
  id.makeCompressed();
  return id;
}

/// Checks the CSR invariants: monotone offsets, strictly increasing columns, no stored zeros.
inline bool satisfies_csr_invariants(const SparseMatrix& a) {
  if (!a.isCompressed()) return false;
  const auto* outer = a.outerIndexPtr();
  const auto* inner = a.innerIndexPtr();
  const auto* values = a.valuePtr();
  if (outer[0] != 0 || outer[a.rows()] != a.nonZeros()) return false;
  for (Index r = 0; r < a.rows(); ++r) {
    if (outer[r + 1] < outer[r]) return false;
    for (auto k = outer[r]; k < outer[r + 1]; ++k) {
      if (values[k] == 0.0) return false;
      if (inner[k] < 0 || inner[k] >= a.cols()) return false;
      if (k > outer[r] && inner[k] <= inner[k - 1]) return false;
    }
  }
  return true;
}

inline Vector spmv(const SparseMatrix& a, const Vector& v) {
  detail::require_dims(a.cols() == v.size(), "spmv: matrix columns differ from vector length");
  return a * v;
}

/// Appends the entries of `block` shifted by (row0, col0).
inline void append_block(std::vector<Triplet>& out, const SparseMatrix& block, Index row0, Index col0,
                         double scale = 1.0) {
  for (Index r = 0; r < block.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(block, r); it; ++it)
      out.emplace_back(row0 + it.row(), col0 + it.col(), scale * it.value());
}

inline SparseMatrix block_diag(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros() + b.nonZeros()));
  append_block(t, a, 0, 0);
  append_block(t, b, a.rows(), a.cols());
  return sparse_from_triplets(a.rows() + b.rows(), a.cols() + b.cols(), t);
}

inline SparseMatrix symmetric_part(const SparseMatrix& a) {
  SparseMatrix at = a.transpose();
  SparseMatrix s = 0.5 * (a + at);
  s.prune(0.0);
  s.makeCompressed();
  return s;
}

inline double max_abs_entry(const SparseMatrix& a) {
  double m = 0.0;
  for (Index k = 0; k < a.nonZeros(); ++k) m = std::max(m, std::abs(a.valuePtr()[k]));
  return m;
}

inline bool is_symmetric(const SparseMatrix& a, double rel_tol = 1e-14) {
  if (a.rows() != a.cols()) return false;
  SparseMatrix at = a.transpose();
  SparseMatrix d = a - at;
  return max_abs_entry(d) <= rel_tol * std::max(1.0, max_abs_entry(a));
}

/// Symmetric positive definiteness via a sparse Cholesky factorization.
inline bool is_spd(const SparseMatrix& a) {
  if (!is_symmetric(a)) return false;
  const Eigen::SparseMatrix<double> col_major = a;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(col_major);
  return llt.info() == Eigen::Success;
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

struct SaddleOptions {
  /// A pivot below threshold * max|entry| declares the block matrix singular.
  double pivot_threshold = 1e-13;
};

struct SaddleSolution {
  Vector x;
  Vector multiplier;
};

/// Reusable LU factorization of K = [S B^T; B 0] with S n-by-n and B m-by-n.
///
/// The object is an immutable value handle; copies share the factor data and
/// concurrent solves against one factorization are safe.
class SaddleFactorization {
 public:
  using ColMajor = Eigen::SparseMatrix<double>;
  using Lu = Eigen::SparseLU<ColMajor, Eigen::COLAMDOrdering<int>>;

  SaddleFactorization(const SparseMatrix& s, const SparseMatrix& b, SaddleOptions opts = {})
      : s_(std::make_shared<const SparseMatrix>(s)), b_(std::make_shared<const SparseMatrix>(b)) {
    detail::require_dims(s.rows() == s.cols(), "saddle: S must be square");
    detail::require_dims(b.cols() == s.cols() || b.rows() == 0, "saddle: B column count differs from S");
    detail::require_dims(b.rows() <= s.rows(), "saddle: more constraints than unknowns");
    n_ = s.rows();
    m_ = b.rows();
    if (m_ == 0 && b.cols() != n_) b_ = std::make_shared<const SparseMatrix>(SparseMatrix(0, n_));

    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(s.nonZeros() + 2 * b.nonZeros()));
    append_block(t, s, 0, 0);
    append_block(t, *b_, n_, 0);
    SparseMatrix bt = b_->transpose();
    append_block(t, bt, 0, n_);
    auto block = std::make_shared<SparseMatrix>(n_ + m_, n_ + m_);
    block->setFromTriplets(t.begin(), t.end());
    block->makeCompressed();
    block_ = block;

    auto lu = std::make_shared<Lu>();
    ColMajor k(*block_);
    k.makeCompressed();
    lu->analyzePattern(k);
    lu->factorize(k);
    if (lu->info() != Eigen::Success)
      throw Error(ErrorCode::SingularSaddle, "factorization failed: " + lu->lastErrorMessage());
    max_entry_ = max_abs_entry(*block_);
    min_pivot_ = min_abs_pivot(*lu);
    if (!(min_pivot_ > opts.pivot_threshold * max_entry_))
      throw Error(ErrorCode::SingularSaddle,
                  "pivot " + std::to_string(min_pivot_) + " below threshold (max entry " +
                      std::to_string(max_entry_) + ")");
    lu_ = lu;
  }

  Index primal_size() const noexcept { return n_; }
  Index constraint_size() const noexcept { return m_; }
  const SparseMatrix& primal_operator() const noexcept { return *s_; }
  const SparseMatrix& constraint() const noexcept { return *b_; }
  const SparseMatrix& block_matrix() const noexcept { return *block_; }
  double min_pivot() const noexcept { return min_pivot_; }

  /// Solves S x + B^T multiplier = rhs_primal, B x = rhs_constraint.
  SaddleSolution solve(const Vector& rhs_primal, const Vector& rhs_constraint) const {
    detail::require_dims(rhs_primal.size() == n_, "saddle_solve: primal rhs length");
    detail::require_dims(rhs_constraint.size() == m_, "saddle_solve: constraint rhs length");
    Vector rhs(n_ + m_);
    rhs << rhs_primal, rhs_constraint;
    Vector sol = lu_->solve(rhs);
    if (!sol.allFinite()) throw Error(ErrorCode::NonFinite, "saddle_solve produced non-finite values");
    return {sol.head(n_), sol.tail(m_)};
  }

 private:
  // U's diagonal lives in the dense diagonal blocks of the supernodal L storage.
  static double min_abs_pivot(const Lu& lu) {
    const auto& l = lu.matrixU().m_mapL;
    double pmin = std::numeric_limits<double>::infinity();
    for (Index k = 0; k <= l.nsuper(); ++k) {
      const Index fsupc = l.supToCol()[k];
      const Index nsupc = l.supToCol()[k + 1] - fsupc;
      const Index luptr = l.colIndexPtr()[fsupc];
      const Index lda = l.colIndexPtr()[fsupc + 1] - luptr;
      for (Index j = 0; j < nsupc; ++j) pmin = std::min(pmin, std::abs(l.valuePtr()[luptr + j * lda + j]));
    }
    return pmin;
  }

  Index n_ = 0;
  Index m_ = 0;
  std::shared_ptr<const SparseMatrix> s_;
  std::shared_ptr<const SparseMatrix> b_;
  std::shared_ptr<const SparseMatrix> block_;
  std::shared_ptr<const Lu> lu_;
  double max_entry_ = 0.0;
  double min_pivot_ = 0.0;
};

inline SaddleFactorization assemble_saddle(const SparseMatrix& s, const SparseMatrix& b, SaddleOptions opts = {}) {
  return SaddleFactorization(s, b, opts);
}

inline SaddleSolution saddle_solve(const SaddleFactorization& f, const Vector& rhs_primal,
                                   const Vector& rhs_constraint) {
  return f.solve(rhs_primal, rhs_constraint);
}

/// M-orthogonal projection onto ker B, using a factorization built from (M, B).
inline Vector kernel_project(const SaddleFactorization& mass_saddle, const Vector& x) {
  detail::require_dims(x.size() == mass_saddle.primal_size(), "kernel_project: vector length");
  if (mass_saddle.constraint_size() == 0) return x;
  return mass_saddle.solve(mass_saddle.primal_operator() * x, Vector::Zero(mass_saddle.constraint_size())).x;
}

/// Relative residuals (primal row, constraint row) of a saddle solution.
inline std::pair<double, double> saddle_residuals(const SparseMatrix& s, const SparseMatrix& b,
                                                  const SaddleSolution& sol, const Vector& rhs_primal,
                                                  const Vector& rhs_constraint) {
  const Vector bt_mult = b.transpose() * sol.multiplier;
  const Vector r1 = s * sol.x + bt_mult - rhs_primal;
  const double scale1 = std::max({rhs_primal.norm(), (s * sol.x).norm(), bt_mult.norm(), 1e-300});
  double r2 = 0.0;
  if (b.rows() > 0) {
    const Vector bx = b * sol.x;
    const double scale2 = std::max({rhs_constraint.norm(), max_abs_entry(b) * sol.x.norm(), 1e-300});
    r2 = (bx - rhs_constraint).norm() / scale2;
  }
  return {r1.norm() / scale1, r2};
}

}  // namespace pdaexp
