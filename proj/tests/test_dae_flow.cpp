#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pdaexp/dae_flow.hpp"

namespace pdaexp {
namespace {

using testing::sparse;

DaeOperator make_op(const testing::RandomDae& d) { return DaeOperator(sparse(d.m), sparse(d.a), sparse(d.b)); }

Vector consistent_vector(std::mt19937_64& rng, const DenseMatrix& b) {
  return testing::project_euclidean_kernel(b, testing::random_vector(rng, b.cols()));
}

TEST(ApplyX, ZeroMapsToZero) {
  std::mt19937_64 rng(1);
  auto op = make_op(testing::random_dae(rng, 8, 2));
  EXPECT_EQ(apply_X(op, Vector::Zero(8)).norm(), 0.0);
}

TEST(ApplyX, UnconstrainedIsMinusA) {
  std::mt19937_64 rng(2);
  const DenseMatrix a = testing::random_matrix(rng, 5, 5);
  DaeOperator op(sparse_identity(5), sparse(a), SparseMatrix(0, 5));
  const Vector x = testing::random_vector(rng, 5);
  EXPECT_LE((apply_X(op, x) + a * x).norm(), 1e-14);
}

TEST(ApplyX, SmallConstrainedExample) {
  DenseMatrix b(1, 2);
  b << 1, 1;
  DaeOperator op(sparse_identity(2), sparse_identity(2), sparse(b));
  Vector x0(2);
  x0 << 1, -1;
  const Vector y = apply_X(op, x0);
  EXPECT_NEAR(y(0), -1.0, 1e-15);
  EXPECT_NEAR(y(1), 1.0, 1e-15);
  EXPECT_NEAR(op.multiplier(x0)(0), 0.0, 1e-15);
}

TEST(ApplyX, OutputSatisfiesConstraint) {
  std::mt19937_64 rng(3);
  auto d = testing::random_dae(rng, 20, 3, false);
  auto op = make_op(d);
  for (int i = 0; i < 5; ++i) {
    const Vector y = apply_X(op, consistent_vector(rng, d.b));
    EXPECT_LE(constraint_drift(sparse(d.b), y), 1e-11);
  }
}

TEST(Arnoldi, EigenvectorBreaksDownAtOne) {
  // M = I, A = diag(1,2,3), B = [0 0 1]: e1 is an eigenvector of X with eigenvalue -1.
  DenseMatrix a = DenseMatrix::Zero(3, 3);
  a.diagonal() << 1, 2, 3;
  DenseMatrix b(1, 3);
  b << 0, 0, 1;
  DaeOperator op(sparse_identity(3), sparse(a), sparse(b));
  auto res = arnoldi(op, Vector::Unit(3, 0), 10);
  EXPECT_TRUE(res.exact);
  ASSERT_EQ(res.hessenberg.rows(), 1);
  EXPECT_NEAR(res.hessenberg(0, 0), -1.0, 1e-15);
}

TEST(Arnoldi, SingleStepIsRayleighQuotient) {
  std::mt19937_64 rng(4);
  auto d = testing::random_dae(rng, 10, 2);
  auto op = make_op(d);
  const Vector x = consistent_vector(rng, d.b);
  auto res = arnoldi(op, x, 1);
  const Vector v = x / x.norm();
  EXPECT_NEAR(res.hessenberg(0, 0), v.dot(apply_X(op, v)), 1e-13);
}

TEST(Arnoldi, ZeroInitialVector) {
  std::mt19937_64 rng(5);
  auto op = make_op(testing::random_dae(rng, 6, 1));
  try {
    arnoldi(op, Vector::Zero(6), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroInitialVector);
  }
}

TEST(Arnoldi, OrthonormalityAndRelation) {
  std::mt19937_64 rng(6);
  auto d = testing::random_dae(rng, 20, 2);
  auto op = make_op(d);
  const Vector x = consistent_vector(rng, d.b);
  auto res = arnoldi(op, x, 12);
  const Index r = res.basis.cols();
  EXPECT_EQ(r, 12);
  EXPECT_LE((res.basis.transpose() * res.basis - DenseMatrix::Identity(r, r)).norm(), 1e-10);
  DenseMatrix xv(20, r);
  for (Index j = 0; j < r; ++j) xv.col(j) = apply_X(op, res.basis.col(j));
  DenseMatrix rel = res.basis * res.hessenberg;
  rel.col(r - 1) += res.h_next * res.next_vector;
  EXPECT_LE((xv - rel).norm(), 1e-9 * xv.norm());
}

TEST(Flow, ZeroTimeIsIdentity) {
  std::mt19937_64 rng(7);
  auto d = testing::random_dae(rng, 10, 2);
  const Vector x = consistent_vector(rng, d.b);
  auto res = flow(make_op(d), x, 0.0);
  EXPECT_EQ(res.x_t, x);
}

TEST(Flow, InconsistentStartRejected) {
  std::mt19937_64 rng(8);
  auto d = testing::random_dae(rng, 10, 2);
  try {
    flow(make_op(d), testing::random_vector(rng, 10), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentState);
  }
}

TEST(Flow, UnconstrainedMatchesDenseExponential) {
  std::mt19937_64 rng(9);
  const DenseMatrix a = testing::random_spd(rng, 80, 0.1, 50.0);
  DaeOperator op(sparse_identity(80), sparse(a), SparseMatrix(0, 80));
  const Vector x0 = testing::random_vector(rng, 80);
  for (double t : {0.01, 0.3, 1.0}) {
    auto res = flow(op, x0, t, {.tol = 1e-10});
    const Vector ref = (-t * a).exp() * x0;
    EXPECT_LE((res.x_t - ref).norm(), 1e-9) << "t=" << t;
    EXPECT_LE(res.residual_estimate, 1e-10);
  }
}

TEST(Flow, MatchesKernelReductionOracle) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 10 + static_cast<Index>(rng() % 90);
    const Index m = 1 + static_cast<Index>(rng() % 5);
    auto d = testing::random_dae(rng, n, m, trial % 2 == 0);
    const Vector x0 = consistent_vector(rng, d.b);
    auto res = flow(make_op(d), x0, 1.0, {.tol = 1e-10});
    const Vector ref = testing::kernel_reduction_flow(d.m, d.a, d.b, x0, 1.0);
    EXPECT_LE((res.x_t - ref).norm(), 1e-8 * ref.norm()) << "trial " << trial;
    EXPECT_LE((d.b * res.x_t).norm(), 1e-10 * res.x_t.norm());
    EXPECT_LE(res.drift_before_projection, 1e-7);
  }
}

TEST(Flow, SmallBasisCapForcesSubsteps) {
  std::mt19937_64 rng(11);
  auto d = testing::random_dae(rng, 40, 3);
  d.a *= 20.0;
  const Vector x0 = consistent_vector(rng, d.b);
  auto res = flow(make_op(d), x0, 1.0, {.tol = 1e-10, .r_max = 8});
  EXPECT_GT(res.substeps, 1);
  EXPECT_LE(res.basis_size, 8);
  const Vector ref = testing::kernel_reduction_flow(d.m, d.a, d.b, x0, 1.0);
  EXPECT_LE((res.x_t - ref).norm(), 1e-8 * std::max(ref.norm(), 1e-3 * x0.norm()));
}

TEST(Flow, SubstepLimitReportsNoConvergence) {
  std::mt19937_64 rng(12);
  auto d = testing::random_dae(rng, 40, 3);
  // M = I and skew A: X is skew on ker B, so nothing decays and r = 2 is far too small.
  d.m = DenseMatrix::Identity(40, 40);
  const DenseMatrix k = testing::random_matrix(rng, 40, 40);
  d.a = 200.0 * (k - k.transpose());
  const Vector x0 = consistent_vector(rng, d.b);
  try {
    flow(make_op(d), x0, 1.0, {.tol = 1e-14, .r_max = 2, .max_halvings = 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
  }
}

TEST(Flow, SemigroupAndLinearity) {
  std::mt19937_64 rng(13);
  auto d = testing::random_dae(rng, 30, 2, false);
  auto op = make_op(d);
  const Vector x0 = consistent_vector(rng, d.b), y0 = consistent_vector(rng, d.b);
  const Vector whole = flow(op, x0, 0.8).x_t;
  const Vector split = flow(op, flow(op, x0, 0.3).x_t, 0.5).x_t;
  EXPECT_LE((whole - split).norm(), 1e-7 * whole.norm());
  const double alpha = 0.7, beta = -2.3;
  const Vector lin = flow(op, alpha * x0 + beta * y0, 0.8).x_t;
  const Vector sum = alpha * whole + beta * flow(op, y0, 0.8).x_t;
  EXPECT_LE((lin - sum).norm(), 1e-8 * sum.norm());
}

TEST(Flow, MultiplierRecovery) {
  std::mt19937_64 rng(14);
  auto d = testing::random_dae(rng, 12, 2);
  auto op = make_op(d);
  const Vector x0 = consistent_vector(rng, d.b);
  auto res = flow(op, x0, 0.5, {.recover_multiplier = true});
  ASSERT_TRUE(res.multiplier.has_value());
  // M x' + A x + B^T lambda = 0 with x' = X x.
  const Vector resid = d.m * apply_X(op, res.x_t) + d.a * res.x_t + d.b.transpose() * *res.multiplier;
  EXPECT_LE(resid.norm(), 1e-12 * (d.a * res.x_t).norm());
}

}  // namespace
}  // namespace pdaexp
