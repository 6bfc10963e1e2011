#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"
#include "pdaexp/linalg.hpp"
#include "pdaexp/matrix_market.hpp"

namespace pdaexp {
namespace {

using testing::dense;
using testing::sparse;

SparseMatrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r ? static_cast<Index>(rows.begin()->size()) : 0;
  DenseMatrix d(r, c);
  Index i = 0;
  for (auto row : rows) {
    Index j = 0;
    for (double v : row) d(i, j++) = v;
    ++i;
  }
  return sparse(d);
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(SparseMatrix, TripletsAreFinalized) {
  std::vector<Triplet> t = {{0, 1, 2.0}, {0, 1, 3.0}, {1, 0, 0.0}, {1, 1, 1.0}, {0, 0, 1.0}, {1, 0, 4.0}, {1, 0, -4.0}};
  SparseMatrix a = sparse_from_triplets(2, 2, t);
  EXPECT_TRUE(satisfies_csr_invariants(a));
  EXPECT_EQ(a.nonZeros(), 3);
  EXPECT_DOUBLE_EQ(a.coeff(0, 1), 5.0);
}

TEST(SparseMatrix, SpmvExamples) {
  const Vector v = vec({1.0, -2.0, 3.5});
  EXPECT_EQ(spmv(sparse_identity(3), v), v);
  EXPECT_EQ(spmv(SparseMatrix(3, 3), v), Vector::Zero(3));
  EXPECT_EQ(spmv(mat({{1, 2}, {3, 4}}), vec({1, 1})), vec({3, 7}));
}

TEST(SparseMatrix, SpmvDimensionMismatch) {
  try {
    spmv(sparse_identity(3), Vector::Ones(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(Saddle, IdentityWithSingleConstraint) {
  auto f = assemble_saddle(sparse_identity(2), mat({{1, 0}}));
  EXPECT_EQ(dense(f.block_matrix()), dense(mat({{1, 0, 1}, {0, 1, 0}, {1, 0, 0}})));
  auto sol = f.solve(Vector::Zero(2), vec({1}));
  EXPECT_NEAR(sol.x(0), 1.0, 1e-15);
  EXPECT_NEAR(sol.x(1), 0.0, 1e-15);
  EXPECT_NEAR(sol.multiplier(0), -1.0, 1e-15);
}

TEST(Saddle, NoConstraintsIsPlainSolve) {
  auto f = assemble_saddle(sparse_identity(1), SparseMatrix(0, 1));
  EXPECT_EQ(f.constraint_size(), 0);
  auto sol = f.solve(vec({3.0}), Vector(0));
  EXPECT_DOUBLE_EQ(sol.x(0), 3.0);
  EXPECT_EQ(sol.multiplier.size(), 0);
}

TEST(Saddle, ZeroPrimalBlock) {
  SparseMatrix s(1, 1);
  auto f = assemble_saddle(s, mat({{1}}));
  auto sol = f.solve(vec({1}), vec({2}));
  EXPECT_NEAR(sol.x(0), 2.0, 1e-15);
  EXPECT_NEAR(sol.multiplier(0), 1.0, 1e-15);
}

TEST(Saddle, HomogeneousRhsGivesZero) {
  std::mt19937_64 rng(3);
  auto d = testing::random_dae(rng, 10, 2);
  auto f = assemble_saddle(sparse(d.a), sparse(d.b));
  auto sol = f.solve(Vector::Zero(10), Vector::Zero(2));
  EXPECT_EQ(sol.x.norm(), 0.0);
  EXPECT_EQ(sol.multiplier.norm(), 0.0);
}

TEST(Saddle, RandomSpdMatchesDenseOracle) {
  std::mt19937_64 rng(7);
  const DenseMatrix s = testing::random_spd(rng, 20, 0.5, 4.0);
  const DenseMatrix b = testing::random_matrix(rng, 3, 20);
  const Vector r1 = testing::random_vector(rng, 20);
  const Vector r2 = testing::random_vector(rng, 3);
  auto f = assemble_saddle(sparse(s), sparse(b));
  auto sol = f.solve(r1, r2);
  auto [res1, res2] = saddle_residuals(sparse(s), sparse(b), sol, r1, r2);
  EXPECT_LE(res1, 1e-10);
  EXPECT_LE(res2, 1e-10);
  auto [xo, mo] = testing::dense_saddle_solve(s, b, r1, r2);
  EXPECT_LE((sol.x - xo).norm(), 1e-12 * xo.norm());
  EXPECT_LE((sol.multiplier - mo).norm(), 1e-12 * mo.norm());
}

TEST(Saddle, BminusIsAOrthogonalToKernel) {
  std::mt19937_64 rng(11);
  auto d = testing::random_dae(rng, 15, 3);
  auto f = assemble_saddle(sparse(d.a), sparse(d.b));
  const Vector g = testing::random_vector(rng, 3);
  const Vector x = f.solve(Vector::Zero(15), g).x;
  EXPECT_LE((d.b * x - g).norm(), 1e-12 * g.norm());
  const DenseMatrix z = testing::kernel_basis(d.b);
  EXPECT_LE((z.transpose() * d.a * x).norm(), 1e-10 * (d.a * x).norm());
}

TEST(Saddle, RankDeficientConstraintRejected) {
  DenseMatrix b(2, 3);
  b << 1, 2, 3, 2, 4, 6;
  try {
    assemble_saddle(sparse_identity(3), sparse(b));
    FAIL() << "expected SingularSaddle";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularSaddle);
  }
}

TEST(Saddle, SingularOnKernelRejected) {
  // S = diag(1, 0), B = [1 0]: S vanishes on ker B.
  DenseMatrix s = DenseMatrix::Zero(2, 2);
  s(0, 0) = 1.0;
  EXPECT_THROW(assemble_saddle(sparse(s), mat({{1, 0}})), Error);
}

TEST(Saddle, SolveDimensionMismatch) {
  auto f = assemble_saddle(sparse_identity(2), mat({{1, 0}}));
  EXPECT_THROW(f.solve(Vector::Zero(3), vec({1})), Error);
  EXPECT_THROW(f.solve(Vector::Zero(2), Vector::Zero(2)), Error);
}

// Property: S SPD on ker B (here SPD everywhere or indefinite off the kernel)
// and full-rank B always factor and match a dense oracle.
TEST(Saddle, RandomizedInstancesAgainstDenseOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 3 + static_cast<Index>(rng() % 25);
    const Index m = 1 + static_cast<Index>(rng() % std::min<Index>(n - 1, 5));
    const DenseMatrix z = testing::random_matrix(rng, n, n);
    DenseMatrix s = testing::random_spd(rng, n, 0.1, 3.0);
    if (trial % 2) s += 0.2 * (z - z.transpose());
    const DenseMatrix b = testing::random_matrix(rng, m, n);
    const Vector r1 = testing::random_vector(rng, n), r2 = testing::random_vector(rng, m);
    auto sol = assemble_saddle(sparse(s), sparse(b)).solve(r1, r2);
    auto [res1, res2] = saddle_residuals(sparse(s), sparse(b), sol, r1, r2);
    EXPECT_LE(res1, 1e-10) << "trial " << trial;
    EXPECT_LE(res2, 1e-10) << "trial " << trial;
    auto [xo, mo] = testing::dense_saddle_solve(s, b, r1, r2);
    EXPECT_LE((sol.x - xo).norm(), 1e-9 * xo.norm()) << "trial " << trial;
  }
}

TEST(KernelProject, Examples) {
  auto f = assemble_saddle(sparse_identity(2), mat({{1, 0}}));
  const Vector p = kernel_project(f, vec({1, 1}));
  EXPECT_NEAR(p(0), 0.0, 1e-15);
  EXPECT_NEAR(p(1), 1.0, 1e-15);
  const Vector k = vec({0, 3});
  EXPECT_LE((kernel_project(f, k) - k).norm(), 1e-15);
}

TEST(KernelProject, IdempotentAndInKernel) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = testing::random_dae(rng, 30, 4);
    auto f = assemble_saddle(sparse(d.m), sparse(d.b));
    const Vector x = testing::random_vector(rng, 30);
    const Vector p = kernel_project(f, x);
    EXPECT_LE((d.b * p).norm(), 1e-12 * x.norm());
    EXPECT_LE((kernel_project(f, p) - p).norm(), 1e-12 * p.norm());
    // M-orthogonality of the removed part against the kernel.
    const DenseMatrix z = testing::kernel_basis(d.b);
    EXPECT_LE((z.transpose() * d.m * (x - p)).norm(), 1e-12 * x.norm());
  }
}

TEST(MatrixMarket, GeneralAndSymmetric) {
  std::istringstream general(
      "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 3\n1 1 1.5\n2 3 -2\n1 2 4\n");
  SparseMatrix g = read_matrix_market(general);
  EXPECT_EQ(g.rows(), 2);
  EXPECT_EQ(g.cols(), 3);
  EXPECT_DOUBLE_EQ(g.coeff(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(g.coeff(1, 2), -2.0);
  EXPECT_DOUBLE_EQ(g.coeff(0, 1), 4.0);

  std::istringstream sym("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n2 1 -1\n");
  SparseMatrix s = read_matrix_market(sym);
  EXPECT_DOUBLE_EQ(s.coeff(0, 1), -1.0);
  EXPECT_DOUBLE_EQ(s.coeff(1, 0), -1.0);
  EXPECT_TRUE(is_symmetric(s));
  EXPECT_TRUE(satisfies_csr_invariants(s));
}

TEST(MatrixMarket, RejectsUnsupported) {
  std::istringstream arr("%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n");
  EXPECT_THROW(read_matrix_market(arr), Error);
  std::istringstream short_file("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n");
  EXPECT_THROW(read_matrix_market(short_file), Error);
}

TEST(Spd, Detection) {
  EXPECT_TRUE(is_spd(sparse_identity(4)));
  EXPECT_FALSE(is_spd(mat({{1, 2}, {2, 1}})));
  EXPECT_FALSE(is_spd(mat({{1, 2}, {0, 1}})));
}

}  // namespace
}  // namespace pdaexp
