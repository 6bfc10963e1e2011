#pragma once

// Dense matrix exponential and phi-functions.
//
//   phi_0(z) = e^z,  phi_{k+1}(z) = (phi_k(z) - 1/k!) / z,  phi_k(0) = 1/k!
//
// expm uses scaling and squaring with diagonal Pade approximants of degree
// 3, 5, 7, 9 or 13 (Higham 2005 thresholds, 1-norm).

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "pdaexp/error.hpp"
#include "pdaexp/linalg.hpp"

namespace pdaexp {

inline constexpr int kMaxPhiOrder = 4;

namespace detail {

inline double norm1(const DenseMatrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); }

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

// Returns (U, V) with the Pade approximant r(A) = (V - U)^{-1} (V + U).
template <std::size_t N>
std::pair<DenseMatrix, DenseMatrix> pade_uv(const DenseMatrix& a, const std::array<double, N>& c) {
  const Index n = a.rows();
  const DenseMatrix id = DenseMatrix::Identity(n, n);
  const DenseMatrix a2 = a * a;
  // Even/odd split evaluated with powers of A^2.
  DenseMatrix u = c[1] * id;
  DenseMatrix v = c[0] * id;
  DenseMatrix p = id;
  for (std::size_t j = 2; j < N; j += 2) {
    p = p * a2;
    v += c[j] * p;
    if (j + 1 < N) u += c[j + 1] * p;
  }
  return {a * u, v};
}

inline std::pair<DenseMatrix, DenseMatrix> pade13_uv(const DenseMatrix& a) {
  static constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0,
      129060195264000.0,   10559470521600.0,    670442572800.0,     33522128640.0,
      1323241920.0,        40840800.0,          960960.0,           16380.0,
      182.0,               1.0};
  const Index n = a.rows();
  const DenseMatrix id = DenseMatrix::Identity(n, n);
  const DenseMatrix a2 = a * a;
  const DenseMatrix a4 = a2 * a2;
  const DenseMatrix a6 = a4 * a2;
  const DenseMatrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id;
  const DenseMatrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  return {a * u_inner, v};
}

}  // namespace detail

/// e^H by scaling and squaring. Throws NonFinite on non-finite input or overflow.
inline DenseMatrix expm(const DenseMatrix& h) {
  if (h.rows() != h.cols() || h.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch, "expm: matrix must be square and non-empty");
  if (!h.allFinite()) throw Error(ErrorCode::NonFinite, "expm: non-finite input");

  static constexpr std::array<double, 4> c3 = {120.0, 60.0, 12.0, 1.0};
  static constexpr std::array<double, 6> c5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
  static constexpr std::array<double, 8> c7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                               25200.0,    1512.0,    56.0,      1.0};
  static constexpr std::array<double, 10> c9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
                                                2162160.0,     110880.0,     3960.0,       90.0,        1.0};
  static constexpr double theta3 = 1.495585217958292e-2;
  static constexpr double theta5 = 2.539398330063230e-1;
  static constexpr double theta7 = 9.504178996162932e-1;
  static constexpr double theta9 = 2.097847961257068e0;
  static constexpr double theta13 = 5.371920351148152e0;

  const double nrm = detail::norm1(h);
  std::pair<DenseMatrix, DenseMatrix> uv;
  int squarings = 0;
  if (nrm <= theta3) {
    uv = detail::pade_uv(h, c3);
  } else if (nrm <= theta5) {
    uv = detail::pade_uv(h, c5);
  } else if (nrm <= theta7) {
    uv = detail::pade_uv(h, c7);
  } else if (nrm <= theta9) {
    uv = detail::pade_uv(h, c9);
  } else {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
    uv = detail::pade13_uv(h / std::ldexp(1.0, squarings));
  }
  const auto& [u, v] = uv;
  DenseMatrix r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  if (!r.allFinite()) throw Error(ErrorCode::NonFinite, "expm: overflow");
  return r;
}

/// Scalar phi_k. Uses the Taylor series for |z| < 1 and the recursion otherwise.
inline double phi(int k, double z) {
  if (k < 0 || k > kMaxPhiOrder) throw Error(ErrorCode::OrderTooHigh, "phi: order must be in [0, 4]");
  if (std::abs(z) < 1.0) {
    // phi_k(z) = sum_j z^j / (j + k)!
    double term = 1.0 / detail::factorial(k);
    double sum = term;
    for (int j = 1; j < 60; ++j) {
      term *= z / (j + k);
      sum += term;
      if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
  double value = std::exp(z);
  for (int j = 0; j < k; ++j) value = (value - 1.0 / detail::factorial(j)) / z;
  return value;
}

enum class PhiMethod {
  Auto,       ///< augmented block for ||Z||_1 < 0.5 or ill-conditioned Z, recursion otherwise
  Recursion,  ///< phi_{j+1} = Z^{-1} (phi_j - I/j!)
  Augmented,  ///< top-right block of exp of the (k+1)-block companion embedding
};

/// Matrix phi_k(Z) for 0 <= k <= 4.
inline DenseMatrix phi(int k, const DenseMatrix& z, PhiMethod method = PhiMethod::Auto) {
  if (k < 0 || k > kMaxPhiOrder) throw Error(ErrorCode::OrderTooHigh, "phi: order must be in [0, 4]");
  if (z.rows() != z.cols() || z.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch, "phi: matrix must be square and non-empty");
  const Index n = z.rows();
  if (z.isZero(0.0)) return DenseMatrix(DenseMatrix::Identity(n, n) / detail::factorial(k));
  if (k == 0) return expm(z);

  auto augmented = [&] {
    // [[Z, I, 0, ...], [0, 0, I, ...], ..., [0, ..., 0]]; block (0, k) of its exponential is phi_k(Z).
    DenseMatrix big = DenseMatrix::Zero(n * (k + 1), n * (k + 1));
    big.topLeftCorner(n, n) = z;
    for (int j = 0; j < k; ++j) big.block(j * n, (j + 1) * n, n, n).setIdentity();
    return DenseMatrix(expm(big).block(0, k * n, n, n));
  };

  bool use_recursion = method == PhiMethod::Recursion;
  Eigen::PartialPivLU<DenseMatrix> lu;
  if (method != PhiMethod::Augmented) {
    lu.compute(z);
    const bool singular = !(std::abs(lu.determinant()) > 0.0) || lu.rcond() < 1e-12;
    if (method == PhiMethod::Recursion && singular)
      throw Error(ErrorCode::SingularZ, "phi: recursion path requires invertible Z");
    if (method == PhiMethod::Auto) use_recursion = !singular && detail::norm1(z) >= 0.5;
  }
  if (!use_recursion) return augmented();

  DenseMatrix value = expm(z);
  const DenseMatrix id = DenseMatrix::Identity(n, n);
  for (int j = 0; j < k; ++j) {
    const DenseMatrix shifted = value - id / detail::factorial(j);
    value = lu.solve(shifted);
  }
  return value;
}

/// Solution at time t of u' + A u = sum_k f_k t^{k-1}/(k-1)!, u(0) = u0:
///   u(t) = phi_0(-tA) u0 + sum_k phi_k(-tA) f_k t^k.
inline Vector polyrhs_solution(const DenseMatrix& a, const Vector& u0, std::span<const Vector> f, double t) {
  detail::require_dims(a.rows() == a.cols() && a.rows() == u0.size(), "polyrhs_solution: A/u0 sizes");
  if (static_cast<int>(f.size()) > kMaxPhiOrder)
    throw Error(ErrorCode::OrderTooHigh, "polyrhs_solution: at most 4 polynomial coefficients");
  for (const auto& fk : f) detail::require_dims(fk.size() == u0.size(), "polyrhs_solution: f_k length");
  const DenseMatrix z = -t * a;
  Vector u = expm(z) * u0;
  double tk = 1.0;
  for (std::size_t k = 1; k <= f.size(); ++k) {
    tk *= t;
    if (tk == 0.0) break;
    u += phi(static_cast<int>(k), z) * f[k - 1] * tk;
  }
  return u;
}

}  // namespace pdaexp
