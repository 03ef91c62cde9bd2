#pragma once

/**
 * @file tensor_core.hpp
 *
 * @brief Small-tensor algebra for order tensors Q, step-length tensors L and
 * effective deformation tensors G = L^{-1/2} F.
 *
 * Order tensors are stored as 5 coefficients in the orthonormal basis
 *
 *   E0 = diag(1,-1,0)/sqrt(2)          E1 = diag(-1,-1,2)/sqrt(6)
 *   E2 = (e1 e2^T + e2 e1^T)/sqrt(2)   E3 = (e1 e3^T + e3 e1^T)/sqrt(2)
 *   E4 = (e2 e3^T + e3 e2^T)/sqrt(2)
 *
 * of symmetric traceless 3x3 matrices, so |Q|_F equals the Euclidean norm of
 * the coefficient vector.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "lce/errors.hpp"

namespace lce {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b)
{
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Dense row-major 3x3 matrix. Carrier for F, G, adj G, L and friends.
struct Mat3 {
  std::array<double, 9> a{};

  double& operator()(int i, int j) { return a[3 * i + j]; }
  double operator()(int i, int j) const { return a[3 * i + j]; }

  static Mat3 zero() { return {}; }
  static Mat3 identity() { return diag(1.0, 1.0, 1.0); }
  static Mat3 diag(double d0, double d1, double d2)
  {
    Mat3 m;
    m(0, 0) = d0;
    m(1, 1) = d1;
    m(2, 2) = d2;
    return m;
  }
  static Mat3 outer(const Vec3& u, const Vec3& v)
  {
    Mat3 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = u[i] * v[j];
    return m;
  }
  /// Matrix with columns c0, c1, c2.
  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2)
  {
    Mat3 m;
    for (int i = 0; i < 3; ++i) {
      m(i, 0) = c0[i];
      m(i, 1) = c1[i];
      m(i, 2) = c2[i];
    }
    return m;
  }

  Vec3 column(int j) const { return {a[j], a[3 + j], a[6 + j]}; }

  Mat3& operator+=(const Mat3& o)
  {
    for (int k = 0; k < 9; ++k) a[k] += o.a[k];
    return *this;
  }
  Mat3& operator-=(const Mat3& o)
  {
    for (int k = 0; k < 9; ++k) a[k] -= o.a[k];
    return *this;
  }
  Mat3& operator*=(double s)
  {
    for (double& v : a) v *= s;
    return *this;
  }
};

inline Mat3 operator+(Mat3 x, const Mat3& y) { return x += y; }
inline Mat3 operator-(Mat3 x, const Mat3& y) { return x -= y; }
inline Mat3 operator*(double s, Mat3 x) { return x *= s; }
inline Mat3 operator*(const Mat3& x, const Mat3& y)
{
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = x(i, 0) * y(0, j) + x(i, 1) * y(1, j) + x(i, 2) * y(2, j);
  return r;
}
inline Vec3 operator*(const Mat3& m, const Vec3& v)
{
  return {m(0, 0) * v[0] + m(0, 1) * v[1] + m(0, 2) * v[2], m(1, 0) * v[0] + m(1, 1) * v[1] + m(1, 2) * v[2],
          m(2, 0) * v[0] + m(2, 1) * v[1] + m(2, 2) * v[2]};
}

inline Mat3 transpose(const Mat3& m)
{
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t(i, j) = m(j, i);
  return t;
}
inline double trace(const Mat3& m) { return m(0, 0) + m(1, 1) + m(2, 2); }
inline double det(const Mat3& m)
{
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}
/// Cofactor matrix: cof(M) = det(M) M^{-T} for invertible M.
inline Mat3 cofactor(const Mat3& m)
{
  Mat3 c;
  c(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  c(0, 1) = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
  c(0, 2) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
  c(1, 0) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
  c(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  c(1, 2) = m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1);
  c(2, 0) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  c(2, 1) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
  c(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return c;
}
/// Adjugate: M adj(M) = det(M) I.
inline Mat3 adj(const Mat3& m) { return transpose(cofactor(m)); }
inline Mat3 inverse(const Mat3& m) { return (1.0 / det(m)) * adj(m); }
inline double frob2(const Mat3& m)
{
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return s;
}
inline double frob(const Mat3& m) { return std::sqrt(frob2(m)); }
/// Frobenius inner product tr(X^T Y).
inline double ddot(const Mat3& x, const Mat3& y)
{
  double s = 0.0;
  for (int k = 0; k < 9; ++k) s += x.a[k] * y.a[k];
  return s;
}
inline Mat3 sym(const Mat3& m) { return 0.5 * (m + transpose(m)); }

/// Given X = dg/d(cof M), returns dg/dM for a scalar g(cof M).
/// Uses cof(M)_ij = 1/2 eps_imn eps_jpq M_mp M_nq.
inline Mat3 cofactor_pullback(const Mat3& m, const Mat3& x)
{
  // d cof_ij = eps_imn eps_jpq M_mp dM_nq
  static constexpr int perm[6][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}, {0, 2, 1}, {2, 1, 0}, {1, 0, 2}};
  static constexpr double sgn[6] = {1, 1, 1, -1, -1, -1};
  Mat3 out;
  for (int a = 0; a < 6; ++a) {
    const int i = perm[a][0], mm = perm[a][1], n = perm[a][2];
    for (int b = 0; b < 6; ++b) {
      const int j = perm[b][0], p = perm[b][1], q = perm[b][2];
      out(n, q) += sgn[a] * sgn[b] * x(i, j) * m(mm, p);
    }
  }
  return out;
}

struct Minors {
  Mat3 m;
  Mat3 adj;
  double det;
};

/// The triple (M, adj M, det M) on which polyconvex energies depend.
inline Minors matrix_minors(const Mat3& m) { return {m, adj(m), det(m)}; }

// ---------------------------------------------------------------------------
// Symmetric eigenproblem

struct SymEig {
  Vec3 values{};  ///< ascending
  Mat3 vectors;  ///< column i pairs with values[i]
};

namespace detail {

inline void require_symmetric(const Mat3& s, const char* who)
{
  const double tol = 1e-12 * std::max(1.0, frob(s));
  if (std::abs(s(0, 1) - s(1, 0)) > tol || std::abs(s(0, 2) - s(2, 0)) > tol || std::abs(s(1, 2) - s(2, 1)) > tol) {
    throw PreconditionError(std::string(who) + ": matrix is not symmetric");
  }
}

inline SymEig sort_eig(Vec3 vals, const Mat3& vecs)
{
  std::array<int, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) { return vals[x] < vals[y]; });
  SymEig out;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = vals[idx[k]];
    for (int i = 0; i < 3; ++i) out.vectors(i, k) = vecs(i, idx[k]);
  }
  return out;
}

/// Cyclic Jacobi; robust for clustered eigenvalues.
inline SymEig jacobi_eig(const Mat3& s)
{
  Mat3 a = sym(s);
  Mat3 v = Mat3::identity();
  const double scale = frob(a);
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off <= 1e-34 * scale * scale || off == 0.0) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        Mat3 j = Mat3::identity();
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = sn;
        j(q, p) = -sn;
        a = transpose(j) * a * j;
        a(p, q) = a(q, p) = 0.0;
        v = v * j;
      }
    }
  }
  return sort_eig({a(0, 0), a(1, 1), a(2, 2)}, v);
}

/// Null vector of (S - lambda I) from the largest pairwise row cross product.
inline Vec3 null_vector(const Mat3& s, double lambda)
{
  const Vec3 r0{s(0, 0) - lambda, s(0, 1), s(0, 2)};
  const Vec3 r1{s(1, 0), s(1, 1) - lambda, s(1, 2)};
  const Vec3 r2{s(2, 0), s(2, 1), s(2, 2) - lambda};
  const std::array<Vec3, 3> c{cross(r0, r1), cross(r0, r2), cross(r1, r2)};
  int best = 0;
  double best_n = dot(c[0], c[0]);
  for (int k = 1; k < 3; ++k) {
    const double n = dot(c[k], c[k]);
    if (n > best_n) {
      best_n = n;
      best = k;
    }
  }
  return (1.0 / std::sqrt(best_n)) * c[best];
}

}  // namespace detail

/// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues ascending.
///
/// Trigonometric closed form; falls back to Jacobi sweeps when two
/// eigenvalues are within 1e-8 |S| of each other or the closed-form residual
/// is poor. Diagonal input is returned exactly (sorted, identity columns).
inline SymEig sym_eig3(const Mat3& s)
{
  detail::require_symmetric(s, "sym_eig3");
  const double p1 = s(0, 1) * s(0, 1) + s(0, 2) * s(0, 2) + s(1, 2) * s(1, 2);
  if (p1 == 0.0) return detail::sort_eig({s(0, 0), s(1, 1), s(2, 2)}, Mat3::identity());

  const Mat3 ss = sym(s);
  const double norm_s = frob(ss);
  const double q = trace(ss) / 3.0;
  const double p2 = (ss(0, 0) - q) * (ss(0, 0) - q) + (ss(1, 1) - q) * (ss(1, 1) - q) +
                    (ss(2, 2) - q) * (ss(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  const Mat3 b = (1.0 / p) * (ss - q * Mat3::identity());
  const double r = std::clamp(det(b) / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double hi = q + 2.0 * p * std::cos(phi);
  const double lo = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double mid = 3.0 * q - hi - lo;

  const double gap = std::min(hi - mid, mid - lo);
  if (gap < 1e-8 * norm_s) return detail::jacobi_eig(ss);

  Vec3 v_lo = detail::null_vector(ss, lo);
  Vec3 v_hi = detail::null_vector(ss, hi);
  v_hi = v_hi - dot(v_hi, v_lo) * v_lo;
  v_hi = (1.0 / norm(v_hi)) * v_hi;
  const Vec3 v_mid = cross(v_hi, v_lo);

  SymEig out;
  out.vectors = Mat3::from_columns(v_lo, v_mid, v_hi);
  for (int k = 0; k < 3; ++k) {
    const Vec3 v = out.vectors.column(k);
    out.values[k] = dot(v, ss * v);
  }
  double resid = 0.0;
  for (int k = 0; k < 3; ++k) {
    const Vec3 v = out.vectors.column(k);
    resid = std::max(resid, norm(ss * v - out.values[k] * v));
  }
  if (resid > 1e-11 * norm_s || !(out.values[0] <= out.values[1] && out.values[1] <= out.values[2])) {
    return detail::jacobi_eig(ss);
  }
  return out;
}

/// V f(Lambda) V^T for symmetric S.
template <class Fn>
Mat3 spectral_map(const SymEig& e, Fn&& f)
{
  Mat3 out;
  for (int k = 0; k < 3; ++k) {
    const Vec3 v = e.vectors.column(k);
    out += f(e.values[k]) * Mat3::outer(v, v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Order tensors

namespace detail {
inline constexpr double inv_sqrt2 = 0.70710678118654752440;
inline constexpr double inv_sqrt6 = 0.40824829046386301637;
}  // namespace detail

/// Symmetric traceless order tensor in the orthonormal 5-coefficient basis.
struct QTensor {
  std::array<double, 5> c{};

  static QTensor zero() { return {}; }

  Mat3 matrix() const
  {
    using detail::inv_sqrt2;
    using detail::inv_sqrt6;
    Mat3 m;
    m(0, 0) = c[0] * inv_sqrt2 - c[1] * inv_sqrt6;
    m(1, 1) = -c[0] * inv_sqrt2 - c[1] * inv_sqrt6;
    m(2, 2) = -(m(0, 0) + m(1, 1));
    m(0, 1) = m(1, 0) = c[2] * inv_sqrt2;
    m(0, 2) = m(2, 0) = c[3] * inv_sqrt2;
    m(1, 2) = m(2, 1) = c[4] * inv_sqrt2;
    return m;
  }

  /// Orthogonal projection of a matrix onto the basis. Throws unless the
  /// input is symmetric and traceless to within 1e-10 |M|.
  static QTensor from_matrix(const Mat3& m)
  {
    const double tol = 1e-10 * std::max(1.0, frob(m));
    if (std::abs(trace(m)) > tol) throw PreconditionError("QTensor::from_matrix: matrix is not traceless");
    detail::require_symmetric(m, "QTensor::from_matrix");
    return project(m);
  }

  /// Coefficients <M, E_n> without validation; the symmetric traceless part
  /// of M is what survives.
  static QTensor project(const Mat3& m)
  {
    using detail::inv_sqrt2;
    using detail::inv_sqrt6;
    QTensor q;
    q.c[0] = (m(0, 0) - m(1, 1)) * inv_sqrt2;
    q.c[1] = (2.0 * m(2, 2) - m(0, 0) - m(1, 1)) * inv_sqrt6;
    q.c[2] = (m(0, 1) + m(1, 0)) * inv_sqrt2;
    q.c[3] = (m(0, 2) + m(2, 0)) * inv_sqrt2;
    q.c[4] = (m(1, 2) + m(2, 1)) * inv_sqrt2;
    return q;
  }

  /// Basis element E_n as a matrix.
  static Mat3 basis(int n)
  {
    QTensor q;
    q.c[n] = 1.0;
    return q.matrix();
  }

  double norm() const
  {
    double s = 0.0;
    for (double v : c) s += v * v;
    return std::sqrt(s);
  }

  QTensor& operator+=(const QTensor& o)
  {
    for (int k = 0; k < 5; ++k) c[k] += o.c[k];
    return *this;
  }
  QTensor& operator*=(double s)
  {
    for (double& v : c) v *= s;
    return *this;
  }
};

inline QTensor operator+(QTensor x, const QTensor& y) { return x += y; }
inline QTensor operator*(double s, QTensor x) { return x *= s; }
inline QTensor operator-(const QTensor& x, const QTensor& y) { return x + (-1.0) * y; }

inline Vec3 eigenvalues(const QTensor& q) { return sym_eig3(q.matrix()).values; }

namespace detail {
inline void require_unit(const Vec3& n, double tol, const char* who)
{
  if (std::abs(norm(n) - 1.0) > tol) throw PreconditionError(std::string(who) + ": direction is not a unit vector");
}
}  // namespace detail

/// Q = s (n n^T - I/3); eigenvalues {-s/3, -s/3, 2s/3}.
inline QTensor uniaxial_q(double s, const Vec3& n)
{
  detail::require_unit(n, 1e-12, "uniaxial_q");
  Mat3 m = s * Mat3::outer(n, n);
  for (int i = 0; i < 3; ++i) m(i, i) -= s / 3.0;
  return QTensor::project(m);
}

/// Q = r (e1 e1^T - I/3) + s (e2 e2^T - I/3) for an orthonormal pair (e1, e2).
inline QTensor biaxial_q(double r, double s, const Vec3& e1, const Vec3& e2)
{
  detail::require_unit(e1, 1e-10, "biaxial_q");
  detail::require_unit(e2, 1e-10, "biaxial_q");
  if (std::abs(dot(e1, e2)) > 1e-10) throw PreconditionError("biaxial_q: frame is not orthogonal");
  Mat3 m = r * Mat3::outer(e1, e1) + s * Mat3::outer(e2, e2);
  for (int i = 0; i < 3; ++i) m(i, i) -= (r + s) / 3.0;
  return QTensor::project(m);
}

/// Biaxial order parameters from the eigenvalues, indexed
/// lambda1 >= lambda2 >= lambda3:
///   s = lambda1 - lambda3,  r = lambda2 - lambda3,
/// together with the trace-reduced forms s_alt = 2 lambda1 + lambda2 and
/// r_alt = lambda1 + 2 lambda2, which agree with s, r for traceless Q.
/// Under this ordering a prolate uniaxial Q = s(n n^T - I/3), s > 0, maps to
/// (s, 0); an oblate one (s < 0) maps to (|s|, |s|).
struct OrderParams {
  double s;
  double r;
  double s_alt;
  double r_alt;
};

inline OrderParams order_params(const QTensor& q)
{
  const Vec3 ev = eigenvalues(q);
  const double l1 = ev[2], l2 = ev[1], l3 = ev[0];
  return {l1 - l3, l2 - l3, 2.0 * l1 + l2, l1 + 2.0 * l2};
}

/// lambda_min(Q) >= -1/3 + margin (strictly > -1/3 when margin == 0) and
/// lambda_max(Q) <= 2/3. A 1e-12 slack absorbs eigen-solver roundoff at the
/// closed ends so that exact boundary states (e.g. uniaxial s = 1) are
/// rejected.
inline bool in_q_set(const QTensor& q, double margin)
{
  const Vec3 ev = eigenvalues(q);
  constexpr double slack = 1e-12;
  const double lo = -1.0 / 3.0 + std::max(margin, slack);
  return ev[0] >= lo && ev[2] <= 2.0 / 3.0 + slack;
}

// ---------------------------------------------------------------------------
// Step-length tensors

/// L = a0 (Q + I/3); tr L = a0.
struct StepTensor {
  Mat3 m;
  double a0;
};

inline StepTensor step_tensor(const QTensor& q, double a0)
{
  if (!(a0 > 0.0)) throw PreconditionError("step_tensor: a0 must be positive");
  Mat3 m = q.matrix();
  for (int i = 0; i < 3; ++i) m(i, i) += 1.0 / 3.0;
  return {a0 * m, a0};
}

/// Q recovered from L via Q = L/a0 - I/3.
inline QTensor order_tensor(const StepTensor& l)
{
  Mat3 m = (1.0 / l.a0) * l.m;
  for (int i = 0; i < 3; ++i) m(i, i) -= 1.0 / 3.0;
  return QTensor::project(m);
}

/// Symmetric M with M L M = I.
inline Mat3 inv_sqrt(const StepTensor& l)
{
  const SymEig e = sym_eig3(l.m);
  if (!(e.values[0] > 0.0)) {
    std::ostringstream os;
    os << "inv_sqrt: step tensor is not positive definite (lambda_min = " << e.values[0] << ")";
    throw SingularityError(os.str(), e.values[0]);
  }
  return spectral_map(e, [](double v) { return 1.0 / std::sqrt(v); });
}

/// Principal square root of a symmetric positive definite matrix.
inline Mat3 spd_sqrt(const Mat3& s)
{
  const SymEig e = sym_eig3(s);
  if (!(e.values[0] > 0.0)) throw SingularityError("spd_sqrt: matrix is not positive definite", e.values[0]);
  return spectral_map(e, [](double v) { return std::sqrt(v); });
}

/// G = L^{-1/2} F.
inline Mat3 effective_deformation(const Mat3& f, const StepTensor& l)
{
  const double jf = det(f);
  if (!(jf > 0.0)) throw OrientationError("effective_deformation: det F must be positive", jf);
  return inv_sqrt(l) * f;
}

}  // namespace lce
