#pragma once

/**
 * @file energy_model.hpp
 *
 * @brief Pointwise energy densities of the elastomer model and their analytic
 * derivatives.
 *
 * Elastic part, as a function of the effective deformation G = L^{-1/2} F:
 *
 *   W(G) = mu (|G|^2 - 1) + alpha |G|^p + c_adj |adj G|^{p/2} + c_det (det G - 1)^2
 *
 * Gradient part, with B_ijk = dQ_ij/dy_k:
 *
 *   L(B, Q) = L1 I1 + L2 I2 + L3 I3 + L4 I4 + kappa |B|^r
 *
 * Bulk part: quartic Landau polynomial plus the log-determinant barrier
 * -eps ln(27 det(Q + I/3)), shifted to be nonnegative.
 */

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>

#include "lce/errors.hpp"
#include "lce/tensor_core.hpp"

namespace lce {

/// Third-order array T_ijk stored at (3 i + j) 3 + k.
using Tensor3 = std::array<double, 27>;

constexpr int t3(int i, int j, int k) { return (3 * i + j) * 3 + k; }

enum class GrowthRegime {
  strict,     ///< r > max{3, p/(p-3)}
  quadratic,  ///< any r >= 2; the discrete problem remains well posed
};

struct EnergyParams {
  double mu = 1.0;
  double a0 = 3.0;
  double alpha_coer = 0.0;
  double c_adj = 0.0;
  double c_det = 0.0;
  double p = 4.0;
  double kappa = 0.0;
  double r_exp = 6.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.01;
  double l4 = 0.0;
  double a_T = -1.5;
  double b = 2.0;
  double c = 1.0;
  double eps_barrier = 0.15;
  double delta0 = 0.1;
  double sigma = 0.0;
  QTensor q0_surface{};
  GrowthRegime growth_regime = GrowthRegime::strict;

  /// Constant added to quartic + barrier so that the bulk density is
  /// nonnegative. Filled by prepared(); computed on demand when empty.
  std::optional<double> bulk_shift{};

  /// Integrability exponent q = p r / (p + r).
  double q_exp() const { return p * r_exp / (p + r_exp); }
};

/// Throws ConfigError naming the offending key and the inequality it breaks.
inline void validate(const EnergyParams& e)
{
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("energy." + key + ": " + why);
  };
  auto fmt = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  if (!(e.mu >= 0.0)) fail("mu", "must satisfy mu >= 0");
  if (!(e.a0 > 0.0)) fail("a0", "must satisfy a0 > 0");
  if (!(e.alpha_coer >= 0.0)) fail("alpha_coer", "must satisfy alpha_coer >= 0");
  if (!(e.c_adj >= 0.0)) fail("c_adj", "must satisfy c_adj >= 0");
  if (!(e.c_det >= 0.0)) fail("c_det", "must satisfy c_det >= 0");
  if (!(e.p > 3.0)) fail("p", "must satisfy p > 3 (got " + fmt(e.p) + ")");
  if (e.growth_regime == GrowthRegime::strict) {
    const double bound = std::max(3.0, e.p / (e.p - 3.0));
    if (!(e.r_exp > bound)) {
      fail("r", "must satisfy r > max{3, p/(p-3)} = " + fmt(bound) + " (got " + fmt(e.r_exp) + ")");
    }
  } else if (!(e.r_exp >= 2.0)) {
    fail("r", "must satisfy r >= 2 in the quadratic growth regime (got " + fmt(e.r_exp) + ")");
  }
  if (!(e.q_exp() > 1.0)) fail("r", "must give q = p r/(p + r) > 1");
  if (!(e.kappa >= 0.0)) fail("kappa", "must satisfy kappa >= 0");
  if (!(e.c > 0.0)) fail("c", "must satisfy c > 0");
  if (!(e.eps_barrier > 0.0)) fail("eps_barrier", "must satisfy eps_barrier > 0");
  if (!(e.delta0 > 0.0)) fail("delta0", "must satisfy delta0 > 0");
  if (!(e.sigma >= 0.0)) fail("sigma", "must satisfy sigma >= 0");
}

struct EnergyBreakdown {
  double elastic = 0.0;
  double ldg_gradient = 0.0;
  double bulk = 0.0;
  double surface = 0.0;  ///< unweighted; total carries sigma * surface
  double total = 0.0;
};

inline EnergyBreakdown make_breakdown(double elastic, double ldg, double bulk, double surface, double sigma)
{
  return {elastic, ldg, bulk, surface, elastic + ldg + bulk + sigma * surface};
}

// ---------------------------------------------------------------------------
// Elastic densities

/// mu tr(F^T L^{-1} F - I/3).
inline double trace_elastic(const Mat3& f, const StepTensor& l, double mu)
{
  const SymEig e = sym_eig3(l.m);
  if (!(e.values[0] > 0.0)) throw SingularityError("trace_elastic: step tensor is singular", e.values[0]);
  const Mat3 linv = spectral_map(e, [](double v) { return 1.0 / v; });
  return mu * (trace(transpose(f) * linv * f) - 1.0);
}

/// alpha |G|^p + c_adj |adj G|^{p/2} + c_det (det G - 1)^2.
inline double ogden_polyconvex(const Mat3& g, const EnergyParams& e)
{
  const double d = det(g);
  if (!(d > 0.0)) throw OrientationError("ogden_polyconvex: det G must be positive", d);
  return e.alpha_coer * std::pow(frob2(g), 0.5 * e.p) + e.c_adj * std::pow(frob2(adj(g)), 0.25 * e.p) +
         e.c_det * (d - 1.0) * (d - 1.0);
}

/// The same density as a function of independent minors (X, Y, d); convex in
/// the triple jointly.
inline double ogden_in_minors(const Mat3& x, const Mat3& y, double d, const EnergyParams& e)
{
  return e.mu * (frob2(x) - 1.0) + e.alpha_coer * std::pow(frob2(x), 0.5 * e.p) +
         e.c_adj * std::pow(frob2(y), 0.25 * e.p) + e.c_det * (d - 1.0) * (d - 1.0);
}

struct ElasticEval {
  double value = 0.0;
  Mat3 d_f;  ///< dW/dF
  Mat3 d_l;  ///< dW/dL, symmetric
};

/// Full elastic density W(L^{-1/2} F) with derivatives in F and L.
///
/// Written through a = tr(L^{-1} F F^T) = |G|^2,
/// b = tr(K^T K L)/det L = |adj G|^2 (K = adj F) and d = det F / sqrt(det L),
/// which avoids the matrix square root.
inline ElasticEval elastic_density(const Mat3& f, const StepTensor& l, const EnergyParams& e)
{
  const double det_l = det(l.m);
  if (!(det_l > 0.0)) throw SingularityError("elastic_density: step tensor is singular", det_l);
  const Mat3 linv = inverse(l.m);
  const Mat3 ffT = f * transpose(f);
  const double a = ddot(linv, ffT);
  const double jf = det(f);
  const double sq = std::sqrt(det_l);
  const double d = jf / sq;

  ElasticEval out;
  // dW/da, applied to da/dF = 2 L^{-1} F and da/dL = -L^{-1} F F^T L^{-1}
  double w_a = e.mu;
  out.value = e.mu * (a - 1.0);
  if (e.alpha_coer != 0.0) {
    out.value += e.alpha_coer * std::pow(a, 0.5 * e.p);
    w_a += e.alpha_coer * 0.5 * e.p * std::pow(a, 0.5 * e.p - 1.0);
  }
  out.d_f = (2.0 * w_a) * (linv * f);
  out.d_l = (-w_a) * (linv * ffT * linv);

  if (e.c_adj != 0.0) {
    const Mat3 k = adj(f);
    const Mat3 kTk = transpose(k) * k;
    const double bb = ddot(kTk, l.m) / det_l;
    out.value += e.c_adj * std::pow(bb, 0.25 * e.p);
    const double w_b = e.c_adj * 0.25 * e.p * std::pow(bb, 0.25 * e.p - 1.0);
    const Mat3 d_k = (2.0 * w_b / det_l) * (k * l.m);
    out.d_f += cofactor_pullback(f, transpose(d_k));
    out.d_l += w_b * ((1.0 / det_l) * kTk - bb * linv);
  }
  if (e.c_det != 0.0) {
    out.value += e.c_det * (d - 1.0) * (d - 1.0);
    const double w_d = 2.0 * e.c_det * (d - 1.0);
    out.d_f += (w_d / sq) * cofactor(f);
    out.d_l += (-0.5 * w_d * d) * linv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Landau-de Gennes gradient energy

struct LdgInvariants {
  double i1, i2, i3, i4;
};

namespace detail {
inline void require_gradq_symmetric(const Tensor3& g, const char* who)
{
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        if (std::abs(g[t3(i, j, k)] - g[t3(j, i, k)]) > 1e-10) {
          throw PreconditionError(std::string(who) + ": gradQ is not symmetric in its first two indices");
        }
}
}  // namespace detail

/// I1 = Q_ij,j Q_ik,k, I2 = Q_ik,j Q_ij,k, I3 = Q_ij,k Q_ij,k,
/// I4 = Q_lk Q_ij,l Q_ij,k.
inline LdgInvariants ldg_invariants(const Tensor3& g, const QTensor& q)
{
  detail::require_gradq_symmetric(g, "ldg_invariants");
  const Mat3 qm = q.matrix();
  LdgInvariants out{0.0, 0.0, 0.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    const double v = g[t3(i, 0, 0)] + g[t3(i, 1, 1)] + g[t3(i, 2, 2)];
    out.i1 += v * v;
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        out.i2 += g[t3(i, k, j)] * g[t3(i, j, k)];
        out.i3 += g[t3(i, j, k)] * g[t3(i, j, k)];
        for (int l = 0; l < 3; ++l) out.i4 += qm(l, k) * g[t3(i, j, l)] * g[t3(i, j, k)];
      }
  return out;
}

inline double ldg_gradient_energy(const Tensor3& g, const QTensor& q, const EnergyParams& e)
{
  const LdgInvariants inv = ldg_invariants(g, q);
  double v = e.l1 * inv.i1 + e.l2 * inv.i2 + e.l3 * inv.i3 + e.l4 * inv.i4;
  if (e.kappa != 0.0) v += e.kappa * std::pow(inv.i3, 0.5 * e.r_exp);
  return v;
}

struct LdgEval {
  double value = 0.0;
  Tensor3 d_b{};  ///< dL/dB_ijk
  Mat3 d_q;       ///< dL/dQ (matrix form)
};

/// L(B, Q) with derivatives; B is treated as an unconstrained 27-array.
inline LdgEval ldg_density(const Tensor3& g, const Mat3& qm, const EnergyParams& e)
{
  LdgEval out;
  double i3 = 0.0;
  for (double v : g) i3 += v * v;

  if (e.l1 != 0.0) {
    for (int i = 0; i < 3; ++i) {
      const double v = g[t3(i, 0, 0)] + g[t3(i, 1, 1)] + g[t3(i, 2, 2)];
      out.value += e.l1 * v * v;
      for (int j = 0; j < 3; ++j) out.d_b[t3(i, j, j)] += 2.0 * e.l1 * v;
    }
  }
  if (e.l2 != 0.0) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          out.value += e.l2 * g[t3(i, k, j)] * g[t3(i, j, k)];
          out.d_b[t3(i, j, k)] += 2.0 * e.l2 * g[t3(i, k, j)];
        }
  }
  double w3 = e.l3;
  out.value += e.l3 * i3;
  if (e.kappa != 0.0 && i3 > 0.0) {
    out.value += e.kappa * std::pow(i3, 0.5 * e.r_exp);
    w3 += e.kappa * 0.5 * e.r_exp * std::pow(i3, 0.5 * e.r_exp - 1.0);
  }
  for (int n = 0; n < 27; ++n) out.d_b[n] += 2.0 * w3 * g[n];
  if (e.l4 != 0.0) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l)
          for (int k = 0; k < 3; ++k) {
            const double bb = g[t3(i, j, l)] * g[t3(i, j, k)];
            out.value += e.l4 * qm(l, k) * bb;
            out.d_q(l, k) += e.l4 * bb;
            out.d_b[t3(i, j, k)] += 2.0 * e.l4 * qm(k, l) * g[t3(i, j, l)];
          }
  }
  return out;
}

struct PullbackEval {
  double value = 0.0;
  Tensor3 d_a{};  ///< de/dA_ijm with A = gradient of Q in reference coordinates
  Mat3 d_f;       ///< de/dF
  Mat3 d_q;       ///< de/dQ (matrix form)
};

/// det F * L(A F^{-1}, Q), evaluated as t L(A_c / t, Q) with A_c = A adj F
/// and t = det F, so no inverse of F is formed.
inline PullbackEval pullback_density(const Tensor3& a, const Mat3& f, const Mat3& qm, const EnergyParams& e)
{
  const double t = det(f);
  if (!(t > 0.0)) throw OrientationError("pullback_gradient_density: det F must be positive", t);
  const Mat3 k = adj(f);
  Tensor3 be{};
  for (int ij = 0; ij < 9; ++ij)
    for (int kk = 0; kk < 3; ++kk) {
      double s = 0.0;
      for (int m = 0; m < 3; ++m) s += a[3 * ij + m] * k(m, kk);
      be[3 * ij + kk] = s / t;
    }
  const LdgEval lg = ldg_density(be, qm, e);

  PullbackEval out;
  out.value = t * lg.value;
  out.d_q = t * lg.d_q;
  double pb = 0.0;
  for (int n = 0; n < 27; ++n) pb += lg.d_b[n] * be[n];
  const double d_t = lg.value - pb;

  Mat3 d_k;  // de/d(adj F)_mk = sum_ij P_ijk A_ijm
  for (int ij = 0; ij < 9; ++ij)
    for (int m = 0; m < 3; ++m)
      for (int kk = 0; kk < 3; ++kk) {
        out.d_a[3 * ij + m] += lg.d_b[3 * ij + kk] * k(m, kk);
        d_k(m, kk) += lg.d_b[3 * ij + kk] * a[3 * ij + m];
      }
  out.d_f = d_t * cofactor(f) + cofactor_pullback(f, transpose(d_k));
  return out;
}

/// Value-only form with the feasibility floor det F >= delta0 enforced.
inline double pullback_gradient_density(const Tensor3& a, const Mat3& f, const QTensor& q, const EnergyParams& e)
{
  const double t = det(f);
  if (!(t >= e.delta0)) {
    std::ostringstream os;
    os << "pullback_gradient_density: det F = " << t << " is below delta0 = " << e.delta0;
    throw InfeasibleError(os.str(), InfeasibleError::Kind::jacobian, 0, t);
  }
  return pullback_density(a, f, q.matrix(), e).value;
}

/// t L(A/t, Q) for independent (A, t), t > 0: the perspective of L.
inline double pullback_perspective(const Tensor3& a, double t, const QTensor& q, const EnergyParams& e)
{
  Tensor3 be;
  for (int n = 0; n < 27; ++n) be[n] = a[n] / t;
  return t * ldg_density(be, q.matrix(), e).value;
}

// ---------------------------------------------------------------------------
// Bulk potential

namespace detail {

inline double bulk_poly_eig(const Vec3& l, const EnergyParams& e)
{
  double t2 = 0.0, t3v = 0.0, t4 = 0.0;
  for (double v : l) {
    t2 += v * v;
    t3v += v * v * v;
    t4 += v * v * v * v;
  }
  return 0.5 * e.a_T * t2 - e.b / 3.0 * t3v + 0.25 * e.c * t4;
}

inline double bulk_barrier_eig(const Vec3& l, const EnergyParams& e)
{
  return -e.eps_barrier * std::log(27.0 * (l[0] + 1.0 / 3.0) * (l[1] + 1.0 / 3.0) * (l[2] + 1.0 / 3.0));
}

inline double bulk_raw_eig(const Vec3& l, const EnergyParams& e)
{
  if (!(l[0] > -1.0 / 3.0) || !(l[1] > -1.0 / 3.0) || !(l[2] > -1.0 / 3.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return bulk_poly_eig(l, e) + bulk_barrier_eig(l, e);
}

inline void require_barrier_domain(double lmin, const char* who)
{
  if (!(lmin > -1.0 / 3.0)) {
    std::ostringstream os;
    os << who << ": lambda_min(Q) = " << lmin << " is not above -1/3";
    throw InfeasibleError(os.str(), InfeasibleError::Kind::order_tensor, 0, lmin);
  }
}

}  // namespace detail

/// (a_T/2) tr Q^2 - (b/3) tr Q^3 + (c/4) tr Q^4.
inline double bulk_quartic(const QTensor& q, const EnergyParams& e)
{
  const Mat3 m = q.matrix();
  const Mat3 m2 = m * m;
  return 0.5 * e.a_T * trace(m2) - e.b / 3.0 * trace(m2 * m) + 0.25 * e.c * ddot(m2, m2);
}

/// Matrix gradient a_T Q - b Q^2 + c Q^3.
inline Mat3 bulk_quartic_grad(const Mat3& m, const EnergyParams& e)
{
  const Mat3 m2 = m * m;
  return e.a_T * m - e.b * m2 + e.c * (m2 * m);
}

/// -eps ln(27 det(Q + I/3)); zero at Q = 0 and positive elsewhere.
inline double bulk_barrier(const QTensor& q, const EnergyParams& e)
{
  const Vec3 l = eigenvalues(q);
  detail::require_barrier_domain(l[0], "bulk_barrier");
  return detail::bulk_barrier_eig(l, e);
}

/// Estimate of min over the admissible set of quartic + barrier.
///
/// The density is isotropic, so it is a function of the eigenvalue triple.
/// Parametrizing lambda3 = x <= lambda2 = y <= lambda1 = -x - y, a grid over
/// the triangle (which contains both uniaxial edges) is followed by compass
/// search refinement from the best grid point.
inline double bulk_min_estimate(const EnergyParams& e)
{
  auto f = [&](double x, double y) { return detail::bulk_raw_eig({x, y, -x - y}, e); };
  auto inside = [](double x, double y) { return x > -1.0 / 3.0 && x <= 0.0 && y >= x && y <= -0.5 * x; };

  constexpr int n = 600;
  double best = std::numeric_limits<double>::infinity();
  double bx = 0.0, by = 0.0;
  const double x_lo = -1.0 / 3.0;
  for (int i = 1; i <= n; ++i) {
    const double x = x_lo + (0.0 - x_lo) * i / n;
    for (int j = 0; j <= n; ++j) {
      const double y = x + (-0.5 * x - x) * j / n;
      const double v = f(x, y);
      if (v < best) {
        best = v;
        bx = x;
        by = y;
      }
    }
  }
  double step = 1.0 / n;
  while (step > 1e-13) {
    bool moved = false;
    constexpr double dirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
    for (const auto& d : dirs) {
      const double x = bx + step * d[0], y = by + step * d[1];
      if (!inside(x, y)) continue;
      const double v = f(x, y);
      if (v < best) {
        best = v;
        bx = x;
        by = y;
        moved = true;
      }
    }
    if (!moved) step *= 0.5;
  }
  return best;
}

/// Copy of the parameters with the bulk nonnegativity shift filled in.
inline EnergyParams prepared(EnergyParams e)
{
  if (!e.bulk_shift) e.bulk_shift = -bulk_min_estimate(e);
  return e;
}

inline double bulk_shift_of(const EnergyParams& e) { return e.bulk_shift ? *e.bulk_shift : -bulk_min_estimate(e); }

/// Quartic + barrier + shift; nonnegative on the admissible set up to the
/// accuracy of the minimum estimate.
inline double bulk_total(const QTensor& q, const EnergyParams& e)
{
  const Vec3 l = eigenvalues(q);
  detail::require_barrier_domain(l[0], "bulk_total");
  return detail::bulk_poly_eig(l, e) + detail::bulk_barrier_eig(l, e) + bulk_shift_of(e);
}

struct BulkEval {
  double value = 0.0;
  Mat3 d_q;  ///< matrix gradient; project onto the basis for coefficients
};

/// Bulk density (quartic + barrier + shift) with its gradient; the shift must
/// already be present in e.
inline BulkEval bulk_density(const QTensor& q, const EnergyParams& e)
{
  const Mat3 m = q.matrix();
  const SymEig eig = sym_eig3(m);
  detail::require_barrier_domain(eig.values[0], "bulk_density");
  BulkEval out;
  out.value = detail::bulk_poly_eig(eig.values, e) + detail::bulk_barrier_eig(eig.values, e) + e.bulk_shift.value_or(0.0);
  out.d_q = bulk_quartic_grad(m, e) -
            e.eps_barrier * spectral_map(eig, [](double v) { return 1.0 / (v + 1.0 / 3.0); });
  return out;
}

/// Coefficient gradient of a scalar g(Q) given dg/dQ in matrix form.
inline QTensor coeff_gradient(const Mat3& d_q)
{
  QTensor out;
  for (int n = 0; n < 5; ++n) out.c[n] = ddot(d_q, QTensor::basis(n));
  return out;
}

// ---------------------------------------------------------------------------
// Surface anchoring

/// tr((Qb - Q0)^2).
inline double surface_rapini(const QTensor& qb, const EnergyParams& e)
{
  const double n = (qb - e.q0_surface).norm();
  return n * n;
}

/// Sampled sup of |h(A) - h(B)| / |A - B|^q over admissible pairs.
/// The anchoring density is locally Lipschitz, not globally Hoelder with the
/// integrability exponent, so this reports the observed modulus instead of
/// asserting a bound.
inline double surface_lipschitz_modulus(const EnergyParams& e, double q_exp, int samples, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  auto draw = [&] {
    for (;;) {
      QTensor q;
      for (double& v : q.c) v = u(rng);
      if (in_q_set(q, 0.0)) return q;
    }
  };
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const QTensor a = draw(), b = draw();
    const double d = (a - b).norm();
    if (d == 0.0) continue;
    worst = std::max(worst, std::abs(surface_rapini(a, e) - surface_rapini(b, e)) / std::pow(d, q_exp));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Convexity probes

struct ConvexityReport {
  std::string density;
  int segments = 0;
  double max_violation = 0.0;  ///< max of f(mid) - avg, relative to max(1, |avg|)
  int violations = 0;          ///< segments with violation > tolerance
  bool pass = true;
};

inline constexpr double convexity_tolerance = 1e-9;

/// Midpoint convexity test of f along random segments drawn by sample(rng).
template <class Point, class Sampler, class Fn>
ConvexityReport convexity_probe_fn(std::string name, Sampler&& sample, Fn&& f, int segments, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  ConvexityReport rep;
  rep.density = std::move(name);
  rep.segments = segments;
  for (int s = 0; s < segments; ++s) {
    const Point x = sample(rng);
    const Point y = sample(rng);
    Point m;
    for (std::size_t n = 0; n < x.size(); ++n) m[n] = 0.5 * (x[n] + y[n]);
    const double avg = 0.5 * (f(x) + f(y));
    const double v = (f(m) - avg) / std::max(1.0, std::abs(avg));
    rep.max_violation = std::max(rep.max_violation, v);
    if (v > convexity_tolerance) ++rep.violations;
  }
  rep.pass = rep.violations == 0;
  return rep;
}

/// Named probes: "ogden-in-minors", "ldg-in-gradQ", "pullback-in-(A,t)".
inline ConvexityReport convexity_probe(std::string_view density, int segments, const EnergyParams& e,
                                       std::uint64_t seed = 1)
{
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (density == "ogden-in-minors") {
    // packed as (X[9], Y[9], d)
    using P = std::array<double, 19>;
    auto sample = [&](std::mt19937_64& rng) {
      P x;
      for (int n = 0; n < 18; ++n) x[n] = gauss(rng);
      x[18] = std::exp(gauss(rng));
      return x;
    };
    auto f = [&](const P& x) {
      Mat3 a, b;
      std::copy(x.begin(), x.begin() + 9, a.a.begin());
      std::copy(x.begin() + 9, x.begin() + 18, b.a.begin());
      return ogden_in_minors(a, b, x[18], e);
    };
    return convexity_probe_fn<P>(std::string(density), sample, f, segments, seed);
  }
  if (density == "ldg-in-gradQ") {
    using P = std::array<double, 15>;  // dQ/dy_k for k = 0..2, in coefficients
    const QTensor q = uniaxial_q(0.5, {0.0, 0.0, 1.0});
    auto sample = [&](std::mt19937_64& rng) {
      P x;
      for (double& v : x) v = gauss(rng);
      return x;
    };
    auto f = [&](const P& x) {
      Tensor3 g{};
      for (int k = 0; k < 3; ++k) {
        QTensor dq;
        std::copy(x.begin() + 5 * k, x.begin() + 5 * k + 5, dq.c.begin());
        const Mat3 m = dq.matrix();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) g[t3(i, j, k)] = m(i, j);
      }
      return ldg_gradient_energy(g, q, e);
    };
    return convexity_probe_fn<P>(std::string(density), sample, f, segments, seed);
  }
  if (density == "pullback-in-(A,t)") {
    using P = std::array<double, 28>;  // A in 27 entries symmetric in (i,j), then t
    const QTensor q = uniaxial_q(0.5, {0.0, 0.0, 1.0});
    auto sample = [&](std::mt19937_64& rng) {
      P x{};
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j)
          for (int k = 0; k < 3; ++k) x[t3(i, j, k)] = x[t3(j, i, k)] = gauss(rng);
      x[27] = std::exp(gauss(rng));
      return x;
    };
    auto f = [&](const P& x) {
      Tensor3 a;
      std::copy(x.begin(), x.begin() + 27, a.begin());
      return pullback_perspective(a, x[27], q, e);
    };
    return convexity_probe_fn<P>(std::string(density), sample, f, segments, seed);
  }
  throw PreconditionError("convexity_probe: unknown density '" + std::string(density) + "'");
}

}  // namespace lce
