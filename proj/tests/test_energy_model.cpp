#include <gtest/gtest.h>

#include "lce/energy_model.hpp"
#include "test_util.hpp"

using namespace lce;
using lce::testing::random_admissible_q;
using lce::testing::random_feasible_f;
using lce::testing::random_rotation;
using lce::testing::random_spd;

namespace {

const Vec3 ez{0, 0, 1};

EnergyParams full_params()
{
  EnergyParams e;
  e.mu = 1.3;
  e.alpha_coer = 0.2;
  e.c_adj = 0.4;
  e.c_det = 2.0;
  e.p = 4.5;
  e.kappa = 0.3;
  e.r_exp = 6.0;
  e.l1 = 0.2;
  e.l2 = 0.1;
  e.l3 = 0.5;
  e.l4 = 0.05;
  return e;
}

Tensor3 random_gradq(std::mt19937_64& rng, double scale = 1.0)
{
  std::normal_distribution<double> g(0.0, scale);
  Tensor3 t{};
  for (int k = 0; k < 3; ++k) {
    QTensor d;
    for (double& v : d.c) v = g(rng);
    const Mat3 m = d.matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t[t3(i, j, k)] = m(i, j);
  }
  return t;
}

/// gradQ of Q(y) = y1 M with M = diag(1,-1,0)/sqrt(2).
Tensor3 linear_gradq()
{
  Tensor3 t{};
  t[t3(0, 0, 0)] = 1.0 / std::sqrt(2.0);
  t[t3(1, 1, 0)] = -1.0 / std::sqrt(2.0);
  return t;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST(TraceElastic, Examples)
{
  const StepTensor id{Mat3::identity(), 3.0};
  EXPECT_NEAR(trace_elastic(Mat3::identity(), id, 1.0), 2.0, 1e-15);
  EXPECT_NEAR(trace_elastic(Mat3::diag(2, 1, 1), id, 1.0), 5.0, 1e-15);
  std::mt19937_64 rng(1);
  for (int s = 0; s < 20; ++s) {
    const Mat3 lm = random_spd(rng);
    EXPECT_NEAR(trace_elastic(spd_sqrt(lm), {lm, trace(lm)}, 1.0), 2.0, 1e-12);
  }
}

TEST(TraceElastic, AgreesWithEffectiveDeformationRoute)
{
  std::mt19937_64 rng(2);
  for (int s = 0; s < 10000; ++s) {
    const Mat3 f = random_feasible_f(rng);
    const QTensor q = random_admissible_q(rng, 0.05);
    const StepTensor l = step_tensor(q, 3.0);
    const double a = trace_elastic(f, l, 0.7);
    const double b = 0.7 * (frob2(effective_deformation(f, l)) - 1.0);
    ASSERT_LE(std::abs(a - b), 1e-12 * std::max(1.0, std::abs(b)));
  }
}

TEST(TraceElastic, RotationallyInvariant)
{
  std::mt19937_64 rng(3);
  for (int s = 0; s < 500; ++s) {
    const Mat3 f = random_feasible_f(rng);
    const Mat3 lm = random_spd(rng);
    const Mat3 r = random_rotation(rng);
    const Mat3 lr = sym(r * lm * transpose(r));
    EXPECT_NEAR(trace_elastic(r * f, {lr, trace(lr)}, 1.0), trace_elastic(f, {lm, trace(lm)}, 1.0), 1e-10);
  }
}

TEST(TraceElastic, SingularStepTensor)
{
  EXPECT_THROW(trace_elastic(Mat3::identity(), {Mat3::diag(1, 1, 0), 2.0}, 1.0), SingularityError);
}

TEST(Ogden, Examples)
{
  EnergyParams e;
  e.alpha_coer = 1.0;
  e.p = 4.0;
  EXPECT_NEAR(ogden_polyconvex(Mat3::identity(), e), 9.0, 1e-14);
  Mat3 flip = Mat3::identity();
  flip(2, 2) = -1.0;
  EXPECT_THROW(ogden_polyconvex(flip, e), OrientationError);
}

TEST(Ogden, Coercive)
{
  std::mt19937_64 rng(4);
  const EnergyParams e = full_params();
  for (int s = 0; s < 1000; ++s) {
    const Mat3 g = random_feasible_f(rng, 1e-3);
    EXPECT_GE(ogden_polyconvex(g, e) - e.alpha_coer * std::pow(frob(g), e.p), 0.0);
  }
}

TEST(ElasticDensity, MatchesClosedForms)
{
  std::mt19937_64 rng(5);
  const EnergyParams e = full_params();
  for (int s = 0; s < 500; ++s) {
    const Mat3 f = random_feasible_f(rng);
    const StepTensor l = step_tensor(random_admissible_q(rng, 0.05), e.a0);
    const Mat3 g = effective_deformation(f, l);
    const double expected = e.mu * (frob2(g) - 1.0) + ogden_polyconvex(g, e);
    EXPECT_LE(rel_err(elastic_density(f, l, e).value, expected), 1e-11);
  }
}

TEST(ElasticDensity, DerivativesMatchFiniteDifferences)
{
  std::mt19937_64 rng(6);
  const EnergyParams e = full_params();
  const double h = 1e-5;
  for (int s = 0; s < 50; ++s) {
    const Mat3 f = random_feasible_f(rng);
    const Mat3 lm = random_spd(rng, 0.5, 2.0);
    const StepTensor l{lm, trace(lm)};
    const ElasticEval ev = elastic_density(f, l, e);
    for (int k = 0; k < 9; ++k) {
      Mat3 fp = f, fm = f;
      fp.a[k] += h;
      fm.a[k] -= h;
      const double fd = (elastic_density(fp, l, e).value - elastic_density(fm, l, e).value) / (2 * h);
      EXPECT_LE(rel_err(ev.d_f.a[k], fd), 1e-6);
    }
    // L perturbed along symmetric directions
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        Mat3 dl = Mat3::outer(Vec3{i == 0 ? 1.0 : 0.0, i == 1 ? 1.0 : 0.0, i == 2 ? 1.0 : 0.0},
                              Vec3{j == 0 ? 1.0 : 0.0, j == 1 ? 1.0 : 0.0, j == 2 ? 1.0 : 0.0});
        dl = sym(dl);
        const double fd = (elastic_density(f, {lm + h * dl, l.a0}, e).value -
                           elastic_density(f, {lm - h * dl, l.a0}, e).value) /
                          (2 * h);
        EXPECT_LE(rel_err(ddot(ev.d_l, dl), fd), 1e-6);
      }
  }
}

TEST(LdgInvariants, Examples)
{
  const LdgInvariants z = ldg_invariants(Tensor3{}, uniaxial_q(0.4, ez));
  EXPECT_EQ(z.i1, 0.0);
  EXPECT_EQ(z.i2, 0.0);
  EXPECT_EQ(z.i3, 0.0);
  EXPECT_EQ(z.i4, 0.0);

  // Q(y) = y1 M evaluated at y1 = 0.7
  const double y1 = 0.7;
  const QTensor q = QTensor::project((y1 / std::sqrt(2.0)) * Mat3::diag(1, -1, 0));
  const LdgInvariants v = ldg_invariants(linear_gradq(), q);
  EXPECT_NEAR(v.i1, 0.5, 1e-15);
  EXPECT_NEAR(v.i2, 0.5, 1e-15);
  EXPECT_NEAR(v.i3, 1.0, 1e-15);
  EXPECT_NEAR(v.i4, y1 / std::sqrt(2.0), 1e-15);
}

TEST(LdgInvariants, QuadraticHomogeneity)
{
  std::mt19937_64 rng(7);
  const Tensor3 g = random_gradq(rng);
  const QTensor q = random_admissible_q(rng);
  Tensor3 g2;
  for (int n = 0; n < 27; ++n) g2[n] = 2.5 * g[n];
  const LdgInvariants a = ldg_invariants(g, q), b = ldg_invariants(g2, q);
  EXPECT_NEAR(b.i1, 6.25 * a.i1, 1e-12);
  EXPECT_NEAR(b.i2, 6.25 * a.i2, 1e-12);
  EXPECT_NEAR(b.i3, 6.25 * a.i3, 1e-12);
  EXPECT_NEAR(b.i4, 6.25 * a.i4, 1e-12);
}

TEST(LdgInvariants, RejectsAsymmetricGradient)
{
  Tensor3 g{};
  g[t3(0, 1, 2)] = 1.0;
  EXPECT_THROW(ldg_invariants(g, QTensor::zero()), PreconditionError);
}

TEST(LdgGradientEnergy, Examples)
{
  EnergyParams e;
  EXPECT_EQ(ldg_gradient_energy(Tensor3{}, QTensor::zero(), e), 0.0);
  e.l1 = e.l2 = e.l4 = 0.0;
  e.l3 = 1.0;
  e.kappa = 0.0;
  EXPECT_NEAR(ldg_gradient_energy(linear_gradq(), QTensor::zero(), e), 1.0, 1e-15);
  e.l3 = 0.0;
  e.kappa = 1.0;
  e.r_exp = 4.0;
  EXPECT_NEAR(ldg_gradient_energy(linear_gradq(), QTensor::zero(), e), 1.0, 1e-15);
}

TEST(LdgDensity, DerivativesMatchFiniteDifferences)
{
  std::mt19937_64 rng(8);
  const EnergyParams e = full_params();
  const double h = 1e-5;
  for (int s = 0; s < 30; ++s) {
    const Tensor3 g = random_gradq(rng, 0.7);
    const Mat3 qm = random_admissible_q(rng).matrix();
    const LdgEval ev = ldg_density(g, qm, e);
    EXPECT_LE(rel_err(ev.value, ldg_gradient_energy(g, QTensor::project(qm), e)), 1e-12);
    for (int n = 0; n < 27; ++n) {
      Tensor3 gp = g, gm = g;
      gp[n] += h;
      gm[n] -= h;
      const double fd = (ldg_density(gp, qm, e).value - ldg_density(gm, qm, e).value) / (2 * h);
      EXPECT_LE(rel_err(ev.d_b[n], fd), 1e-6);
    }
    for (int k = 0; k < 9; ++k) {
      Mat3 qp = qm, qn = qm;
      qp.a[k] += h;
      qn.a[k] -= h;
      const double fd = (ldg_density(g, qp, e).value - ldg_density(g, qn, e).value) / (2 * h);
      EXPECT_LE(rel_err(ev.d_q.a[k], fd), 1e-6);
    }
  }
}

TEST(Pullback, IdentityReducesToEulerianDensity)
{
  std::mt19937_64 rng(9);
  const EnergyParams e = full_params();
  for (int s = 0; s < 100; ++s) {
    const Tensor3 a = random_gradq(rng);
    const QTensor q = random_admissible_q(rng);
    EXPECT_LE(rel_err(pullback_gradient_density(a, Mat3::identity(), q, e), ldg_gradient_energy(a, q, e)), 1e-13);
  }
}

TEST(Pullback, EqualsJacobianTimesEulerianDensity)
{
  std::mt19937_64 rng(10);
  const EnergyParams e = full_params();
  for (int s = 0; s < 200; ++s) {
    const Tensor3 a = random_gradq(rng);
    const QTensor q = random_admissible_q(rng);
    const Mat3 f = random_feasible_f(rng, 0.3);
    const Mat3 finv = inverse(f);
    Tensor3 be{};
    for (int ij = 0; ij < 9; ++ij)
      for (int k = 0; k < 3; ++k)
        for (int m = 0; m < 3; ++m) be[3 * ij + k] += a[3 * ij + m] * finv(m, k);
    const double expected = det(f) * ldg_gradient_energy(be, q, e);
    EXPECT_LE(rel_err(pullback_gradient_density(a, f, q, e), expected), 1e-10);
  }
  // F = 2I with fixed Eulerian gradient B: A = 2B and t = 8
  const Tensor3 b = random_gradq(rng);
  Tensor3 a2;
  for (int n = 0; n < 27; ++n) a2[n] = 2.0 * b[n];
  const QTensor q = QTensor::zero();
  EXPECT_LE(rel_err(pullback_gradient_density(a2, 2.0 * Mat3::identity(), q, e), 8.0 * ldg_gradient_energy(b, q, e)),
            1e-12);
}

TEST(Pullback, BelowCompressibilityFloorIsInfeasible)
{
  EnergyParams e;
  e.delta0 = 0.5;
  EXPECT_THROW(pullback_gradient_density(Tensor3{}, Mat3::diag(0.1, 1, 1), QTensor::zero(), e), InfeasibleError);
}

TEST(Pullback, DerivativesMatchFiniteDifferences)
{
  std::mt19937_64 rng(11);
  const EnergyParams e = full_params();
  const double h = 1e-5;
  for (int s = 0; s < 30; ++s) {
    const Tensor3 a = random_gradq(rng, 0.7);
    const Mat3 f = random_feasible_f(rng, 0.4);
    const Mat3 qm = random_admissible_q(rng).matrix();
    const PullbackEval ev = pullback_density(a, f, qm, e);
    for (int n = 0; n < 27; ++n) {
      Tensor3 ap = a, am = a;
      ap[n] += h;
      am[n] -= h;
      const double fd = (pullback_density(ap, f, qm, e).value - pullback_density(am, f, qm, e).value) / (2 * h);
      EXPECT_LE(rel_err(ev.d_a[n], fd), 1e-6);
    }
    for (int k = 0; k < 9; ++k) {
      Mat3 fp = f, fm = f;
      fp.a[k] += h;
      fm.a[k] -= h;
      const double fd = (pullback_density(a, fp, qm, e).value - pullback_density(a, fm, qm, e).value) / (2 * h);
      EXPECT_LE(rel_err(ev.d_f.a[k], fd), 1e-6);
      Mat3 qp = qm, qn = qm;
      qp.a[k] += h;
      qn.a[k] -= h;
      const double fq = (pullback_density(a, f, qp, e).value - pullback_density(a, f, qn, e).value) / (2 * h);
      EXPECT_LE(rel_err(ev.d_q.a[k], fq), 1e-6);
    }
  }
}

TEST(BulkQuartic, Examples)
{
  EnergyParams e;
  EXPECT_EQ(bulk_quartic(QTensor::zero(), e), 0.0);
  e.a_T = e.b = e.c = 1.0;
  const double s = 0.5;
  const double expected = s * s / 3.0 - 2.0 * s * s * s / 27.0 + s * s * s * s / 18.0;
  EXPECT_NEAR(expected, 1.0 / 12 - 1.0 / 108 + 1.0 / 288, 1e-16);
  EXPECT_NEAR(bulk_quartic(uniaxial_q(s, {0.6, 0.0, 0.8}), e), expected, 1e-15);
}

TEST(BulkQuartic, Isotropic)
{
  std::mt19937_64 rng(12);
  const EnergyParams e;
  for (int s = 0; s < 500; ++s) {
    const QTensor q = random_admissible_q(rng);
    const Mat3 r = random_rotation(rng);
    const QTensor qr = QTensor::project(r * q.matrix() * transpose(r));
    EXPECT_NEAR(bulk_quartic(qr, e), bulk_quartic(q, e), 1e-12);
  }
}

TEST(BulkBarrier, Examples)
{
  EnergyParams e;
  e.eps_barrier = 1.0;
  EXPECT_NEAR(bulk_barrier(QTensor::zero(), e), 0.0, 1e-15);
  const double expected = -std::log((0.1 / 3) * (0.1 / 3) * (2.8 / 3) * 27.0);
  EXPECT_NEAR(expected, 3.576, 5e-4);
  EXPECT_NEAR(bulk_barrier(uniaxial_q(0.9, ez), e), expected, 1e-12);
  try {
    bulk_barrier(uniaxial_q(1.0, ez), e);
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& err) {
    EXPECT_EQ(err.kind(), InfeasibleError::Kind::order_tensor);
    EXPECT_NEAR(err.value(), -1.0 / 3.0, 1e-15);
  }
}

TEST(BulkBarrier, NonnegativeOnAdmissibleSet)
{
  std::mt19937_64 rng(13);
  const EnergyParams e;
  for (int s = 0; s < 2000; ++s) EXPECT_GE(bulk_barrier(random_admissible_q(rng, 0.0), e), 0.0);
}

TEST(BulkTotal, ShiftMakesDensityNonnegative)
{
  std::mt19937_64 rng(14);
  for (double a_t : {-1.5, 0.5, -0.2}) {
    EnergyParams e;
    e.a_T = a_t;
    e = prepared(e);
    for (int s = 0; s < 100000; ++s) ASSERT_GE(bulk_total(random_admissible_q(rng, 0.0), e), -1e-9);
  }
}

TEST(BulkTotal, ScanLocatesIsotropicMinimumForPositiveAT)
{
  // a_T > 0 with a tiny barrier: Q = 0 is the global minimum, value 0
  EnergyParams e;
  e.a_T = 1.0;
  e.eps_barrier = 1e-6;
  EXPECT_NEAR(bulk_min_estimate(e), 0.0, 1e-14);
  EXPECT_NEAR(bulk_total(QTensor::zero(), prepared(e)), 0.0, 1e-14);
}

TEST(BulkTotal, MonotoneBlowUpAlongUniaxialPath)
{
  const EnergyParams e = prepared(EnergyParams{});
  // geometric approach to s = 1 starting beyond the uniaxial bulk minimizer
  double prev = -1.0;
  for (int k = 1; k <= 20; ++k) {
    const double s = 1.0 - 0.25 * std::pow(0.5, k - 1);
    const double v = bulk_total(uniaxial_q(s, ez), e);
    EXPECT_GT(v, prev) << "s = " << s;
    prev = v;
  }
  EXPECT_GT(prev, 10.0 * bulk_total(uniaxial_q(0.5, ez), e));
}

TEST(BulkDensity, DerivativeMatchesFiniteDifferences)
{
  std::mt19937_64 rng(15);
  const EnergyParams e = prepared(EnergyParams{});
  const double h = 1e-6;
  for (int s = 0; s < 200; ++s) {
    const QTensor q = random_admissible_q(rng, 0.05);
    const BulkEval ev = bulk_density(q, e);
    EXPECT_LE(rel_err(ev.value, bulk_total(q, e)), 1e-12);
    const QTensor g = coeff_gradient(ev.d_q);
    for (int n = 0; n < 5; ++n) {
      QTensor qp = q, qm = q;
      qp.c[n] += h;
      qm.c[n] -= h;
      const double fd = (bulk_total(qp, e) - bulk_total(qm, e)) / (2 * h);
      EXPECT_LE(rel_err(g.c[n], fd), 1e-6);
    }
  }
}

TEST(SurfaceRapini, Examples)
{
  EnergyParams e;
  const QTensor a = uniaxial_q(0.5, ez);
  e.q0_surface = a;
  EXPECT_EQ(surface_rapini(a, e), 0.0);
  e.q0_surface = QTensor::zero();
  EXPECT_NEAR(surface_rapini(a, e), 1.0 / 6.0, 1e-15);
  std::mt19937_64 rng(16);
  const QTensor x = random_admissible_q(rng), y = random_admissible_q(rng);
  EnergyParams ex = e, ey = e;
  ex.q0_surface = y;
  ey.q0_surface = x;
  EXPECT_NEAR(surface_rapini(x, ex), surface_rapini(y, ey), 1e-15);
}

TEST(SurfaceRapini, SampledLipschitzModulusIsFinite)
{
  const EnergyParams e;
  const double m1 = surface_lipschitz_modulus(e, 1.0, 20000, 3);
  // |h(A) - h(B)| <= (|A| + |B| + 2|Q0|) |A - B| and |Q| <= 2/sqrt(3)
  EXPECT_GT(m1, 0.0);
  EXPECT_LE(m1, 4.0 / std::sqrt(3.0));
}

TEST(ConvexityProbe, NamedDensitiesPass)
{
  const EnergyParams e = full_params();
  EnergyParams no_l4 = e;
  no_l4.l4 = 0.0;
  EXPECT_TRUE(convexity_probe("ogden-in-minors", 20000, e).pass);
  EXPECT_TRUE(convexity_probe("ldg-in-gradQ", 20000, no_l4).pass);
  EXPECT_TRUE(convexity_probe("pullback-in-(A,t)", 20000, no_l4).pass);
  EXPECT_TRUE(convexity_probe("ldg-in-gradQ", 20000, EnergyParams{}).pass);
}

TEST(ConvexityProbe, ConcaveWitnessFails)
{
  using P = std::array<double, 9>;
  auto sample = [](std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    P x;
    for (double& v : x) v = g(rng);
    return x;
  };
  auto f = [](const P& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return -s;
  };
  const ConvexityReport rep = convexity_probe_fn<P>("neg-frobenius", sample, f, 1000, 1);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.max_violation, 1e-3);
}

TEST(ConvexityProbe, UnknownName)
{
  EXPECT_THROW(convexity_probe("nope", 10, EnergyParams{}), PreconditionError);
}

TEST(Validate, GrowthConditions)
{
  EnergyParams e;
  EXPECT_NO_THROW(validate(e));
  e.r_exp = 3.0;
  try {
    validate(e);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find("r > max{3, p/(p-3)} = 4"), std::string::npos) << err.what();
  }
  e.growth_regime = GrowthRegime::quadratic;
  e.r_exp = 2.0;
  EXPECT_NO_THROW(validate(e));
  e.p = 3.0;
  EXPECT_THROW(validate(e), ConfigError);
  EnergyParams d;
  d.delta0 = 0.0;
  EXPECT_THROW(validate(d), ConfigError);
  EnergyParams b;
  b.eps_barrier = 0.0;
  EXPECT_THROW(validate(b), ConfigError);
}

TEST(EnergyBreakdown, TotalWeightsSurfaceBySigma)
{
  const EnergyBreakdown b = make_breakdown(1.0, 2.0, 3.0, 4.0, 0.5);
  EXPECT_EQ(b.total, 8.0);
}
