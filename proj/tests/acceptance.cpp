// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>

#include "lce/lce.hpp"
#include "test_util.hpp"

using namespace lce;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string num(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// States returned by the minimizer during the run, audited by criterion 8.
struct Returned {
  std::string what;
  FieldState state;
  EnergyParams energy;
  double margin;
};
std::vector<Returned> returned;

fs::path work_dir()
{
  const fs::path p = fs::temp_directory_path() / ("lce_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

Mat3 random_orientation_preserving(std::mt19937_64& rng)
{
  for (;;) {
    const Mat3 a = lce::testing::random_mat(rng, 1.0) + Mat3::diag(1.5, 1.5, 1.5);
    if (det(a) > 0.5) return a;
  }
}

Outcome spontaneous_floor()
{
  ExperimentConfig c = default_config(Experiment::spontaneous_floor);
  finalize(c);
  std::mt19937_64 rng(20261018);
  Outcome o;
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const Mat3 l = random_unimodular_spd(rng);
    const FloorTrial r = spontaneous_floor_trial(c, l, nullptr);
    worst = std::max(worst, r.rel_error);
    o.pass = o.pass && r.rel_error <= 1e-4;
  }
  o.detail = "worst relative error " + num(worst) + " over 10 trials";
  return o;
}

// Floor states for criterion 8, rebuilt with the same seeds.
void collect_floor_states()
{
  ExperimentConfig c = default_config(Experiment::spontaneous_floor);
  finalize(c);
  std::mt19937_64 rng(20261018);
  for (int t = 0; t < 10; ++t) {
    const Mat3 l = random_unimodular_spd(rng);
    EnergyParams e = c.energy;
    e.a0 = trace(l);
    Mat3 qm = (1.0 / e.a0) * l;
    for (int i = 0; i < 3; ++i) qm(i, i) -= 1.0 / 3.0;
    const Grid g = build_grid(0.5, 0.5, 0.5, 2, 2, 2, false);
    FieldState s = affine_state(g, Mat3::identity(), {}, QTensor::project(qm));
    for (std::size_t n = 0; n < g.num_nodes(); ++n)
      for (int k = 3; k < dofs_per_node; ++k) s.fixed[n * dofs_per_node + k] = 1;
    BoundarySpec bc;
    bc.kind = BoundaryKind::partial_average;
    MinimizeOptions mo = c.minimize;
    mo.terms = {true, false, false, false};
    const MinimizeResult r = minimize(apply_boundary(s, bc), e, bc, mo);
    returned.push_back({"spontaneous_floor trial " + std::to_string(t), r.state, e, mo.feasibility_margin});
  }
}

Outcome gradient_fidelity()
{
  const Grid g = build_grid(1.0, 1.0, 1.0, 17, 17, 17, false);
  FieldState s = identity_state(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const Vec3 x = g.position(n);
    s.set_phi(n, {x[0] + 0.08 * std::sin(2 * x[1]), x[1] + 0.05 * x[0] * x[2], x[2] + 0.04 * std::cos(x[0] + x[1])});
    s.set_q(n, uniaxial_q(0.35 + 0.1 * x[0] * x[1], {std::cos(x[2]), std::sin(x[2]) * std::cos(x[0]), std::sin(x[2]) * std::sin(x[0])}));
  }
  EnergyParams e;
  e.alpha_coer = 0.3;
  e.c_adj = 0.2;
  e.c_det = 1.0;
  e.kappa = 0.05;
  e.l1 = 0.1;
  e.l2 = 0.05;
  e.l4 = 0.02;
  e.sigma = 0.5;
  e.q0_surface = uniaxial_q(0.4, {0, 0, 1});
  BoundarySpec bc;
  bc.kind = BoundaryKind::dirichlet_partial;
  bc.phi_faces = face::x_lo;
  bc.phi0 = [](const Vec3& x) { return x; };
  bc.surface_faces = face::z_lo | face::z_hi;
  const double err = gradient_check(s, e, bc, 50, 5);
  return {err <= 1e-6, "max relative error " + num(err) + " over 50 directions, 17^3 grid"};
}

Outcome barrier_blowup()
{
  const auto pts = barrier_sweep(EnergyParams{}, SweepConfig{}.s_values, {0, 0, 1});
  const bool mono = strictly_increasing(pts);
  const bool big = pts[3].bulk_total > 10.0 * pts[0].bulk_total;
  return {mono && big, std::string(mono ? "strictly increasing" : "not increasing") + ", k=4 / k=1 = " +
                           num(pts[3].bulk_total / pts[0].bulk_total)};
}

Outcome ciarlet_necas()
{
  CNOptions o;
  o.resolution = 256;
  o.samples = 400;
  const CNReport r = ciarlet_necas_check(lce::testing::angle_doubling(129), o);
  Outcome out;
  out.pass = r.verdict == Verdict::violated && std::abs(r.ratio() / 1.5 - 1.0) <= 0.05;
  out.detail = "angle doubling lhs/rhs " + num(r.ratio()) + " (" + to_string(r.verdict) + ")";
  std::mt19937_64 rng(4);
  const Grid g = build_grid(0.5, 0.5, 0.5, 5, 5, 5, false);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    CNOptions ao;
    ao.samples = 100;
    const CNReport a = ciarlet_necas_check(affine_state(g, random_orientation_preserving(rng), {0.1, 0.2, -0.3}, {}), ao);
    out.pass = out.pass && a.verdict == Verdict::satisfied && std::abs(a.lhs - a.rhs) <= a.bound;
    worst = std::max(worst, std::abs(a.lhs - a.rhs) / a.bound);
  }
  out.detail += "; 5 affine maps satisfied, max |lhs-rhs|/bound " + num(worst);
  return out;
}

Outcome change_of_variables()
{
  std::mt19937_64 rng(5);
  const Grid g = build_grid(0.5, 0.5, 0.5, 5, 5, 5, false);
  auto gy = [](const Vec3& y) { return 1.0 + y[0] - 2.0 * y[1] * y[2] + y[0] * y[0]; };
  Outcome o;
  double worst_disc = 0.0, worst_halving = 0.0;
  for (int t = 0; t < 5; ++t) {
    const FieldState s = affine_state(g, random_orientation_preserving(rng), {0.2, -0.1, 0.3}, {});
    ImageOptions io;
    io.resolution = 32;
    const ChangeOfVariables c = change_of_variables_check(s, gy, io);
    io.resolution = 64;
    const ChangeOfVariables f = change_of_variables_check(s, gy, io);
    const double halving = f.bound / c.bound;
    o.pass = o.pass && c.discrepancy <= 2 * c.bound && f.discrepancy <= 2 * f.bound && halving <= 0.5 * (1 + 1e-9);
    worst_disc = std::max({worst_disc, c.discrepancy / c.bound, f.discrepancy / f.bound});
    worst_halving = std::max(worst_halving, halving);
  }
  o.detail = "max discrepancy/bound " + num(worst_disc) + ", max bound ratio under refinement " + num(worst_halving);
  return o;
}

Outcome convexity()
{
  EnergyParams e;
  e.alpha_coer = 0.5;
  e.c_adj = 0.5;
  e.c_det = 1.0;
  e.l1 = 0.2;
  e.l2 = 0.1;
  e.l4 = 0.05;
  e.kappa = 0.1;
  Outcome o;
  for (const char* name : {"ogden-in-minors", "ldg-in-gradQ", "pullback-in-(A,t)"}) {
    const ConvexityReport r = convexity_probe(name, 100000, e, 17);
    o.pass = o.pass && r.violations == 0;
    o.detail += std::string(o.detail.empty() ? "" : ", ") + name + ": " + std::to_string(r.violations);
  }
  o.detail += " violations over 1e5 segments each";
  return o;
}

ExperimentConfig stripe_config(double lambda)
{
  ExperimentConfig c = parse_config_text("[experiment]\nname = stripe\n[stripe]\nlambda = " + num(lambda) + "\n");
  return c;
}

Outcome stripe()
{
  Outcome o;
  const ExperimentConfig c13 = stripe_config(1.3);
  const StripeOutcome r = run_stripe(c13);
  write_csv(r.state, (work_dir() / "stripe_1.3.csv").string());
  const double bound = std::min(r.trial_energy[0], r.trial_energy[1]);
  const StripeSetup st = stripe_setup(c13);
  for (int t = 0; t < 2; ++t)
    returned.push_back({std::string("stripe 1.3 ") + (t ? "two-band" : "homogeneous"), r.runs[t].state, st.energy,
                        c13.minimize.feasibility_margin});
  o.pass = r.energy <= bound && r.feasibility.feasible && r.cn.verdict != Verdict::violated && r.cn.orientation_ok;
  o.detail = "lambda=1.3: E=" + num(r.energy) + " <= min trial " + num(bound) + ", feasible " +
             (r.feasibility.feasible ? "yes" : "no") + ", CN " + to_string(r.cn.verdict);

  const ExperimentConfig c1 = stripe_config(1.0);
  const StripeOutcome u = run_stripe(c1);
  const StripeSetup su = stripe_setup(c1);
  for (int t = 0; t < 2; ++t)
    returned.push_back({std::string("stripe 1.0 ") + (t ? "two-band" : "homogeneous"), u.runs[t].state, su.energy,
                        c1.minimize.feasibility_margin});
  o.pass = o.pass && u.detector.max_abs_shear <= 1e-6 && u.energy <= std::min(u.trial_energy[0], u.trial_energy[1]);
  o.detail += "; lambda=1: max |dphi1/dx2| " + num(u.detector.max_abs_shear) + ", bands " + std::to_string(u.detector.bands);
  return o;
}

Outcome feasibility_invariance()
{
  Outcome o;
  int bad = 0;
  for (const Returned& r : returned) {
    const FeasibilityReport f = feasibility(r.state, prepared(r.energy), r.margin);
    if (!f.feasible) {
      ++bad;
      o.detail += r.what + " infeasible (min det " + num(f.min_det) + ", min lambda " + num(f.min_lammin) + "); ";
    }
  }
  o.pass = bad == 0 && !returned.empty();
  o.detail += std::to_string(returned.size() - bad) + "/" + std::to_string(returned.size()) + " returned states feasible";
  return o;
}

Outcome determinism()
{
  const fs::path root = work_dir() / "determinism";
  std::vector<ExperimentConfig> configs;
  for (Experiment x : {Experiment::affine_sanity, Experiment::spontaneous_floor, Experiment::barrier_sweep}) {
    ExperimentConfig c = default_config(x);
    finalize(c);
    configs.push_back(c);
  }
  configs.push_back(stripe_config(1.0));
  configs.push_back(parse_config_text("[experiment]\nname = stripe\n[grid]\nnx = 33\nny = 33\n[minimize]\nmax_iters = 300\n"));
  configs.push_back(parse_config_text("[experiment]\nname = cn_audit\n[cn_audit]\nsnapshot = " +
                                      (work_dir() / "stripe_1.3.csv").string() + "\n"));
  Outcome o;
  int files = 0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    std::ostringstream sink;
    const fs::path a = root / (std::to_string(k) + "a"), b = root / (std::to_string(k) + "b");
    run_experiment(configs[k], a.string(), sink);
    run_experiment(configs[k], b.string(), sink);
    for (const auto& f : fs::directory_iterator(a)) {
      if (f.path().extension() != ".csv") continue;
      ++files;
      if (read_text(f.path().string()) != read_text((b / f.path().filename()).string())) {
        o.pass = false;
        o.detail += std::string(to_string(configs[k].experiment)) + "/" + f.path().filename().string() + " differs; ";
      }
    }
  }
  o.detail += std::to_string(files) + " CSV artifacts compared across " + std::to_string(configs.size()) + " configs";
  return o;
}

}  // namespace

int main()
{
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 spontaneous floor", spontaneous_floor},
      {"2 gradient fidelity", gradient_fidelity},
      {"3 barrier blow-up", barrier_blowup},
      {"4 Ciarlet-Necas detector", ciarlet_necas},
      {"5 change of variables", change_of_variables},
      {"6 convexity probes", convexity},
      {"7 stripe experiment", stripe},
      {"8 feasibility invariance", [] { collect_floor_states(); return feasibility_invariance(); }},
      {"9 determinism", determinism},
  };
  const double limits[] = {10, 60, 1, 30, 60, 30, 600, 1e9, 1e9};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limits[k]) {
      o.pass = false;
      o.detail += "; runtime limit " + num(limits[k]) + " s exceeded";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << criteria[k].first << ": " << o.detail << " [" << num(secs) << " s]"
              << std::endl;
  }
  fs::remove_all(work_dir());
  return failed ? 1 : 0;
}
