#pragma once

/**
 * @file minimizer.hpp
 *
 * @brief Feasibility-preserving L-BFGS on the assembled energy.
 *
 * Trial points failing the feasibility predicate (det F >= delta0 at cell
 * centers, lambda_min(Q) >= -1/3 + margin at nodes) are rejected by the line
 * search, which then shrinks the step; an accepted iterate is therefore
 * always feasible and never increases the energy.
 */

#include <cstdio>
#include <deque>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <vector>

#include "lce/discretization.hpp"

namespace lce {

// ---------------------------------------------------------------------------
// Generic L-BFGS core

struct LbfgsOptions {
  int max_iters = 500;
  double grad_tol = 1e-8;  ///< on the max-norm of the gradient
  int memory = 10;         ///< 0 gives steepest descent
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
};

enum class MinimizeStatus { converged, max_iters, line_search_failed };

inline const char* to_string(MinimizeStatus s)
{
  switch (s) {
    case MinimizeStatus::converged:
      return "converged";
    case MinimizeStatus::max_iters:
      return "max_iters";
    case MinimizeStatus::line_search_failed:
      return "line_search_failed";
  }
  return "unknown";
}

struct LbfgsResult {
  std::vector<double> x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  MinimizeStatus status = MinimizeStatus::max_iters;
};

inline double max_norm(const std::vector<double>& v)
{
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b)
{
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

/// Minimizes f over {x : feasible(x)} starting from a feasible x0.
///
///   eval(x, grad) -> value; may throw InfeasibleError, treated as infeasible
///   feasible(x)   -> bool
///   project(d)    -> restricts a direction to the admissible subspace
///   on_iter(iter, x, f, grad, step) is called for x0 (iter 0, step 0) and
///   after every accepted step.
template <class Eval, class Feasible, class Project, class OnIter>
LbfgsResult lbfgs_minimize(std::vector<double> x, Eval&& eval, Feasible&& feasible, Project&& project,
                           const LbfgsOptions& opt, OnIter&& on_iter)
{
  if (!(opt.armijo_c > 0.0 && opt.armijo_c < 1.0)) throw PreconditionError("lbfgs: armijo_c must lie in (0, 1)");
  if (!(opt.backtrack > 0.0 && opt.backtrack < 1.0)) throw PreconditionError("lbfgs: backtrack must lie in (0, 1)");
  if (opt.memory < 0) throw PreconditionError("lbfgs: memory must be nonnegative");

  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), d(n), x_new(n);
  double f = eval(x, g);
  project(g);
  on_iter(0, x, f, g, 0.0);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  LbfgsResult res;
  res.status = MinimizeStatus::max_iters;
  int it = 0;
  for (; it < opt.max_iters; ++it) {
    if (max_norm(g) <= opt.grad_tol) {
      res.status = MinimizeStatus::converged;
      break;
    }
    // two-loop recursion
    d = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * y_hist[k][i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (double& v : d) v *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * s_hist[k][i];
    }
    for (double& v : d) v = -v;
    project(d);
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = g;
      for (double& v : d) v = -v;
      slope = dot(g, d);
    }

    // first step of a steepest-descent direction is capped to a unit max-norm move
    double step = s_hist.empty() ? std::min(1.0, 1.0 / std::max(max_norm(d), 1e-300)) : 1.0;
    bool accepted = false;
    double f_new = 0.0;
    for (int bt = 0; bt < opt.max_backtracks; ++bt, step *= opt.backtrack) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + step * d[i];
      if (!feasible(x_new)) continue;
      try {
        f_new = eval(x_new, g_new);
      } catch (const InfeasibleError&) {
        continue;
      }
      if (f_new <= f + opt.armijo_c * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.status = MinimizeStatus::line_search_failed;
      break;
    }
    project(g_new);
    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y)) && opt.memory > 0) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (int(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    on_iter(it + 1, x, f, g, step);
  }
  if (it == opt.max_iters && max_norm(g) <= opt.grad_tol) res.status = MinimizeStatus::converged;
  res.iterations = it;
  res.x = std::move(x);
  res.f = f;
  res.grad_norm = max_norm(g);
  return res;
}

// ---------------------------------------------------------------------------
// Field-level driver

struct FeasibilityReport {
  double min_det = std::numeric_limits<double>::infinity();
  std::size_t min_det_cell = 0;
  double min_lammin = std::numeric_limits<double>::infinity();
  std::size_t min_lammin_node = 0;
  bool feasible = true;
};

/// min det F over cell centers and min lambda_min(Q) over nodes, with the
/// verdict det F >= delta0 and lambda_min >= -1/3 + margin everywhere.
inline FeasibilityReport feasibility(const FieldState& s, const EnergyParams& e, double margin)
{
  FeasibilityReport r;
  const Grid& g = s.grid;
  const auto dn = g.center_shape_gradients();
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const double d = det(deformation_gradient(s, c, dn));
    if (d < r.min_det || std::isnan(d)) {
      r.min_det = d;
      r.min_det_cell = c;
    }
  }
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const double l = eigenvalues(s.q(n))[0];
    if (l < r.min_lammin || std::isnan(l)) {
      r.min_lammin = l;
      r.min_lammin_node = n;
    }
  }
  r.feasible = r.min_det >= e.delta0 && r.min_lammin >= -1.0 / 3.0 + margin;
  return r;
}

/// Fast predicate with the same verdict as feasibility(), exiting early.
inline bool is_feasible(const FieldState& s, const EnergyParams& e, double margin)
{
  const Grid& g = s.grid;
  const auto dn = g.center_shape_gradients();
  for (std::size_t c = 0; c < g.num_cells(); ++c)
    if (!(det(deformation_gradient(s, c, dn)) >= e.delta0)) return false;
  for (std::size_t n = 0; n < g.num_nodes(); ++n)
    if (!in_q_set(s.q(n), margin)) return false;
  return true;
}

struct MinimizeOptions {
  int max_iters = 500;
  double grad_tol = 1e-8;
  int memory = 10;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  double feasibility_margin = 1e-3;
  std::uint64_t seed = 0;
  double perturbation = 0.0;  ///< amplitude of a seeded random kick of the free dofs
  int threads = 1;
  TermMask terms{};
  std::ostream* log = nullptr;  ///< iteration CSV, header included
};

struct IterRecord {
  int iter;
  EnergyBreakdown energy;
  double grad_norm, step, min_det, min_lammin;
};

struct MinimizeResult {
  FieldState state;
  int iterations = 0;
  EnergyBreakdown energy;
  double grad_norm = 0.0;
  MinimizeStatus status = MinimizeStatus::max_iters;
  bool feasible = false;
  std::vector<IterRecord> history;
};

inline constexpr const char* iteration_log_header =
    "iter,total,elastic,ldg_gradient,bulk,surface,grad_norm,step,min_det,min_lammin";

inline std::string format_iteration(const IterRecord& r)
{
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.iter, r.energy.total,
                r.energy.elastic, r.energy.ldg_gradient, r.energy.bulk, r.energy.surface, r.grad_norm, r.step,
                r.min_det, r.min_lammin);
  return buf;
}

/// Adds a seeded uniform kick of amplitude `amp` to the free dofs, halving it
/// until the state stays feasible.
inline FieldState perturbed(FieldState s, const EnergyParams& e, const BoundarySpec& bc, double amp,
                            std::uint64_t seed, double margin)
{
  if (amp <= 0.0) return s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> d(s.u.size());
  for (double& v : d) v = u(rng);
  project_direction(s, bc, d);
  for (int k = 0; k < 60; ++k, amp *= 0.5) {
    FieldState t = s;
    for (std::size_t i = 0; i < d.size(); ++i) t.u[i] += amp * d[i];
    if (is_feasible(t, e, margin)) return t;
  }
  return s;
}

/// Minimizes the assembled energy from a feasible state (boundary data
/// already applied). Throws InfeasibleError if state0 is infeasible.
inline MinimizeResult minimize(const FieldState& state0, const EnergyParams& params, const BoundarySpec& bc,
                               const MinimizeOptions& opts)
{
  const EnergyParams e = prepared(params);
  const double margin = opts.feasibility_margin;
  {
    const FeasibilityReport fr = feasibility(state0, e, margin);
    if (!fr.feasible) {
      std::ostringstream os;
      if (fr.min_det < e.delta0) {
        os << "initial state infeasible: det F = " << fr.min_det << " < delta0 = " << e.delta0 << " at cell "
           << fr.min_det_cell;
        throw InfeasibleError(os.str(), InfeasibleError::Kind::jacobian, fr.min_det_cell, fr.min_det);
      }
      os << "initial state infeasible: lambda_min(Q) = " << fr.min_lammin << " < -1/3 + " << margin << " at node "
         << fr.min_lammin_node;
      throw InfeasibleError(os.str(), InfeasibleError::Kind::order_tensor, fr.min_lammin_node, fr.min_lammin);
    }
  }
  const FieldState start = perturbed(state0, e, bc, opts.perturbation, opts.seed, margin);

  AssemblyOptions aopt;
  aopt.terms = opts.terms;
  aopt.threads = opts.threads;

  FieldState work = start;
  EnergyBreakdown last_energy;
  std::vector<double> last_x;
  auto eval = [&](const std::vector<double>& x, std::vector<double>& grad) {
    work.u = x;
    Assembly a = assemble(work, e, bc, aopt);
    grad = std::move(a.gradient);
    last_energy = a.energy;
    last_x = x;
    return a.energy.total;
  };
  auto feasible = [&](const std::vector<double>& x) {
    work.u = x;
    return is_feasible(work, e, margin);
  };
  auto project = [&](std::vector<double>& d) { project_direction(start, bc, d); };

  MinimizeResult result;
  if (opts.log) *opts.log << iteration_log_header << '\n';
  EnergyBreakdown accepted_energy;
  auto on_iter = [&](int it, const std::vector<double>& x, double, const std::vector<double>& g, double step) {
    // the accepted point is always the last one evaluated
    accepted_energy = last_energy;
    work.u = x;
    const FeasibilityReport fr = feasibility(work, e, margin);
    IterRecord r{it, last_energy, max_norm(g), step, fr.min_det, fr.min_lammin};
    result.history.push_back(r);
    if (opts.log) *opts.log << format_iteration(r) << '\n';
  };

  LbfgsOptions lo;
  lo.max_iters = opts.max_iters;
  lo.grad_tol = opts.grad_tol;
  lo.memory = opts.memory;
  lo.armijo_c = opts.armijo_c;
  lo.backtrack = opts.backtrack_factor;
  const LbfgsResult lr = lbfgs_minimize(start.u, eval, feasible, project, lo, on_iter);

  result.state = start;
  result.state.u = lr.x;
  result.iterations = lr.iterations;
  result.energy = accepted_energy;
  result.grad_norm = lr.grad_norm;
  result.status = lr.status;
  result.feasible = feasibility(result.state, e, margin).feasible;
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

/// Worst relative error between <grad E, v> and a central difference over
/// random directions on the free dofs. Directions are normalized in the max
/// norm so every coordinate moves by at most h. Returns 0 when no dof is
/// free. `corrupt` may modify the analytic gradient (fault injection).
inline double gradient_check(const FieldState& s, const EnergyParams& params, const BoundarySpec& bc, int directions,
                             std::uint64_t seed = 1, double h = 1e-5, const AssemblyOptions& aopt = {},
                             const std::function<void(std::vector<double>&)>& corrupt = {})
{
  const EnergyParams e = prepared(params);
  Assembly a = assemble(s, e, bc, aopt);
  if (corrupt) corrupt(a.gradient);
  std::size_t free_count = 0;
  for (std::uint8_t f : s.fixed) free_count += f ? 0 : 1;
  if (free_count == 0) return 0.0;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  AssemblyOptions value_only = aopt;
  value_only.gradient = false;
  double worst = 0.0;
  for (int k = 0; k < directions; ++k) {
    std::vector<double> v(s.u.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = s.fixed[i] ? 0.0 : gauss(rng);
    const double m = max_norm(v);
    if (m == 0.0) continue;
    for (double& x : v) x /= m;
    FieldState p = s, q = s;
    for (std::size_t i = 0; i < v.size(); ++i) {
      p.u[i] += h * v[i];
      q.u[i] -= h * v[i];
    }
    const double fd =
        (assemble(p, e, bc, value_only).energy.total - assemble(q, e, bc, value_only).energy.total) / (2.0 * h);
    const double an = dot(a.gradient, v);
    const double scale = std::max({std::abs(fd), std::abs(an), 1e-300});
    if (std::abs(fd) == 0.0 && std::abs(an) == 0.0) continue;
    worst = std::max(worst, std::abs(an - fd) / scale);
  }
  return worst;
}

}  // namespace lce
