#pragma once

/**
 * @file experiments.hpp
 *
 * @brief Configuration files and the experiments run by lce-min.
 *
 * Config files are INI: `[section]` headers, `key = value` lines and `;`
 * comments. Every accepted key is listed in config_keys(); anything else is a
 * ConfigError. Defaults depend on the experiment and are filled in by
 * default_config() before the file is applied.
 */

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lce/field_io.hpp"
#include "lce/injectivity.hpp"
#include "lce/minimizer.hpp"

namespace lce {

enum class Experiment { affine_sanity, spontaneous_floor, stripe, barrier_sweep, cn_audit };

inline const char* to_string(Experiment x)
{
  switch (x) {
    case Experiment::affine_sanity: return "affine_sanity";
    case Experiment::spontaneous_floor: return "spontaneous_floor";
    case Experiment::stripe: return "stripe";
    case Experiment::barrier_sweep: return "barrier_sweep";
    case Experiment::cn_audit: return "cn_audit";
  }
  return "?";
}

inline Experiment experiment_from_string(const std::string& s)
{
  for (Experiment x : {Experiment::affine_sanity, Experiment::spontaneous_floor, Experiment::stripe,
                       Experiment::barrier_sweep, Experiment::cn_audit})
    if (s == to_string(x)) return x;
  throw ConfigError("experiment.name: unknown experiment '" + s +
                    "' (expected affine_sanity, spontaneous_floor, stripe, barrier_sweep or cn_audit)");
}

struct GridConfig {
  double a = 1.0, b = 1.0, c = 1.0;
  int nx = 9, ny = 9, nz = 9;
  bool plane_strain = false;
};

struct StripeConfig {
  double lambda = 1.3;
  double delta = 0.1;  ///< floor on det[phi1, phi2]
  std::optional<double> q0_s;  ///< anchoring order; empty = relaxed unstretched state
  Vec3 director{1.0, 0.0, 0.0};
  int regime = 1;              ///< 1: Dirichlet Q on y = +-b; 2: anchoring energy there instead
  double perturbation = 1e-3;  ///< seeded kick of the two-band trial
};

struct FloorConfig {
  int trials = 10;
  double tolerance = 1e-4;
};

struct SweepConfig {
  std::vector<double> s_values{0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999};
  Vec3 director{0.0, 0.0, 1.0};
};

struct AuditConfig {
  std::string snapshot;
  int resolution = 0;
  std::size_t samples = 1000;
  double plane_c = 0.5;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::affine_sanity;
  std::string out_dir;  ///< empty = out/<experiment>
  std::uint64_t seed = 1;
  GridConfig grid;
  EnergyParams energy;
  MinimizeOptions minimize;
  StripeConfig stripe;
  FloorConfig floor;
  SweepConfig sweep;
  AuditConfig audit;
  std::set<std::string> given;  ///< keys present in the file
};

/// Per-experiment defaults; the stripe preset's a0 is resolved after parsing.
inline ExperimentConfig default_config(Experiment x)
{
  ExperimentConfig c;
  c.experiment = x;
  switch (x) {
    case Experiment::affine_sanity:
      c.grid = {0.5, 0.5, 0.5, 2, 2, 2, false};
      c.energy.c_det = 1.0;
      break;
    case Experiment::spontaneous_floor:
      c.grid = {0.5, 0.5, 0.5, 2, 2, 2, false};
      c.energy.c_det = 1e5;
      c.minimize.max_iters = 2000;
      c.minimize.grad_tol = 1e-10;
      break;
    case Experiment::stripe:
      c.grid = {1.0, 1.0, 0.5, 65, 65, 1, true};
      c.energy.c_det = 10.0;
      c.minimize.max_iters = 3000;
      break;
    case Experiment::barrier_sweep:
    case Experiment::cn_audit:
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline double parse_double(const std::string& key, const std::string& text)
{
  const std::string t = trim(text);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  if (!std::isfinite(v)) throw ConfigError(key + ": must be finite");
  return v;
}

inline long long parse_int(const std::string& key, const std::string& text)
{
  const std::string t = trim(text);
  long long v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text)
{
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text)
{
  std::string t = text;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(key, tok));
  if (out.empty()) throw ConfigError(key + ": expected a list of numbers");
  return out;
}

inline Vec3 parse_direction(const std::string& key, const std::string& text)
{
  const auto v = parse_list(key, text);
  if (v.size() != 3) throw ConfigError(key + ": expected three components");
  const Vec3 n{v[0], v[1], v[2]};
  if (!(norm(n) > 0.0)) throw ConfigError(key + ": direction must be nonzero");
  return (1.0 / norm(n)) * n;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters()
{
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto grid_d = [&](const std::string& k, double GridConfig::*f) {
      t["grid." + k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        c.grid.*f = parse_double(key, v);
      };
    };
    auto grid_i = [&](const std::string& k, int GridConfig::*f) {
      t["grid." + k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        c.grid.*f = int(parse_int(key, v));
      };
    };
    auto energy_d = [&](const std::string& k, double EnergyParams::*f) {
      t["energy." + k] = [f](ExperimentConfig& c, const std::string& key, const std::string& v) {
        c.energy.*f = parse_double(key, v);
      };
    };
    t["experiment.name"] = [](ExperimentConfig&, const std::string&, const std::string&) {};
    t["experiment.out"] = [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = trim(v); };
    t["experiment.seed"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      const long long s = parse_int(key, v);
      if (s < 0) throw ConfigError(key + ": must be >= 0");
      c.seed = std::uint64_t(s);
    };
    grid_d("a", &GridConfig::a);
    grid_d("b", &GridConfig::b);
    grid_d("c", &GridConfig::c);
    grid_i("nx", &GridConfig::nx);
    grid_i("ny", &GridConfig::ny);
    grid_i("nz", &GridConfig::nz);
    t["grid.plane_strain"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.grid.plane_strain = parse_bool(key, v);
    };
    energy_d("mu", &EnergyParams::mu);
    energy_d("a0", &EnergyParams::a0);
    energy_d("alpha_coer", &EnergyParams::alpha_coer);
    energy_d("c_adj", &EnergyParams::c_adj);
    energy_d("c_det", &EnergyParams::c_det);
    energy_d("p", &EnergyParams::p);
    energy_d("r", &EnergyParams::r_exp);
    energy_d("kappa", &EnergyParams::kappa);
    energy_d("l1", &EnergyParams::l1);
    energy_d("l2", &EnergyParams::l2);
    energy_d("l3", &EnergyParams::l3);
    energy_d("l4", &EnergyParams::l4);
    energy_d("a_T", &EnergyParams::a_T);
    energy_d("b", &EnergyParams::b);
    energy_d("c", &EnergyParams::c);
    energy_d("eps_barrier", &EnergyParams::eps_barrier);
    energy_d("delta0", &EnergyParams::delta0);
    energy_d("sigma", &EnergyParams::sigma);
    t["energy.growth_regime"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      const std::string s = trim(v);
      if (s == "strict") {
        c.energy.growth_regime = GrowthRegime::strict;
      } else if (s == "quadratic") {
        c.energy.growth_regime = GrowthRegime::quadratic;
      } else {
        throw ConfigError(key + ": expected strict or quadratic, got '" + s + "'");
      }
    };
    t["minimize.max_iters"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.max_iters = int(parse_int(key, v));
    };
    t["minimize.grad_tol"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.grad_tol = parse_double(key, v);
    };
    t["minimize.memory"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.memory = int(parse_int(key, v));
    };
    t["minimize.armijo_c"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.armijo_c = parse_double(key, v);
    };
    t["minimize.backtrack_factor"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.backtrack_factor = parse_double(key, v);
    };
    t["minimize.margin"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.feasibility_margin = parse_double(key, v);
    };
    t["minimize.perturbation"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.perturbation = parse_double(key, v);
    };
    t["minimize.threads"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.minimize.threads = int(parse_int(key, v));
    };
    t["stripe.lambda"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.stripe.lambda = parse_double(key, v);
    };
    t["stripe.delta"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.stripe.delta = parse_double(key, v);
    };
    t["stripe.q0_s"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.stripe.q0_s = parse_double(key, v);
    };
    t["stripe.director"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.stripe.director = parse_direction(key, v);
    };
    t["stripe.regime"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.stripe.regime = int(parse_int(key, v));
    };
    t["stripe.perturbation"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.stripe.perturbation = parse_double(key, v);
    };
    t["spontaneous_floor.trials"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.floor.trials = int(parse_int(key, v));
    };
    t["spontaneous_floor.tolerance"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.floor.tolerance = parse_double(key, v);
    };
    t["barrier_sweep.s_values"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.sweep.s_values = parse_list(key, v);
    };
    t["barrier_sweep.director"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.sweep.director = parse_direction(key, v);
    };
    t["cn_audit.snapshot"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.audit.snapshot = trim(v);
    };
    t["cn_audit.resolution"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.audit.resolution = int(parse_int(key, v));
    };
    t["cn_audit.samples"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      const long long n = parse_int(key, v);
      if (n < 0) throw ConfigError(key + ": must be >= 0");
      c.audit.samples = std::size_t(n);
    };
    t["cn_audit.plane_c"] = [](ExperimentConfig& c, const std::string& key, const std::string& v) {
      c.audit.plane_c = parse_double(key, v);
    };
    return t;
  }();
  return table;
}

inline std::string fmt(double v)
{
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace detail

/// Every accepted `section.key`.
inline std::vector<std::string> config_keys()
{
  std::vector<std::string> out;
  for (const auto& [k, s] : detail::setters()) out.push_back(k);
  return out;
}

/// Uniform state minimizing W(diag(F11, lambda, 1), L(Q)) + det F bulk(Q)
/// over F11 and Q, started from a uniaxial Q along `director`. Under the
/// plane-strain stripe boundary data this state is an exact equilibrium of
/// the discrete energy when Q is anchored to it.
struct UniformState {
  double f11 = 1.0;
  QTensor q;
  double density = 0.0;
};

inline double uniaxial_bulk_minimizer(const EnergyParams& params)
{
  const EnergyParams e = prepared(params);
  auto f = [&](double s) { return bulk_total(uniaxial_q(s, {0, 0, 1}), e); };
  double best = 0.0, fbest = f(0.0);
  const int n = 3000;
  for (int k = 1; k < n; ++k) {
    const double s = -0.5 + 1.5 * k / n;
    const double v = f(s);
    if (v < fbest) {
      fbest = v;
      best = s;
    }
  }
  double lo = std::max(-0.5 + 1e-12, best - 1.5 / n), hi = std::min(1.0 - 1e-12, best + 1.5 / n);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double m1 = hi - phi * (hi - lo), m2 = lo + phi * (hi - lo);
    if (f(m1) < f(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  return 0.5 * (lo + hi);
}

inline UniformState relaxed_uniform_state(const EnergyParams& params, double lambda, const QTensor& q_start,
                                          double margin)
{
  const EnergyParams e = prepared(params);
  auto pack = [](double f11, const QTensor& q) {
    std::vector<double> x(6);
    x[0] = f11;
    for (int n = 0; n < 5; ++n) x[1 + n] = q.c[n];
    return x;
  };
  auto unpack_q = [](const std::vector<double>& x) {
    QTensor q;
    for (int n = 0; n < 5; ++n) q.c[n] = x[1 + n];
    return q;
  };
  auto eval = [&](const std::vector<double>& x, std::vector<double>& g) {
    const QTensor q = unpack_q(x);
    const Mat3 f = Mat3::diag(x[0], lambda, 1.0);
    const StepTensor l = step_tensor(q, e.a0);
    const ElasticEval w = elastic_density(f, l, e);
    const BulkEval bk = bulk_density(q, e);
    const double jf = x[0] * lambda;
    g.assign(6, 0.0);
    g[0] = w.d_f(0, 0) + lambda * bk.value;
    const QTensor gq = coeff_gradient(e.a0 * w.d_l + jf * bk.d_q);
    for (int n = 0; n < 5; ++n) g[1 + n] = gq.c[n];
    return w.value + jf * bk.value;
  };
  auto feasible = [&](const std::vector<double>& x) {
    return x[0] * lambda >= e.delta0 && in_q_set(unpack_q(x), margin);
  };
  LbfgsOptions o;
  o.max_iters = 2000;
  o.grad_tol = 1e-13;
  const LbfgsResult r = lbfgs_minimize(
      pack(1.0, q_start), eval, feasible, [](std::vector<double>&) {}, o,
      [](int, const std::vector<double>&, double, const std::vector<double>&, double) {});
  return {r.x[0], unpack_q(r.x), r.f};
}

/// Checks cross-field constraints and resolves experiment-dependent presets.
inline void finalize(ExperimentConfig& c)
{
  auto has = [&](const std::string& k) { return c.given.count(k) > 0; };
  const GridConfig& g = c.grid;
  if (!(g.a > 0.0)) throw ConfigError("grid.a: must satisfy a > 0");
  if (!(g.b > 0.0)) throw ConfigError("grid.b: must satisfy b > 0");
  if (!(g.c > 0.0)) throw ConfigError("grid.c: must satisfy c > 0");
  if (g.nx < 2) throw ConfigError("grid.nx: must satisfy nx >= 2");
  if (g.ny < 2) throw ConfigError("grid.ny: must satisfy ny >= 2");
  if (!g.plane_strain && g.nz < 2) throw ConfigError("grid.nz: must satisfy nz >= 2");
  const MinimizeOptions& m = c.minimize;
  if (m.max_iters < 0) throw ConfigError("minimize.max_iters: must be >= 0");
  if (!(m.grad_tol > 0.0)) throw ConfigError("minimize.grad_tol: must satisfy grad_tol > 0");
  if (m.memory < 0) throw ConfigError("minimize.memory: must be >= 0");
  if (!(m.armijo_c > 0.0 && m.armijo_c < 1.0)) throw ConfigError("minimize.armijo_c: must lie in (0, 1)");
  if (!(m.backtrack_factor > 0.0 && m.backtrack_factor < 1.0)) {
    throw ConfigError("minimize.backtrack_factor: must lie in (0, 1)");
  }
  if (!(m.feasibility_margin >= 0.0 && m.feasibility_margin < 1.0 / 3.0)) {
    throw ConfigError("minimize.margin: must lie in [0, 1/3)");
  }
  if (!(m.perturbation >= 0.0)) throw ConfigError("minimize.perturbation: must be >= 0");
  if (m.threads < 1) throw ConfigError("minimize.threads: must be >= 1");
  validate(c.energy);

  switch (c.experiment) {
    case Experiment::stripe: {
      StripeConfig& s = c.stripe;
      if (!(s.lambda >= 1.0)) throw ConfigError("stripe.lambda: must satisfy lambda >= 1 (got " + detail::fmt(s.lambda) + ")");
      if (!(s.delta > 0.0)) throw ConfigError("stripe.delta: must satisfy delta > 0 (got " + detail::fmt(s.delta) + ")");
      if (s.regime != 1 && s.regime != 2) throw ConfigError("stripe.regime: must be 1 or 2");
      if (s.regime == 1 && c.energy.sigma != 0.0) {
        throw ConfigError("stripe.regime: regime 1 anchors Q by Dirichlet data and needs energy.sigma = 0");
      }
      if (s.regime == 2 && !(c.energy.sigma > 0.0)) throw ConfigError("stripe.regime: regime 2 needs energy.sigma > 0");
      if (s.q0_s && !(*s.q0_s > -0.5 && *s.q0_s < 1.0)) throw ConfigError("stripe.q0_s: must lie in (-1/2, 1)");
      if (!(s.perturbation >= 0.0)) throw ConfigError("stripe.perturbation: must be >= 0");
      if (has("grid.plane_strain") && !c.grid.plane_strain) {
        throw ConfigError("grid.plane_strain: the stripe experiment runs in plane strain");
      }
      c.grid.plane_strain = true;
      c.grid.nz = 1;
      if (!has("energy.a0")) c.energy.a0 = 3.0 / (1.0 - uniaxial_bulk_minimizer(c.energy));
      c.energy.delta0 = std::max(c.energy.delta0, s.delta);
      break;
    }
    case Experiment::spontaneous_floor:
      if (c.floor.trials < 1) throw ConfigError("spontaneous_floor.trials: must be >= 1");
      if (!(c.floor.tolerance > 0.0)) throw ConfigError("spontaneous_floor.tolerance: must be > 0");
      break;
    case Experiment::barrier_sweep:
      for (double s : c.sweep.s_values)
        if (!(s > -0.5 && s < 1.0)) {
          throw ConfigError("barrier_sweep.s_values: every s must lie in (-1/2, 1) (got " + detail::fmt(s) + ")");
        }
      break;
    case Experiment::cn_audit:
      if (!(c.audit.plane_c > 0.0)) throw ConfigError("cn_audit.plane_c: must be > 0");
      if (c.audit.resolution < 0) throw ConfigError("cn_audit.resolution: must be >= 0");
      break;
    case Experiment::affine_sanity:
      break;
  }
}

/// Parses config text; `source` names the file in error messages.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "config")
{
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(source + ": '" + section + "' must be inside a [section]");
    for (const auto& [key, value] : body) entries.emplace_back(section + "." + key, value.data());
  }
  std::string name;
  for (const auto& [k, v] : entries)
    if (k == "experiment.name") name = detail::trim(v);
  if (name.empty()) throw ConfigError("experiment.name: missing");
  ExperimentConfig c = default_config(experiment_from_string(name));
  const auto& table = detail::setters();
  for (const auto& [k, v] : entries) {
    const auto it = table.find(k);
    if (it == table.end()) throw ConfigError(k + ": unknown key");
    it->second(c, k, v);
    c.given.insert(k);
  }
  finalize(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& path)
{
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config_text(text, path);
}

// ---------------------------------------------------------------------------
// Output helpers

/// Ordered `key = value` report.
class Report {
 public:
  void add(const std::string& key, const std::string& value) { kv_.emplace_back(key, value); }
  void add(const std::string& key, const char* value) { kv_.emplace_back(key, value); }
  void add(const std::string& key, double value)
  {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    kv_.emplace_back(key, buf);
  }
  void add(const std::string& key, long long value) { kv_.emplace_back(key, std::to_string(value)); }
  void add(const std::string& key, int value) { add(key, (long long)value); }
  void add(const std::string& key, std::size_t value) { add(key, (long long)value); }
  void add(const std::string& key, bool value) { kv_.emplace_back(key, value ? "true" : "false"); }

  std::string text() const
  {
    std::string out;
    for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  std::vector<std::pair<std::string, std::string>> kv_;
};

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir))
  {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { write_text(path(name), text); }

 private:
  std::filesystem::path dir_;
};

inline std::string csv_number(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Exit codes shared with the command line.
inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_infeasible = 3;
inline constexpr int exit_audit = 4;

// ---------------------------------------------------------------------------
// affine_sanity

struct SanityCheck {
  std::string name;
  double computed = 0.0, expected = 0.0;
  double rel_error() const { return std::abs(computed - expected) / std::max(1e-300, std::abs(expected)); }
  bool pass(double tol) const { return rel_error() <= tol; }
};

/// Single-cell energies against closed forms built from scalar invariants.
inline std::vector<SanityCheck> affine_sanity_checks(const ExperimentConfig& cfg)
{
  const GridConfig& gc = cfg.grid;
  const Grid g = build_grid(gc.a, gc.b, gc.c, 2, 2, 2, false);
  const double vol = g.volume();
  EnergyParams e = prepared(cfg.energy);
  std::vector<SanityCheck> out;
  const TermMask elastic_only{true, false, false, false};

  // W for diagonal F and L = ell I
  auto w_diag = [&](double f1, double f2, double f3, double ell) {
    const double a = (f1 * f1 + f2 * f2 + f3 * f3) / ell;
    const double b = ell * ((f2 * f3) * (f2 * f3) + (f1 * f3) * (f1 * f3) + (f1 * f2) * (f1 * f2)) / (ell * ell * ell);
    const double d = f1 * f2 * f3 / std::pow(ell, 1.5);
    return e.mu * (a - 1.0) + e.alpha_coer * std::pow(a, 0.5 * e.p) + e.c_adj * std::pow(b, 0.25 * e.p) +
           e.c_det * (d - 1.0) * (d - 1.0);
  };
  const double ell = e.a0 / 3.0;
  out.push_back({"identity elastic", energy(identity_state(g), e, {}, {elastic_only}).total, vol * w_diag(1, 1, 1, ell)});
  {
    const double l = 1.3;
    const FieldState s = affine_state(g, Mat3::diag(l, 1 / std::sqrt(l), 1 / std::sqrt(l)), {}, QTensor::zero());
    out.push_back({"uniaxial stretch elastic", energy(s, e, {}, {elastic_only}).total,
                   vol * w_diag(l, 1 / std::sqrt(l), 1 / std::sqrt(l), ell)});
  }
  {
    // F = sqrt(L) with det L = 1: a = 3, b = 3, d = 1
    const double sq = 0.5;
    EnergyParams es = e;
    es.a0 = 3.0 / std::cbrt((1 + 2 * sq) * (1 - sq) * (1 - sq));
    const QTensor q = uniaxial_q(sq, {0, 0, 1});
    const Mat3 f = spd_sqrt(step_tensor(q, es.a0).m);
    const double expected = es.mu * 2.0 + es.alpha_coer * std::pow(3.0, 0.5 * es.p) + es.c_adj * std::pow(3.0, 0.25 * es.p);
    out.push_back({"spontaneous deformation elastic", energy(affine_state(g, f, {}, q), es, {}, {elastic_only}).total,
                   vol * expected});
  }
  {
    const double s = 0.9;
    const double closed = -e.eps_barrier * std::log((1 + 2 * s) * (1 - s) * (1 - s));
    out.push_back({"uniaxial barrier", bulk_barrier(uniaxial_q(s, {0, 0, 1}), e), closed});
  }
  {
    // Q linear in y with phi = id and phi = 2x: only the L3 term is on, so the
    // density is l3 |grad_y Q|^2 and the Eulerian integral scales with |phi(Omega)|.
    EnergyParams el = e;
    el.l1 = el.l2 = el.l4 = el.kappa = 0.0;
    el.l3 = e.l3 != 0.0 ? e.l3 : 1.0;
    const std::array<QTensor, 3> slope{QTensor{{0.05, 0.01, 0.0, 0.02, 0.0}}, QTensor{{0.0, 0.03, -0.02, 0.0, 0.01}},
                                       QTensor{{0.01, 0.0, 0.04, 0.0, -0.03}}};
    double grad2 = 0.0;
    for (const QTensor& q : slope) grad2 += q.norm() * q.norm();
    for (double scale : {1.0, 2.0}) {
      FieldState s = affine_state(g, Mat3::diag(scale, scale, scale), {}, QTensor::zero());
      for (std::size_t n = 0; n < g.num_nodes(); ++n) {
        const Vec3 y = s.phi(n);
        s.set_q(n, y[0] * slope[0] + y[1] * slope[1] + y[2] * slope[2]);
      }
      const TermMask ldg_only{false, true, false, false};
      out.push_back({scale == 1.0 ? "gradient energy, identity" : "gradient energy, phi = 2x",
                     energy(s, el, {}, {ldg_only}).total, scale * scale * scale * vol * el.l3 * grad2});
    }
  }
  {
    EnergyParams es = e;
    es.sigma = e.sigma != 0.0 ? e.sigma : 1.0;
    es.q0_surface = uniaxial_q(0.4, {1, 0, 0});
    const QTensor q = uniaxial_q(0.2, {0, 0, 1});
    BoundarySpec bc;
    bc.surface_faces = face::all;
    const double area = 8.0 * (g.a * g.b + g.b * g.c + g.a * g.c);
    const TermMask surface_only{false, false, false, true};
    out.push_back({"anchoring energy", energy(affine_state(g, Mat3::identity(), {}, q), es, bc, {surface_only}).total,
                   es.sigma * area * (q - es.q0_surface).norm() * (q - es.q0_surface).norm()});
  }
  return out;
}

// ---------------------------------------------------------------------------
// spontaneous_floor

struct FloorTrial {
  double energy = 0.0, expected = 0.0, rel_error = 0.0;
  MinimizeStatus status = MinimizeStatus::max_iters;
  int iterations = 0;
};

/// Random SPD L with det L = 1; a0 = tr L and Q = L/a0 - I/3 reproduce it.
inline Mat3 random_unimodular_spd(std::mt19937_64& rng)
{
  std::normal_distribution<double> n01(0.0, 1.0);
  double q[4];
  double qn = 0.0;
  for (double& v : q) {
    v = n01(rng);
    qn += v * v;
  }
  qn = std::sqrt(qn);
  for (double& v : q) v /= qn;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  const Mat3 r{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w), 2 * (x * y + z * w),
                1 - 2 * (x * x + z * z), 2 * (y * z - x * w), 2 * (x * z - y * w), 2 * (y * z + x * w),
                1 - 2 * (x * x + y * y)}};
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  const double t1 = u(rng), t2 = u(rng);
  return r * Mat3::diag(std::exp(t1), std::exp(t2), std::exp(-t1 - t2)) * transpose(r);
}

inline FloorTrial spontaneous_floor_trial(const ExperimentConfig& cfg, const Mat3& l, std::ostream* log)
{
  const GridConfig& gc = cfg.grid;
  const Grid g = build_grid(gc.a, gc.b, gc.c, 2, 2, 2, false);
  EnergyParams e = cfg.energy;
  e.a0 = trace(l);
  Mat3 qm = (1.0 / e.a0) * l;
  for (int i = 0; i < 3; ++i) qm(i, i) -= 1.0 / 3.0;
  FieldState s = affine_state(g, Mat3::identity(), {}, QTensor::project(qm));
  for (std::size_t n = 0; n < g.num_nodes(); ++n)
    for (int k = 3; k < dofs_per_node; ++k) s.fixed[n * dofs_per_node + k] = 1;
  BoundarySpec bc;
  bc.kind = BoundaryKind::partial_average;
  MinimizeOptions o = cfg.minimize;
  o.terms = {true, false, false, false};
  o.log = log;
  const MinimizeResult r = minimize(apply_boundary(s, bc), e, bc, o);
  FloorTrial t;
  t.energy = r.energy.elastic;
  t.expected = 2.0 * e.mu * g.volume();
  t.rel_error = std::abs(t.energy - t.expected) / t.expected;
  t.status = r.status;
  t.iterations = r.iterations;
  return t;
}

// ---------------------------------------------------------------------------
// stripe

struct StripeSetup {
  Grid grid;
  EnergyParams energy;  ///< prepared
  BoundarySpec bc;
  QTensor q0;
  double s0 = 0.0;  ///< uniaxial bulk minimizer
};

inline StripeSetup stripe_setup(const ExperimentConfig& cfg)
{
  StripeSetup st;
  const GridConfig& gc = cfg.grid;
  st.grid = build_grid(gc.a, gc.b, gc.c, gc.nx, gc.ny, 1, true);
  st.energy = prepared(cfg.energy);
  st.s0 = uniaxial_bulk_minimizer(st.energy);
  const Vec3 n = cfg.stripe.director;
  if (cfg.stripe.q0_s) {
    st.q0 = uniaxial_q(*cfg.stripe.q0_s, n);
  } else {
    st.q0 = relaxed_uniform_state(st.energy, 1.0, uniaxial_q(st.s0, n), cfg.minimize.feasibility_margin).q;
  }
  const double lambda = cfg.stripe.lambda;
  st.bc.kind = BoundaryKind::dirichlet_partial;
  st.bc.phi_faces = face::y_lo | face::y_hi;
  st.bc.phi_axes = 2;
  st.bc.phi0 = [lambda](const Vec3& x) { return Vec3{x[0], lambda * x[1], x[2]}; };
  if (cfg.stripe.regime == 1) {
    const QTensor q0 = st.q0;
    st.bc.q0 = [q0](const Vec3&) { return q0; };
    st.bc.q_faces = face::y_lo | face::y_hi;
  } else {
    st.energy.q0_surface = st.q0;
    st.bc.surface_faces = face::y_lo | face::y_hi;
  }
  return st;
}

/// Uniform trial: the relaxed uniform state at the imposed stretch.
inline FieldState stripe_homogeneous_trial(const StripeSetup& st, double lambda, double margin)
{
  const UniformState u = relaxed_uniform_state(st.energy, lambda, st.q0, margin);
  FieldState s = affine_state(st.grid, Mat3::diag(u.f11, lambda, 1.0), {}, u.q);
  return apply_boundary(s, st.bc);
}

/// Two shear bands y < 0 and y > 0 with opposite shear and director rotation.
/// For anisotropy ratio rr = (1 + 2 s0)/(1 - s0), the stretch lambda is
/// accommodated by rotating the director by theta with
/// lambda^2 = 1 + (rr - 1) sin^2 theta and shearing by (rr - 1) sin cos / lambda.
inline FieldState stripe_two_band_trial(const StripeSetup& st, double lambda)
{
  const double rr = (1.0 + 2.0 * st.s0) / (1.0 - st.s0);
  double theta = 0.0;
  if (rr > 1.0) theta = std::asin(std::sqrt(std::clamp((lambda * lambda - 1.0) / (rr - 1.0), 0.0, 1.0)));
  const double gamma = (rr - 1.0) * std::sin(theta) * std::cos(theta) / lambda;
  const Grid& g = st.grid;
  FieldState s = identity_state(g);
  for (std::size_t n = 0; n < g.num_nodes(); ++n) {
    const Vec3 x = g.position(n);
    const double sgn = x[1] < 0.0 ? 1.0 : (x[1] > 0.0 ? -1.0 : 0.0);
    s.set_phi(n, {x[0] + gamma * (g.b - std::abs(x[1])), lambda * x[1], 0.0});
    const Vec3 dir{std::cos(theta), sgn * std::sin(theta), 0.0};
    s.set_q(n, uniaxial_q(st.s0, (1.0 / norm(dir)) * dir));
  }
  return apply_boundary(s, st.bc);
}

struct StripeDetector {
  std::vector<double> x2;          ///< cell-row centers
  std::vector<double> mean_shear;  ///< row mean of d phi1 / d x2
  std::vector<int> sign;
  int bands = 1;
  double max_abs_shear = 0.0;  ///< over all cells

  std::string csv() const
  {
    std::string out = "x2,mean_shear,sign\n";
    for (std::size_t j = 0; j < x2.size(); ++j)
      out += csv_number(x2[j]) + "," + csv_number(mean_shear[j]) + "," + std::to_string(sign[j]) + "\n";
    return out;
  }
};

/// Shear-sign map across x2: rows with |mean shear| <= tol count as zero and
/// do not split bands; no nonzero row means a single shear-free band.
inline StripeDetector detect_stripes(const FieldState& s, double tol = 1e-6)
{
  const Grid& g = s.grid;
  StripeDetector d;
  const auto dn = g.center_shape_gradients();
  const int cy = g.cells_y(), cx = g.cells_x(), cz = g.cells_z();
  d.x2.resize(cy);
  d.mean_shear.assign(cy, 0.0);
  d.sign.assign(cy, 0);
  for (int j = 0; j < cy; ++j) {
    d.x2[j] = -g.b + (j + 0.5) * g.hy;
    for (int i = 0; i < cx; ++i)
      for (int k = 0; k < cz; ++k) {
        const double v = deformation_gradient(s, g.cell(i, j, k), dn)(0, 1);
        d.mean_shear[j] += v / (cx * cz);
        d.max_abs_shear = std::max(d.max_abs_shear, std::abs(v));
      }
    d.sign[j] = std::abs(d.mean_shear[j]) <= tol ? 0 : (d.mean_shear[j] > 0 ? 1 : -1);
  }
  int runs = 0, last = 0;
  for (int v : d.sign) {
    if (v == 0) continue;
    if (v != last) ++runs;
    last = v;
  }
  d.bands = std::max(runs, 1);
  return d;
}

struct StripeOutcome {
  FieldState state;
  std::string chosen;  ///< "homogeneous" or "two_band"
  double energy = 0.0;  ///< of the chosen state
  double trial_energy[2]{};
  double final_energy[2]{};
  MinimizeResult runs[2];
  StripeDetector detector;
  FeasibilityReport feasibility;
  CNReport cn;
};

/// Relative energy gap the two-band run must open over the homogeneous run to
/// be selected; smaller gaps are below the resolution of the stopping rule.
inline constexpr double stripe_selection_tol = 1e-8;

/// Minimizes from both trials and keeps the lower final energy (ties go to
/// the homogeneous run).
inline StripeOutcome run_stripe(const ExperimentConfig& cfg, std::ostream* log_h = nullptr,
                                std::ostream* log_s = nullptr)
{
  const StripeSetup st = stripe_setup(cfg);
  const double margin = cfg.minimize.feasibility_margin;
  const double lambda = cfg.stripe.lambda;
  FieldState trials[2] = {stripe_homogeneous_trial(st, lambda, margin), stripe_two_band_trial(st, lambda)};
  trials[1] = perturbed(trials[1], st.energy, st.bc, cfg.stripe.perturbation, cfg.seed, margin);

  StripeOutcome out;
  std::ostream* logs[2] = {log_h, log_s};
  for (int t = 0; t < 2; ++t) {
    AssemblyOptions ao;
    ao.threads = cfg.minimize.threads;
    ao.gradient = false;
    out.trial_energy[t] = assemble(trials[t], st.energy, st.bc, ao).energy.total;
    MinimizeOptions o = cfg.minimize;
    o.log = logs[t];
    o.seed = cfg.seed;
    out.runs[t] = minimize(trials[t], st.energy, st.bc, o);
    out.final_energy[t] = out.runs[t].energy.total;
  }
  const double eh = out.final_energy[0], es = out.final_energy[1];
  const int pick = es < eh - stripe_selection_tol * std::max(1.0, std::abs(eh)) ? 1 : 0;
  out.chosen = pick == 0 ? "homogeneous" : "two_band";
  out.state = out.runs[pick].state;
  out.energy = out.final_energy[pick];
  out.detector = detect_stripes(out.state);
  out.feasibility = feasibility(out.state, st.energy, margin);
  CNOptions co;
  co.seed = cfg.seed;
  co.threads = cfg.minimize.threads;
  out.cn = ciarlet_necas_check(out.state, co);
  return out;
}

// ---------------------------------------------------------------------------
// barrier_sweep

struct SweepPoint {
  double s, bulk_total, barrier;
};

inline std::vector<SweepPoint> barrier_sweep(const EnergyParams& params, const std::vector<double>& s_values,
                                             const Vec3& director)
{
  const EnergyParams e = prepared(params);
  std::vector<SweepPoint> out;
  for (double s : s_values) {
    const QTensor q = uniaxial_q(s, director);
    out.push_back({s, bulk_total(q, e), bulk_barrier(q, e)});
  }
  return out;
}

inline bool strictly_increasing(const std::vector<SweepPoint>& pts)
{
  for (std::size_t k = 1; k < pts.size(); ++k)
    if (!(pts[k].bulk_total > pts[k - 1].bulk_total)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// cn_audit

struct AuditOutcome {
  CNReport cn;
  ChangeOfVariables volume;  ///< g = 1
  LusinSample lusin;
  FeasibilityReport feasibility;
};

inline AuditOutcome audit_state(const FieldState& s, const ExperimentConfig& cfg)
{
  AuditOutcome a;
  CNOptions co;
  co.resolution = cfg.audit.resolution;
  co.samples = cfg.audit.samples;
  co.seed = cfg.seed;
  co.threads = cfg.minimize.threads;
  a.cn = ciarlet_necas_check(s, co);
  ImageOptions io;
  io.resolution = cfg.audit.resolution;
  io.threads = cfg.minimize.threads;
  a.volume = change_of_variables_check(s, [](const Vec3&) { return 1.0; }, io);
  a.lusin = lusin_ratio(s, {}, cfg.energy.p, io);
  a.feasibility = feasibility(s, cfg.energy, cfg.minimize.feasibility_margin);
  return a;
}

inline void add_audit(Report& r, const AuditOutcome& a)
{
  r.add("cn.lhs", a.cn.lhs);
  r.add("cn.rhs", a.cn.rhs);
  r.add("cn.bound", a.cn.bound);
  r.add("cn.verdict", to_string(a.cn.verdict));
  r.add("cn.orientation_ok", a.cn.orientation_ok);
  r.add("cn.min_det", a.cn.min_det);
  r.add("cn.unresolved", a.cn.unresolved);
  r.add("volume.discrepancy", a.volume.discrepancy);
  r.add("volume.bound", a.volume.bound);
  r.add("volume.flagged", a.volume.flagged);
  r.add("lusin.ratio", a.lusin.ratio);
}

// ---------------------------------------------------------------------------
// Driver

/// Runs one experiment, writing artifacts into `out`. Returns an exit code;
/// module errors propagate.
inline int run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& msg)
{
  const OutputDir out(out_dir);
  Report rep;
  rep.add("experiment", to_string(cfg.experiment));
  rep.add("seed", (long long)cfg.seed);
  int code = exit_ok;

  switch (cfg.experiment) {
    case Experiment::affine_sanity: {
      const double tol = 1e-10;
      std::string csv = "check,computed,expected,rel_error,pass\n";
      int failed = 0;
      for (const SanityCheck& c : affine_sanity_checks(cfg)) {
        const bool ok = c.pass(tol);
        failed += !ok;
        csv += c.name + "," + csv_number(c.computed) + "," + csv_number(c.expected) + "," + csv_number(c.rel_error()) +
               "," + (ok ? "true" : "false") + "\n";
        msg << (ok ? "PASS " : "FAIL ") << c.name << " (rel error " << c.rel_error() << ")\n";
      }
      out.write("affine_sanity.csv", csv);
      rep.add("failed", failed);
      if (failed) code = exit_audit;
      break;
    }
    case Experiment::spontaneous_floor: {
      std::mt19937_64 rng(cfg.seed);
      std::ofstream log(out.path("energy_log.csv"));
      std::string csv = "trial,energy,expected,rel_error,status,iterations\n";
      double worst = 0.0;
      for (int t = 0; t < cfg.floor.trials; ++t) {
        const Mat3 l = random_unimodular_spd(rng);
        log << "# trial " << t << "\n";
        const FloorTrial r = spontaneous_floor_trial(cfg, l, &log);
        worst = std::max(worst, r.rel_error);
        csv += std::to_string(t) + "," + csv_number(r.energy) + "," + csv_number(r.expected) + "," +
               csv_number(r.rel_error) + "," + to_string(r.status) + "," + std::to_string(r.iterations) + "\n";
        out.write("floor.csv", csv);
      }
      rep.add("worst_rel_error", worst);
      rep.add("tolerance", cfg.floor.tolerance);
      msg << "spontaneous floor: worst relative error " << worst << " over " << cfg.floor.trials << " trials\n";
      if (!(worst <= cfg.floor.tolerance)) code = exit_audit;
      break;
    }
    case Experiment::stripe: {
      std::ofstream log_h(out.path("energy_log_homogeneous.csv"));
      std::ofstream log_s(out.path("energy_log_two_band.csv"));
      const StripeOutcome r = run_stripe(cfg, &log_h, &log_s);
      write_csv(r.state, out.path("field.csv"));
      write_vtk(r.state, out.path("field.vtk"));
      out.write("shear_map.csv", r.detector.csv());
      std::string trials = "trial,initial_energy,final_energy,status,iterations\n";
      const char* names[2] = {"homogeneous", "two_band"};
      for (int t = 0; t < 2; ++t) {
        trials += std::string(names[t]) + "," + csv_number(r.trial_energy[t]) + "," + csv_number(r.final_energy[t]) +
                  "," + to_string(r.runs[t].status) + "," + std::to_string(r.runs[t].iterations) + "\n";
      }
      out.write("trials.csv", trials);
      out.write("multiplicity.csv", histogram_csv(r.cn.histogram));
      out.write("cn_report.txt", r.cn.to_text());
      const double e_out = r.energy;
      rep.add("lambda", cfg.stripe.lambda);
      rep.add("regime", cfg.stripe.regime);
      rep.add("chosen", r.chosen);
      rep.add("energy", e_out);
      rep.add("trial_energy.homogeneous", r.trial_energy[0]);
      rep.add("trial_energy.two_band", r.trial_energy[1]);
      rep.add("bands", r.detector.bands);
      rep.add("max_abs_shear", r.detector.max_abs_shear);
      rep.add("feasible", r.feasibility.feasible);
      rep.add("min_det", r.feasibility.min_det);
      rep.add("min_lambda_min", r.feasibility.min_lammin);
      rep.add("cn.verdict", to_string(r.cn.verdict));
      msg << "stripe lambda=" << cfg.stripe.lambda << ": " << r.chosen << " wins, E=" << e_out << ", bands "
          << r.detector.bands << ", CN " << to_string(r.cn.verdict) << "\n";
      if (!r.feasibility.feasible) code = exit_infeasible;
      else if (r.cn.verdict == Verdict::violated || e_out > std::min(r.trial_energy[0], r.trial_energy[1])) code = exit_audit;
      break;
    }
    case Experiment::barrier_sweep: {
      const auto pts = barrier_sweep(cfg.energy, cfg.sweep.s_values, cfg.sweep.director);
      std::string csv = "s,bulk_total,barrier\n";
      for (const SweepPoint& p : pts) csv += csv_number(p.s) + "," + csv_number(p.bulk_total) + "," + csv_number(p.barrier) + "\n";
      out.write("barrier_sweep.csv", csv);
      const bool mono = strictly_increasing(pts);
      rep.add("strictly_increasing", mono);
      rep.add("ratio_last_first", pts.back().bulk_total / pts.front().bulk_total);
      msg << "barrier sweep: " << (mono ? "strictly increasing" : "NOT increasing") << ", last/first "
          << pts.back().bulk_total / pts.front().bulk_total << "\n";
      if (!mono) code = exit_audit;
      break;
    }
    case Experiment::cn_audit: {
      if (cfg.audit.snapshot.empty()) throw ConfigError("cn_audit.snapshot: missing");
      const FieldState s = read_csv(cfg.audit.snapshot, cfg.audit.plane_c);
      const AuditOutcome a = audit_state(s, cfg);
      out.write("cn_report.txt", a.cn.to_text());
      out.write("multiplicity.csv", histogram_csv(a.cn.histogram));
      add_audit(rep, a);
      msg << "CN audit of " << cfg.audit.snapshot << ": " << to_string(a.cn.verdict) << " (lhs " << a.cn.lhs << ", rhs "
          << a.cn.rhs << " +- " << a.cn.bound << ")\n";
      if (a.cn.verdict == Verdict::violated || !a.cn.orientation_ok) code = exit_audit;
      break;
    }
  }
  rep.add("exit_code", code);
  out.write("report.txt", rep.text());
  return code;
}

// ---------------------------------------------------------------------------
// Self-test

/// Runs the closed-form and derived oracles; prints one PASS/FAIL line each.
inline int selftest(std::ostream& msg)
{
  int failed = 0;
  auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
    msg << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : " (" + detail + ")") << "\n";
    failed += !ok;
  };
  auto guard = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      check(name, false, std::string("threw: ") + e.what());
    }
  };
  constexpr double pi = 3.14159265358979323846;

  guard("csv identity 2x2x2", [&] {
    const Grid g = build_grid(1, 1, 1, 2, 2, 2, false);
    const std::string csv = to_csv(identity_state(g));
    check("csv identity 2x2x2", std::count(csv.begin(), csv.end(), '\n') == 9 && to_csv(parse_csv(csv)) == csv);
  });
  guard("vtk header", [&] {
    const Grid g = build_grid(1, 1, 1, 2, 2, 2, false);
    const std::string v = to_vtk(identity_state(g));
    check("vtk header", v.rfind("# vtk DataFile Version 3.0\nlce field\nASCII\nDATASET STRUCTURED_POINTS\n", 0) == 0);
  });
  guard("affine sanity", [&] {
    ExperimentConfig c = default_config(Experiment::affine_sanity);
    finalize(c);
    for (const SanityCheck& s : affine_sanity_checks(c)) check("affine sanity: " + s.name, s.pass(1e-10));
  });
  guard("config rejects r = 3", [&] {
    bool rejected = false;
    try {
      parse_config_text("[experiment]\nname = stripe\n[energy]\nr = 3\n");
    } catch (const ConfigError& e) {
      rejected = std::string(e.what()).find("r > max{3, p/(p-3)} = 4") != std::string::npos;
    }
    check("config rejects r = 3", rejected);
  });
  guard("config rejects lambda = 0.5", [&] {
    bool rejected = false;
    try {
      parse_config_text("[experiment]\nname = stripe\n[stripe]\nlambda = 0.5\n");
    } catch (const ConfigError& e) {
      rejected = std::string(e.what()).find("stripe.lambda") != std::string::npos;
    }
    check("config rejects lambda = 0.5", rejected);
  });
  guard("barrier blow-up", [&] {
    const auto pts = barrier_sweep(EnergyParams{}, {0.9, 0.99, 0.999}, {0, 0, 1});
    check("barrier blow-up", strictly_increasing(pts) && pts[2].bulk_total >= 10.0 * pts[0].bulk_total);
  });
  guard("image measure", [&] {
    const Grid g = build_grid(0.5, 0.5, 0.5, 3, 3, 3, false);
    check("image measure phi = 2x", std::abs(image_measure(affine_state(g, Mat3::diag(2, 2, 2), {}, {})).volume - 8.0) < 1e-12);
    check("image measure identity", std::abs(image_measure(identity_state(g)).volume - 1.0) < 1e-12);
  });
  guard("angle doubling", [&] {
    const Grid g = build_grid(0.5, 0.75 * pi, 0.5, 65, 65, 1, true);
    FieldState s = identity_state(g);
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      const Vec3 x = g.position(k);
      const double rho = 1.5 + x[0], th = x[1] + 0.75 * pi;
      s.set_phi(k, {rho * std::cos(2 * th), rho * std::sin(2 * th), 0.0});
    }
    CNOptions o;
    o.resolution = 256;
    o.samples = 0;
    const CNReport r = ciarlet_necas_check(s, o);
    check("angle doubling violates CN", r.verdict == Verdict::violated && std::abs(r.ratio() / 1.5 - 1.0) < 0.05,
          "ratio " + detail::fmt(r.ratio()));
    const MultiplicityResult m = multiplicity(s, {{0.0, 1.5, 0.0}, {0.0, -1.5, 0.0}, {0.0, 0.0, 0.0}});
    check("angle doubling multiplicity", m.counts == std::vector<int>{2, 1, 0});
  });
  guard("change of variables", [&] {
    const Grid g = build_grid(0.5, 0.5, 0.5, 5, 5, 5, false);
    ImageOptions io;
    io.resolution = 32;
    const ChangeOfVariables c =
        change_of_variables_check(affine_state(g, Mat3::diag(2, 1, 1), {}, {}), [](const Vec3& y) { return y[0] * y[0]; }, io);
    check("change of variables y1^2", std::abs(c.reference_integral - 2.0 / 3.0) < 1e-13 && c.discrepancy <= 2 * c.bound);
  });
  guard("gradient check", [&] {
    const Grid g = build_grid(1, 1, 1, 4, 4, 4, false);
    FieldState s = identity_state(g);
    for (std::size_t n = 0; n < g.num_nodes(); ++n) {
      const Vec3 x = g.position(n);
      s.set_phi(n, {x[0] + 0.05 * std::sin(x[1]), x[1] + 0.05 * x[0] * x[2], x[2]});
      s.set_q(n, uniaxial_q(0.3 + 0.1 * x[0], {std::cos(x[2]), std::sin(x[2]), 0.0}));
    }
    EnergyParams e;
    e.c_det = 1.0;
    e.l1 = 0.1;
    const double err = gradient_check(s, prepared(e), BoundarySpec{}, 10);
    check("gradient check", err <= 1e-6, "max rel error " + detail::fmt(err));
  });
  guard("convexity probes", [&] {
    for (const char* name : {"ogden-in-minors", "ldg-in-gradQ", "pullback-in-(A,t)"}) {
      EnergyParams e;
      e.alpha_coer = 0.5;
      e.c_adj = 0.5;
      e.c_det = 1.0;
      e.l1 = 0.2;
      e.l2 = 0.1;
      e.l4 = 0.05;
      e.kappa = 0.1;
      const ConvexityReport r = convexity_probe(name, 2000, e, 7);
      check(std::string("convexity ") + name, r.violations == 0);
    }
  });
  guard("spontaneous floor", [&] {
    ExperimentConfig c = default_config(Experiment::spontaneous_floor);
    finalize(c);
    std::mt19937_64 rng(3);
    const FloorTrial t = spontaneous_floor_trial(c, random_unimodular_spd(rng), nullptr);
    check("spontaneous floor", t.rel_error <= 1e-4, "rel error " + detail::fmt(t.rel_error));
  });
  msg << (failed ? "selftest: " + std::to_string(failed) + " failed\n" : std::string("selftest: all passed\n"));
  return failed ? exit_audit : exit_ok;
}

}  // namespace lce
