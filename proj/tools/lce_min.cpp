// lce-min: runs experiments from config files and audits field snapshots.
//
//   lce-min run <config> [--out DIR] [--seed N] [--threads N]
//   lce-min check <snapshot.csv> [--plane-c C] [--resolution N] [--samples N]
//   lce-min selftest
//
// Exit codes: 0 ok, 1 other error, 2 bad config or arguments, 3 infeasible or
// singular state, 4 audit failure.

#include <CLI11.hpp>

#include <iostream>

#include "lce/lce.hpp"

namespace {

int run(const std::string& config, const std::string& out, std::optional<std::uint64_t> seed,
        std::optional<int> threads)
{
  lce::ExperimentConfig cfg = lce::parse_config(config);
  if (seed) cfg.seed = *seed;
  if (threads) {
    if (*threads < 1) throw lce::ConfigError("--threads: must be >= 1");
    cfg.minimize.threads = *threads;
  }
  std::string dir = out.empty() ? cfg.out_dir : out;
  if (dir.empty()) dir = std::string("out/") + lce::to_string(cfg.experiment);
  const int code = lce::run_experiment(cfg, dir, std::cout);
  std::cout << "wrote " << dir << "/report.txt\n";
  return code;
}

int check(const std::string& snapshot, double plane_c, int resolution, std::size_t samples)
{
  lce::ExperimentConfig cfg = lce::default_config(lce::Experiment::cn_audit);
  cfg.audit.snapshot = snapshot;
  cfg.audit.plane_c = plane_c;
  cfg.audit.resolution = resolution;
  cfg.audit.samples = samples;
  lce::finalize(cfg);
  const lce::FieldState s = lce::read_csv(snapshot, plane_c);
  const lce::AuditOutcome a = lce::audit_state(s, cfg);
  lce::Report r;
  lce::add_audit(r, a);
  r.add("feasible", a.feasibility.feasible);
  r.add("min_det", a.feasibility.min_det);
  r.add("min_lambda_min", a.feasibility.min_lammin);
  std::cout << r.text();
  if (a.cn.min_det <= 0.0 || !a.cn.orientation_ok) return lce::exit_infeasible;
  return a.cn.verdict == lce::Verdict::violated ? lce::exit_audit : lce::exit_ok;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Minimizes and audits liquid crystal elastomer energies"};
  app.require_subcommand(1);

  std::string config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  CLI::App* run_cmd = app.add_subcommand("run", "Run the experiment described by a config file");
  run_cmd->add_option("config", config, "Config file")->required();
  run_cmd->add_option("--out", out, "Output directory (default: experiment.out or out/<experiment>)");
  run_cmd->add_option("--seed", seed, "Override experiment.seed");
  run_cmd->add_option("--threads", threads, "Override minimize.threads");

  std::string snapshot;
  double plane_c = 0.5;
  int resolution = 0;
  std::size_t samples = 1000;
  CLI::App* check_cmd = app.add_subcommand("check", "Audit a field snapshot for injectivity");
  check_cmd->add_option("snapshot", snapshot, "Snapshot CSV")->required();
  check_cmd->add_option("--plane-c", plane_c, "Half thickness of a single-layer snapshot");
  check_cmd->add_option("--resolution", resolution, "Raster voxels per axis (0 = automatic)");
  check_cmd->add_option("--samples", samples, "Multiplicity sample points");

  app.add_subcommand("selftest", "Run built-in oracles");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lce::exit_config;
  }

  try {
    if (*run_cmd) return run(config, out, seed, threads);
    if (*check_cmd) return check(snapshot, plane_c, resolution, samples);
    return lce::selftest(std::cout);
  } catch (const lce::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return lce::exit_config;
  } catch (const lce::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return lce::exit_infeasible;
  } catch (const lce::OrientationError& e) {
    std::cerr << "orientation: " << e.what() << "\n";
    return lce::exit_infeasible;
  } catch (const lce::SingularityError& e) {
    std::cerr << "singular: " << e.what() << "\n";
    return lce::exit_infeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
