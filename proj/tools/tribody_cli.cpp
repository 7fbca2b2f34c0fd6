#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "tribody/disorder.hpp"
#include "tribody/errors.hpp"
#include "tribody/lattice.hpp"
#include "tribody/oracle.hpp"
#include "tribody/sweep.hpp"

using namespace tribody;

namespace {

enum Exit { ok = 0, failure = 1, invalid_config = 2, not_equilibrated = 3, interrupted = 130 };

extern "C" void on_signal(int) { request_stop(); }

int cmd_simulate(const std::string& path, bool resume, const std::string& output, int workers) {
  SweepConfig cfg = load_config(path);
  if (!output.empty()) cfg.output_dir = output;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  RunOptions opt;
  opt.resume = resume;
  opt.workers = workers;
  opt.log = &std::clog;
  const SweepOutcome res = run_sweep(cfg, opt);
  if (res.interrupted) return interrupted;
  if (res.unequilibrated > 0) {
    std::clog << res.unequilibrated << " (p, L, T) points failed the equilibration check; see "
              << cfg.output_dir << "/equilibration.csv\n";
    return not_equilibrated;
  }
  return ok;
}

int cmd_analyze(const std::string& dir) {
  const AnalysisOutcome a = analyze(dir);
  std::cout << "boundary points: " << a.boundary.size() << "\n";
  for (const auto& b : a.boundary)
    std::cout << "  p=" << b.p << " T_c=" << b.T_c << " +- " << b.T_c_err << " " << status_name(b.status) << "\n";
  if (a.has_p_c)
    std::cout << "p_c (" << method_name(a.p_c.method) << "): " << a.p_c.p_c << ", bracket [" << a.p_c.lo << ", "
              << a.p_c.hi << "]\n";
  for (const auto& n : a.nu_estimates) std::cout << "nu(p=" << n.p << ") = " << n.nu << " +- " << n.err << "\n";
  if (!a.excluded.empty()) std::cout << a.excluded.size() << " points excluded, see analysis_report.txt\n";
  return ok;
}

int cmd_oracle(const std::string& lattice, int L, double p, const std::vector<double>& temps) {
  const Lattice lat = build_lattice(parse_lattice_kind(lattice), L);
  std::cout << csv_header() << "\n";
  for (double T : temps) std::cout << csv_row(exact_csv_point(lat, exact_disorder_average(lat, p, T))) << "\n";
  return ok;
}

int cmd_validate(const std::string& path) {
  try {
    const SweepConfig cfg = load_config(path);
    std::cout << "valid\n" << cost_report(cfg);
    return ok;
  } catch (const ConfigError& e) {
    std::cerr << "invalid config:\n" << e.what() << "\n";
    return invalid_config;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random three-body Ising model: simulation and phase-boundary analysis"};
  app.require_subcommand(1);

  std::string config, output, dir, lattice = "uj";
  bool resume = false;
  int workers = 0, L = 2;
  double p = 0.0;
  std::uint64_t seed = 1;
  std::vector<double> temps;

  auto* sim = app.add_subcommand("simulate", "Run or resume a parameter sweep");
  sim->add_option("--config", config, "Sweep configuration (JSON)")->required()->check(CLI::ExistingFile);
  sim->add_flag("--resume", resume, "Continue from existing results and checkpoints");
  sim->add_option("--output", output, "Override the output directory");
  sim->add_option("--workers", workers, "Worker threads (overrides config and TRIBODY_WORKERS)");

  auto* ana = app.add_subcommand("analyze", "Crossings, phase boundary, p_c and scaling collapse");
  ana->add_option("dir", dir, "Results directory")->required();

  auto* ora = app.add_subcommand("oracle", "Exact disorder-averaged observables by enumeration");
  ora->add_option("--lattice", lattice, "uj or tr");
  ora->add_option("--L", L, "Linear size");
  ora->add_option("--p", p, "Fraction of negative couplings")->required();
  ora->add_option("--T", temps, "Temperature(s)")->required();

  auto* val = app.add_subcommand("validate-config", "Check a configuration and print its estimated cost");
  val->add_option("file", config, "Sweep configuration (JSON)")->required();

  auto* lat = app.add_subcommand("lattice", "Dump a lattice as JSON");
  lat->add_option("--lattice", lattice, "uj or tr");
  lat->add_option("--L", L, "Linear size")->required();

  auto* dis = app.add_subcommand("disorder", "Draw a disorder realization as JSON");
  dis->add_option("--lattice", lattice, "uj or tr");
  dis->add_option("--L", L, "Linear size")->required();
  dis->add_option("--p", p, "Fraction of negative couplings")->required();
  dis->add_option("--seed", seed, "Seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) return cmd_simulate(config, resume, output, workers);
    if (*ana) return cmd_analyze(dir);
    if (*ora) return cmd_oracle(lattice, L, p, temps);
    if (*val) return cmd_validate(config);
    if (*lat) {
      std::cout << lattice_to_json(build_lattice(parse_lattice_kind(lattice), L)) << "\n";
      return ok;
    }
    if (*dis) {
      const Lattice l = build_lattice(parse_lattice_kind(lattice), L);
      std::cout << disorder_to_json(sample_disorder(l, p, seed)) << "\n";
      return ok;
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid config:\n" << e.what() << "\n";
    return invalid_config;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
  return ok;
}
