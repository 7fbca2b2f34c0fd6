#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tribody/analysis.hpp"
#include "tribody/lattice.hpp"

namespace tribody {

enum class EngineKind { multispin, scalar };

// One block of the simulation plan: every p in `p` is run at every L in `L`.
struct SweepRow {
  std::vector<double> p;
  std::vector<int> L;
  int samples = 1;
  int b = 10;  // 2^b sweeps
  double T_min = 1.0, T_max = 2.0;
  int n_T = 2;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

inline constexpr int kConfigSchema = 1;

struct SweepConfig {
  int schema = kConfigSchema;
  LatticeKind lattice = LatticeKind::union_jack;
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::string output_dir = "results";
  std::uint64_t checkpoint_interval = 8192;  // sweeps between checkpoints, 0 = never
  EngineKind engine = EngineKind::multispin;
  int lane_width = 64;
  int measure_every = 1;
  std::uint64_t analysis_seed = 1;
  bool average_k_directions = false;
  std::vector<SweepRow> rows;
  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

const char* to_string(EngineKind e);

/// Every problem found, one message per offending field; empty when valid.
std::vector<std::string> validate_config(const SweepConfig& cfg);

/// Parses JSON and validates. Throws ConfigError listing every problem.
SweepConfig parse_config(const std::string& json_text);
SweepConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const SweepConfig& cfg);

// One (p, L) point of the plan.
struct SweepPoint {
  double p = 0.0;
  int L = 0;
  int samples = 0;
  int b = 0;
  std::vector<double> temperatures;
};

std::vector<SweepPoint> expand_points(const SweepConfig& cfg);

/// Seed of disorder sample `sample` at (p, L); independent of every other row.
std::uint64_t sample_seed(std::uint64_t master, double p, int L, int sample);

/// Rough single-core wall time of the whole plan in seconds.
double estimated_cost_seconds(const SweepConfig& cfg);
std::string cost_report(const SweepConfig& cfg);

/// The TRIBODY_WORKERS environment variable when set to a positive integer,
/// else `configured`.
int effective_workers(int configured);

struct RunOptions {
  bool resume = false;
  int workers = 0;  // 0: use the configuration (and the environment override)
  std::ostream* log = nullptr;
};

struct SweepOutcome {
  int points = 0;
  int completed_points = 0;
  int unequilibrated = 0;  // (p, L, T) rows that failed the equilibration check
  bool interrupted = false;
};

/// Runs (or resumes) the plan into cfg.output_dir and writes results.csv and
/// equilibration.csv for every completed (p, L) point.
SweepOutcome run_sweep(const SweepConfig& cfg, const RunOptions& opt = {});

/// Asks running sweeps to checkpoint and return; safe to call from a signal
/// handler.
void request_stop() noexcept;
void clear_stop() noexcept;

struct ExcludedPoint {
  double p = 0.0;
  int L = 0;
  double T = 0.0;  // NaN for a whole missing (p, L)
  std::string reason;
};

struct AnalysisOutcome {
  std::vector<BoundaryPoint> boundary;
  std::vector<CrossingEstimate> crossings;  // every pair at every p, by p then pair
  std::vector<double> crossing_p;           // p of each entry in crossings
  bool has_p_c = false;
  CriticalPoint p_c;
  std::vector<NuEstimate> nu_estimates;
  std::vector<ExcludedPoint> excluded;
  std::vector<std::string> warnings;
};

/// Reads results.csv (and config.json when present) from `dir`, writes
/// boundary.csv, pc.json, collapse.csv, crossings.csv and
/// analysis_report.txt. Throws InsufficientDataError when nothing usable is
/// found.
AnalysisOutcome analyze(const std::filesystem::path& dir);

}  // namespace tribody
