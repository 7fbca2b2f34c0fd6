#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "tribody/disorder.hpp"
#include "tribody/lattice.hpp"
#include "tribody/observables.hpp"
#include "tribody/rng.hpp"

namespace tribody {

// Ising spins (+1/-1 per site) with the energy -sum tau S1 S2 S3 cached in
// units of J.
struct SpinConfiguration {
  std::vector<std::int8_t> spins;
  std::int64_t energy = 0;

  friend bool operator==(const SpinConfiguration&, const SpinConfiguration&) = default;
};

std::int64_t compute_energy(std::span<const std::int8_t> spins, const Lattice& lat,
                            const DisorderRealization& dis);

SpinConfiguration make_configuration(std::vector<std::int8_t> spins, const Lattice& lat,
                                     const DisorderRealization& dis);

SpinConfiguration random_configuration(const Lattice& lat, const DisorderRealization& dis,
                                       Xoshiro256& rng);

/// E(flipped) - E(current) for one site, from its incident triangles only.
int delta_energy(const SpinConfiguration& cfg, const Lattice& lat, const DisorderRealization& dis,
                 int site);

// Flattened per-site list of (other vertex, other vertex, tau) for every
// incident triangle; the hot path of the sweep.
class CouplingTable {
 public:
  CouplingTable(const Lattice& lat, const DisorderRealization& dis);

  struct Entry {
    std::uint32_t a;
    std::uint32_t b;
    std::int32_t tau;
  };

  int num_sites() const noexcept { return static_cast<int>(offset_.size()) - 1; }
  int max_abs_delta() const noexcept { return max_abs_delta_; }

  int local_field(std::span<const std::int8_t> spins, int site) const noexcept {
    int h = 0;
    const Entry* e = entries_.data() + offset_[static_cast<std::size_t>(site)];
    const Entry* end = entries_.data() + offset_[static_cast<std::size_t>(site) + 1];
    for (; e != end; ++e) h += e->tau * spins[e->a] * spins[e->b];
    return h;
  }

  /// dE for flipping `site` = 2 S_site sum_{triangles} tau S_a S_b.
  int delta_energy(std::span<const std::int8_t> spins, int site) const noexcept {
    return 2 * spins[static_cast<std::size_t>(site)] * local_field(spins, site);
  }

 private:
  std::vector<Entry> entries_;
  std::vector<std::uint32_t> offset_;
  int max_abs_delta_ = 0;
};

// Metropolis acceptance thresholds indexed by dE; a proposal with dE > 0 is
// accepted iff (rng() >> 11) < threshold, i.e. u < exp(-beta dE) with u a
// 53-bit uniform.
class AcceptanceTable {
 public:
  AcceptanceTable() = default;
  AcceptanceTable(double beta, int max_abs_delta);
  std::uint64_t threshold(int delta) const noexcept {
    return thr_[static_cast<std::size_t>(delta + offset_)];
  }

 private:
  std::vector<std::uint64_t> thr_;
  int offset_ = 0;
};

struct SweepStats {
  std::uint64_t proposed = 0;
  std::uint64_t accepted = 0;
};

/// One sequential sweep over sites 0..N-1 with Metropolis acceptance.
SweepStats metropolis_sweep(SpinConfiguration& cfg, const CouplingTable& table,
                            const AcceptanceTable& acc, Xoshiro256& rng);

SweepStats metropolis_sweep(SpinConfiguration& cfg, const Lattice& lat, const DisorderRealization& dis,
                            double beta, Xoshiro256& rng);

struct ExchangeStats {
  std::vector<std::uint64_t> attempts;  // per adjacent temperature pair (i, i+1)
  std::vector<std::uint64_t> accepts;

  double rate(std::size_t pair) const {
    return attempts[pair] ? double(accepts[pair]) / double(attempts[pair]) : 0.0;
  }
};

inline constexpr int kReplicaSets = 2;

// Parallel-tempering ladder with two independent replica sets. Exchanges
// permute which replica sits at which temperature inside one set; sets never
// mix. Each replica owns its RNG, which travels with it.
class ReplicaLadder {
 public:
  ReplicaLadder(std::vector<double> temperatures, const Lattice& lat, const DisorderRealization& dis,
                std::uint64_t seed);

  struct Replica {
    SpinConfiguration cfg;
    Xoshiro256 rng;
  };

  int num_temperatures() const noexcept { return static_cast<int>(temps_.size()); }
  std::span<const double> temperatures() const noexcept { return temps_; }
  std::span<const double> betas() const noexcept { return betas_; }

  Replica& at(int set, int temp_index) { return replicas_[slot(set, temp_index)]; }
  const Replica& at(int set, int temp_index) const { return replicas_[slot(set, temp_index)]; }

  /// Replica id currently at (set, temperature).
  int replica_id(int set, int temp_index) const { return static_cast<int>(slot(set, temp_index)); }

  ExchangeStats& exchange_stats() noexcept { return stats_; }
  const ExchangeStats& exchange_stats() const noexcept { return stats_; }

  /// Parity of the next exchange phase (0: pairs (0,1),(2,3)...; 1: (1,2),(3,4)...).
  int next_parity() const noexcept { return parity_; }

  std::vector<Replica>& replicas() noexcept { return replicas_; }
  const std::vector<Replica>& replicas() const noexcept { return replicas_; }
  std::vector<std::uint32_t>& slots() noexcept { return slot_; }
  const std::vector<std::uint32_t>& slots() const noexcept { return slot_; }
  void set_parity(int p) noexcept { parity_ = p; }

 private:
  std::size_t slot(int set, int t) const {
    return slot_[static_cast<std::size_t>(set * num_temperatures() + t)];
  }
  void swap_slots(int set, int t) {
    auto i = static_cast<std::size_t>(set * num_temperatures() + t);
    std::swap(slot_[i], slot_[i + 1]);
  }

  std::vector<double> temps_;
  std::vector<double> betas_;
  std::vector<Replica> replicas_;
  std::vector<std::uint32_t> slot_;
  ExchangeStats stats_;
  int parity_ = 0;

  friend void attempt_exchanges(ReplicaLadder& ladder, Xoshiro256& rng);
};

/// One exchange phase: every adjacent pair of the current parity, within
/// each replica set, swaps with probability min(1, exp[(b_i - b_j)(E_i - E_j)]).
void attempt_exchanges(ReplicaLadder& ladder, Xoshiro256& rng);

double exchange_probability(double beta_i, double beta_j, double e_i, double e_j);

// Bin k holds 2^k consecutive measurements, indices [2^k, 2^(k+1)); the very
// first measurement (index 0) is burn-in and not binned. Layout [bin][T][obs].
class LogBinnedSeries {
 public:
  LogBinnedSeries() = default;
  LogBinnedSeries(int n_bins, int n_temps, int n_obs);

  int n_bins() const noexcept { return n_bins_; }
  int n_temps() const noexcept { return n_temps_; }
  int n_obs() const noexcept { return n_obs_; }

  double& mean(int bin, int t, int obs) { return mean_[index(bin, t, obs)]; }
  double mean(int bin, int t, int obs) const { return mean_[index(bin, t, obs)]; }
  double& error(int bin, int t, int obs) { return err_[index(bin, t, obs)]; }
  double error(int bin, int t, int obs) const { return err_[index(bin, t, obs)]; }

  /// Builds bin means and standard errors from sub-block sums laid out
  /// [bin][block][T][obs]; bin k has min(2^k, max_blocks) equal blocks.
  static LogBinnedSeries from_block_sums(std::span<const double> sums, int n_bins, int max_blocks,
                                         int n_temps, int n_obs);

  friend bool operator==(const LogBinnedSeries&, const LogBinnedSeries&) = default;

 private:
  std::size_t index(int bin, int t, int obs) const {
    return (static_cast<std::size_t>(bin) * n_temps_ + static_cast<std::size_t>(t)) * n_obs_ +
           static_cast<std::size_t>(obs);
  }
  int n_bins_ = 0, n_temps_ = 0, n_obs_ = 0;
  std::vector<double> mean_, err_;
};

/// Number of the bin measurement `index` falls in, or -1 for index 0.
int log_bin_of(std::uint64_t index) noexcept;

struct BinSlot {
  int bin = -1;
  int block = 0;
};

/// Bin and sub-block of measurement `index`; bin is -1 for the burn-in index 0.
BinSlot bin_slot(std::uint64_t index, int max_blocks) noexcept;

/// log2 of the measurement count; validates n_sweeps and measure_every.
int schedule_bin_count(const struct Schedule& s);

struct EquilibrationVerdict {
  bool pass = false;
  int first_bin = -1;  // earliest bin from which all later bins agree; -1 when failing
};

// Verdicts laid out [T][obs].
struct EquilibrationReport {
  int n_temps = 0;
  int n_obs = 0;
  std::vector<EquilibrationVerdict> verdicts;
  const EquilibrationVerdict& at(int t, int obs) const {
    return verdicts[static_cast<std::size_t>(t * n_obs + obs)];
  }
  /// All listed observables pass at temperature t.
  bool pass(int t, std::span<const int> observables) const;
};

// Two bins agree when |mean_i - mean_j| <= tolerance * sqrt(err_i^2 + err_j^2).
inline constexpr double kDefaultAgreementSigmas = 3.0;

/// Passes iff the last three bins agree pairwise. Needs at least 4 bins.
EquilibrationReport equilibration_check(const LogBinnedSeries& bins,
                                        double tolerance = kDefaultAgreementSigmas);

struct Schedule {
  std::vector<double> temperatures;
  std::uint64_t n_sweeps = 1024;  // power of two (times measure_every)
  int measure_every = 1;
  std::uint64_t seed = 0;
  bool record_series = false;
  bool measure_ky = true;
  std::uint64_t hash() const;
};

/// Ladder with n points evenly spaced on [t_min, t_max].
std::vector<double> linear_ladder(double t_min, double t_max, int n);

struct SimulationResult {
  std::vector<double> temperatures;
  std::uint64_t sweeps = 0;
  std::uint64_t measurements = 0;
  LogBinnedSeries bins;
  std::vector<ThermalAverages> production;  // last bin (second half of the run)
  std::vector<std::vector<MeasurementRecord>> series;  // [T][measurement], optional
  ExchangeStats exchange;
  std::vector<double> sweep_acceptance;  // per temperature
};

// A resumable parallel-tempering run of one disorder sample.
class Simulation {
 public:
  Simulation(const Lattice& lat, const DisorderRealization& dis, Schedule schedule);

  void advance(std::uint64_t sweeps);
  void run_to_end() { advance(schedule_.n_sweeps - sweeps_done_); }
  bool finished() const noexcept { return sweeps_done_ >= schedule_.n_sweeps; }
  std::uint64_t sweeps_done() const noexcept { return sweeps_done_; }

  const ReplicaLadder& ladder() const noexcept { return ladder_; }
  ReplicaLadder& ladder() noexcept { return ladder_; }
  const Schedule& schedule() const noexcept { return schedule_; }

  SimulationResult result() const;

  /// Versioned binary checkpoint of the complete state.
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Throws IntegrityError when the file belongs to a different lattice,
  /// disorder realization, or schedule.
  static Simulation restore(const std::filesystem::path& path, const Lattice& lat,
                            const DisorderRealization& dis, Schedule schedule);

 private:
  void record(const std::vector<MeasurementRecord>& recs);

  const Lattice* lat_;
  const DisorderRealization* dis_;
  Schedule schedule_;
  CouplingTable table_;
  FourierTable fourier_;
  std::vector<AcceptanceTable> acceptance_;
  ReplicaLadder ladder_;
  Xoshiro256 exchange_rng_;
  std::uint64_t sweeps_done_ = 0;
  std::uint64_t measurements_ = 0;
  int n_bins_ = 0;

  // Per bin: kBlocks sub-block sums for standard errors. Layout
  // [bin][block][T][obs].
  static constexpr int kBlocks = 16;
  std::vector<double> block_sums_;
  std::vector<std::uint64_t> flips_accepted_;
  std::vector<std::uint64_t> flips_proposed_;
  std::vector<std::vector<MeasurementRecord>> series_;
};

SimulationResult run_simulation(const Lattice& lat, const DisorderRealization& dis, const Schedule& schedule);

}  // namespace tribody
