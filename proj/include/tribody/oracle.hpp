#pragma once

#include <cstdint>

#include "tribody/disorder.hpp"
#include "tribody/lattice.hpp"
#include "tribody/observables.hpp"

namespace tribody {

inline constexpr int kMaxExactSites = 24;
inline constexpr int kMaxExactTriangles = 20;
inline constexpr int kMaxOverlapSites = 16;

// Exact Boltzmann averages over all 2^N spin states. Spin observables use
// the same conventions as a single replica set in the sampler; overlap
// moments (two independent replicas) are filled when N <= kMaxOverlapSites
// and NaN otherwise. q4 is never computed and left NaN.
struct ExactResult {
  double T = 0.0;
  double log_z = 0.0;
  double energy = 0.0, energy2 = 0.0;
  double m2 = 0.0, m4 = 0.0, mkx2 = 0.0, mky2 = 0.0;
  double q2 = 0.0, qkx2 = 0.0, qky2 = 0.0;
  std::int64_t ground_energy = 0;
  std::uint64_t ground_degeneracy = 0;
  std::uint64_t disorder_hash = 0;

  /// Layout of the sampler's per-temperature averages (Obs order).
  ThermalAverages as_averages() const;
};

/// Throws SizeError when N > kMaxExactSites or T is not positive.
ExactResult exact_thermal(const Lattice& lat, const DisorderRealization& dis, double T);

// Exact quenched averages [<O>] over all 2^N_tri coupling configurations
// weighted p^n_- (1-p)^(N_tri - n_-). Ratios (chi, xi, binder) are formed
// from the averaged moments, as in the sampler's aggregation.
struct ExactDisorderAverage {
  double p = 0.0, T = 0.0;
  double energy = 0.0, energy2 = 0.0;
  double m2 = 0.0, m4 = 0.0, mkx2 = 0.0, mky2 = 0.0;
  double q2 = 0.0, qkx2 = 0.0, qky2 = 0.0;
  double chi0 = 0.0, chik = 0.0, chi_sg0 = 0.0, chi_sgk = 0.0;
  double xi_over_L = 0.0, xi_sg_over_L = 0.0, binder = 0.0;
  std::uint64_t configurations = 0;  // disorder configurations with nonzero weight
};

/// Throws SizeError when N_tri > kMaxExactTriangles or N > kMaxExactSites.
ExactDisorderAverage exact_disorder_average(const Lattice& lat, double p, double T);

enum class ExactObservable { energy, energy2, m2, m4, chi0, chik, chi_sg0, chi_sgk, xi_over_L, xi_sg_over_L, binder };

double exact_disorder_average(const Lattice& lat, double p, double T, ExactObservable obs);

/// Row in the observables CSV schema with zero errors.
CsvPoint exact_csv_point(const Lattice& lat, const ExactDisorderAverage& avg);

}  // namespace tribody
