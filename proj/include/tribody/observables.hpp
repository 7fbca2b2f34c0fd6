#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tribody/lattice.hpp"

namespace tribody {

struct SpinConfiguration;
class LogBinnedSeries;

// Per-site plane-wave factors for the smallest nonzero wave vectors along
// both reciprocal directions.
class FourierTable {
 public:
  explicit FourierTable(const Lattice& lat);
  std::span<const double> cos_x() const noexcept { return cx_; }
  std::span<const double> sin_x() const noexcept { return sx_; }
  std::span<const double> cos_y() const noexcept { return cy_; }
  std::span<const double> sin_y() const noexcept { return sy_; }
  int size() const noexcept { return static_cast<int>(cx_.size()); }

 private:
  std::vector<double> cx_, sx_, cy_, sy_;
};

struct FourierModes {
  double zero = 0.0;               // sum_i f_i
  std::complex<double> kx{0.0};    // sum_i f_i exp(i k_x . R_i)
  std::complex<double> ky{0.0};
};

struct MeasurementRecord {
  std::array<double, 2> energy{};
  std::array<FourierModes, 2> spin{};  // m~ for replica sets alpha, beta
  FourierModes overlap;                // q~ with q_i = S_i^alpha S_i^beta
};

/// Fourier modes of both configurations and of their site overlap.
/// The ky modes are skipped (left zero) unless with_ky is set.
MeasurementRecord measure(const SpinConfiguration& alpha, const SpinConfiguration& beta,
                          const FourierTable& ft, bool with_ky = true);

// Scalar observables accumulated per measurement and temperature. Spin
// observables are averaged over the two replica sets.
enum class Obs : int { energy, energy2, m2, m4, mkx2, mky2, q2, q4, qkx2, qky2 };
inline constexpr int kNumObs = 10;
const char* obs_name(Obs o);

std::array<double, kNumObs> observables_from(const MeasurementRecord& rec);

// Thermal averages for one disorder sample at one temperature.
using ThermalAverages = std::array<double, kNumObs>;

struct ChiPair {
  double chi0 = 0.0;
  double chik = 0.0;
};

/// chi(0) and chi(k_min) from <|m~|^2> values with the 1/L^2 prefactor.
/// If average_directions is false only the x direction is used.
ChiPair chi_from(const ThermalAverages& avg, int L, bool overlap, bool average_directions);

struct CorrelationLength {
  double xi = 0.0;
  bool clamped = false;  // chi0 < chik, root argument clamped to zero
};

/// Second-moment finite-size correlation length
///   xi = sqrt(max(chi0/chik - 1, 0)) / (2 sin(k/2)).
/// Throws DegenerateInputError when chik == 0.
CorrelationLength correlation_length(double chi0, double chik, double k_min);
CorrelationLength correlation_length(double chi0, double chik, int L);

/// g = (3 - m4 / m2^2) / 2. Throws DegenerateInputError when m2 == 0.
double binder_ratio(double m2, double m4);

// Thermal averages of one disorder sample across a temperature ladder, keyed
// by sample seed for order-independent aggregation.
struct SampleAverages {
  std::uint64_t seed = 0;
  std::vector<ThermalAverages> per_temperature;
};

struct Estimate {
  double value = 0.0;
  double error = 0.0;
};

struct AggregatePoint {
  double T = 0.0;
  Estimate chi0, chik, xi_over_L, xi_sg_over_L, binder, energy;
  bool xi_clamped = false;
  bool xi_sg_degenerate = false;
};

struct AggregateOptions {
  int n_boot = 200;
  std::uint64_t seed = 1;
  bool average_k_directions = false;
  double confidence = 0.6826894921370859;  // central interval mass; error = half-width
};

// Disorder averages at every ladder temperature for one (p, L).
struct DisorderAggregate {
  int L = 0;
  int n_samples = 0;
  bool errors_defined = true;  // false for a single sample
  std::vector<AggregatePoint> points;
};

/// Average-then-ratio disorder aggregation with bootstrap errors over samples.
/// Samples are put into seed order first, so the result does not depend on
/// the order they are passed in.
DisorderAggregate aggregate(std::vector<SampleAverages> samples, const Lattice& lat,
                            std::span<const double> temperatures, const AggregateOptions& opt);

/// Per-point CSV header and rows, 17 significant digits.
struct CsvPoint {
  double p = 0.0;
  int L = 0;
  double T = 0.0;
  int n_samples = 0;
  double chi0 = 0, chi0_err = 0, chikmin = 0, chikmin_err = 0;
  double xi_over_L = 0, xi_err = 0, xi_sg_over_L = 0, xi_sg_err = 0;
  double binder = 0, binder_err = 0;
  bool equilibrated = false;
};

std::string csv_header();
std::string csv_row(const CsvPoint& pt);
std::vector<CsvPoint> parse_csv(const std::string& text);
std::string format_g17(double v);

}  // namespace tribody
