#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tribody/lattice.hpp"

namespace tribody {

// Quenched coupling signs, one per triangle, each -1 with probability p.
class DisorderRealization {
 public:
  DisorderRealization() = default;
  DisorderRealization(double p, std::uint64_t seed, std::vector<std::int8_t> tau);

  double p() const noexcept { return p_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::span<const std::int8_t> tau() const noexcept { return tau_; }
  std::int8_t tau(int t) const noexcept { return tau_[static_cast<std::size_t>(t)]; }
  int size() const noexcept { return static_cast<int>(tau_.size()); }
  int n_negative() const noexcept { return n_negative_; }
  std::uint64_t hash() const noexcept;

  friend bool operator==(const DisorderRealization&, const DisorderRealization&) = default;

 private:
  double p_ = 0.0;
  std::uint64_t seed_ = 0;
  std::vector<std::int8_t> tau_;
  int n_negative_ = 0;
};

/// Draws tau from the disorder sub-stream of `seed`; bit-exact for equal inputs.
DisorderRealization sample_disorder(const Lattice& lat, double p, std::uint64_t seed);

/// All couplings ferromagnetic.
DisorderRealization uniform_disorder(const Lattice& lat);

/// Temperature (J = 1) on the Nishimori line exp(-2/T) = p / (1 - p); p in (0, 1/2).
double nishimori_temperature(double p);

/// Inverse of nishimori_temperature.
double nishimori_probability(double T);

// Serialized form: {p, seed, n_tri, tau_packed}; bit t of the little-endian
// byte stream is 1 when triangle t is negative. tau_packed is hex-encoded.
std::string disorder_to_json(const DisorderRealization& dis);
DisorderRealization disorder_from_json(const std::string& text);

}  // namespace tribody
