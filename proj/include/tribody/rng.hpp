#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace tribody {

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable seed derivation: folds each word through splitmix64. The result
// depends only on the values and their order, never on platform or run
// layout, so new rows or temperatures never reseed existing ones.
inline constexpr std::uint64_t derive_seed(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t w : words) {
    std::uint64_t s = h ^ w;
    h = splitmix64(s);
  }
  return h;
}

// Named sub-streams of a master seed.
enum class Stream : std::uint64_t {
  disorder = 0x44495352ULL,
  thermal = 0x54484552ULL,
  exchange = 0x45584348ULL,
  bootstrap = 0x424f4f54ULL,
};

inline constexpr std::uint64_t stream_seed(std::uint64_t master, Stream s,
                                           std::uint64_t index = 0) noexcept {
  return derive_seed({master, static_cast<std::uint64_t>(s), index});
}

/// xoshiro256** 1.0. Satisfies UniformRandomBitGenerator; the full state is
/// exposed for checkpointing.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;
  using State = std::array<std::uint64_t, 4>;

  Xoshiro256() : Xoshiro256(0) {}
  explicit Xoshiro256(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  const State& state() const noexcept { return s_; }
  void set_state(const State& s) noexcept { s_ = s; }

  friend bool operator==(const Xoshiro256&, const Xoshiro256&) = default;

 private:
  State s_{};
};

// FNV-1a over raw bytes; used for lattice/disorder fingerprints.
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t n) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void add(const T& v) noexcept {
    add_bytes(&v, sizeof(T));
  }
  std::uint64_t value() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace tribody
