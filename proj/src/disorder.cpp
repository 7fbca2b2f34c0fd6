#include "tribody/disorder.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

#include "tribody/errors.hpp"
#include "tribody/rng.hpp"

namespace tribody {

DisorderRealization::DisorderRealization(double p, std::uint64_t seed, std::vector<std::int8_t> tau)
    : p_(p), seed_(seed), tau_(std::move(tau)) {
  n_negative_ = static_cast<int>(std::count(tau_.begin(), tau_.end(), std::int8_t{-1}));
}

std::uint64_t DisorderRealization::hash() const noexcept {
  Fnv1a h;
  h.add(p_);
  h.add(seed_);
  h.add_bytes(tau_.data(), tau_.size());
  return h.value();
}

DisorderRealization sample_disorder(const Lattice& lat, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p < 1.0)) throw DomainError("disorder probability must lie in [0, 1), got " + std::to_string(p));
  Xoshiro256 rng(stream_seed(seed, Stream::disorder));
  std::vector<std::int8_t> tau(static_cast<std::size_t>(lat.num_triangles()));
  for (auto& t : tau) t = rng.uniform() < p ? std::int8_t{-1} : std::int8_t{1};
  return DisorderRealization(p, seed, std::move(tau));
}

DisorderRealization uniform_disorder(const Lattice& lat) {
  return DisorderRealization(0.0, 0, std::vector<std::int8_t>(static_cast<std::size_t>(lat.num_triangles()), 1));
}

double nishimori_temperature(double p) {
  if (!(p > 0.0 && p < 0.5))
    throw DomainError("Nishimori temperature defined for 0 < p < 1/2, got " + std::to_string(p));
  return 2.0 / std::log((1.0 - p) / p);
}

double nishimori_probability(double T) {
  if (!(T > 0.0)) throw DomainError("temperature must be positive");
  return 1.0 / (1.0 + std::exp(2.0 / T));
}

std::string disorder_to_json(const DisorderRealization& dis) {
  static constexpr char hex[] = "0123456789abcdef";
  const auto tau = dis.tau();
  std::vector<std::uint8_t> bytes((tau.size() + 7) / 8, 0);
  for (std::size_t t = 0; t < tau.size(); ++t)
    if (tau[t] < 0) bytes[t / 8] |= static_cast<std::uint8_t>(1u << (t % 8));
  std::string packed;
  packed.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    packed.push_back(hex[b >> 4]);
    packed.push_back(hex[b & 15]);
  }
  nlohmann::json j{{"p", dis.p()}, {"seed", dis.seed()}, {"n_tri", tau.size()}, {"tau_packed", packed}};
  return j.dump();
}

DisorderRealization disorder_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto n = j.at("n_tri").get<std::size_t>();
  const auto packed = j.at("tau_packed").get<std::string>();
  if (packed.size() != 2 * ((n + 7) / 8)) throw IntegrityError("tau_packed length does not match n_tri");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw IntegrityError("tau_packed is not lowercase hex");
  };
  std::vector<std::int8_t> tau(n, 1);
  for (std::size_t t = 0; t < n; ++t) {
    const unsigned byte = nibble(packed[2 * (t / 8)]) << 4 | nibble(packed[2 * (t / 8) + 1]);
    if (byte >> (t % 8) & 1u) tau[t] = -1;
  }
  return DisorderRealization(j.at("p").get<double>(), j.at("seed").get<std::uint64_t>(), std::move(tau));
}

}  // namespace tribody
