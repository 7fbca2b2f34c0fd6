#include "tribody/multispin.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <type_traits>

#include "tribody/errors.hpp"
#include "tribody/observables.hpp"
#include "tribody/rng.hpp"

namespace tribody {

namespace {

using U64 = std::uint64_t;
using V8 = std::uint64_t __attribute__((vector_size(64)));

template <typename W>
constexpr int kParts = sizeof(W) / sizeof(U64);

template <typename W>
inline U64 part(const W& w, int i) noexcept {
  if constexpr (std::is_same_v<W, U64>) {
    (void)i;
    return w;
  } else {
    return w[i];
  }
}

template <typename W>
inline void set_part(W& w, int i, U64 v) noexcept {
  if constexpr (std::is_same_v<W, U64>) {
    (void)i;
    w = v;
  } else {
    w[i] = v;
  }
}

template <typename W>
inline bool any(const W& w) noexcept {
  if constexpr (std::is_same_v<W, U64>) {
    return w != 0;
  } else {
    U64 r = 0;
    for (int i = 0; i < 8; ++i) r |= w[i];
    return r != 0;
  }
}

template <typename W>
inline U64 popcount(const W& w) noexcept {
  U64 n = 0;
  for (int i = 0; i < kParts<W>; ++i) n += static_cast<U64>(std::popcount(part(w, i)));
  return n;
}

template <typename W>
inline bool lane_bit(const W& w, int l) noexcept {
  return (part(w, l >> 6) >> (l & 63)) & 1u;
}

template <typename W>
inline void set_lane_bit(W& w, int l) noexcept {
  set_part(w, l >> 6, part(w, l >> 6) | (U64{1} << (l & 63)));
}

template <typename W>
inline W rotl(W x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

// xoshiro256** run independently in every 64-bit part of W.
template <typename W>
struct LaneRng {
  W s[4];

  LaneRng() = default;
  LaneRng(std::uint64_t seed, std::uint64_t first_index) {
    for (int i = 0; i < kParts<W>; ++i) {
      Xoshiro256 g(stream_seed(seed, Stream::thermal, first_index + static_cast<std::uint64_t>(i)));
      for (int k = 0; k < 4; ++k) set_part(s[k], i, g.state()[static_cast<std::size_t>(k)]);
    }
  }
  W operator()() noexcept {
    const W result = rotl<W>(s[1] * 5, 7) * 9;
    const W t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl<W>(s[3], 45);
    return result;
  }
};

// Column-wise binary counter: plane j holds bit j of one count per lane.
template <typename W>
struct VerticalCounter {
  W planes[32]{};
  int depth = 0;

  void add(W x) noexcept {
    for (int j = 0; any(x); ++j) {
      const W carry = planes[j] & x;
      planes[j] ^= x;
      x = carry;
      depth = std::max(depth, j + 1);
    }
  }
  void extract(std::int64_t* out, int n_lanes) const noexcept {
    std::fill(out, out + n_lanes, 0);
    for (int j = 0; j < depth; ++j)
      for (int l = 0; l < n_lanes; ++l) out[l] |= static_cast<std::int64_t>(lane_bit(planes[j], l)) << j;
  }
};

// Lanes whose 4-bit sliced count (c3 c2 c1 c0) is at least m.
template <typename W>
inline W at_least(const W& c0, const W& c1, const W& c2, const W& c3, int m) noexcept {
  const W* planes[4] = {&c0, &c1, &c2, &c3};
  W gt{}, eq = ~W{};
  for (int bit = 3; bit >= 0; --bit) {
    const W& u = *planes[bit];
    if ((m >> bit) & 1) {
      eq &= u;
    } else {
      gt |= eq & u;
      eq &= ~u;
    }
  }
  return gt | eq;
}

// Binary expansions of y^m, m = 1..7, for one temperature: bits[b] has bit
// (m - 1) set when digit b (weight 2^-(b+1)) of y^m is 1.
struct PowerBits {
  std::array<std::uint8_t, 53> bits{};
};

PowerBits power_bits(double y) {
  PowerBits pb;
  double ym = 1.0;
  for (int m = 1; m <= 7; ++m) {
    ym *= y;
    double r = ym;
    for (auto& b : pb.bits) {
      r *= 2;
      if (r >= 1) {
        b = static_cast<std::uint8_t>(b | (1u << (m - 1)));
        r -= 1;
      }
    }
  }
  return pb;
}

struct Pair {
  std::uint32_t j, k;
};

// Flipping a site with K incident triangles of which u are unsatisfied costs
// dE = 2(K - 2u), accepted with probability y^(K/2 - u) where y = exp(-4 beta).
// Every lane with u < K/2 compares one uniform 53-bit number against the
// binary expansion of its own y^m, most significant digit first, stopping once
// every such lane has differed from its threshold.
template <int K, typename W>
void sweep_run(W* s, const Pair* e, const W* tneg, int begin, int end, W active, const PowerBits& y,
               LaneRng<W>& rng, U64& accepted) {
  constexpr int H = K / 2;
  for (int i = begin; i < end; ++i, e += K, tneg += K) {
    const W si = s[i];
    W c0{}, c1{}, c2{}, c3{};
    for (int q = 0; q < K; ++q) {
      const W x = si ^ s[e[q].j] ^ s[e[q].k] ^ tneg[q];
      const W t0 = c0 & x;
      c0 ^= x;
      const W t1 = c1 & t0;
      c1 ^= t0;
      const W t2 = c2 & t1;
      c2 ^= t1;
      c3 |= t2;
    }
    W acc = at_least(c0, c1, c2, c3, H) & active;
    W undecided = active & ~acc;
    if (any(undecided)) {
      // exactly[m - 1]: lanes that need probability y^m, i.e. u == H - m.
      W exactly[H];
      W above = acc;
      for (int m = 1; m <= H; ++m) {
        const W ge = at_least(c0, c1, c2, c3, H - m);
        exactly[m - 1] = ge & ~above;
        above = ge;
      }
      for (std::size_t b = 0; b < 53 && any(undecided); ++b) {
        W q{};
        const unsigned sel = y.bits[b];
        for (int m = 0; m < H; ++m)
          if ((sel >> m) & 1u) q |= exactly[m];
        const W diff = (rng() ^ q) & undecided;
        acc |= diff & q;
        undecided &= ~diff;
      }
    }
    s[i] = si ^ acc;
    accepted += popcount(acc);
  }
}

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void put_vec(std::ostream& os, const std::vector<T>& v) {
  put<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IntegrityError("checkpoint truncated");
  return v;
}
template <typename T>
void get_vec(std::istream& is, std::vector<T>& v) {
  if (get<std::uint64_t>(is) != v.size()) throw IntegrityError("checkpoint array length mismatch");
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!is) throw IntegrityError("checkpoint truncated");
}

// Checkpoint: "TBIMSCKP", u32 version, i32 lane width, lattice / disorder /
// schedule hashes, then the engine state in fixed order, little-endian.
constexpr char kMagic[8] = {'T', 'B', 'I', 'M', 'S', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 2;

std::uint64_t batch_hash(const std::vector<DisorderRealization>& lanes) {
  Fnv1a h;
  for (const auto& d : lanes) h.add(d.hash());
  return h.value();
}

}  // namespace

class MultiSpinSimulation::Engine {
 public:
  virtual ~Engine() = default;
  virtual int lane_width() const noexcept = 0;
  virtual int num_lanes() const noexcept = 0;
  virtual int num_temperatures() const noexcept = 0;
  virtual const Schedule& schedule() const noexcept = 0;
  virtual const DisorderRealization& disorder(int lane) const = 0;
  virtual std::uint64_t lattice_hash() const noexcept = 0;
  virtual std::uint64_t disorder_hash() const = 0;
  virtual void advance(std::uint64_t sweeps) = 0;
  virtual std::uint64_t sweeps_done() const noexcept = 0;
  virtual SpinConfiguration configuration(int lane, int set, int t) const = 0;
  virtual std::int64_t energy(int lane, int set, int t) const = 0;
  virtual SimulationResult result(int lane) const = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;
};

namespace {

template <typename W>
class LaneEngine final : public MultiSpinSimulation::Engine {
 public:
  static constexpr int kWidth = 64 * kParts<W>;

  LaneEngine(const Lattice& lat, std::vector<DisorderRealization> lanes, Schedule schedule)
      : lat_(&lat),
        lanes_(std::move(lanes)),
        schedule_(std::move(schedule)),
        exchange_rng_(stream_seed(schedule_.seed, Stream::exchange)) {
    if (lanes_.empty() || lanes_.size() > static_cast<std::size_t>(kWidth))
      throw DomainError("a lane batch holds 1 to " + std::to_string(kWidth) + " samples");
    if (schedule_.record_series) throw DomainError("time series recording is not available in lane batches");
    const auto& temps = schedule_.temperatures;
    if (temps.empty()) throw DomainError("temperature ladder is empty");
    for (std::size_t i = 0; i < temps.size(); ++i) {
      if (!(temps[i] > 0)) throw DomainError("temperatures must be positive");
      if (i > 0 && !(temps[i] > temps[i - 1])) throw DomainError("temperatures must be strictly increasing");
    }
    n_bins_ = schedule_bin_count(schedule_);
    nt_ = static_cast<int>(temps.size());
    n_sites_ = lat.num_sites();
    const int nl = num_lanes();
    active_ = W{};
    for (int l = 0; l < nl; ++l) set_lane_bit(active_, l);

    tri_neg_.assign(static_cast<std::size_t>(lat.num_triangles()), W{});
    for (int l = 0; l < nl; ++l) {
      const auto& d = lanes_[static_cast<std::size_t>(l)];
      if (d.size() != lat.num_triangles())
        throw IntegrityError("disorder realization does not match lattice triangle count");
      for (int t = 0; t < d.size(); ++t)
        if (d.tau(t) < 0) set_lane_bit(tri_neg_[static_cast<std::size_t>(t)], l);
    }

    for (int s = 0; s < n_sites_; ++s) {
      const auto inc = lat.incidence(s);
      const int K = static_cast<int>(inc.size());
      if (K < 2 || K % 2 != 0 || K > 14) throw DomainError("lane batches need an even coordination of at most 14");
      if (runs_.empty() || runs_.back().coordination != K) runs_.push_back({s, s, K, pairs_.size()});
      runs_.back().end = s + 1;
      for (int t : inc) {
        std::array<std::uint32_t, 2> o{};
        int k = 0;
        for (int v : lat.triangle(t))
          if (v != s) o[static_cast<std::size_t>(k++)] = static_cast<std::uint32_t>(v);
        pairs_.push_back({o[0], o[1]});
        entry_neg_.push_back(tri_neg_[static_cast<std::size_t>(t)]);
      }
    }

    for (double T : temps) {
      const double beta = 1.0 / T;
      betas_.push_back(beta);
      accept_bits_.push_back(power_bits(std::exp(-4.0 * beta)));
    }

    const FourierTable ft(lat);
    auto make_groups = [&](std::span<const double> wave, std::span<const double> c, std::span<const double> sn) {
      std::map<double, std::size_t> index;
      std::vector<Group> groups;
      for (int i = 0; i < n_sites_; ++i) {
        const auto u = static_cast<std::size_t>(i);
        auto [it, fresh] = index.try_emplace(wave[u], groups.size());
        if (fresh) groups.push_back({{}, c[u], sn[u]});
        groups[it->second].sites.push_back(static_cast<std::uint32_t>(i));
      }
      return groups;
    };
    columns_ = make_groups(lat.wave_x(), ft.cos_x(), ft.sin_x());
    rows_ = make_groups(lat.wave_y(), ft.cos_y(), ft.sin_y());

    const auto slots = static_cast<std::size_t>(kReplicaSets * nt_);
    spins_.resize(slots * static_cast<std::size_t>(n_sites_));
    energies_.assign(slots * static_cast<std::size_t>(nl), 0);
    for (std::size_t r = 0; r < slots; ++r) {
      rngs_.emplace_back(schedule_.seed, r * kParts<W>);
      W* w = spins_.data() + r * static_cast<std::size_t>(n_sites_);
      for (int i = 0; i < n_sites_; ++i) w[i] = rngs_.back()() & active_;
    }
    counts_.resize(static_cast<std::size_t>(kWidth));
    for (int set = 0; set < kReplicaSets; ++set)
      for (int t = 0; t < nt_; ++t) update_energies(set, t);

    const auto pairs = static_cast<std::size_t>(nt_ - 1);
    ex_attempts_.assign(static_cast<std::size_t>(nl) * pairs, 0);
    ex_accepts_.assign(ex_attempts_.size(), 0);
    flips_accepted_.assign(static_cast<std::size_t>(nt_), 0);
    flips_proposed_.assign(static_cast<std::size_t>(nt_), 0);
    bin_sums_.assign(static_cast<std::size_t>(nl) * static_cast<std::size_t>(n_bins_) *
                         static_cast<std::size_t>(nt_) * kNumObs,
                     0.0);
  }

  int lane_width() const noexcept override { return kWidth; }
  int num_lanes() const noexcept override { return static_cast<int>(lanes_.size()); }
  int num_temperatures() const noexcept override { return nt_; }
  const Schedule& schedule() const noexcept override { return schedule_; }
  const DisorderRealization& disorder(int lane) const override { return lanes_.at(static_cast<std::size_t>(lane)); }
  std::uint64_t lattice_hash() const noexcept override { return lat_->hash(); }
  std::uint64_t disorder_hash() const override { return batch_hash(lanes_); }
  std::uint64_t sweeps_done() const noexcept override { return sweeps_done_; }

  void advance(std::uint64_t sweeps) override {
    const auto every = static_cast<std::uint64_t>(schedule_.measure_every);
    const std::uint64_t stop = std::min(schedule_.n_sweeps, sweeps_done_ + sweeps);
    const auto per_sweep = static_cast<std::uint64_t>(n_sites_) * static_cast<std::uint64_t>(num_lanes());
    while (sweeps_done_ < stop) {
      for (int t = 0; t < nt_; ++t) {
        for (int set = 0; set < kReplicaSets; ++set) {
          flips_accepted_[static_cast<std::size_t>(t)] += sweep(set, t);
          flips_proposed_[static_cast<std::size_t>(t)] += per_sweep;
          update_energies(set, t);
        }
      }
      if (nt_ > 1) exchange();
      ++sweeps_done_;
      if (sweeps_done_ % every == 0) measure_and_record();
    }
  }

  SpinConfiguration configuration(int lane, int set, int t) const override {
    check_lane(lane);
    const W* w = words(set, t);
    std::vector<std::int8_t> spins(static_cast<std::size_t>(n_sites_));
    for (int i = 0; i < n_sites_; ++i)
      spins[static_cast<std::size_t>(i)] = lane_bit(w[i], lane) ? std::int8_t{-1} : std::int8_t{1};
    return {std::move(spins), lane_energy(set, t, lane)};
  }

  std::int64_t energy(int lane, int set, int t) const override {
    check_lane(lane);
    return lane_energy(set, t, lane);
  }

  SimulationResult result(int lane) const override {
    check_lane(lane);
    const auto nt = static_cast<std::size_t>(nt_);
    const std::size_t per_lane = static_cast<std::size_t>(n_bins_) * nt * kNumObs;
    SimulationResult r;
    r.temperatures = schedule_.temperatures;
    r.sweeps = sweeps_done_;
    r.measurements = measurements_;
    r.bins = LogBinnedSeries(n_bins_, nt_, kNumObs);
    const double* sums = bin_sums_.data() + static_cast<std::size_t>(lane) * per_lane;
    for (int k = 0; k < n_bins_; ++k)
      for (int t = 0; t < nt_; ++t)
        for (int o = 0; o < kNumObs; ++o)
          r.bins.mean(k, t, o) =
              sums[(static_cast<std::size_t>(k) * nt + static_cast<std::size_t>(t)) * kNumObs +
                   static_cast<std::size_t>(o)] /
              static_cast<double>(std::uint64_t{1} << k);
    r.production.resize(nt);
    for (int t = 0; t < nt_; ++t)
      for (int o = 0; o < kNumObs; ++o)
        r.production[static_cast<std::size_t>(t)][static_cast<std::size_t>(o)] = r.bins.mean(n_bins_ - 1, t, o);
    const auto pairs = nt - 1;
    const auto off = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(lane) * pairs);
    const auto len = static_cast<std::ptrdiff_t>(pairs);
    r.exchange.attempts.assign(ex_attempts_.begin() + off, ex_attempts_.begin() + off + len);
    r.exchange.accepts.assign(ex_accepts_.begin() + off, ex_accepts_.begin() + off + len);
    r.sweep_acceptance.resize(nt);
    for (std::size_t t = 0; t < nt; ++t)
      r.sweep_acceptance[t] = flips_proposed_[t] ? double(flips_accepted_[t]) / double(flips_proposed_[t]) : 0.0;
    return r;
  }

  void save(std::ostream& os) const override {
    put(os, sweeps_done_);
    put(os, measurements_);
    put(os, static_cast<std::int32_t>(parity_));
    put(os, exchange_rng_.state());
    put<std::uint64_t>(os, rngs_.size());
    for (const auto& r : rngs_) os.write(reinterpret_cast<const char*>(r.s), sizeof r.s);
    put_vec(os, spins_);
    put_vec(os, energies_);
    put_vec(os, ex_attempts_);
    put_vec(os, ex_accepts_);
    put_vec(os, flips_accepted_);
    put_vec(os, flips_proposed_);
    put_vec(os, bin_sums_);
  }

  void load(std::istream& is) override {
    sweeps_done_ = get<std::uint64_t>(is);
    measurements_ = get<std::uint64_t>(is);
    parity_ = get<std::int32_t>(is);
    exchange_rng_.set_state(get<Xoshiro256::State>(is));
    if (get<std::uint64_t>(is) != rngs_.size()) throw IntegrityError("checkpoint slot count mismatch");
    for (auto& r : rngs_) {
      is.read(reinterpret_cast<char*>(r.s), sizeof r.s);
      if (!is) throw IntegrityError("checkpoint truncated");
    }
    get_vec(is, spins_);
    get_vec(is, energies_);
    get_vec(is, ex_attempts_);
    get_vec(is, ex_accepts_);
    get_vec(is, flips_accepted_);
    get_vec(is, flips_proposed_);
    get_vec(is, bin_sums_);
    for (const auto& w : spins_)
      if (any(w & ~active_)) throw IntegrityError("checkpoint has spins in unused lanes");
    const auto stored = energies_;
    for (int set = 0; set < kReplicaSets; ++set)
      for (int t = 0; t < nt_; ++t) update_energies(set, t);
    if (stored != energies_) throw IntegrityError("checkpoint energies do not match their spins");
  }

 private:
  struct Run {
    int begin, end, coordination;
    std::size_t first;
  };
  struct Group {
    std::vector<std::uint32_t> sites;
    double c = 1, s = 0;
  };

  void check_lane(int lane) const {
    if (lane < 0 || lane >= num_lanes()) throw DomainError("lane index out of range");
  }
  W* words(int set, int t) {
    return spins_.data() + static_cast<std::size_t>(set * nt_ + t) * static_cast<std::size_t>(n_sites_);
  }
  const W* words(int set, int t) const {
    return spins_.data() + static_cast<std::size_t>(set * nt_ + t) * static_cast<std::size_t>(n_sites_);
  }
  std::int64_t& lane_energy(int set, int t, int lane) {
    return energies_[static_cast<std::size_t>(set * nt_ + t) * lanes_.size() + static_cast<std::size_t>(lane)];
  }
  std::int64_t lane_energy(int set, int t, int lane) const {
    return energies_[static_cast<std::size_t>(set * nt_ + t) * lanes_.size() + static_cast<std::size_t>(lane)];
  }

  U64 sweep(int set, int t) {
    W* s = words(set, t);
    auto& rng = rngs_[static_cast<std::size_t>(set * nt_ + t)];
    const auto& y = accept_bits_[static_cast<std::size_t>(t)];
    U64 accepted = 0;
    for (const auto& r : runs_) {
      const Pair* e = pairs_.data() + r.first;
      const W* n = entry_neg_.data() + r.first;
      switch (r.coordination) {
        case 2: sweep_run<2>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
        case 4: sweep_run<4>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
        case 6: sweep_run<6>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
        case 8: sweep_run<8>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
        case 10: sweep_run<10>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
        case 12: sweep_run<12>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
        default: sweep_run<14>(s, e, n, r.begin, r.end, active_, y, rng, accepted); break;
      }
    }
    return accepted;
  }

  void update_energies(int set, int t) {
    const W* s = words(set, t);
    VerticalCounter<W> unsat;
    const auto tris = lat_->triangles();
    for (std::size_t i = 0; i < tris.size(); ++i) {
      const auto& tr = tris[i];
      unsat.add(s[tr[0]] ^ s[tr[1]] ^ s[tr[2]] ^ tri_neg_[i]);
    }
    const int nl = num_lanes();
    unsat.extract(counts_.data(), nl);
    const auto n_tri = static_cast<std::int64_t>(tris.size());
    for (int l = 0; l < nl; ++l) lane_energy(set, t, l) = 2 * counts_[static_cast<std::size_t>(l)] - n_tri;
  }

  void exchange() {
    const int nl = num_lanes();
    const auto pairs = static_cast<std::size_t>(nt_ - 1);
    for (int set = 0; set < kReplicaSets; ++set) {
      for (int i = parity_; i + 1 < nt_; i += 2) {
        const double db = betas_[static_cast<std::size_t>(i)] - betas_[static_cast<std::size_t>(i + 1)];
        W swap{};
        for (int l = 0; l < nl; ++l) {
          auto& ea = lane_energy(set, i, l);
          auto& eb = lane_energy(set, i + 1, l);
          const double x = db * static_cast<double>(ea - eb);
          const auto k = static_cast<std::size_t>(l) * pairs + static_cast<std::size_t>(i);
          ++ex_attempts_[k];
          if (x >= 0 || exchange_rng_.uniform() < std::exp(x)) {
            set_lane_bit(swap, l);
            ++ex_accepts_[k];
            std::swap(ea, eb);
          }
        }
        if (!any(swap)) continue;
        W* a = words(set, i);
        W* b = words(set, i + 1);
        for (int k = 0; k < n_sites_; ++k) {
          const W d = (a[k] ^ b[k]) & swap;
          a[k] ^= d;
          b[k] ^= d;
        }
      }
    }
    parity_ ^= 1;
  }

  // Adds per-lane Fourier sums of a field whose set bits mean -1.
  void modes(const W* f, std::vector<FourierModes>& out) {
    const int nl = num_lanes();
    auto accumulate = [&](const std::vector<Group>& groups, bool is_x) {
      for (const auto& g : groups) {
        VerticalCounter<W> c;
        for (auto i : g.sites) c.add(f[i]);
        c.extract(counts_.data(), nl);
        const double n = static_cast<double>(g.sites.size());
        for (int l = 0; l < nl; ++l) {
          const double v = n - 2.0 * static_cast<double>(counts_[static_cast<std::size_t>(l)]);
          auto& m = out[static_cast<std::size_t>(l)];
          if (is_x) {
            m.zero += v;
            m.kx += std::complex<double>(v * g.c, v * g.s);
          } else {
            m.ky += std::complex<double>(v * g.c, v * g.s);
          }
        }
      }
    };
    accumulate(columns_, true);
    if (schedule_.measure_ky) accumulate(rows_, false);
  }

  void measure_and_record() {
    const std::uint64_t idx = measurements_++;
    const int bin = log_bin_of(idx);
    if (bin < 0) return;
    const int nl = num_lanes();
    const auto nt = static_cast<std::size_t>(nt_);
    std::vector<W> q(static_cast<std::size_t>(n_sites_));
    std::vector<FourierModes> ma, mb, mq;
    for (int t = 0; t < nt_; ++t) {
      const W* a = words(0, t);
      const W* b = words(1, t);
      for (int i = 0; i < n_sites_; ++i) q[static_cast<std::size_t>(i)] = a[i] ^ b[i];
      ma.assign(static_cast<std::size_t>(nl), {});
      mb.assign(static_cast<std::size_t>(nl), {});
      mq.assign(static_cast<std::size_t>(nl), {});
      modes(a, ma);
      modes(b, mb);
      modes(q.data(), mq);
      for (int l = 0; l < nl; ++l) {
        const auto ul = static_cast<std::size_t>(l);
        MeasurementRecord rec;
        rec.energy = {static_cast<double>(lane_energy(0, t, l)), static_cast<double>(lane_energy(1, t, l))};
        rec.spin = {ma[ul], mb[ul]};
        rec.overlap = mq[ul];
        const auto obs = observables_from(rec);
        double* base = bin_sums_.data() + ((ul * static_cast<std::size_t>(n_bins_) + static_cast<std::size_t>(bin)) * nt +
                                           static_cast<std::size_t>(t)) *
                                              kNumObs;
        for (int o = 0; o < kNumObs; ++o) base[o] += obs[static_cast<std::size_t>(o)];
      }
    }
  }

  const Lattice* lat_;
  std::vector<DisorderRealization> lanes_;
  Schedule schedule_;
  int nt_ = 0;
  int n_sites_ = 0;
  W active_{};
  std::vector<double> betas_;
  std::vector<PowerBits> accept_bits_;  // powers of exp(-4 beta), per temperature
  std::vector<Pair> pairs_;
  std::vector<W> entry_neg_;
  std::vector<Run> runs_;
  std::vector<W> tri_neg_;
  std::vector<Group> columns_, rows_;

  std::vector<W> spins_;                // [set][T][site]
  std::vector<std::int64_t> energies_;  // [set][T][lane]
  std::vector<LaneRng<W>> rngs_;        // one per (set, T) slot
  Xoshiro256 exchange_rng_;
  int parity_ = 0;
  std::uint64_t sweeps_done_ = 0;
  std::uint64_t measurements_ = 0;
  int n_bins_ = 0;

  std::vector<double> bin_sums_;                                // [lane][bin][T][obs]
  std::vector<std::uint64_t> ex_attempts_, ex_accepts_;         // [lane][pair]
  std::vector<std::uint64_t> flips_accepted_, flips_proposed_;  // [T], all lanes and both sets
  std::vector<std::int64_t> counts_;
};

std::unique_ptr<MultiSpinSimulation::Engine> make_engine(const Lattice& lat, std::vector<DisorderRealization> lanes,
                                                         Schedule schedule, int lane_width) {
  if (lane_width == 64) return std::make_unique<LaneEngine<U64>>(lat, std::move(lanes), std::move(schedule));
  if (lane_width == 512) return std::make_unique<LaneEngine<V8>>(lat, std::move(lanes), std::move(schedule));
  throw DomainError("lane width must be 64 or 512, got " + std::to_string(lane_width));
}

}  // namespace

MultiSpinSimulation::MultiSpinSimulation(const Lattice& lat, std::vector<DisorderRealization> lanes,
                                         Schedule schedule, int lane_width)
    : engine_(make_engine(lat, std::move(lanes), std::move(schedule), lane_width)) {}
MultiSpinSimulation::MultiSpinSimulation(std::unique_ptr<Engine> e) : engine_(std::move(e)) {}
MultiSpinSimulation::~MultiSpinSimulation() = default;
MultiSpinSimulation::MultiSpinSimulation(MultiSpinSimulation&&) noexcept = default;
MultiSpinSimulation& MultiSpinSimulation::operator=(MultiSpinSimulation&&) noexcept = default;

int MultiSpinSimulation::lane_width() const noexcept { return engine_->lane_width(); }
int MultiSpinSimulation::num_lanes() const noexcept { return engine_->num_lanes(); }
int MultiSpinSimulation::num_temperatures() const noexcept { return engine_->num_temperatures(); }
const Schedule& MultiSpinSimulation::schedule() const noexcept { return engine_->schedule(); }
const DisorderRealization& MultiSpinSimulation::disorder(int lane) const { return engine_->disorder(lane); }
void MultiSpinSimulation::advance(std::uint64_t sweeps) { engine_->advance(sweeps); }
void MultiSpinSimulation::run_to_end() { engine_->advance(schedule().n_sweeps - sweeps_done()); }
bool MultiSpinSimulation::finished() const noexcept { return sweeps_done() >= schedule().n_sweeps; }
std::uint64_t MultiSpinSimulation::sweeps_done() const noexcept { return engine_->sweeps_done(); }
SpinConfiguration MultiSpinSimulation::configuration(int lane, int set, int t) const {
  return engine_->configuration(lane, set, t);
}
std::int64_t MultiSpinSimulation::energy(int lane, int set, int t) const { return engine_->energy(lane, set, t); }
SimulationResult MultiSpinSimulation::result(int lane) const { return engine_->result(lane); }

void MultiSpinSimulation::save_checkpoint(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put(os, kVersion);
    put(os, static_cast<std::int32_t>(lane_width()));
    put(os, engine_->lattice_hash());
    put(os, engine_->disorder_hash());
    put(os, engine_->schedule().hash());
    engine_->save(os);
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MultiSpinSimulation MultiSpinSimulation::restore(const std::filesystem::path& path, const Lattice& lat,
                                                 std::vector<DisorderRealization> lanes, Schedule schedule,
                                                 int lane_width) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IntegrityError("not a lane-batch checkpoint");
  if (get<std::uint32_t>(is) != kVersion) throw IntegrityError("unsupported checkpoint version");
  if (get<std::int32_t>(is) != lane_width) throw IntegrityError("checkpoint lane width mismatch");
  if (get<std::uint64_t>(is) != lat.hash()) throw IntegrityError("checkpoint lattice hash mismatch");
  if (get<std::uint64_t>(is) != batch_hash(lanes)) throw IntegrityError("checkpoint disorder hash mismatch");
  if (get<std::uint64_t>(is) != schedule.hash()) throw IntegrityError("checkpoint schedule hash mismatch");
  auto engine = make_engine(lat, std::move(lanes), std::move(schedule), lane_width);
  engine->load(is);
  return MultiSpinSimulation(std::move(engine));
}

}  // namespace tribody
