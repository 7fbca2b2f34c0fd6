#include "tribody/mc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tribody/errors.hpp"

namespace tribody {

std::int64_t compute_energy(std::span<const std::int8_t> spins, const Lattice& lat,
                            const DisorderRealization& dis) {
  std::int64_t e = 0;
  const auto tris = lat.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& tri = tris[t];
    e -= dis.tau(static_cast<int>(t)) * spins[static_cast<std::size_t>(tri[0])] *
         spins[static_cast<std::size_t>(tri[1])] * spins[static_cast<std::size_t>(tri[2])];
  }
  return e;
}

SpinConfiguration make_configuration(std::vector<std::int8_t> spins, const Lattice& lat,
                                     const DisorderRealization& dis) {
  SpinConfiguration cfg{std::move(spins), 0};
  cfg.energy = compute_energy(cfg.spins, lat, dis);
  return cfg;
}

SpinConfiguration random_configuration(const Lattice& lat, const DisorderRealization& dis, Xoshiro256& rng) {
  std::vector<std::int8_t> spins(static_cast<std::size_t>(lat.num_sites()));
  for (auto& s : spins) s = (rng() >> 63) ? std::int8_t{1} : std::int8_t{-1};
  return make_configuration(std::move(spins), lat, dis);
}

int delta_energy(const SpinConfiguration& cfg, const Lattice& lat, const DisorderRealization& dis, int site) {
  int h = 0;
  for (int t : lat.incidence(site)) {
    int prod = dis.tau(t);
    for (int v : lat.triangle(t))
      if (v != site) prod *= cfg.spins[static_cast<std::size_t>(v)];
    h += prod;
  }
  return 2 * cfg.spins[static_cast<std::size_t>(site)] * h;
}

CouplingTable::CouplingTable(const Lattice& lat, const DisorderRealization& dis) {
  if (dis.size() != lat.num_triangles())
    throw IntegrityError("disorder realization does not match lattice triangle count");
  offset_.reserve(static_cast<std::size_t>(lat.num_sites()) + 1);
  offset_.push_back(0);
  for (int s = 0; s < lat.num_sites(); ++s) {
    const auto inc = lat.incidence(s);
    for (int t : inc) {
      const auto& tri = lat.triangle(t);
      std::array<std::uint32_t, 2> others{};
      int k = 0;
      for (int v : tri)
        if (v != s) others[static_cast<std::size_t>(k++)] = static_cast<std::uint32_t>(v);
      entries_.push_back({others[0], others[1], dis.tau(t)});
    }
    offset_.push_back(static_cast<std::uint32_t>(entries_.size()));
    max_abs_delta_ = std::max(max_abs_delta_, 2 * static_cast<int>(inc.size()));
  }
}

AcceptanceTable::AcceptanceTable(double beta, int max_abs_delta) : offset_(max_abs_delta) {
  thr_.resize(static_cast<std::size_t>(2 * max_abs_delta + 1));
  for (int d = -max_abs_delta; d <= max_abs_delta; ++d) {
    const double prob = d <= 0 ? 1.0 : std::exp(-beta * d);
    thr_[static_cast<std::size_t>(d + offset_)] = static_cast<std::uint64_t>(std::ceil(prob * 0x1.0p53));
  }
}

SweepStats metropolis_sweep(SpinConfiguration& cfg, const CouplingTable& table, const AcceptanceTable& acc,
                            Xoshiro256& rng) {
  const int n = table.num_sites();
  std::int8_t* spins = cfg.spins.data();
  const std::span<const std::int8_t> view(spins, static_cast<std::size_t>(n));
  std::int64_t energy = cfg.energy;
  std::uint64_t accepted = 0;
  for (int s = 0; s < n; ++s) {
    const int d = table.delta_energy(view, s);
    if (d <= 0 || (rng() >> 11) < acc.threshold(d)) {
      spins[s] = static_cast<std::int8_t>(-spins[s]);
      energy += d;
      ++accepted;
    }
  }
  cfg.energy = energy;
  return {static_cast<std::uint64_t>(n), accepted};
}

SweepStats metropolis_sweep(SpinConfiguration& cfg, const Lattice& lat, const DisorderRealization& dis,
                            double beta, Xoshiro256& rng) {
  if (beta < 0) throw DomainError("inverse temperature must be non-negative");
  const CouplingTable table(lat, dis);
  return metropolis_sweep(cfg, table, AcceptanceTable(beta, table.max_abs_delta()), rng);
}

// ---------------------------------------------------------------------------

ReplicaLadder::ReplicaLadder(std::vector<double> temperatures, const Lattice& lat,
                             const DisorderRealization& dis, std::uint64_t seed)
    : temps_(std::move(temperatures)) {
  if (temps_.empty()) throw DomainError("temperature ladder is empty");
  for (std::size_t i = 0; i < temps_.size(); ++i) {
    if (!(temps_[i] > 0)) throw DomainError("temperatures must be positive");
    if (i > 0 && !(temps_[i] > temps_[i - 1])) throw DomainError("temperatures must be strictly increasing");
  }
  betas_.resize(temps_.size());
  std::transform(temps_.begin(), temps_.end(), betas_.begin(), [](double T) { return 1.0 / T; });

  const std::size_t nt = temps_.size();
  replicas_.reserve(kReplicaSets * nt);
  for (std::size_t r = 0; r < kReplicaSets * nt; ++r) {
    Xoshiro256 rng(stream_seed(seed, Stream::thermal, r));
    SpinConfiguration cfg = random_configuration(lat, dis, rng);
    replicas_.push_back({std::move(cfg), rng});
    slot_.push_back(static_cast<std::uint32_t>(r));
  }
  stats_.attempts.assign(nt > 1 ? nt - 1 : 0, 0);
  stats_.accepts.assign(nt > 1 ? nt - 1 : 0, 0);
}

double exchange_probability(double beta_i, double beta_j, double e_i, double e_j) {
  const double x = (beta_i - beta_j) * (e_i - e_j);
  return x >= 0 ? 1.0 : std::exp(x);
}

void attempt_exchanges(ReplicaLadder& ladder, Xoshiro256& rng) {
  const int nt = ladder.num_temperatures();
  if (nt < 2) throw DomainError("replica exchange needs at least two temperatures");
  const auto betas = ladder.betas();
  for (int set = 0; set < kReplicaSets; ++set) {
    for (int i = ladder.parity_; i + 1 < nt; i += 2) {
      const double e_i = static_cast<double>(ladder.at(set, i).cfg.energy);
      const double e_j = static_cast<double>(ladder.at(set, i + 1).cfg.energy);
      const double x = (betas[static_cast<std::size_t>(i)] - betas[static_cast<std::size_t>(i + 1)]) * (e_i - e_j);
      ++ladder.stats_.attempts[static_cast<std::size_t>(i)];
      if (x >= 0 || rng.uniform() < std::exp(x)) {
        ladder.swap_slots(set, i);
        ++ladder.stats_.accepts[static_cast<std::size_t>(i)];
      }
    }
  }
  ladder.parity_ ^= 1;
}

// ---------------------------------------------------------------------------

LogBinnedSeries::LogBinnedSeries(int n_bins, int n_temps, int n_obs)
    : n_bins_(n_bins),
      n_temps_(n_temps),
      n_obs_(n_obs),
      mean_(static_cast<std::size_t>(n_bins) * n_temps * n_obs, 0.0),
      err_(mean_.size(), 0.0) {}

int log_bin_of(std::uint64_t index) noexcept {
  if (index == 0) return -1;
  return static_cast<int>(std::bit_width(index)) - 1;
}

BinSlot bin_slot(std::uint64_t index, int max_blocks) noexcept {
  const int k = log_bin_of(index);
  if (k < 0) return {};
  const std::uint64_t size = std::uint64_t{1} << k;
  const std::uint64_t blocks = std::min<std::uint64_t>(size, static_cast<std::uint64_t>(max_blocks));
  return {k, static_cast<int>((index - size) / (size / blocks))};
}

LogBinnedSeries LogBinnedSeries::from_block_sums(std::span<const double> sums, int n_bins, int max_blocks,
                                                 int n_temps, int n_obs) {
  LogBinnedSeries out(n_bins, n_temps, n_obs);
  const auto nt = static_cast<std::size_t>(n_temps);
  const auto no = static_cast<std::size_t>(n_obs);
  for (int k = 0; k < n_bins; ++k) {
    const std::uint64_t size = std::uint64_t{1} << k;
    const std::uint64_t blocks = std::min<std::uint64_t>(size, static_cast<std::uint64_t>(max_blocks));
    const double per_block = static_cast<double>(size / blocks);
    const double nb = static_cast<double>(blocks);
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t o = 0; o < no; ++o) {
        double sum = 0, sum2 = 0;
        for (std::uint64_t b = 0; b < blocks; ++b) {
          const double m =
              sums[((static_cast<std::size_t>(k) * static_cast<std::size_t>(max_blocks) + b) * nt + t) * no + o] /
              per_block;
          sum += m;
          sum2 += m * m;
        }
        const double mean = sum / nb;
        double err = 0.0;
        if (blocks > 1) err = std::sqrt(std::max(0.0, (sum2 / nb - mean * mean) * nb / (nb - 1)) / nb);
        out.mean(k, static_cast<int>(t), static_cast<int>(o)) = mean;
        out.error(k, static_cast<int>(t), static_cast<int>(o)) = err;
      }
    }
  }
  return out;
}

bool EquilibrationReport::pass(int t, std::span<const int> observables) const {
  return std::all_of(observables.begin(), observables.end(), [&](int o) { return at(t, o).pass; });
}

EquilibrationReport equilibration_check(const LogBinnedSeries& bins, double tolerance) {
  if (bins.n_bins() < 4)
    throw InsufficientDataError("equilibration check needs at least 4 log bins, got " +
                                std::to_string(bins.n_bins()));
  EquilibrationReport rep;
  rep.n_temps = bins.n_temps();
  rep.n_obs = bins.n_obs();
  rep.verdicts.resize(static_cast<std::size_t>(rep.n_temps * rep.n_obs));
  const int last = bins.n_bins() - 1;
  for (int t = 0; t < rep.n_temps; ++t) {
    for (int o = 0; o < rep.n_obs; ++o) {
      auto agree = [&](int i, int j) {
        const double d = std::abs(bins.mean(i, t, o) - bins.mean(j, t, o));
        const double e = std::hypot(bins.error(i, t, o), bins.error(j, t, o));
        return d <= tolerance * e;
      };
      // Walk back from the end while the new bin agrees with every later one.
      int first = last;
      for (int k = last - 1; k >= 0; --k) {
        bool ok = true;
        for (int j = k + 1; j <= last && ok; ++j) ok = agree(k, j);
        if (!ok) break;
        first = k;
      }
      auto& v = rep.verdicts[static_cast<std::size_t>(t * rep.n_obs + o)];
      v.pass = first <= last - 2;
      v.first_bin = v.pass ? first : -1;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------

std::uint64_t Schedule::hash() const {
  Fnv1a h;
  for (double T : temperatures) h.add(T);
  h.add(n_sweeps);
  h.add(measure_every);
  h.add(seed);
  h.add(record_series);
  h.add(measure_ky);
  return h.value();
}

std::vector<double> linear_ladder(double t_min, double t_max, int n) {
  if (n < 2) throw DomainError("a temperature ladder needs at least two points");
  if (!(t_max > t_min) || !(t_min > 0)) throw DomainError("need 0 < T_min < T_max");
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = t_min + (t_max - t_min) * i / (n - 1);
  t.back() = t_max;
  return t;
}

int schedule_bin_count(const Schedule& s) {
  if (s.measure_every < 1) throw DomainError("measure_every must be >= 1");
  if (s.n_sweeps == 0 || s.n_sweeps % static_cast<std::uint64_t>(s.measure_every) != 0)
    throw DomainError("n_sweeps must be a positive multiple of measure_every");
  const std::uint64_t n = s.n_sweeps / static_cast<std::uint64_t>(s.measure_every);
  if (!std::has_single_bit(n)) throw DomainError("number of measurements must be a power of two");
  return static_cast<int>(std::bit_width(n)) - 1;
}

Simulation::Simulation(const Lattice& lat, const DisorderRealization& dis, Schedule schedule)
    : lat_(&lat),
      dis_(&dis),
      schedule_(std::move(schedule)),
      table_(lat, dis),
      fourier_(lat),
      ladder_(schedule_.temperatures, lat, dis, schedule_.seed),
      exchange_rng_(stream_seed(schedule_.seed, Stream::exchange)) {
  n_bins_ = schedule_bin_count(schedule_);
  for (double beta : ladder_.betas()) acceptance_.emplace_back(beta, table_.max_abs_delta());
  const auto nt = static_cast<std::size_t>(ladder_.num_temperatures());
  block_sums_.assign(static_cast<std::size_t>(n_bins_) * kBlocks * nt * kNumObs, 0.0);
  flips_accepted_.assign(nt, 0);
  flips_proposed_.assign(nt, 0);
  if (schedule_.record_series) series_.resize(nt);
}

void Simulation::advance(std::uint64_t sweeps) {
  const int nt = ladder_.num_temperatures();
  const auto every = static_cast<std::uint64_t>(schedule_.measure_every);
  std::vector<MeasurementRecord> recs(static_cast<std::size_t>(nt));
  const std::uint64_t stop = std::min(schedule_.n_sweeps, sweeps_done_ + sweeps);
  while (sweeps_done_ < stop) {
    for (int t = 0; t < nt; ++t) {
      for (int set = 0; set < kReplicaSets; ++set) {
        auto& rep = ladder_.at(set, t);
        const auto st = metropolis_sweep(rep.cfg, table_, acceptance_[static_cast<std::size_t>(t)], rep.rng);
        flips_accepted_[static_cast<std::size_t>(t)] += st.accepted;
        flips_proposed_[static_cast<std::size_t>(t)] += st.proposed;
      }
    }
    if (nt > 1) attempt_exchanges(ladder_, exchange_rng_);
    ++sweeps_done_;
    if (sweeps_done_ % every == 0) {
      for (int t = 0; t < nt; ++t)
        recs[static_cast<std::size_t>(t)] =
            measure(ladder_.at(0, t).cfg, ladder_.at(1, t).cfg, fourier_, schedule_.measure_ky);
      record(recs);
    }
  }
}

void Simulation::record(const std::vector<MeasurementRecord>& recs) {
  const std::uint64_t idx = measurements_++;
  const auto nt = recs.size();
  if (schedule_.record_series)
    for (std::size_t t = 0; t < nt; ++t) series_[t].push_back(recs[t]);
  const auto slot = bin_slot(idx, kBlocks);
  if (slot.bin < 0) return;
  double* base = block_sums_.data() +
                 ((static_cast<std::size_t>(slot.bin) * kBlocks + static_cast<std::size_t>(slot.block)) * nt) * kNumObs;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto obs = observables_from(recs[t]);
    for (int o = 0; o < kNumObs; ++o) base[t * kNumObs + static_cast<std::size_t>(o)] += obs[static_cast<std::size_t>(o)];
  }
}

SimulationResult Simulation::result() const {
  const int nt = ladder_.num_temperatures();
  SimulationResult r;
  r.temperatures = schedule_.temperatures;
  r.sweeps = sweeps_done_;
  r.measurements = measurements_;
  r.bins = LogBinnedSeries::from_block_sums(block_sums_, n_bins_, kBlocks, nt, kNumObs);
  r.production.resize(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t)
    for (int o = 0; o < kNumObs; ++o)
      r.production[static_cast<std::size_t>(t)][static_cast<std::size_t>(o)] = r.bins.mean(n_bins_ - 1, t, o);
  r.series = series_;
  r.exchange = ladder_.exchange_stats();
  r.sweep_acceptance.resize(static_cast<std::size_t>(nt));
  for (std::size_t t = 0; t < r.sweep_acceptance.size(); ++t)
    r.sweep_acceptance[t] = flips_proposed_[t] ? double(flips_accepted_[t]) / double(flips_proposed_[t]) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint: "TBIMCKPT", u32 version, then fixed-order little-endian fields.

namespace {

constexpr char kMagic[8] = {'T', 'B', 'I', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& os) : os_(os) {}
  template <typename T>
  void put(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T>
  void put_vec(const std::vector<T>& v) {
    put<std::uint64_t>(v.size());
    os_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  }

 private:
  std::ofstream& os_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& is) : is_(is) {}
  template <typename T>
  T get() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) throw IntegrityError("checkpoint truncated");
    return v;
  }
  template <typename T>
  void get_vec(std::vector<T>& v, std::size_t expected) {
    const auto n = get<std::uint64_t>();
    if (n != expected) throw IntegrityError("checkpoint array length mismatch");
    v.resize(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is_) throw IntegrityError("checkpoint truncated");
  }
  template <typename T>
  void get_vec_any(std::vector<T>& v) {
    const auto n = get<std::uint64_t>();
    v.resize(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is_) throw IntegrityError("checkpoint truncated");
  }

 private:
  std::ifstream& is_;
};

}  // namespace

void Simulation::save_checkpoint(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    Writer w(os);
    os.write(kMagic, sizeof kMagic);
    w.put(kCheckpointVersion);
    w.put(lat_->hash());
    w.put(dis_->hash());
    w.put(schedule_.hash());
    w.put(sweeps_done_);
    w.put(measurements_);
    w.put(static_cast<std::int32_t>(ladder_.next_parity()));
    w.put(exchange_rng_.state());
    w.put<std::uint64_t>(ladder_.replicas().size());
    for (const auto& rep : ladder_.replicas()) {
      w.put_vec(rep.cfg.spins);
      w.put(rep.cfg.energy);
      w.put(rep.rng.state());
    }
    w.put_vec(ladder_.slots());
    w.put_vec(ladder_.exchange_stats().attempts);
    w.put_vec(ladder_.exchange_stats().accepts);
    w.put_vec(flips_accepted_);
    w.put_vec(flips_proposed_);
    w.put_vec(block_sums_);
    w.put<std::uint64_t>(series_.size());
    for (const auto& s : series_) w.put_vec(s);
    if (!os) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Simulation Simulation::restore(const std::filesystem::path& path, const Lattice& lat,
                               const DisorderRealization& dis, Schedule schedule) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IntegrityError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw IntegrityError("not a checkpoint file");
  Reader r(is);
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw IntegrityError("unsupported checkpoint version");
  if (r.get<std::uint64_t>() != lat.hash()) throw IntegrityError("checkpoint lattice hash mismatch");
  if (r.get<std::uint64_t>() != dis.hash()) throw IntegrityError("checkpoint disorder hash mismatch");
  if (r.get<std::uint64_t>() != schedule.hash()) throw IntegrityError("checkpoint schedule hash mismatch");

  Simulation sim(lat, dis, std::move(schedule));
  sim.sweeps_done_ = r.get<std::uint64_t>();
  sim.measurements_ = r.get<std::uint64_t>();
  sim.ladder_.set_parity(r.get<std::int32_t>());
  sim.exchange_rng_.set_state(r.get<Xoshiro256::State>());
  auto& reps = sim.ladder_.replicas();
  if (r.get<std::uint64_t>() != reps.size()) throw IntegrityError("checkpoint replica count mismatch");
  for (auto& rep : reps) {
    r.get_vec(rep.cfg.spins, static_cast<std::size_t>(lat.num_sites()));
    rep.cfg.energy = r.get<std::int64_t>();
    rep.rng.set_state(r.get<Xoshiro256::State>());
    if (compute_energy(rep.cfg.spins, lat, dis) != rep.cfg.energy)
      throw IntegrityError("checkpoint energy does not match its spins");
  }
  r.get_vec(sim.ladder_.slots(), reps.size());
  const std::size_t pairs = sim.ladder_.exchange_stats().attempts.size();
  r.get_vec(sim.ladder_.exchange_stats().attempts, pairs);
  r.get_vec(sim.ladder_.exchange_stats().accepts, pairs);
  r.get_vec(sim.flips_accepted_, sim.flips_accepted_.size());
  r.get_vec(sim.flips_proposed_, sim.flips_proposed_.size());
  r.get_vec(sim.block_sums_, sim.block_sums_.size());
  const auto n_series = r.get<std::uint64_t>();
  if (n_series != sim.series_.size()) throw IntegrityError("checkpoint series layout mismatch");
  for (auto& s : sim.series_) r.get_vec_any(s);
  return sim;
}

SimulationResult run_simulation(const Lattice& lat, const DisorderRealization& dis, const Schedule& schedule) {
  Simulation sim(lat, dis, schedule);
  sim.run_to_end();
  return sim.result();
}

}  // namespace tribody
