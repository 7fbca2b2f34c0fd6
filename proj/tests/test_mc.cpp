#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>

#include "tribody/errors.hpp"
#include "tribody/mc.hpp"
#include "tribody/oracle.hpp"

using namespace tribody;
namespace fs = std::filesystem;

namespace {

std::int64_t brute_energy(const std::vector<std::int8_t>& s, const Lattice& lat, const DisorderRealization& dis) {
  std::int64_t e = 0;
  for (int t = 0; t < lat.num_triangles(); ++t) {
    const auto& tri = lat.triangle(t);
    e -= dis.tau(t) * s[tri[0]] * s[tri[1]] * s[tri[2]];
  }
  return e;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("tribody_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("energy and single-flip differences match brute force") {
  for (const Lattice& lat : {build_union_jack(4), build_triangular(6)}) {
    const auto dis = sample_disorder(lat, 0.3, 11);
    Xoshiro256 rng(5);
    auto cfg = random_configuration(lat, dis, rng);
    CHECK(cfg.energy == brute_energy(cfg.spins, lat, dis));
    const CouplingTable table(lat, dis);
    for (int s = 0; s < lat.num_sites(); ++s) {
      auto flipped = cfg.spins;
      flipped[s] = static_cast<std::int8_t>(-flipped[s]);
      const auto want = brute_energy(flipped, lat, dis) - cfg.energy;
      CHECK(delta_energy(cfg, lat, dis, s) == want);
      CHECK(table.delta_energy(cfg.spins, s) == want);
    }
  }
}

TEST_CASE("sweeps keep the cached energy exact") {
  const Lattice lat = build_union_jack(6);
  const auto dis = sample_disorder(lat, 0.2, 3);
  Xoshiro256 rng(9);
  auto cfg = random_configuration(lat, dis, rng);
  for (int i = 0; i < 50; ++i) {
    metropolis_sweep(cfg, lat, dis, 0.7, rng);
    REQUIRE(cfg.energy == compute_energy(cfg.spins, lat, dis));
  }
}

TEST_CASE("zero temperature sweeps never raise the energy") {
  const Lattice lat = build_union_jack(4);
  const auto dis = sample_disorder(lat, 0.1, 8);
  Xoshiro256 rng(1);
  auto cfg = random_configuration(lat, dis, rng);
  for (int i = 0; i < 30; ++i) {
    const auto before = cfg.energy;
    metropolis_sweep(cfg, lat, dis, 1e6, rng);
    CHECK(cfg.energy <= before);
  }
}

TEST_CASE("single-temperature sweeps sample the Boltzmann distribution") {
  const Lattice lat = build_union_jack(2);
  const auto dis = sample_disorder(lat, 0.3, 21);
  const double T = 2.0, beta = 1.0 / T;
  const int n = lat.num_sites();

  std::map<std::int64_t, double> weight;
  double z = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    std::vector<std::int8_t> s(n);
    for (int i = 0; i < n; ++i) s[i] = (mask >> i & 1) ? -1 : 1;
    const double w = std::exp(-beta * double(brute_energy(s, lat, dis)));
    weight[brute_energy(s, lat, dis)] += w;
    z += w;
  }

  Xoshiro256 rng(77);
  auto cfg = random_configuration(lat, dis, rng);
  std::map<std::int64_t, double> hist;
  const int sweeps = 400000;
  for (int i = 0; i < sweeps; ++i) {
    metropolis_sweep(cfg, lat, dis, beta, rng);
    hist[cfg.energy] += 1;
  }
  for (const auto& [e, w] : weight) {
    const double pe = w / z;
    const double got = hist[e] / sweeps;
    // successive sweeps are correlated; allow a generous multiple of the iid error
    CHECK(std::abs(got - pe) < 10 * std::sqrt(pe * (1 - pe) / sweeps) + 1e-4);
  }
}

TEST_CASE("exchange probability") {
  CHECK(exchange_probability(1.0, 0.5, -20, -10) == doctest::Approx(std::exp(-5.0)));
  CHECK(exchange_probability(1.0, 0.5, -10, -20) == 1.0);
  CHECK(exchange_probability(0.5, 0.5, 3, -8) == 1.0);
}

TEST_CASE("exchanges permute replicas without mixing sets") {
  const Lattice lat = build_union_jack(4);
  const auto dis = sample_disorder(lat, 0.1, 2);
  ReplicaLadder ladder(linear_ladder(1.0, 3.0, 6), lat, dis, 99);
  Xoshiro256 rng(3);
  for (int k = 0; k < 200; ++k) {
    for (int set = 0; set < kReplicaSets; ++set)
      for (int t = 0; t < ladder.num_temperatures(); ++t) {
        auto& r = ladder.at(set, t);
        metropolis_sweep(r.cfg, lat, dis, ladder.betas()[t], r.rng);
      }
    attempt_exchanges(ladder, rng);
    for (int set = 0; set < kReplicaSets; ++set) {
      std::vector<bool> seen(ladder.replicas().size(), false);
      for (int t = 0; t < ladder.num_temperatures(); ++t) {
        const int id = ladder.replica_id(set, t);
        CHECK(id / ladder.num_temperatures() == set);
        CHECK_FALSE(seen[id]);
        seen[id] = true;
      }
    }
  }
  std::uint64_t accepted = 0;
  for (auto a : ladder.exchange_stats().accepts) accepted += a;
  CHECK(accepted > 0);
}

TEST_CASE("log binning layout") {
  CHECK(log_bin_of(0) == -1);
  CHECK(log_bin_of(1) == 0);
  CHECK(log_bin_of(2) == 1);
  CHECK(log_bin_of(3) == 1);
  CHECK(log_bin_of(4) == 2);
  CHECK(log_bin_of(7) == 2);
  CHECK(log_bin_of(1024) == 10);
  CHECK(bin_slot(0, 16).bin == -1);
  CHECK(bin_slot(1023, 16).bin == 9);
}

TEST_CASE("equilibration check compares the last three bins") {
  LogBinnedSeries s(6, 1, 1);
  for (int b = 0; b < 6; ++b) {
    s.mean(b, 0, 0) = (b < 3) ? 10.0 - b : 1.0 + 0.01 * b;
    s.error(b, 0, 0) = 0.05;
  }
  CHECK(equilibration_check(s).at(0, 0).pass);
  s.mean(5, 0, 0) = 2.0;
  CHECK_FALSE(equilibration_check(s).at(0, 0).pass);
  CHECK_THROWS(equilibration_check(LogBinnedSeries(3, 1, 1)));
}

TEST_CASE("linear ladder") {
  const auto l = linear_ladder(2.2, 2.35, 31);
  REQUIRE(l.size() == 31);
  CHECK(l.front() == 2.2);
  CHECK(l.back() == doctest::Approx(2.35).epsilon(1e-15));
  CHECK(l[15] == doctest::Approx(2.275));
}

TEST_CASE("runs are reproducible and resume bit-identically") {
  const Lattice lat = build_union_jack(4);
  const auto dis = sample_disorder(lat, 0.1, 5);
  Schedule sch;
  sch.temperatures = linear_ladder(1.2, 2.6, 4);
  sch.n_sweeps = 1024;
  sch.seed = 1234;

  const SimulationResult full = run_simulation(lat, dis, sch);
  CHECK(run_simulation(lat, dis, sch).bins == full.bins);

  const fs::path dir = scratch("ckpt");
  Simulation a(lat, dis, sch);
  a.advance(333);
  a.save_checkpoint(dir / "a.ckpt");
  Simulation b = Simulation::restore(dir / "a.ckpt", lat, dis, sch);
  CHECK(b.sweeps_done() == 333);
  b.run_to_end();
  const SimulationResult resumed = b.result();
  CHECK(resumed.bins == full.bins);
  CHECK(resumed.production == full.production);
  CHECK(resumed.exchange.accepts == full.exchange.accepts);

  const auto other = sample_disorder(lat, 0.1, 6);
  CHECK_THROWS_AS(Simulation::restore(dir / "a.ckpt", lat, other, sch), IntegrityError);
  Schedule sch2 = sch;
  sch2.seed = 1;
  CHECK_THROWS_AS(Simulation::restore(dir / "a.ckpt", lat, dis, sch2), IntegrityError);
  fs::remove_all(dir);
}

TEST_CASE("energy average matches exact enumeration") {
  const Lattice lat = build_union_jack(2);
  const auto dis = sample_disorder(lat, 0.3, 102);
  Schedule sch;
  sch.temperatures = {1.0, 2.269, 4.0};
  sch.n_sweeps = 1 << 15;
  sch.seed = 8;
  const auto res = run_simulation(lat, dis, sch);
  const int last = res.bins.n_bins() - 1;
  for (int t = 0; t < 3; ++t) {
    const auto ex = exact_thermal(lat, dis, sch.temperatures[t]);
    const double m = res.bins.mean(last, t, int(Obs::energy));
    const double e = res.bins.error(last, t, int(Obs::energy));
    CHECK(std::abs(m - ex.energy) < 4 * e + 1e-12);
  }
}
