#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>

#include "tribody/errors.hpp"
#include "tribody/mc.hpp"
#include "tribody/oracle.hpp"

using namespace tribody;

namespace {

struct Naive {
  double log_z = 0, energy = 0, m2 = 0, mkx2 = 0, q2 = 0;
  std::int64_t ground = 0;
  std::uint64_t degeneracy = 0;
};

// Direct sum over all spin states, written independently of the library.
Naive naive_thermal(const Lattice& lat, const std::vector<std::int8_t>& tau, double T, bool overlap = true) {
  const int n = lat.num_sites();
  const double beta = 1.0 / T;
  std::vector<std::int8_t> s(n);
  std::vector<double> corr(static_cast<std::size_t>(n * n), 0.0);
  double z = 0, e1 = 0, m2 = 0, mk = 0;
  Naive out;
  out.ground = 1 << 30;
  std::vector<double> energies(1u << n);
  for (std::uint32_t x = 0; x < (1u << n); ++x) {
    for (int i = 0; i < n; ++i) s[i] = (x >> i & 1) ? -1 : 1;
    std::int64_t e = 0;
    for (int t = 0; t < lat.num_triangles(); ++t) {
      const auto& tr = lat.triangle(t);
      e -= tau[t] * s[tr[0]] * s[tr[1]] * s[tr[2]];
    }
    energies[x] = double(e);
    if (e < out.ground) {
      out.ground = e;
      out.degeneracy = 0;
    }
    if (e == out.ground) ++out.degeneracy;
  }
  for (std::uint32_t x = 0; x < (1u << n); ++x) {
    for (int i = 0; i < n; ++i) s[i] = (x >> i & 1) ? -1 : 1;
    const double w = std::exp(-beta * (energies[x] - double(out.ground)));
    double m = 0;
    std::complex<double> k{0.0};
    for (int i = 0; i < n; ++i) {
      m += s[i];
      k += double(s[i]) * std::polar(1.0, 2 * std::numbers::pi * lat.wave_x()[i] / lat.L());
    }
    z += w;
    e1 += w * energies[x];
    m2 += w * m * m;
    mk += w * std::norm(k);
    if (overlap)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) corr[static_cast<std::size_t>(i * n + j)] += w * s[i] * s[j];
  }
  out.log_z = std::log(z) - beta * double(out.ground);
  out.energy = e1 / z;
  out.m2 = m2 / z;
  out.mkx2 = mk / z;
  for (double c : corr) out.q2 += (c / z) * (c / z);
  return out;
}

std::vector<std::int8_t> tau_of(const DisorderRealization& d) { return {d.tau().begin(), d.tau().end()}; }

}  // namespace

TEST_CASE("single realization matches direct summation") {
  for (const Lattice& lat : {build_union_jack(2), build_triangular(3)}) {
    for (std::uint64_t seed : {101u, 102u}) {
      const auto dis = sample_disorder(lat, 0.3, seed);
      for (double T : {0.5, 1.0, 2.269, 4.0}) {
        const auto ex = exact_thermal(lat, dis, T);
        const auto nv = naive_thermal(lat, tau_of(dis), T);
        CHECK(ex.log_z == doctest::Approx(nv.log_z).epsilon(1e-12));
        CHECK(ex.energy == doctest::Approx(nv.energy).epsilon(1e-12));
        CHECK(ex.m2 == doctest::Approx(nv.m2).epsilon(1e-12));
        CHECK(ex.mkx2 == doctest::Approx(nv.mkx2).epsilon(1e-10));
        CHECK(ex.q2 == doctest::Approx(nv.q2).epsilon(1e-12));
        CHECK(ex.ground_energy == nv.ground);
        CHECK(ex.ground_degeneracy == nv.degeneracy);
      }
    }
  }
}

TEST_CASE("energy is minus the derivative of log Z") {
  const Lattice lat = build_union_jack(2);
  const auto dis = sample_disorder(lat, 0.2, 5);
  for (double T : {0.8, 1.5, 3.0}) {
    const double beta = 1.0 / T, h = 1e-5;
    const double lp = exact_thermal(lat, dis, 1.0 / (beta + h)).log_z;
    const double lm = exact_thermal(lat, dis, 1.0 / (beta - h)).log_z;
    CHECK(-(lp - lm) / (2 * h) == doctest::Approx(exact_thermal(lat, dis, T).energy).epsilon(1e-6));
  }
}

TEST_CASE("ferromagnetic ground states") {
  const Lattice lat = build_union_jack(2);
  const auto ex = exact_thermal(lat, uniform_disorder(lat), 1.0);
  CHECK(ex.ground_energy == -lat.num_triangles());
  // all up plus the three ways of flipping two of the three sublattices
  CHECK(ex.ground_degeneracy == 4);
  const auto hot = exact_thermal(lat, uniform_disorder(lat), 1e-3);
  CHECK(hot.energy == doctest::Approx(-lat.num_triangles()));
}

TEST_CASE("quenched average matches direct summation over couplings") {
  const Lattice lat = build_union_jack(2);
  const int nt = lat.num_triangles();
  const double p = 0.2, T = 1.7;
  double e = 0, m2 = 0, mk = 0, wsum = 0;
  for (std::uint32_t neg = 0; neg < (1u << nt); ++neg) {
    std::vector<std::int8_t> tau(nt);
    int k = 0;
    for (int t = 0; t < nt; ++t) {
      tau[t] = (neg >> t & 1) ? -1 : 1;
      k += tau[t] < 0;
    }
    const double w = std::pow(p, k) * std::pow(1 - p, nt - k);
    const auto nv = naive_thermal(lat, tau, T, false);
    e += w * nv.energy;
    m2 += w * nv.m2;
    mk += w * nv.mkx2;
    wsum += w;
  }
  const auto avg = exact_disorder_average(lat, p, T);
  CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(avg.energy == doctest::Approx(e).epsilon(1e-10));
  CHECK(avg.m2 == doctest::Approx(m2).epsilon(1e-10));
  CHECK(avg.mkx2 == doctest::Approx(mk).epsilon(1e-10));
  const double L = lat.L();
  CHECK(avg.chi0 == doctest::Approx(m2 / (L * L)).epsilon(1e-10));
  const double xi = std::sqrt(m2 / mk - 1) / (2 * std::sin(std::numbers::pi / L));
  CHECK(avg.xi_over_L == doctest::Approx(xi / L).epsilon(1e-9));
}

TEST_CASE("nishimori line identities") {
  const Lattice lat = build_union_jack(2);
  for (double p : {0.05, 0.109, 0.3}) {
    const double T = nishimori_temperature(p);
    const auto avg = exact_disorder_average(lat, p, T);
    CHECK(std::abs(avg.energy / lat.num_triangles() + (1 - 2 * p)) < 1e-10);
    // gauge symmetry: [<S_i S_j>] = [<S_i S_j>^2] on the line
    CHECK(avg.m2 == doctest::Approx(avg.q2).epsilon(1e-9));
    CHECK(avg.xi_over_L == doctest::Approx(avg.xi_sg_over_L).epsilon(1e-7));
  }
  // off the line the identity does not hold
  const auto off = exact_disorder_average(lat, 0.109, 2.0);
  CHECK(std::abs(off.energy / lat.num_triangles() + (1 - 2 * 0.109)) > 1e-3);
}

TEST_CASE("pure model limit and limits on size") {
  const Lattice lat = build_union_jack(2);
  const auto pure = exact_disorder_average(lat, 0.0, 2.0);
  const auto one = exact_thermal(lat, uniform_disorder(lat), 2.0);
  CHECK(pure.energy == doctest::Approx(one.energy).epsilon(1e-12));
  CHECK(pure.configurations == 1);
  CHECK_THROWS_AS(exact_disorder_average(build_union_jack(4), 0.1, 1.0), SizeError);
  CHECK_THROWS_AS(exact_thermal(build_union_jack(4), uniform_disorder(build_union_jack(4)), 1.0), SizeError);
  CHECK_THROWS(exact_thermal(lat, uniform_disorder(lat), 0.0));
}

TEST_CASE("csv row of the exact average") {
  const Lattice lat = build_union_jack(2);
  const auto avg = exact_disorder_average(lat, 0.1, 1.5);
  const auto row = exact_csv_point(lat, avg);
  CHECK(row.L == 2);
  CHECK(row.xi_err == 0.0);
  CHECK(row.xi_over_L == avg.xi_over_L);
  CHECK(row.chi0 == avg.chi0);
}
