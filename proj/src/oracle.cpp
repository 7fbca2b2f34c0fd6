#include "tribody/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "tribody/errors.hpp"

namespace tribody {

namespace {

// Per-state quantities that do not depend on the couplings. Bit i of a state
// is 1 when S_i = -1.
struct StateTable {
  int n_sites = 0, n_tri = 0;
  std::vector<std::uint32_t> tri_mask;  // per triangle, its three site bits
  std::vector<double> cx, sx, cy, sy;

  explicit StateTable(const Lattice& lat) : n_sites(lat.num_sites()), n_tri(lat.num_triangles()) {
    for (const auto& tr : lat.triangles())
      tri_mask.push_back((1u << tr[0]) | (1u << tr[1]) | (1u << tr[2]));
    const FourierTable ft(lat);
    cx.assign(ft.cos_x().begin(), ft.cos_x().end());
    sx.assign(ft.sin_x().begin(), ft.sin_x().end());
    cy.assign(ft.cos_y().begin(), ft.cos_y().end());
    sy.assign(ft.sin_y().begin(), ft.sin_y().end());
  }

  // Bit t set when triangle t's spin product is -1.
  std::uint32_t product_mask(std::uint32_t x) const {
    std::uint32_t out = 0;
    for (int t = 0; t < n_tri; ++t)
      out |= static_cast<std::uint32_t>(std::popcount(x & tri_mask[static_cast<std::size_t>(t)]) & 1) << t;
    return out;
  }

  struct Modes {
    double m0, mkx2, mky2;
  };
  Modes modes(std::uint32_t x) const {
    double m0 = 0, rx = 0, ix = 0, ry = 0, iy = 0;
    for (int i = 0; i < n_sites; ++i) {
      const double s = ((x >> i) & 1u) ? -1.0 : 1.0;
      const auto u = static_cast<std::size_t>(i);
      m0 += s;
      rx += s * cx[u];
      ix += s * sx[u];
      ry += s * cy[u];
      iy += s * sy[u];
    }
    return {m0, rx * rx + ix * ix, ry * ry + iy * iy};
  }
};

// sum_ij C_ij^2 exp(i k (r_i - r_j)) from the two-point matrix C_ij = <S_i S_j>.
void overlap_moments(const StateTable& st, const std::vector<double>& C, double& q2, double& qkx2, double& qky2) {
  const int n = st.n_sites;
  q2 = qkx2 = qky2 = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const double c2 = C[ui * static_cast<std::size_t>(n) + uj] * C[ui * static_cast<std::size_t>(n) + uj];
      q2 += c2;
      qkx2 += c2 * (st.cx[ui] * st.cx[uj] + st.sx[ui] * st.sx[uj]);
      qky2 += c2 * (st.cy[ui] * st.cy[uj] + st.sy[ui] * st.sy[uj]);
    }
  }
}

void accumulate_correlations(std::vector<double>& C, std::uint32_t x, double w, int n) {
  for (int i = 0; i < n; ++i) {
    const double si = ((x >> i) & 1u) ? -w : w;
    double* row = C.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n);
    for (int j = 0; j < n; ++j) row[j] += ((x >> j) & 1u) ? -si : si;
  }
}

}  // namespace

ThermalAverages ExactResult::as_averages() const {
  ThermalAverages a{};
  a[static_cast<std::size_t>(Obs::energy)] = energy;
  a[static_cast<std::size_t>(Obs::energy2)] = energy2;
  a[static_cast<std::size_t>(Obs::m2)] = m2;
  a[static_cast<std::size_t>(Obs::m4)] = m4;
  a[static_cast<std::size_t>(Obs::mkx2)] = mkx2;
  a[static_cast<std::size_t>(Obs::mky2)] = mky2;
  a[static_cast<std::size_t>(Obs::q2)] = q2;
  a[static_cast<std::size_t>(Obs::q4)] = std::numeric_limits<double>::quiet_NaN();
  a[static_cast<std::size_t>(Obs::qkx2)] = qkx2;
  a[static_cast<std::size_t>(Obs::qky2)] = qky2;
  return a;
}

ExactResult exact_thermal(const Lattice& lat, const DisorderRealization& dis, double T) {
  if (lat.num_sites() > kMaxExactSites)
    throw SizeError("exact enumeration is limited to " + std::to_string(kMaxExactSites) + " sites, lattice has " +
                    std::to_string(lat.num_sites()));
  if (!(T > 0)) throw DomainError("temperature must be positive");
  if (dis.size() != lat.num_triangles()) throw IntegrityError("disorder does not match lattice");
  const StateTable st(lat);
  const double beta = 1.0 / T;
  const int n = st.n_sites;
  const std::uint32_t n_states = 1u << n;

  auto energy_of = [&](std::uint32_t x) {
    std::int64_t e = 0;
    for (int t = 0; t < st.n_tri; ++t) {
      const int odd = std::popcount(x & st.tri_mask[static_cast<std::size_t>(t)]) & 1;
      const int prod = odd ? -1 : 1;
      e -= dis.tau(t) * prod;
    }
    return e;
  };

  ExactResult r;
  r.T = T;
  r.disorder_hash = dis.hash();
  r.ground_energy = std::numeric_limits<std::int64_t>::max();
  for (std::uint32_t x = 0; x < n_states; ++x) {
    const auto e = energy_of(x);
    if (e < r.ground_energy) {
      r.ground_energy = e;
      r.ground_degeneracy = 1;
    } else if (e == r.ground_energy) {
      ++r.ground_degeneracy;
    }
  }

  const bool with_overlap = n <= kMaxOverlapSites;
  std::vector<double> C(with_overlap ? static_cast<std::size_t>(n) * static_cast<std::size_t>(n) : 0, 0.0);
  double z = 0, se = 0, se2 = 0, sm2 = 0, sm4 = 0, skx = 0, sky = 0;
  for (std::uint32_t x = 0; x < n_states; ++x) {
    const auto e = energy_of(x);
    const double w = std::exp(-beta * static_cast<double>(e - r.ground_energy));
    const auto md = st.modes(x);
    const double de = static_cast<double>(e);
    z += w;
    se += w * de;
    se2 += w * de * de;
    sm2 += w * md.m0 * md.m0;
    sm4 += w * md.m0 * md.m0 * md.m0 * md.m0;
    skx += w * md.mkx2;
    sky += w * md.mky2;
    if (with_overlap) accumulate_correlations(C, x, w, n);
  }
  r.log_z = -beta * static_cast<double>(r.ground_energy) + std::log(z);
  r.energy = se / z;
  r.energy2 = se2 / z;
  r.m2 = sm2 / z;
  r.m4 = sm4 / z;
  r.mkx2 = skx / z;
  r.mky2 = sky / z;
  if (with_overlap) {
    for (auto& c : C) c /= z;
    overlap_moments(st, C, r.q2, r.qkx2, r.qky2);
  } else {
    r.q2 = r.qkx2 = r.qky2 = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

ExactDisorderAverage exact_disorder_average(const Lattice& lat, double p, double T) {
  if (lat.num_triangles() > kMaxExactTriangles)
    throw SizeError("exact disorder averaging is limited to " + std::to_string(kMaxExactTriangles) +
                    " triangles, lattice has " + std::to_string(lat.num_triangles()));
  if (lat.num_sites() > kMaxOverlapSites)
    throw SizeError("exact disorder averaging is limited to " + std::to_string(kMaxOverlapSites) + " sites");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("disorder probability must lie in [0, 1]");
  if (!(T > 0)) throw DomainError("temperature must be positive");

  const StateTable st(lat);
  const double beta = 1.0 / T;
  const int n = st.n_sites;
  const int n_tri = st.n_tri;
  const std::uint32_t n_states = 1u << n;

  std::vector<std::uint32_t> prod(n_states);
  std::vector<StateTable::Modes> modes(n_states);
  for (std::uint32_t x = 0; x < n_states; ++x) {
    prod[x] = st.product_mask(x);
    modes[x] = st.modes(x);
  }
  // exp(-2 beta u) relative to the lowest count of unsatisfied triangles.
  std::vector<double> boltz(static_cast<std::size_t>(n_tri) + 1);
  std::vector<double> pweight(static_cast<std::size_t>(n_tri) + 1);
  for (int k = 0; k <= n_tri; ++k) pweight[static_cast<std::size_t>(k)] = std::pow(p, k) * std::pow(1.0 - p, n_tri - k);

  ExactDisorderAverage out;
  out.p = p;
  out.T = T;
  std::vector<double> C(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  std::vector<int> unsat(n_states);
  const std::uint32_t n_dis = 1u << n_tri;
  for (std::uint32_t neg = 0; neg < n_dis; ++neg) {
    const double pw = pweight[static_cast<std::size_t>(std::popcount(neg))];
    if (pw == 0.0) continue;
    ++out.configurations;
    int umin = n_tri;
    for (std::uint32_t x = 0; x < n_states; ++x) {
      unsat[x] = std::popcount(prod[x] ^ neg);
      umin = std::min(umin, unsat[x]);
    }
    for (int u = 0; u <= n_tri; ++u) boltz[static_cast<std::size_t>(u)] = std::exp(-2.0 * beta * (u - umin));
    std::fill(C.begin(), C.end(), 0.0);
    double z = 0, se = 0, se2 = 0, sm2 = 0, sm4 = 0, skx = 0, sky = 0;
    for (std::uint32_t x = 0; x < n_states; ++x) {
      const double w = boltz[static_cast<std::size_t>(unsat[x])];
      const double e = 2.0 * unsat[x] - n_tri;
      const double m2 = modes[x].m0 * modes[x].m0;
      z += w;
      se += w * e;
      se2 += w * e * e;
      sm2 += w * m2;
      sm4 += w * m2 * m2;
      skx += w * modes[x].mkx2;
      sky += w * modes[x].mky2;
      accumulate_correlations(C, x, w, n);
    }
    for (auto& c : C) c /= z;
    double q2, qkx2, qky2;
    overlap_moments(st, C, q2, qkx2, qky2);
    out.energy += pw * se / z;
    out.energy2 += pw * se2 / z;
    out.m2 += pw * sm2 / z;
    out.m4 += pw * sm4 / z;
    out.mkx2 += pw * skx / z;
    out.mky2 += pw * sky / z;
    out.q2 += pw * q2;
    out.qkx2 += pw * qkx2;
    out.qky2 += pw * qky2;
  }

  const double norm = 1.0 / (double(lat.L()) * double(lat.L()));
  out.chi0 = out.m2 * norm;
  out.chik = out.mkx2 * norm;
  out.chi_sg0 = out.q2 * norm;
  out.chi_sgk = out.qkx2 * norm;
  out.xi_over_L = correlation_length(out.chi0, out.chik, lat.k_min()).xi / lat.L();
  out.xi_sg_over_L = correlation_length(out.chi_sg0, out.chi_sgk, lat.k_min()).xi / lat.L();
  out.binder = binder_ratio(out.m2, out.m4);
  return out;
}

double exact_disorder_average(const Lattice& lat, double p, double T, ExactObservable obs) {
  const auto a = exact_disorder_average(lat, p, T);
  switch (obs) {
    case ExactObservable::energy: return a.energy;
    case ExactObservable::energy2: return a.energy2;
    case ExactObservable::m2: return a.m2;
    case ExactObservable::m4: return a.m4;
    case ExactObservable::chi0: return a.chi0;
    case ExactObservable::chik: return a.chik;
    case ExactObservable::chi_sg0: return a.chi_sg0;
    case ExactObservable::chi_sgk: return a.chi_sgk;
    case ExactObservable::xi_over_L: return a.xi_over_L;
    case ExactObservable::xi_sg_over_L: return a.xi_sg_over_L;
    case ExactObservable::binder: return a.binder;
  }
  throw DomainError("unknown observable");
}

CsvPoint exact_csv_point(const Lattice& lat, const ExactDisorderAverage& avg) {
  CsvPoint pt;
  pt.p = avg.p;
  pt.L = lat.L();
  pt.T = avg.T;
  pt.n_samples = static_cast<int>(avg.configurations);
  pt.chi0 = avg.chi0;
  pt.chikmin = avg.chik;
  pt.xi_over_L = avg.xi_over_L;
  pt.xi_sg_over_L = avg.xi_sg_over_L;
  pt.binder = avg.binder;
  pt.equilibrated = true;
  return pt;
}

}  // namespace tribody
