#include "tribody/observables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "tribody/errors.hpp"
#include "tribody/mc.hpp"
#include "tribody/rng.hpp"

namespace tribody {

FourierTable::FourierTable(const Lattice& lat) {
  const auto n = static_cast<std::size_t>(lat.num_sites());
  const double w = 2.0 * std::numbers::pi / lat.L();
  cx_.resize(n);
  sx_.resize(n);
  cy_.resize(n);
  sy_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    cx_[i] = std::cos(w * lat.wave_x()[i]);
    sx_[i] = std::sin(w * lat.wave_x()[i]);
    cy_[i] = std::cos(w * lat.wave_y()[i]);
    sy_[i] = std::sin(w * lat.wave_y()[i]);
  }
}

MeasurementRecord measure(const SpinConfiguration& alpha, const SpinConfiguration& beta, const FourierTable& ft,
                          bool with_ky) {
  const std::size_t n = alpha.spins.size();
  const std::int8_t* a = alpha.spins.data();
  const std::int8_t* b = beta.spins.data();
  const double* cx = ft.cos_x().data();
  const double* sx = ft.sin_x().data();
  int a0 = 0, b0 = 0, q0 = 0;
  double are = 0, aim = 0, bre = 0, bim = 0, qre = 0, qim = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int sa = a[i], sb = b[i], q = sa * sb;
    a0 += sa;
    b0 += sb;
    q0 += q;
    are += sa * cx[i];
    aim += sa * sx[i];
    bre += sb * cx[i];
    bim += sb * sx[i];
    qre += q * cx[i];
    qim += q * sx[i];
  }
  MeasurementRecord r;
  r.energy = {static_cast<double>(alpha.energy), static_cast<double>(beta.energy)};
  r.spin[0].zero = a0;
  r.spin[1].zero = b0;
  r.overlap.zero = q0;
  r.spin[0].kx = {are, aim};
  r.spin[1].kx = {bre, bim};
  r.overlap.kx = {qre, qim};
  if (with_ky) {
    const double* cy = ft.cos_y().data();
    const double* sy = ft.sin_y().data();
    double yare = 0, yaim = 0, ybre = 0, ybim = 0, yqre = 0, yqim = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int sa = a[i], sb = b[i], q = sa * sb;
      yare += sa * cy[i];
      yaim += sa * sy[i];
      ybre += sb * cy[i];
      ybim += sb * sy[i];
      yqre += q * cy[i];
      yqim += q * sy[i];
    }
    r.spin[0].ky = {yare, yaim};
    r.spin[1].ky = {ybre, ybim};
    r.overlap.ky = {yqre, yqim};
  }
  return r;
}

const char* obs_name(Obs o) {
  static constexpr const char* names[kNumObs] = {"E", "E2", "m2", "m4", "mkx2", "mky2", "q2", "q4", "qkx2", "qky2"};
  return names[static_cast<int>(o)];
}

std::array<double, kNumObs> observables_from(const MeasurementRecord& rec) {
  std::array<double, kNumObs> v{};
  auto at = [&v](Obs o) -> double& { return v[static_cast<std::size_t>(o)]; };
  const double e0 = rec.energy[0], e1 = rec.energy[1];
  const double m0 = rec.spin[0].zero * rec.spin[0].zero, m1 = rec.spin[1].zero * rec.spin[1].zero;
  const double q = rec.overlap.zero * rec.overlap.zero;
  at(Obs::energy) = 0.5 * (e0 + e1);
  at(Obs::energy2) = 0.5 * (e0 * e0 + e1 * e1);
  at(Obs::m2) = 0.5 * (m0 + m1);
  at(Obs::m4) = 0.5 * (m0 * m0 + m1 * m1);
  at(Obs::mkx2) = 0.5 * (std::norm(rec.spin[0].kx) + std::norm(rec.spin[1].kx));
  at(Obs::mky2) = 0.5 * (std::norm(rec.spin[0].ky) + std::norm(rec.spin[1].ky));
  at(Obs::q2) = q;
  at(Obs::q4) = q * q;
  at(Obs::qkx2) = std::norm(rec.overlap.kx);
  at(Obs::qky2) = std::norm(rec.overlap.ky);
  return v;
}

ChiPair chi_from(const ThermalAverages& avg, int L, bool overlap, bool average_directions) {
  const double norm = 1.0 / (double(L) * double(L));
  auto get = [&avg](Obs o) { return avg[static_cast<std::size_t>(o)]; };
  const double zero = get(overlap ? Obs::q2 : Obs::m2);
  const double kx = get(overlap ? Obs::qkx2 : Obs::mkx2);
  const double ky = get(overlap ? Obs::qky2 : Obs::mky2);
  return {zero * norm, (average_directions ? 0.5 * (kx + ky) : kx) * norm};
}

CorrelationLength correlation_length(double chi0, double chik, double k_min) {
  if (chik == 0.0) throw DegenerateInputError("chi(k_min) is zero; correlation length undefined");
  if (chik < 0.0 || chi0 < 0.0) throw DomainError("susceptibilities must be non-negative");
  const double r = chi0 / chik - 1.0;
  CorrelationLength out;
  out.clamped = r < 0.0;
  out.xi = std::sqrt(std::max(r, 0.0)) / (2.0 * std::sin(0.5 * k_min));
  return out;
}

CorrelationLength correlation_length(double chi0, double chik, int L) {
  return correlation_length(chi0, chik, 2.0 * std::numbers::pi / L);
}

double binder_ratio(double m2, double m4) {
  if (m2 == 0.0) throw DegenerateInputError("<m^2> is zero; Binder ratio undefined");
  return 0.5 * (3.0 - m4 / (m2 * m2));
}

namespace {

struct Derived {
  double chi0, chik, xi, xi_sg, binder, energy;
  bool clamped, sg_degenerate;
};

Derived derive(const ThermalAverages& mean, const Lattice& lat, bool avg_dirs) {
  Derived d{};
  const auto chi = chi_from(mean, lat.L(), false, avg_dirs);
  const auto chi_sg = chi_from(mean, lat.L(), true, avg_dirs);
  d.chi0 = chi.chi0;
  d.chik = chi.chik;
  d.energy = mean[static_cast<std::size_t>(Obs::energy)];
  if (chi.chik > 0) {
    const auto c = correlation_length(chi.chi0, chi.chik, lat.k_min());
    d.xi = c.xi / lat.L();
    d.clamped = c.clamped;
  } else {
    d.xi = std::nan("");
  }
  if (chi_sg.chik > 0) {
    d.xi_sg = correlation_length(chi_sg.chi0, chi_sg.chik, lat.k_min()).xi / lat.L();
  } else {
    d.xi_sg = std::nan("");
    d.sg_degenerate = true;
  }
  const double m2 = mean[static_cast<std::size_t>(Obs::m2)];
  d.binder = m2 > 0 ? binder_ratio(m2, mean[static_cast<std::size_t>(Obs::m4)]) : std::nan("");
  return d;
}

// Smallest x with empirical CDF >= q.
double quantile(std::vector<double>& v, double q) {
  std::sort(v.begin(), v.end());
  auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  idx = std::clamp<std::size_t>(idx, 1, v.size()) - 1;
  return v[idx];
}

double half_width(std::vector<double> v, double confidence) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.size() < 2) return 0.0;
  const double lo = quantile(v, 0.5 * (1.0 - confidence));
  const double hi = quantile(v, 0.5 * (1.0 + confidence));
  return 0.5 * (hi - lo);
}

}  // namespace

DisorderAggregate aggregate(std::vector<SampleAverages> samples, const Lattice& lat,
                            std::span<const double> temperatures, const AggregateOptions& opt) {
  if (samples.empty()) throw InsufficientDataError("aggregate needs at least one sample");
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  const std::size_t nt = temperatures.size();
  for (const auto& s : samples)
    if (s.per_temperature.size() != nt) throw IntegrityError("sample does not cover the temperature ladder");

  const std::size_t ns = samples.size();
  auto mean_over = [&](const std::vector<std::size_t>& idx, std::size_t t) {
    ThermalAverages m{};
    for (std::size_t i : idx)
      for (int o = 0; o < kNumObs; ++o) m[static_cast<std::size_t>(o)] += samples[i].per_temperature[t][static_cast<std::size_t>(o)];
    for (auto& x : m) x /= static_cast<double>(idx.size());
    return m;
  };

  std::vector<std::size_t> all(ns);
  for (std::size_t i = 0; i < ns; ++i) all[i] = i;

  DisorderAggregate agg;
  agg.L = lat.L();
  agg.n_samples = static_cast<int>(ns);
  agg.errors_defined = ns >= 2;
  agg.points.resize(nt);

  std::vector<std::vector<Derived>> boot(nt);
  if (ns >= 2) {
    Xoshiro256 rng(stream_seed(opt.seed, Stream::bootstrap));
    std::vector<std::size_t> idx(ns);
    for (int b = 0; b < opt.n_boot; ++b) {
      for (auto& i : idx) i = static_cast<std::size_t>(rng() % ns);
      for (std::size_t t = 0; t < nt; ++t) boot[t].push_back(derive(mean_over(idx, t), lat, opt.average_k_directions));
    }
  }

  for (std::size_t t = 0; t < nt; ++t) {
    const Derived full = derive(mean_over(all, t), lat, opt.average_k_directions);
    auto& pt = agg.points[t];
    pt.T = temperatures[t];
    pt.xi_clamped = full.clamped;
    pt.xi_sg_degenerate = full.sg_degenerate;
    auto err = [&](double Derived::*field) {
      std::vector<double> v;
      v.reserve(boot[t].size());
      for (const auto& d : boot[t]) v.push_back(d.*field);
      return half_width(std::move(v), opt.confidence);
    };
    pt.chi0 = {full.chi0, err(&Derived::chi0)};
    pt.chik = {full.chik, err(&Derived::chik)};
    pt.xi_over_L = {full.xi, err(&Derived::xi)};
    pt.xi_sg_over_L = {full.xi_sg, err(&Derived::xi_sg)};
    pt.binder = {full.binder, err(&Derived::binder)};
    pt.energy = {full.energy, err(&Derived::energy)};
  }
  return agg;
}

// ---------------------------------------------------------------------------

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_header() {
  return "p,L,T,n_samples,chi0,chi0_err,chikmin,chikmin_err,xi_over_L,xi_err,xi_sg_over_L,xi_sg_err,binder,"
         "binder_err,equilibrated";
}

std::string csv_row(const CsvPoint& pt) {
  std::string s;
  auto add = [&s](const std::string& x) {
    if (!s.empty()) s.push_back(',');
    s += x;
  };
  add(format_g17(pt.p));
  add(std::to_string(pt.L));
  add(format_g17(pt.T));
  add(std::to_string(pt.n_samples));
  for (double v : {pt.chi0, pt.chi0_err, pt.chikmin, pt.chikmin_err, pt.xi_over_L, pt.xi_err, pt.xi_sg_over_L,
                   pt.xi_sg_err, pt.binder, pt.binder_err})
    add(format_g17(v));
  add(pt.equilibrated ? "true" : "false");
  return s;
}

std::vector<CsvPoint> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) throw IntegrityError("unexpected CSV header: " + line);
  std::vector<CsvPoint> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 15) throw IntegrityError("CSV row has " + std::to_string(f.size()) + " fields: " + line);
    CsvPoint pt;
    auto d = [&f](std::size_t i) { return std::strtod(f[i].c_str(), nullptr); };
    pt.p = d(0);
    pt.L = std::stoi(f[1]);
    pt.T = d(2);
    pt.n_samples = std::stoi(f[3]);
    pt.chi0 = d(4);
    pt.chi0_err = d(5);
    pt.chikmin = d(6);
    pt.chikmin_err = d(7);
    pt.xi_over_L = d(8);
    pt.xi_err = d(9);
    pt.xi_sg_over_L = d(10);
    pt.xi_sg_err = d(11);
    pt.binder = d(12);
    pt.binder_err = d(13);
    pt.equilibrated = f[14] == "true";
    out.push_back(pt);
  }
  return out;
}

}  // namespace tribody
